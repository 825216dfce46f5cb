# %% [markdown]
# Committing to agent outputs
#
# Each coalition's outputs are hashed, sorted into a set and stored under the
# SHA-256 of that set.  The ledger keeps only the 32-byte identifier.

# %%
from daoagent.commitment import Cid, ContentStore, HashSet, OutputRecord, accept_outputs
from daoagent.ledger import Ledger

outputs = [OutputRecord(i, f"signal from agent {i}".encode()) for i in range(3)]
store = ContentStore()
ledger = Ledger()

cid = store.store(HashSet.from_records(outputs))
height, _ = ledger.commit_cid(0b111, cid)
print(f"block {height}: coalition 0b111 -> {cid.hex()[:16]}...")

# %% [markdown]
# Later, whoever presents the outputs must reproduce the committed set exactly.

# %%
print("original accepted:", accept_outputs(store, outputs, ledger.get_cid(0b111)))
forged = outputs[:2] + [OutputRecord(2, b"signal from agent 2 (edited)")]
print("edited accepted:  ", accept_outputs(store, forged, ledger.get_cid(0b111)))
print("reordered accepted:", accept_outputs(store, outputs[::-1], ledger.get_cid(0b111)))

# %%
# the identifier is plain content addressing, so it can be recomputed offline
assert Cid.of(HashSet.from_records(outputs)) == cid
