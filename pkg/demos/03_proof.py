# %% [markdown]
# Witness, constraints and a spot-check proof
#
# The prover lays the Shapley computation out as rows, commits to them with a
# Merkle root and opens k constraints chosen by hashing the root with the
# public inputs.

# %%
import numpy as np

from daoagent import circuit, proof
from daoagent.commitment import Cid, HashSet, OutputRecord, hash_value
from daoagent.game import members, random_table

n = 4
table = random_table(np.random.default_rng(3), n)
records = [OutputRecord(i, b"agent-%d" % i) for i in range(n)]
outputs = [[records[i] for i in members(m)] for m in range(1 << n)]

trace = circuit.build_witness(table, outputs)
cs = circuit.build_constraints(n)
pub = circuit.PublicInputs(
    allocations=trace.payouts,
    grand_value=table.grand,
    output_hash_cids=tuple(Cid.of(HashSet.from_records(o)) for o in outputs),
    value_hashes=tuple(hash_value(table[m], m) for m in range(1 << n)),
)
print(len(trace), "rows,", len(cs), "constraints:", {k.value: v for k, v in cs.counts.items()})

# %%
p = proof.prove(trace, cs, pub, k=16)
print("proof bytes:", len(p.to_bytes()), "verified:", proof.verify(p, pub, cs))

# %% [markdown]
# A lying prover edits one payout.  Spot checks with k draws catch it with
# probability 1 - (1 - 1/C)**k; opening everything always catches it.

# %%
bad = trace.with_cell(circuit.final_index(n, 0), 3, trace.payouts[0] + 1)
trials, k = 2000, 16
caught = sum(
    not proof.verify(proof.prove_dishonest(bad, cs, pub.replace(nonce=j), k), pub.replace(nonce=j), cs)
    for j in range(trials)
)
print(f"caught {caught / trials:.3f}, predicted {1 - (1 - 1 / len(cs)) ** k:.3f}")
full = proof.prove_dishonest(bad, cs, pub, k=len(cs))
print("full check:", proof.verify_detailed(full, pub, cs).reason)
