# %% [markdown]
# The whole pipeline for a trading team
#
# Synthetic agents emit position signals on a seeded random walk.  A coalition
# is worth the Sharpe ratio of its averaged signal.  Every coalition is
# committed, the coordinator allocates, proves, and the ledger settles.

# %%
from daoagent import RunConfig, execute
from daoagent.ledger import replay_journal

art = execute(RunConfig(n=6, seed=0))
print(art.report.to_text())

# %%
print("ledger height:", art.state.ledger.height)
print("replay:", replay_journal(art.state.ledger.journal_text()))

# %% [markdown]
# Runs are deterministic: the same config gives the same journal and proof bytes.

# %%
again = execute(RunConfig(n=6, seed=0))
assert again.state.ledger.journal_text() == art.state.ledger.journal_text()
assert again.proof.to_bytes() == art.proof.to_bytes()
