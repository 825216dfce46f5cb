# %% [markdown]
# Gas: evaluating Shapley on chain versus checking a proof
#
# The on-chain baseline grows with the number of coalitions.  Two measured
# points pin down an affine model in 2**n.

# %%
from daoagent.gas import GasModel, gas_table_csv
from daoagent import RunConfig, execute

model = GasModel.calibrate({4: 367_000, 6: 1_330_000}, verify_constant=27_000)
print(f"base {model.onchain_base:.0f}, per coalition {model.onchain_per_coalition:.1f}")
print(gas_table_csv([4, 6, 8, 10, 12], model))

# %% [markdown]
# The metered cost of the spot-check verifier grows only with tree depth.

# %%
for n in (4, 6, 8, 10):
    g = execute(RunConfig(n=n)).report.gas
    print(n, round(g["reference_backend"]))
