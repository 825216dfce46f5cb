# %% [markdown]
# Exact Shapley values in fixed point
#
# A game is a table of 2**n coalition values, stored as integers scaled by 10**6.
# Everything below stays in integer arithmetic until the final print.

# %%
import math

import numpy as np

from daoagent import SCALE, CharacteristicTable, exact_shapley, monte_carlo_shapley, permutation_oracle

# Gloves: agent 0 owns a left glove, agents 1 and 2 each own a right glove.
glove = CharacteristicTable.from_function(3, lambda m: SCALE if m in (0b011, 0b101, 0b111) else 0)
alloc = exact_shapley(glove)
print("numerators (times 3!):", alloc.numerators)
print("payouts:", alloc.as_fixed(), "sum", sum(alloc.as_fixed()), "v(N)", glove.grand)

# %% [markdown]
# The brute-force oracle walks all n! orderings with numpy and must agree bit for bit.

# %%
rng = np.random.default_rng(0)
for n in range(2, 8):
    t = CharacteristicTable.from_floats(n, np.r_[0.0, rng.normal(size=(1 << n) - 1)])
    assert permutation_oracle(t) == exact_shapley(t)
print("oracle agrees for n = 2..7")

# %% [markdown]
# Sampling orderings gives an estimate with a standard error.  At n = 10 the
# exact answer is still cheap, so the two can be compared directly.

# %%
t = CharacteristicTable.from_floats(10, np.r_[0.0, rng.normal(size=1023)])
exact = np.array(exact_shapley(t).numerators) / math.factorial(10) / SCALE
est = monte_carlo_shapley(t, 20_000, seed=1)
z = (np.array(est.estimates) / SCALE - exact) / (np.array(est.std_errors) / SCALE)
print("largest |z| over agents:", np.abs(z).max().round(2))
