import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from daoagent.game import (
    SCALE,
    CharacteristicTable,
    GameError,
    check_superadditivity,
    collusion_gain,
    exact_shapley,
    largest_remainder,
    members,
    monte_carlo_shapley,
    normalize,
    permutation_oracle,
    random_table,
)

from conftest import games, glove_game, thirds_game


def test_normalize_already_normalized_is_identity():
    t = CharacteristicTable(2, (0, 1, 2, 3))
    assert normalize(t) is t


def test_normalize_shifts_by_empty_value():
    t = CharacteristicTable(2, (5 * SCALE, 6 * SCALE, 7 * SCALE, 8 * SCALE))
    out = normalize(t)
    assert out.values[0] == 0
    assert out.grand == 3 * SCALE


@given(games())
def test_normalize_postcondition(table):
    shifted = CharacteristicTable(table.n, tuple(v + 17 for v in table.values))
    out = normalize(shifted)
    assert out.values[0] == 0
    assert all(out[m] == shifted[m] - 17 for m in range(1 << table.n))


def test_single_agent_gets_everything():
    t = CharacteristicTable(1, (0, 10 * SCALE))
    alloc = exact_shapley(t)
    assert alloc.numerators == (10 * SCALE,)
    assert alloc.as_fixed() == (10 * SCALE,)


def test_thirds_game_is_symmetric():
    alloc = exact_shapley(thirds_game())
    assert alloc.numerators == (2 * SCALE, 2 * SCALE, 2 * SCALE)
    # SCALE/3 each, the leftover unit goes to the lowest id
    assert alloc.as_fixed() == (333334, 333333, 333333)


def test_two_player_game():
    # orderings (0,1): 1, 5   (1,0): 3, 3   -> phi = (2, 4)
    t = CharacteristicTable(2, (0, 1 * SCALE, 3 * SCALE, 6 * SCALE))
    alloc = exact_shapley(t)
    assert alloc.numerators == (4 * SCALE, 8 * SCALE)
    assert alloc.as_fixed() == (2 * SCALE, 4 * SCALE)


def test_glove_game():
    # phi = (2/3, 1/6, 1/6) by enumeration of the 6 orderings
    alloc = exact_shapley(glove_game())
    assert alloc.numerators == (4 * SCALE, SCALE, SCALE)
    assert alloc.as_fixed() == (666667, 166667, 166666)
    assert permutation_oracle(glove_game()) == alloc


def test_exact_rejects_unnormalized_and_oversized():
    with pytest.raises(GameError):
        exact_shapley(CharacteristicTable(1, (1, 2)))
    with pytest.raises(GameError):
        exact_shapley(CharacteristicTable(17, (0,) * (1 << 17)))


def test_values_outside_int64_rejected():
    with pytest.raises(GameError, match="64-bit"):
        CharacteristicTable(1, (0, 2**63))


def test_extreme_values_stay_exact_at_n16():
    big = 2**63 - 1
    t = CharacteristicTable.from_function(16, lambda m: big if m.bit_count() % 2 else -big if m else 0)
    alloc = exact_shapley(t)
    assert sum(alloc.numerators) == math.factorial(16) * t.grand
    assert max(abs(x) for x in alloc.numerators) < 2**127


def test_oracle_rejects_large_n():
    with pytest.raises(GameError):
        permutation_oracle(CharacteristicTable(9, (0,) * 512))


@settings(max_examples=300)
@given(games(max_n=6))
def test_oracle_matches_exact(table):
    assert permutation_oracle(table).numerators == exact_shapley(table).numerators


def test_oracle_pure_python_path_matches():
    # values near the int64 limit force the non-vectorized branch
    t = CharacteristicTable(3, (0, 2**62, -(2**62), 2**61, 5, 7, -9, 2**62 - 1))
    assert permutation_oracle(t) == exact_shapley(t)


@given(games(max_n=7))
def test_efficiency_identity(table):
    alloc = exact_shapley(table)
    assert sum(alloc.numerators) == math.factorial(table.n) * table.grand
    assert sum(alloc.as_fixed()) == table.grand


@given(games(min_n=2, max_n=6), st.data())
def test_symmetry_swaps_numerators(table, data):
    i, j = data.draw(st.lists(st.integers(0, table.n - 1), min_size=2, max_size=2, unique=True))
    perm = list(range(table.n))
    perm[i], perm[j] = j, i
    base = exact_shapley(table).numerators
    swapped = exact_shapley(table.permuted(perm)).numerators
    expected = list(base)
    expected[i], expected[j] = base[j], base[i]
    assert list(swapped) == expected


@given(games(min_n=2, max_n=6), st.data())
def test_dummy_gets_zero(table, data):
    dummy = data.draw(st.integers(0, table.n - 1))
    bit = 1 << dummy
    values = list(table.values)
    for m in range(1 << table.n):
        if m & bit:
            values[m] = values[m & ~bit]
    alloc = exact_shapley(CharacteristicTable(table.n, tuple(values)))
    assert alloc.numerators[dummy] == 0


@given(games(max_n=6), st.data())
def test_additivity(a, data):
    b = data.draw(games(min_n=a.n, max_n=a.n))
    left = exact_shapley(a + b).numerators
    right = [x + y for x, y in zip(exact_shapley(a).numerators, exact_shapley(b).numerators)]
    assert list(left) == right


@given(st.lists(st.integers(-(10**9), 10**9), min_size=1, max_size=8), st.integers(1, 40320))
def test_largest_remainder_preserves_total(nums, denom):
    # make the total divisible so the exact total is representable
    nums[-1] -= sum(nums) % denom
    out = largest_remainder(nums, denom)
    assert sum(out) == sum(nums) // denom
    for o, x in zip(out, nums):
        assert o in (x // denom, x // denom + 1)


def test_largest_remainder_breaks_ties_by_lowest_id():
    assert largest_remainder([1, 1, 1], 3) == (1, 0, 0)
    assert largest_remainder([2, 2, 2], 3) == (1, 1, 0)


def test_negative_shares_allowed():
    t = CharacteristicTable(2, (0, -3 * SCALE, SCALE, 0))
    alloc = exact_shapley(t)
    assert alloc.as_fixed() == (-2 * SCALE, 2 * SCALE)


def test_n16_efficiency(rng):
    t = random_table(rng, 16, magnitude=10**12)
    alloc = exact_shapley(t)
    assert sum(alloc.numerators) == math.factorial(16) * t.grand
    assert sum(alloc.as_fixed()) == t.grand


# -- Monte Carlo ----------------------------------------------------------------


def test_monte_carlo_single_sample_is_one_ordering():
    t = CharacteristicTable(3, (0, 1, 2, 10, 4, 20, 30, 100))
    est = monte_carlo_shapley(t, 1, seed=7)
    order = np.random.Generator(np.random.PCG64(7)).permuted(np.arange(3)[None, :], axis=1)[0]
    mask, expected = 0, [0] * 3
    for agent in order:
        expected[agent] = t[mask | 1 << agent] - t[mask]
        mask |= 1 << agent
    assert est.estimates == tuple(float(x) for x in expected)
    assert est.std_errors == (0.0, 0.0, 0.0)


def test_monte_carlo_deterministic_given_seed(rng):
    t = random_table(rng, 5)
    assert monte_carlo_shapley(t, 100, 3) == monte_carlo_shapley(t, 100, 3)
    assert monte_carlo_shapley(t, 100, 3) != monte_carlo_shapley(t, 100, 4)


def test_monte_carlo_within_four_standard_errors(rng):
    t = random_table(rng, 6)
    exact = [x / math.factorial(6) for x in exact_shapley(t).numerators]
    est = monte_carlo_shapley(t, 50_000, seed=11)
    for e, x, se in zip(est.estimates, exact, est.std_errors):
        assert abs(e - x) <= 4 * se


def test_monte_carlo_thirds_game():
    est = monte_carlo_shapley(thirds_game(), 10_000, seed=5)
    for e, se in zip(est.estimates, est.std_errors):
        assert abs(e - SCALE / 3) <= 4 * se


def test_monte_carlo_rejects_zero_samples():
    with pytest.raises(GameError):
        monte_carlo_shapley(thirds_game(), 0, 1)


# -- diagnostics -------------------------------------------------------------------


def test_additive_game_has_no_surplus():
    w = [3, -1, 7, 2]
    t = CharacteristicTable.from_function(4, lambda m: sum(w[i] for i in members(m)) * SCALE)
    rep = check_superadditivity(t)
    assert rep.surplus == 0 and not rep.superadditive


def test_thirds_game_is_superadditive():
    rep = check_superadditivity(thirds_game())
    assert rep.surplus == SCALE and rep.superadditive


def test_collusion_gain_trivial_cases(rng):
    t = random_table(rng, 4)
    honest = exact_shapley(t)
    assert collusion_gain(t, honest, honest, 0b0101).gain == 0
    # same v(N), different proper-coalition values: K = N gains nothing
    bumped = CharacteristicTable(4, tuple(v + (SCALE if m and m != 0b1111 else 0) for m, v in enumerate(t.values)))
    rep = collusion_gain(t, honest, exact_shapley(bumped), 0b1111)
    assert rep.gain == 0


# -- serialization -------------------------------------------------------------------


@given(games(max_n=5))
def test_bytes_roundtrip(table):
    data = table.to_bytes()
    assert data[:4] == b"CGAM" and data[4] == 1 and data[5] == table.n
    assert len(data) == 6 + 8 * (1 << table.n)
    assert CharacteristicTable.from_bytes(data) == table


@given(games(max_n=5))
def test_csv_roundtrip(table):
    assert CharacteristicTable.from_csv(table.to_csv()) == table


def test_bytes_layout_is_big_endian():
    t = CharacteristicTable(1, (0, -2))
    assert t.to_bytes() == b"CGAM\x01\x01" + bytes(8) + b"\xff" * 7 + b"\xfe"
