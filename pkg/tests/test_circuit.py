import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from daoagent.circuit import (
    KIND_ACCUM,
    ConstraintKind,
    StructuralError,
    WitnessError,
    WitnessTrace,
    accum_index,
    build_constraints,
    build_witness,
    check_all,
    decode_row,
    encode_row,
    eval_constraint,
    final_index,
    step_mask,
    trace_length,
    violations,
)
from daoagent.game import SCALE, CharacteristicTable, exact_shapley, random_table

from conftest import agent_outputs, games, honest_instance


def _accum_constraint(n, agent, step):
    return 2 * (1 << n) + agent * (1 << (n - 1)) + step


def _mutate(cell):
    if isinstance(cell, bytes):
        return bytes([cell[0] ^ 0x01]) + cell[1:]
    return cell + 1


@pytest.mark.parametrize(
    "n,counts,total",
    [(1, (2, 2, 1, 1, 1), 7), (4, (16, 16, 32, 4, 1), 69), (10, (1024, 1024, 5120, 10, 1), 7179)],
)
def test_constraint_counts(n, counts, total):
    cs = build_constraints(n)
    assert tuple(cs.counts[k] for k in ConstraintKind) == counts
    assert len(cs) == total


def test_trace_geometry():
    assert trace_length(4) == 16 + 4 * 8 + 4
    assert accum_index(4, 0, 0) == 16 and final_index(4, 0) == 48
    # step masks enumerate every coalition without the agent, in ascending order
    for i in range(4):
        masks = [step_mask(i, t) for t in range(8)]
        assert masks == sorted(m for m in range(16) if not m >> i & 1)


def test_accum_step_reads_at_most_four_rows():
    cs = build_constraints(6)
    for c in cs.constraints:
        if c.kind is ConstraintKind.ACCUM_STEP:
            assert len(c.cell_refs) <= 4


def test_two_player_witness():
    t = CharacteristicTable(2, (0, SCALE, 3 * SCALE, 6 * SCALE))
    trace, cs, pub = honest_instance(t)
    assert trace.numerators == (4 * SCALE, 8 * SCALE)
    assert trace.payouts == (2 * SCALE, 4 * SCALE)
    assert check_all(cs, trace, pub)


@settings(max_examples=50)
@given(games(max_n=5))
def test_witness_matches_exact_and_satisfies(table):
    trace, cs, pub = honest_instance(table)
    alloc = exact_shapley(table)
    assert trace.numerators == alloc.numerators
    assert trace.payouts == alloc.as_fixed()
    assert violations(cs, trace, pub) == []


def test_zero_game_single_agent():
    trace, cs, pub = honest_instance(CharacteristicTable(1, (0, 0)))
    assert trace.payouts == (0,) and check_all(cs, trace, pub)


def test_build_witness_input_checks():
    t = CharacteristicTable(2, (0, 1, 2, 3))
    recs = agent_outputs(2)
    good = [[], [recs[0]], [recs[1]], recs]
    build_witness(t, good)
    with pytest.raises(WitnessError):
        build_witness(t, good[:3])
    with pytest.raises(WitnessError):
        build_witness(t, [[], [recs[1]], [recs[0]], recs])
    with pytest.raises(WitnessError):
        build_witness(CharacteristicTable(2, (1, 1, 2, 3)), good)


def test_edited_value_fails_its_hash_check(rng):
    trace, cs, pub = honest_instance(random_table(rng, 4))
    bad = trace.with_cell(5, 2, trace[5][2] + 1)
    assert 16 + 5 in violations(cs, bad, pub)


def test_edited_middle_accumulator_breaks_two_steps(rng):
    n = 4
    trace, cs, pub = honest_instance(random_table(rng, n))
    row = accum_index(n, 2, 3)
    bad = trace.with_cell(row, 6, trace[row][6] + 7)
    assert violations(cs, bad, pub) == [_accum_constraint(n, 2, 3), _accum_constraint(n, 2, 4)]


def test_edited_payout_breaks_exactly_one_finalize(rng):
    n = 4
    trace, cs, pub = honest_instance(random_table(rng, n))
    bad = trace.with_cell(final_index(n, 0), 3, trace.payouts[0] + 1)
    (only,) = violations(cs, bad, pub)
    assert cs[only].kind is ConstraintKind.FINALIZE and cs[only].subject == (0,)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_every_single_cell_edit_is_caught(n, rng):
    trace, cs, pub = honest_instance(random_table(rng, n))
    for r, row in enumerate(trace.rows):
        for c in range(len(row)):
            bad = trace.with_cell(r, c, _mutate(row[c]))
            assert violations(cs, bad, pub), (r, c)


@settings(max_examples=200)
@given(st.data())
def test_random_cell_edits_are_caught_n4(data):
    table = data.draw(games(min_n=4, max_n=4))
    trace, cs, pub = honest_instance(table)
    r = data.draw(st.integers(0, len(trace) - 1))
    c = data.draw(st.integers(0, len(trace[r]) - 1))
    cell = trace[r][c]
    if isinstance(cell, bytes):
        new = data.draw(st.binary(min_size=32, max_size=32).filter(lambda b: b != cell))
    else:
        new = cell + data.draw(st.integers(-(10**6), 10**6).filter(bool))
    assert violations(cs, trace.with_cell(r, c, new), pub)


def test_public_input_tampering_is_caught(rng):
    trace, cs, pub = honest_instance(random_table(rng, 3))
    alloc = list(pub.allocations)
    alloc[0] += 1
    alloc[1] -= 1
    assert violations(cs, trace, pub.replace(allocations=tuple(alloc)))
    assert violations(cs, trace, pub.replace(grand_value=pub.grand_value + 1))
    hashes = list(pub.value_hashes)
    hashes[3] = hashes[2]
    assert violations(cs, trace, pub.replace(value_hashes=tuple(hashes))) == [8 + 3]
    assert check_all(cs, trace, pub.replace(nonce=99))


def test_missing_rows_are_structural(rng):
    trace, cs, pub = honest_instance(random_table(rng, 3))
    partial = {i: row for i, row in enumerate(trace.rows) if i != 0}
    with pytest.raises(StructuralError):
        eval_constraint(cs, 0, partial, pub)
    with pytest.raises(StructuralError):
        eval_constraint(cs, len(cs), trace, pub)
    with pytest.raises(StructuralError):
        eval_constraint(build_constraints(2), 0, trace, pub)


def test_constraint_reads_only_its_refs(rng):
    # every constraint evaluates on a sparse row map holding just its cell refs
    trace, cs, pub = honest_instance(random_table(rng, 4))
    for k, c in enumerate(cs.constraints):
        assert eval_constraint(cs, k, {i: trace[i] for i in c.cell_refs}, pub)


def test_malformed_cells_fail_instead_of_raising(rng):
    trace, cs, pub = honest_instance(random_table(rng, 2))
    bad = trace.with_cell(accum_index(2, 0, 0), 5, "x")
    assert violations(cs, bad, pub)


def test_row_and_trace_roundtrip(rng):
    trace, _, _ = honest_instance(random_table(rng, 4))
    for row in trace.rows:
        assert decode_row(4, encode_row(4, row)) == row
    assert WitnessTrace.from_bytes(trace.to_bytes()) == trace
    with pytest.raises(WitnessError):
        WitnessTrace.from_bytes(trace.to_bytes() + b"\x00")


def test_large_accumulators_fit_row_encoding():
    n = 16
    cs_len = len(build_constraints(n))
    assert cs_len == 2 * 2**n + n * 2 ** (n - 1) + n + 1
    big = (2**63 - 1) * math.factorial(n) * 2
    row = (KIND_ACCUM, 0, 0, 0, math.factorial(15), -(2**63), -big)
    assert decode_row(n, encode_row(n, row)) == row


@pytest.mark.parametrize("col,value", [(0, 2), (1, -1), (3, b"short")])
def test_encode_row_reports_malformed_rows(col, value, rng):
    trace, _, _ = honest_instance(random_table(rng, 2))
    row = list(trace[0] if col != 1 else trace[final_index(2, 0)])
    row[col] = value
    with pytest.raises(WitnessError):
        encode_row(2, tuple(row))
