import random
import struct

import numpy as np
import pytest

from daoagent.circuit import final_index
from daoagent.game import SCALE, CharacteristicTable, random_table
from daoagent.proof import (
    MerkleTree,
    Proof,
    ProverError,
    path_root,
    prove,
    prove_dishonest,
    sample_indices,
    verifier_cost,
    verify,
    verify_detailed,
)

from conftest import honest_instance


@pytest.fixture
def n2():
    return honest_instance(CharacteristicTable(2, (0, SCALE, 3 * SCALE, 6 * SCALE)))


@pytest.fixture
def n3(rng):
    return honest_instance(random_table(rng, 3))


def _parse(data):
    try:
        return Proof.from_bytes(data)
    except (ValueError, IndexError, struct.error):
        return None


@pytest.mark.parametrize("size", [1, 2, 3, 5, 8, 13])
def test_merkle_paths(size):
    rows = [bytes([i]) * 4 for i in range(size)]
    tree = MerkleTree(rows)
    for i, row in enumerate(rows):
        assert path_root(row, i, tree.path(i)) == tree.root
        assert path_root(row + b"!", i, tree.path(i)) != tree.root
    if size > 1:
        assert path_root(rows[0], 1, tree.path(0)) != tree.root


def test_merkle_rejects_empty():
    with pytest.raises(ValueError):
        MerkleTree([])


def test_sample_indices_modes():
    seed = bytes(32)
    assert sample_indices(seed, 100, 7) == list(range(7))
    picks = sample_indices(seed, 5, 1000)
    assert len(picks) == 5 and all(0 <= p < 1000 for p in picks)
    assert picks == sample_indices(seed, 5, 1000)


def test_small_honest_proof_verifies(n2):
    trace, cs, pub = n2
    proof = prove(trace, cs, pub, k=20)
    assert verify(proof, pub, cs)
    assert verify(proof, pub)
    # only 15 constraints at n = 2, so k = 20 opens each one once
    assert len(cs) == 15 and len(proof.openings) == 15


def test_full_check_opens_every_constraint(n3):
    trace, cs, pub = n3
    proof = prove(trace, cs, pub, k=len(cs))
    assert [o.constraint for o in proof.openings] == list(range(len(cs)))
    assert verify(proof, pub, cs)


def test_proof_is_deterministic(n3):
    trace, cs, pub = n3
    assert prove(trace, cs, pub, 16).to_bytes() == prove(trace, cs, pub, 16).to_bytes()


def test_prover_refuses_bad_trace(n3):
    trace, cs, pub = n3
    bad = trace.with_cell(final_index(3, 1), 3, trace.payouts[1] + 1)
    with pytest.raises(ProverError):
        prove(bad, cs, pub)
    with pytest.raises(ProverError):
        prove(trace, cs, pub, k=0)


def test_full_check_rejects_any_violation(n3):
    trace, cs, pub = n3
    bad = trace.with_cell(final_index(3, 1), 3, trace.payouts[1] + 1)
    res = verify_detailed(prove_dishonest(bad, cs, pub, len(cs)), pub, cs)
    assert not res and "Finalize" in res.reason


def test_proof_bound_to_public_inputs(n3):
    trace, cs, pub = n3
    proof = prove(trace, cs, pub, 16)
    other = pub.replace(nonce=1)
    res = verify_detailed(proof, other, cs)
    assert not res and res.reason == "public digest mismatch"
    # re-labelling the proof with the new digest breaks the derived challenges
    relabelled = Proof(proof.root, other.public_digest, proof.k, proof.openings)
    assert not verify(relabelled, other, cs)


def test_flipped_path_byte_fails(n3):
    trace, cs, pub = n3
    proof = prove(trace, cs, pub, 8)
    op = proof.openings[0]
    row = op.rows[0]
    path = (bytes([row.path[0][0] ^ 1]) + row.path[0][1:],) + row.path[1:]
    forged_row = type(row)(row.index, row.data, path)
    forged = Proof(proof.root, proof.public_digest, proof.k, (type(op)(op.constraint, (forged_row,) + op.rows[1:]),) + proof.openings[1:])
    res = verify_detailed(forged, pub, cs)
    assert not res and "root" in res.reason


def test_serialization_roundtrip(n3):
    trace, cs, pub = n3
    proof = prove(trace, cs, pub, 12)
    assert Proof.from_bytes(proof.to_bytes()) == proof
    assert Proof.from_hex(proof.hex() + "\n") == proof
    with pytest.raises(ValueError):
        Proof.from_bytes(b"NOPE" + proof.to_bytes()[4:])


def test_every_single_byte_mutation_is_rejected(n2):
    trace, cs, pub = n2
    data = prove(trace, cs, pub, k=6).to_bytes()
    rnd = random.Random(3)
    for pos in range(len(data)):
        mutated = bytearray(data)
        mutated[pos] ^= rnd.randrange(1, 256)
        forged = _parse(bytes(mutated))
        assert forged is None or not verify(forged, pub, cs), pos


def _expected_hashes(proof, cs):
    depth = (cs.trace_length - 1).bit_length()
    total = 2 + (0 if proof.k >= len(cs) else proof.k)
    for op in proof.openings:
        total += len(op.rows) * (1 + depth)
        total += cs[op.constraint].kind.value in ("HashOutputs", "HashValue")
    return total


def test_verifier_cost_growth():
    costs, lengths = {}, {}
    for n in (4, 6, 8):
        trace, cs, pub = honest_instance(random_table(np.random.default_rng(n), n))
        proof = prove(trace, cs, pub, 64)
        costs[n] = verifier_cost(proof, pub, cs)
        lengths[n] = len(trace)
        assert costs[n].evaluations == 64
        assert costs[n].hashes == _expected_hashes(proof, cs)
    # hashing follows tree depth, far slower than the trace itself
    assert costs[8].hashes / costs[4].hashes < 0.2 * lengths[8] / lengths[4]
    assert costs[8].units / costs[4].units <= 1.35


def test_doubling_k_at_most_doubles_cost():
    trace, cs, pub = honest_instance(random_table(np.random.default_rng(1), 6))
    c32 = verifier_cost(prove(trace, cs, pub, 32), pub, cs)
    c64 = verifier_cost(prove(trace, cs, pub, 64), pub, cs)
    assert c64.units <= 2.1 * c32.units
    assert c64.hashes <= 2.1 * c32.hashes


def test_unencodable_trace_cannot_be_proved(n3):
    trace, cs, pub = n3
    bad = trace.with_cell(final_index(3, 0), 1, -1)
    with pytest.raises(ProverError, match="encoded"):
        prove_dishonest(bad, cs, pub, len(cs))
