"""Transparent spot-check proofs over a Merkle-committed witness trace.

The prover commits to every trace row in a Merkle tree, derives challenge
indices from ``SHA-256("FS" || root || public_digest)`` and opens the rows read
by each challenged constraint.  With ``k`` samples and ``m`` violated
constraints out of ``C``, a cheating trace survives with probability
``(1 - m/C) ** k``.  Asking for ``k >= C`` opens every constraint, which makes
verification equivalent to a full recheck.

This backend does not hide the witness: openings reveal trace cells.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from .circuit import (
    ConstraintSystem,
    PublicInputs,
    StructuralError,
    WitnessError,
    WitnessTrace,
    build_constraints,
    check_all,
    decode_row,
    eval_constraint,
)
from .commitment import DIGEST_SIZE, sha256
from .gas import GasModel

PROOF_MAGIC = b"DAPF"
PROOF_VERSION = 1
DEFAULT_K = 64

TAG_LEAF = b"LEAF"
TAG_NODE = b"NODE"
TAG_FS = b"FS"


class ProverError(ValueError):
    pass


def _ceil_log2(x: int) -> int:
    return (x - 1).bit_length()


class MerkleTree:
    """Binary SHA-256 tree; odd levels are padded by repeating the last leaf up to a power of two."""

    def __init__(self, rows: list[bytes]):
        if not rows:
            raise ValueError("cannot commit to an empty trace")
        leaves = [sha256(TAG_LEAF, r) for r in rows]
        self.size = len(leaves)
        width = 1 << _ceil_log2(len(leaves))
        leaves += [leaves[-1]] * (width - len(leaves))
        self.levels = [leaves]
        while len(self.levels[-1]) > 1:
            prev = self.levels[-1]
            self.levels.append([sha256(TAG_NODE, prev[j], prev[j + 1]) for j in range(0, len(prev), 2)])

    @property
    def root(self) -> bytes:
        return self.levels[-1][0]

    @property
    def depth(self) -> int:
        return len(self.levels) - 1

    def path(self, index: int) -> tuple[bytes, ...]:
        out = []
        for level in self.levels[:-1]:
            out.append(level[index ^ 1])
            index >>= 1
        return tuple(out)


def path_root(row: bytes, index: int, path: tuple[bytes, ...]) -> bytes:
    node = sha256(TAG_LEAF, row)
    for sibling in path:
        node = sha256(TAG_NODE, sibling, node) if index & 1 else sha256(TAG_NODE, node, sibling)
        index >>= 1
    return node


def challenge_seed(root: bytes, public_digest: bytes) -> bytes:
    return sha256(TAG_FS, root, public_digest)


def sample_indices(seed: bytes, k: int, total: int) -> list[int]:
    """Constraint indices to open; every constraint once when ``k >= total``."""
    if k >= total:
        return list(range(total))
    return [int.from_bytes(sha256(seed, struct.pack(">I", j)), "big") % total for j in range(k)]


@dataclass(frozen=True)
class OpenedRow:
    index: int
    data: bytes
    path: tuple[bytes, ...]


@dataclass(frozen=True)
class Opening:
    constraint: int
    rows: tuple[OpenedRow, ...]


@dataclass(frozen=True)
class Proof:
    root: bytes
    public_digest: bytes
    k: int
    openings: tuple[Opening, ...]

    def to_bytes(self) -> bytes:
        out = [PROOF_MAGIC, struct.pack(">B", PROOF_VERSION), self.root, self.public_digest]
        out.append(struct.pack(">I", self.k))
        for op in self.openings:
            out.append(struct.pack(">IH", op.constraint, len(op.rows)))
            for r in op.rows:
                out.append(struct.pack(">IH", r.index, len(r.data)))
                out.append(r.data)
                out.append(struct.pack(">B", len(r.path)))
                out.extend(r.path)
        return b"".join(out)

    @classmethod
    def from_bytes(cls, data: bytes) -> Proof:
        if data[:4] != PROOF_MAGIC or data[4] != PROOF_VERSION:
            raise ValueError("not a version-1 proof")
        pos = 5
        root, pub = data[pos : pos + 32], data[pos + 32 : pos + 64]
        pos += 64
        (k,) = struct.unpack_from(">I", data, pos)
        pos += 4
        openings = []
        while pos < len(data):
            cidx, nrows = struct.unpack_from(">IH", data, pos)
            pos += 6
            rows = []
            for _ in range(nrows):
                ridx, rlen = struct.unpack_from(">IH", data, pos)
                pos += 6
                row = data[pos : pos + rlen]
                pos += rlen
                depth = data[pos]
                pos += 1
                path = tuple(data[pos + j * DIGEST_SIZE : pos + (j + 1) * DIGEST_SIZE] for j in range(depth))
                pos += depth * DIGEST_SIZE
                rows.append(OpenedRow(ridx, row, path))
            openings.append(Opening(cidx, tuple(rows)))
        if pos != len(data):
            raise ValueError("truncated proof")
        return cls(root, pub, k, tuple(openings))

    def hex(self) -> str:
        return self.to_bytes().hex()

    @classmethod
    def from_hex(cls, text: str) -> Proof:
        return cls.from_bytes(bytes.fromhex(text.strip()))


def prove_dishonest(trace: WitnessTrace, cs: ConstraintSystem, pub: PublicInputs, k: int = DEFAULT_K) -> Proof:
    """Build a proof without checking that the trace satisfies the constraints."""
    if k < 1:
        raise ProverError("k must be at least 1")
    try:
        rows = trace.row_bytes()
    except WitnessError as exc:
        raise ProverError(str(exc)) from exc
    tree = MerkleTree(rows)
    seed = challenge_seed(tree.root, pub.public_digest)
    openings = []
    for c in sample_indices(seed, k, len(cs)):
        opened = tuple(OpenedRow(r, rows[r], tree.path(r)) for r in cs.constraints[c].cell_refs)
        openings.append(Opening(c, opened))
    return Proof(tree.root, pub.public_digest, k, tuple(openings))


def prove(trace: WitnessTrace, cs: ConstraintSystem, pub: PublicInputs, k: int = DEFAULT_K) -> Proof:
    if not check_all(cs, trace, pub):
        raise ProverError("trace does not satisfy the constraint system; refusing to prove")
    return prove_dishonest(trace, cs, pub, k)


@dataclass(frozen=True)
class Verification:
    ok: bool
    reason: str
    hashes: int
    evaluations: int

    def __bool__(self):
        return self.ok


def verify_detailed(proof: Proof, pub: PublicInputs, cs: ConstraintSystem | None = None) -> Verification:
    """Check a proof against public inputs, counting the hashing and evaluation work."""
    hashes = 1  # public digest
    evals = 0

    def fail(reason):
        return Verification(False, reason, hashes, evals)

    cs = cs if cs is not None else build_constraints(pub.n)
    if cs.n != pub.n:
        return fail("constraint system does not match public inputs")
    if proof.public_digest != pub.public_digest:
        return fail("public digest mismatch")
    if proof.k < 1:
        return fail("k must be at least 1")
    expected = sample_indices(challenge_seed(proof.root, proof.public_digest), proof.k, len(cs))
    hashes += 1 + (0 if proof.k >= len(cs) else len(expected))
    if len(proof.openings) != len(expected):
        return fail("wrong number of openings")

    depth = _ceil_log2(cs.trace_length)
    for opening, cidx in zip(proof.openings, expected):
        if opening.constraint != cidx:
            return fail("opening does not answer the derived challenge")
        refs = cs.constraints[cidx].cell_refs
        if tuple(r.index for r in opening.rows) != refs:
            return fail("opened rows do not match the constraint's cells")
        cells = {}
        for r in opening.rows:
            if len(r.path) != depth:
                return fail("authentication path has the wrong length")
            hashes += 1 + depth
            if path_root(r.data, r.index, r.path) != proof.root:
                return fail("authentication path does not reach the root")
            try:
                cells[r.index] = decode_row(cs.n, r.data)
            except (WitnessError, IndexError, struct.error):
                return fail("malformed row")
        evals += 1
        kind = cs.constraints[cidx].kind.value
        if kind in ("HashOutputs", "HashValue"):
            hashes += 1
        try:
            if not eval_constraint(cs, cidx, cells, pub):
                return fail(f"constraint {cidx} ({kind}) violated")
        except StructuralError as exc:
            return fail(str(exc))
    return Verification(True, "ok", hashes, evals)


def verify(proof: Proof, pub: PublicInputs, cs: ConstraintSystem | None = None) -> bool:
    return verify_detailed(proof, pub, cs).ok


@dataclass(frozen=True)
class VerifierCost:
    hashes: int
    evaluations: int
    units: float


def verifier_cost(
    proof: Proof, pub: PublicInputs, cs: ConstraintSystem | None = None, model: GasModel | None = None
) -> VerifierCost:
    """Metered cost of running :func:`verify` on ``proof`` ("reference-backend gas")."""
    model = model or GasModel()
    v = verify_detailed(proof, pub, cs)
    units = model.tx_base + v.hashes * model.hash_unit + v.evaluations * model.constraint_unit
    return VerifierCost(v.hashes, v.evaluations, units)
