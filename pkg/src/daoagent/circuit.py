"""Witness trace and locally checkable constraints for the Shapley computation.

The trace is a flat list of rows addressed by a stable linear index:

* ``mask``                              coalition row ``(1, mask, v, d_0 .. d_{n-1})``
* ``2**n + i * 2**(n-1) + t``           accumulator row ``(2, i, t, S_t, coeff, marginal, acc)``
* ``2**n + n * 2**(n-1) + i``           final row ``(3, i, phi, mu)``

``d_*`` are the coalition's sorted output digests followed by zero padding,
``S_t`` is the ``t``-th coalition without agent ``i`` in ascending mask order,
``coeff = (n-1-|S_t|)! * |S_t|!`` and ``acc`` is the running sum after step
``t``.  ``phi`` is the Shapley numerator over ``n!`` and ``mu`` the published
fixed-point payout.

Row bytes (big-endian) are what the proof backend hashes into Merkle leaves:

* coalition: kind u8, mask u32, v i64, n x 32-byte digest slots
* accumulator: kind u8, agent u16, step u32, mask u32, coeff i128, marginal i128, acc i128
* final: kind u8, agent u16, phi i128, mu i128
"""

from __future__ import annotations

import enum
import math
import struct
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Mapping, Sequence, Union

from .commitment import (
    DIGEST_SIZE,
    EMPTY_DIGEST,
    Cid,
    CommitmentError,
    HashSet,
    OutputRecord,
    check_digest,
    hash_output,
    hash_value,
    sha256,
)
from .game import (
    MAX_EXACT_AGENTS,
    CharacteristicTable,
    GameError,
    full_mask,
    largest_remainder,
    members,
    popcount,
    shapley_weight,
)

KIND_COALITION = 1
KIND_ACCUM = 2
KIND_FINAL = 3

TRACE_MAGIC = b"DATR"
TRACE_VERSION = 1
PUBLIC_TAG = b"PUB"
PUBLIC_VERSION = 1

Row = tuple


class StructuralError(Exception):
    """A constraint referenced a cell that cannot be resolved."""


class WitnessError(ValueError):
    pass


# -- trace geometry ---------------------------------------------------------


def accum_steps(n: int) -> int:
    return 1 << (n - 1)


def accum_index(n: int, agent: int, step: int) -> int:
    return (1 << n) + agent * accum_steps(n) + step


def final_index(n: int, agent: int) -> int:
    return (1 << n) + n * accum_steps(n) + agent


def trace_length(n: int) -> int:
    return (1 << n) + n * accum_steps(n) + n


def step_mask(agent: int, step: int) -> int:
    """The ``step``-th coalition (ascending) that excludes ``agent``."""
    low = step & ((1 << agent) - 1)
    return ((step >> agent) << (agent + 1)) | low


# -- row encoding -------------------------------------------------------------


def _i128(x: int) -> bytes:
    return x.to_bytes(16, "big", signed=True)


def _from_i128(b: bytes) -> int:
    return int.from_bytes(b, "big", signed=True)


def row_width(n: int, kind: int) -> int:
    if kind == KIND_COALITION:
        return 1 + 4 + 8 + n * DIGEST_SIZE
    if kind == KIND_ACCUM:
        return 1 + 2 + 4 + 4 + 3 * 16
    if kind == KIND_FINAL:
        return 1 + 2 + 2 * 16
    raise WitnessError(f"unknown row kind {kind}")


def encode_row(n: int, row: Row) -> bytes:
    try:
        return _encode_row(n, row)
    except (ValueError, TypeError, AttributeError, OverflowError, struct.error, CommitmentError) as exc:
        if isinstance(exc, WitnessError):
            raise
        raise WitnessError(f"row cannot be encoded: {exc}") from exc


def _encode_row(n: int, row: Row) -> bytes:
    kind = row[0]
    if kind == KIND_COALITION:
        _, mask, value, *digests = row
        if len(digests) != n:
            raise WitnessError("coalition row needs one digest slot per agent")
        return struct.pack(">BIq", kind, mask, value) + b"".join(check_digest(d) for d in digests)
    if kind == KIND_ACCUM:
        _, agent, step, mask, coeff, marginal, acc = row
        return struct.pack(">BHII", kind, agent, step, mask) + _i128(coeff) + _i128(marginal) + _i128(acc)
    if kind == KIND_FINAL:
        _, agent, phi, mu = row
        return struct.pack(">BH", kind, agent) + _i128(phi) + _i128(mu)
    raise WitnessError(f"unknown row kind {kind}")


def decode_row(n: int, data: bytes) -> Row:
    if not data:
        raise WitnessError("empty row")
    kind = data[0]
    if len(data) != row_width(n, kind):
        raise WitnessError("row length does not match its kind")
    if kind == KIND_COALITION:
        _, mask, value = struct.unpack(">BIq", data[:13])
        digests = tuple(data[13 + j * DIGEST_SIZE : 13 + (j + 1) * DIGEST_SIZE] for j in range(n))
        return (kind, mask, value, *digests)
    if kind == KIND_ACCUM:
        _, agent, step, mask = struct.unpack(">BHII", data[:11])
        return (kind, agent, step, mask, _from_i128(data[11:27]), _from_i128(data[27:43]), _from_i128(data[43:59]))
    _, agent = struct.unpack(">BH", data[:3])
    return (kind, agent, _from_i128(data[3:19]), _from_i128(data[19:35]))


# -- trace ----------------------------------------------------------------------


@dataclass(frozen=True)
class WitnessTrace:
    n: int
    rows: tuple[Row, ...]

    def __len__(self):
        return len(self.rows)

    def __getitem__(self, index: int) -> Row:
        return self.rows[index]

    def coalition_row(self, mask: int) -> Row:
        return self.rows[mask]

    def accum_row(self, agent: int, step: int) -> Row:
        return self.rows[accum_index(self.n, agent, step)]

    def final_row(self, agent: int) -> Row:
        return self.rows[final_index(self.n, agent)]

    @property
    def numerators(self) -> tuple[int, ...]:
        return tuple(self.final_row(i)[2] for i in range(self.n))

    @property
    def payouts(self) -> tuple[int, ...]:
        return tuple(self.final_row(i)[3] for i in range(self.n))

    def row_bytes(self) -> list[bytes]:
        return [encode_row(self.n, row) for row in self.rows]

    def to_bytes(self) -> bytes:
        header = TRACE_MAGIC + struct.pack(">BBI", TRACE_VERSION, self.n, len(self.rows))
        return header + b"".join(self.row_bytes())

    @classmethod
    def from_bytes(cls, data: bytes) -> WitnessTrace:
        if data[:4] != TRACE_MAGIC:
            raise WitnessError("not a serialized witness trace")
        version, n, count = struct.unpack(">BBI", data[4:10])
        if version != TRACE_VERSION:
            raise WitnessError(f"unsupported trace version {version}")
        rows, pos = [], 10
        for _ in range(count):
            width = row_width(n, data[pos])
            rows.append(decode_row(n, data[pos : pos + width]))
            pos += width
        if pos != len(data):
            raise WitnessError("trailing bytes after trace rows")
        return cls(n, tuple(rows))

    def with_cell(self, row: int, col: int, value) -> WitnessTrace:
        """Copy of this trace with one cell replaced (used to build dishonest traces)."""
        rows = list(self.rows)
        cells = list(rows[row])
        cells[col] = value
        rows[row] = tuple(cells)
        return WitnessTrace(self.n, tuple(rows))


def build_witness(
    table: CharacteristicTable,
    outputs: Sequence[Sequence[OutputRecord]],
) -> WitnessTrace:
    """Lay out the full exact-Shapley computation as trace rows."""
    n = table.n
    if not 1 <= n <= MAX_EXACT_AGENTS:
        raise WitnessError(f"agent count must be in [1, {MAX_EXACT_AGENTS}]")
    if table.values[0] != 0:
        raise WitnessError("table must be normalized")
    if len(outputs) != 1 << n:
        raise WitnessError(f"outputs must cover all {1 << n} coalitions, got {len(outputs)}")

    rows: list[Row] = []
    for mask in range(1 << n):
        records = outputs[mask]
        if sorted(r.agent for r in records) != members(mask):
            raise WitnessError(f"outputs for coalition {mask:#x} do not match its members")
        digests = sorted(hash_output(r) for r in records)
        digests += [EMPTY_DIGEST] * (n - len(digests))
        rows.append((KIND_COALITION, mask, table.values[mask], *digests))

    v = table.values
    phis = []
    for i in range(n):
        acc = 0
        for t in range(accum_steps(n)):
            s = step_mask(i, t)
            coeff = shapley_weight(n, popcount(s))
            marginal = v[s | 1 << i] - v[s]
            acc += coeff * marginal
            rows.append((KIND_ACCUM, i, t, s, coeff, marginal, acc))
        phis.append(acc)

    mus = largest_remainder(phis, math.factorial(n))
    rows.extend((KIND_FINAL, i, phis[i], mus[i]) for i in range(n))
    return WitnessTrace(n, tuple(rows))


# -- public inputs --------------------------------------------------------------


@dataclass(frozen=True)
class PublicInputs:
    """Everything the verifier sees: payouts, v(N) and every per-coalition commitment.

    ``nonce`` tags a task instance; it only enters ``public_digest``.
    """

    allocations: tuple[int, ...]
    grand_value: int
    output_hash_cids: tuple[Cid, ...]
    value_hashes: tuple[bytes, ...]
    nonce: int = 0

    def __post_init__(self):
        n = len(self.allocations)
        if n < 1:
            raise WitnessError("public inputs need at least one allocation")
        if len(self.output_hash_cids) != 1 << n or len(self.value_hashes) != 1 << n:
            raise WitnessError("per-coalition public arrays must have 2**n entries")
        for h in self.value_hashes:
            check_digest(h)

    @property
    def n(self) -> int:
        return len(self.allocations)

    def to_bytes(self) -> bytes:
        n = self.n
        head = PUBLIC_TAG + struct.pack(">BBQq", PUBLIC_VERSION, n, self.nonce, self.grand_value)
        body = struct.pack(f">{n}q", *self.allocations)
        return head + body + b"".join(c.digest for c in self.output_hash_cids) + b"".join(self.value_hashes)

    @cached_property
    def public_digest(self) -> bytes:
        return sha256(self.to_bytes())

    def replace(self, **changes) -> PublicInputs:
        fields = dict(
            allocations=self.allocations,
            grand_value=self.grand_value,
            output_hash_cids=self.output_hash_cids,
            value_hashes=self.value_hashes,
            nonce=self.nonce,
        )
        fields.update(changes)
        return PublicInputs(**fields)


# -- constraints ------------------------------------------------------------------


class ConstraintKind(str, enum.Enum):
    HASH_OUTPUTS = "HashOutputs"
    HASH_VALUE = "HashValue"
    ACCUM_STEP = "AccumStep"
    FINALIZE = "Finalize"
    EFFICIENCY = "Efficiency"


@dataclass(frozen=True)
class Constraint:
    """One typed check. ``subject`` is the coalition mask, agent, or (agent, step) it concerns."""

    kind: ConstraintKind
    subject: tuple[int, ...]
    cell_refs: tuple[int, ...]
    public_refs: tuple[tuple[str, int], ...] = ()


@dataclass(frozen=True)
class ConstraintSystem:
    n: int
    constraints: tuple[Constraint, ...]
    counts: dict = field(compare=False)

    def __len__(self):
        return len(self.constraints)

    def __getitem__(self, index: int) -> Constraint:
        return self.constraints[index]

    @property
    def trace_length(self) -> int:
        return trace_length(self.n)


@lru_cache(maxsize=8)
def build_constraints(n: int) -> ConstraintSystem:
    if not 1 <= n <= MAX_EXACT_AGENTS:
        raise GameError(f"agent count must be in [1, {MAX_EXACT_AGENTS}]")
    out: list[Constraint] = []
    for mask in range(1 << n):
        out.append(Constraint(ConstraintKind.HASH_OUTPUTS, (mask,), (mask,), (("output_hash_cids", mask),)))
    for mask in range(1 << n):
        out.append(Constraint(ConstraintKind.HASH_VALUE, (mask,), (mask,), (("value_hashes", mask),)))
    for i in range(n):
        for t in range(accum_steps(n)):
            s = step_mask(i, t)
            refs = [accum_index(n, i, t)]
            if t > 0:
                refs.append(accum_index(n, i, t - 1))
            refs += [s, s | 1 << i]
            out.append(Constraint(ConstraintKind.ACCUM_STEP, (i, t), tuple(refs)))
    finals = tuple(final_index(n, j) for j in range(n))
    last = accum_steps(n) - 1
    for i in range(n):
        out.append(
            Constraint(ConstraintKind.FINALIZE, (i,), (accum_index(n, i, last),) + finals, (("allocations", i),))
        )
    pub_all = tuple(("allocations", j) for j in range(n)) + (("grand_value", 0),)
    out.append(Constraint(ConstraintKind.EFFICIENCY, (), finals + (full_mask(n),), pub_all))

    counts = {kind: 0 for kind in ConstraintKind}
    for c in out:
        counts[c.kind] += 1
    return ConstraintSystem(n, tuple(out), counts)


def _fetch(rows, index: int) -> Row:
    try:
        return rows[index]
    except (IndexError, KeyError):
        raise StructuralError(f"constraint references unresolvable row {index}") from None


def _check_hash_outputs(n, mask, rows, pub) -> bool:
    row = _fetch(rows, mask)
    if row[0] != KIND_COALITION or len(row) != 3 + n or row[1] != mask:
        return False
    slots = row[3:]
    size = popcount(mask)
    digests, padding = list(slots[:size]), slots[size:]
    if any(d == EMPTY_DIGEST for d in digests) or any(p != EMPTY_DIGEST for p in padding):
        return False
    if digests != sorted(set(digests)):
        return False
    return sha256(HashSet(tuple(digests)).to_bytes()) == pub.output_hash_cids[mask].digest


def _check_hash_value(n, mask, rows, pub) -> bool:
    row = _fetch(rows, mask)
    if row[0] != KIND_COALITION or row[1] != mask:
        return False
    return hash_value(row[2], mask) == pub.value_hashes[mask]


def _check_accum(n, agent, step, rows) -> bool:
    cur = _fetch(rows, accum_index(n, agent, step))
    prev_acc = 0
    if step > 0:
        prev = _fetch(rows, accum_index(n, agent, step - 1))
        if prev[0] != KIND_ACCUM:
            return False
        prev_acc = prev[6]
    s = step_mask(agent, step)
    lo, hi = _fetch(rows, s), _fetch(rows, s | 1 << agent)
    if lo[0] != KIND_COALITION or hi[0] != KIND_COALITION:
        return False
    kind, a, t, mask, coeff, marginal, acc = cur
    return (
        kind == KIND_ACCUM
        and a == agent
        and t == step
        and mask == s
        and coeff == shapley_weight(n, popcount(s))
        and marginal == hi[2] - lo[2]
        and acc == prev_acc + coeff * marginal
    )


def _final_rows(n, rows) -> list[Row] | None:
    finals = [_fetch(rows, final_index(n, j)) for j in range(n)]
    if any(f[0] != KIND_FINAL or f[1] != j for j, f in enumerate(finals)):
        return None
    return finals


def _check_finalize(n, agent, rows, pub) -> bool:
    last = _fetch(rows, accum_index(n, agent, accum_steps(n) - 1))
    finals = _final_rows(n, rows)
    if finals is None or last[0] != KIND_ACCUM or last[1] != agent or last[2] != accum_steps(n) - 1:
        return False
    if finals[agent][2] != last[6]:
        return False
    expected = largest_remainder([f[2] for f in finals], math.factorial(n))[agent]
    return finals[agent][3] == expected and pub.allocations[agent] == expected


def _check_efficiency(n, rows, pub) -> bool:
    finals = _final_rows(n, rows)
    grand = _fetch(rows, full_mask(n))
    if finals is None or grand[0] != KIND_COALITION or grand[1] != full_mask(n):
        return False
    return (
        sum(f[2] for f in finals) == math.factorial(n) * grand[2]
        and grand[2] == pub.grand_value
        and sum(pub.allocations) == pub.grand_value
    )


RowSource = Union[WitnessTrace, Sequence[Row], Mapping[int, Row]]


def eval_constraint(cs: ConstraintSystem, index: int, rows: RowSource, pub: PublicInputs) -> bool:
    """Evaluate constraint ``index`` on the given rows.

    Raises :class:`StructuralError` when a referenced row is missing; malformed
    cell contents count as a failed constraint.
    """
    if not 0 <= index < len(cs):
        raise StructuralError(f"constraint index {index} out of range")
    if pub.n != cs.n:
        raise StructuralError("public inputs and constraint system disagree on n")
    c = cs.constraints[index]
    n = cs.n
    try:
        if c.kind is ConstraintKind.HASH_OUTPUTS:
            return _check_hash_outputs(n, c.subject[0], rows, pub)
        if c.kind is ConstraintKind.HASH_VALUE:
            return _check_hash_value(n, c.subject[0], rows, pub)
        if c.kind is ConstraintKind.ACCUM_STEP:
            return _check_accum(n, c.subject[0], c.subject[1], rows)
        if c.kind is ConstraintKind.FINALIZE:
            return _check_finalize(n, c.subject[0], rows, pub)
        return _check_efficiency(n, rows, pub)
    except StructuralError:
        raise
    except (TypeError, ValueError, IndexError, struct.error, CommitmentError):
        return False


def violations(cs: ConstraintSystem, rows: RowSource, pub: PublicInputs) -> list[int]:
    return [k for k in range(len(cs)) if not eval_constraint(cs, k, rows, pub)]


def check_all(cs: ConstraintSystem, rows: RowSource, pub: PublicInputs) -> bool:
    return all(eval_constraint(cs, k, rows, pub) for k in range(len(cs)))
