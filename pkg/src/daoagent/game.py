"""Cooperative games over a small agent set and their Shapley allocations.

Coalitions are bitmasks (bit ``i`` set means agent ``i`` is a member) and every
coalition value is a fixed-point integer ``round(value * SCALE)``.  Exact
Shapley numerators are computed with the formula multiplied through by ``n!``
so that every weight is an integer and the efficiency axiom is an exact
integer identity::

    Phi_i = sum_{S not containing i} (n-1-|S|)! * |S|! * (v(S | i) - v(S))
    sum_i Phi_i == n! * v(N)
"""

from __future__ import annotations

import csv
import io
import itertools
import math
import struct
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterable, Sequence

import numpy as np

SCALE = 10**6
MAX_EXACT_AGENTS = 16
MAX_ORACLE_AGENTS = 8

_INT64_MIN = -(2**63)
_INT64_MAX = 2**63 - 1
_INT128_MAX = 2**127 - 1

TABLE_MAGIC = b"CGAM"
TABLE_VERSION = 1


class GameError(ValueError):
    """Raised for malformed games or inputs outside the supported range."""


def to_fixed(value: float) -> int:
    return int(round(value * SCALE))


def popcount(mask: int) -> int:
    return mask.bit_count()


def members(mask: int) -> list[int]:
    return [i for i in range(mask.bit_length()) if mask >> i & 1]


def full_mask(n: int) -> int:
    return (1 << n) - 1


def shapley_weight(n: int, size: int) -> int:
    """Integer weight ``(n-1-size)! * size!`` of a coalition of ``size`` agents."""
    return math.factorial(n - 1 - size) * math.factorial(size)


@dataclass(frozen=True)
class CharacteristicTable:
    """Fixed-point characteristic function, one raw value per coalition mask."""

    n: int
    values: tuple[int, ...]

    def __post_init__(self):
        if not 1 <= self.n <= 32:
            raise GameError(f"agent count must be in [1, 32], got {self.n}")
        if len(self.values) != 1 << self.n:
            raise GameError(f"expected {1 << self.n} values, got {len(self.values)}")
        for raw in self.values:
            if not isinstance(raw, (int, np.integer)):
                raise GameError("coalition values must be integers")
            if not _INT64_MIN <= raw <= _INT64_MAX:
                raise GameError("coalition value does not fit in a signed 64-bit integer")
        object.__setattr__(self, "values", tuple(int(v) for v in self.values))

    @classmethod
    def from_function(cls, n: int, fn: Callable[[int], int]) -> CharacteristicTable:
        return cls(n, tuple(fn(mask) for mask in range(1 << n)))

    @classmethod
    def from_floats(cls, n: int, values: Iterable[float]) -> CharacteristicTable:
        return cls(n, tuple(to_fixed(v) for v in values))

    @property
    def grand(self) -> int:
        return self.values[-1]

    def __getitem__(self, mask: int) -> int:
        return self.values[mask]

    def __add__(self, other: CharacteristicTable) -> CharacteristicTable:
        if self.n != other.n:
            raise GameError("cannot add games over different agent sets")
        return CharacteristicTable(self.n, tuple(a + b for a, b in zip(self.values, other.values)))

    def permuted(self, perm: Sequence[int]) -> CharacteristicTable:
        """Relabel agents: agent ``i`` of this game becomes agent ``perm[i]``."""

        def relabel(mask: int) -> int:
            out = 0
            for i in members(mask):
                out |= 1 << perm[i]
            return out

        values = [0] * len(self.values)
        for mask, raw in enumerate(self.values):
            values[relabel(mask)] = raw
        return CharacteristicTable(self.n, tuple(values))

    # -- canonical forms -------------------------------------------------

    def to_bytes(self) -> bytes:
        header = TABLE_MAGIC + struct.pack(">BB", TABLE_VERSION, self.n)
        return header + struct.pack(f">{len(self.values)}q", *self.values)

    @classmethod
    def from_bytes(cls, data: bytes) -> CharacteristicTable:
        if data[:4] != TABLE_MAGIC or len(data) < 6:
            raise GameError("not a serialized game table")
        version, n = struct.unpack(">BB", data[4:6])
        if version != TABLE_VERSION:
            raise GameError(f"unsupported table version {version}")
        count = 1 << n
        if len(data) != 6 + 8 * count:
            raise GameError("truncated or oversized game table")
        return cls(n, struct.unpack(f">{count}q", data[6:]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["mask", "value"])
        for mask, raw in enumerate(self.values):
            writer.writerow([mask, raw])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> CharacteristicTable:
        rows = {}
        for row in csv.DictReader(io.StringIO(text)):
            rows[int(row["mask"])] = int(row["value"])
        if not rows:
            raise GameError("empty game CSV")
        n = max(rows).bit_length()
        if sorted(rows) != list(range(1 << n)):
            raise GameError("game CSV must list every coalition mask exactly once")
        return cls(max(n, 1), tuple(rows[m] for m in range(1 << max(n, 1))))


def normalize(table: CharacteristicTable) -> CharacteristicTable:
    """Shift every value so the empty coalition is worth zero."""
    base = table.values[0]
    if base == 0:
        return table
    return CharacteristicTable(table.n, tuple(v - base for v in table.values))


def largest_remainder(numerators: Sequence[int], denominator: int) -> tuple[int, ...]:
    """Round ``numerators / denominator`` to integers preserving their exact total.

    Leftover units go to the largest remainders; ties go to the lowest index.
    When the numerators do not sum to a multiple of ``denominator`` the total
    is rounded down.
    """
    floors = [num // denominator for num in numerators]
    remainders = [num - f * denominator for num, f in zip(numerators, floors)]
    leftover = sum(remainders) // denominator
    order = sorted(range(len(numerators)), key=lambda i: (-remainders[i], i))
    for i in order[:leftover]:
        floors[i] += 1
    return tuple(floors)


@dataclass(frozen=True)
class ShapleyAllocation:
    """Exact Shapley values held as numerators over ``n!`` (in raw fixed-point units)."""

    n: int
    numerators: tuple[int, ...]

    @property
    def denominator(self) -> int:
        return math.factorial(self.n)

    def as_fixed(self) -> tuple[int, ...]:
        return largest_remainder(self.numerators, self.denominator)

    def as_float(self) -> tuple[float, ...]:
        return tuple(num / self.denominator / SCALE for num in self.numerators)


def _check_exact_range(table: CharacteristicTable) -> None:
    if table.n > MAX_EXACT_AGENTS:
        raise GameError(f"exact Shapley supports at most {MAX_EXACT_AGENTS} agents")
    if table.values[0] != 0:
        raise GameError("table must be normalized (v(empty) = 0) before computing Shapley values")
    # |Phi_i| <= n! * 2 * max|v|; must fit a signed 128-bit accumulator
    bound = math.factorial(table.n) * 2 * max(abs(v) for v in table.values)
    if bound > _INT128_MAX:
        raise GameError("game values too large for exact mode")


def exact_shapley(table: CharacteristicTable) -> ShapleyAllocation:
    _check_exact_range(table)
    n, v = table.n, table.values
    weights = [shapley_weight(n, s) for s in range(n)]
    numerators = []
    for i in range(n):
        bit = 1 << i
        acc = 0
        for mask in range(1 << n):
            if mask & bit:
                continue
            acc += weights[popcount(mask)] * (v[mask | bit] - v[mask])
        numerators.append(acc)
    return ShapleyAllocation(n, tuple(numerators))


@lru_cache(maxsize=None)
def _all_orderings(n: int) -> np.ndarray:
    return np.array(list(itertools.permutations(range(n))), dtype=np.int64).reshape(-1, n)


def _marginals(values: np.ndarray, orderings: np.ndarray) -> np.ndarray:
    """Marginal contribution of each agent, per ordering, indexed by agent id."""
    joined = np.cumsum(np.left_shift(1, orderings), axis=1)
    before = joined - np.left_shift(1, orderings)
    by_position = values[joined] - values[before]
    out = np.empty_like(by_position)
    np.put_along_axis(out, orderings, by_position, axis=1)
    return out


def permutation_oracle(table: CharacteristicTable) -> ShapleyAllocation:
    """Brute-force Shapley numerators: summed marginals over all ``n!`` orderings."""
    n = table.n
    if n > MAX_ORACLE_AGENTS:
        raise GameError(f"permutation oracle supports at most {MAX_ORACLE_AGENTS} agents")
    if table.values[0] != 0:
        raise GameError("table must be normalized before computing Shapley values")
    peak = max(abs(v) for v in table.values)
    if 2 * peak * math.factorial(n) < 2**62:
        marg = _marginals(np.array(table.values, dtype=np.int64), _all_orderings(n))
        return ShapleyAllocation(n, tuple(int(x) for x in marg.sum(axis=0)))
    totals = [0] * n
    for order in itertools.permutations(range(n)):
        mask = 0
        for agent in order:
            totals[agent] += table.values[mask | 1 << agent] - table.values[mask]
            mask |= 1 << agent
    return ShapleyAllocation(n, tuple(totals))


@dataclass(frozen=True)
class MonteCarloEstimate:
    estimates: tuple[float, ...]
    std_errors: tuple[float, ...]
    samples: int

    def as_fixed(self) -> tuple[int, ...]:
        return tuple(int(round(x)) for x in self.estimates)


def monte_carlo_shapley(table: CharacteristicTable, samples: int, seed: int) -> MonteCarloEstimate:
    """Estimate Shapley values from uniformly sampled agent orderings.

    Estimates and standard errors are in raw fixed-point units.
    """
    if samples < 1:
        raise GameError("need at least one sample")
    if table.values[0] != 0:
        raise GameError("table must be normalized before computing Shapley values")
    rng = np.random.Generator(np.random.PCG64(seed))
    n = table.n
    orderings = rng.permuted(np.tile(np.arange(n, dtype=np.int64), (samples, 1)), axis=1)
    values = np.array(table.values, dtype=np.float64)
    marg = _marginals(values, orderings)
    means = marg.mean(axis=0)
    if samples > 1:
        errors = marg.std(axis=0, ddof=1) / math.sqrt(samples)
    else:
        errors = np.zeros(n)
    return MonteCarloEstimate(tuple(float(x) for x in means), tuple(float(x) for x in errors), samples)


@dataclass(frozen=True)
class SuperadditivityReport:
    grand_value: int
    standalone_total: int
    surplus: int
    superadditive: bool


def check_superadditivity(table: CharacteristicTable) -> SuperadditivityReport:
    standalone = sum(table.values[1 << i] for i in range(table.n))
    surplus = table.grand - standalone
    return SuperadditivityReport(table.grand, standalone, surplus, surplus > 0)


@dataclass(frozen=True)
class CollusionReport:
    coalition: int
    gain: int
    bound: float
    slack: float
    within_bound: bool


def collusion_gain(
    table: CharacteristicTable,
    honest: ShapleyAllocation,
    colluded: ShapleyAllocation,
    coalition: int,
) -> CollusionReport:
    """Payout uplift of ``coalition`` under ``colluded`` relative to ``honest``.

    The bound ``|K|/n * v(N)`` is reported as a diagnostic; the quadratic
    slack term has no stated constant, so only the leftover is reported.
    """
    if honest.n != colluded.n:
        raise GameError("allocations cover different agent sets")
    ks = members(coalition)
    honest_fixed, colluded_fixed = honest.as_fixed(), colluded.as_fixed()
    gain = sum(colluded_fixed[i] for i in ks) - sum(honest_fixed[i] for i in ks)
    bound = len(ks) / table.n * table.grand
    return CollusionReport(coalition, gain, bound, gain - bound, gain <= bound)


def random_table(rng: np.random.Generator, n: int, magnitude: int = 10 * SCALE) -> CharacteristicTable:
    """Random normalized game, handy for tests and demos."""
    values = rng.integers(-magnitude, magnitude, size=1 << n, endpoint=True)
    values[0] = 0
    return CharacteristicTable(n, tuple(int(v) for v in values))
