"""Gas-cost model for fully on-chain Shapley versus proof verification.

The on-chain baseline is affine in the number of coalitions,
``baseline(n) = onchain_base + onchain_per_coalition * 2**n``, with the two
coefficients fitted to reference measurements at two agent counts.  The
hybrid cost is a flat ``verify_constant`` per settlement.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Iterable, Mapping

# measured on-chain Shapley gas at n = 4 and n = 6
REFERENCE_BASELINES = {4: 367_000, 6: 1_330_000}
REFERENCE_VERIFY = 27_000


@dataclass(frozen=True)
class GasModel:
    verify_constant: float = REFERENCE_VERIFY
    onchain_base: float = 46_000.0
    onchain_per_coalition: float = 20_062.5
    storage_write: float = 22_100.0
    # weights for metering the reference spot-check verifier
    tx_base: float = 21_000.0
    hash_unit: float = 84.0
    constraint_unit: float = 5_000.0

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ValueError(f"gas parameter {f.name} must be non-negative")

    @classmethod
    def calibrate(
        cls,
        points: Mapping[int, float] = REFERENCE_BASELINES,
        verify_constant: float = REFERENCE_VERIFY,
        **overrides,
    ) -> GasModel:
        """Solve ``base + per_coalition * 2**n`` through two ``(n, gas)`` points."""
        if len(points) != 2:
            raise ValueError("calibration needs exactly two (n, gas) points")
        (n1, g1), (n2, g2) = sorted(points.items())
        per = (g2 - g1) / ((1 << n2) - (1 << n1))
        base = g1 - per * (1 << n1)
        return cls(verify_constant=verify_constant, onchain_base=base, onchain_per_coalition=per, **overrides)

    @classmethod
    def load(cls, path: str | Path) -> GasModel:
        data = json.loads(Path(path).read_text())
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown gas model keys: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in data.items()})

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")

    def baseline(self, n: int) -> float:
        return self.onchain_base + self.onchain_per_coalition * (1 << n)


@dataclass(frozen=True)
class GasReport:
    agents: int
    baseline: float
    hybrid: float
    reduction: float


def gas_report(n: int, model: GasModel | None = None) -> GasReport:
    if n < 1:
        raise ValueError("need at least one agent")
    model = model or GasModel()
    baseline = model.baseline(n)
    hybrid = model.verify_constant
    return GasReport(n, baseline, hybrid, 1.0 - hybrid / baseline)


def gas_table_csv(ns: Iterable[int], model: GasModel | None = None) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["agents", "baseline", "hybrid", "reduction"])
    for n in ns:
        r = gas_report(n, model)
        writer.writerow([r.agents, round(r.baseline), round(r.hybrid), f"{100 * r.reduction:.2f}"])
    return buf.getvalue()
