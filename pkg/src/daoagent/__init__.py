"""Verifiable Shapley-value settlement for coalitions of autonomous agents.

Coalition outputs and values are hash-committed to a simulated ledger, exact
Shapley allocations are laid out as a constraint-checked witness trace, and a
Merkle/Fiat-Shamir spot-check proof gates settlement.
"""

from .game import (
    SCALE,
    CharacteristicTable,
    ShapleyAllocation,
    check_superadditivity,
    collusion_gain,
    exact_shapley,
    monte_carlo_shapley,
    normalize,
    permutation_oracle,
)
from .orchestrator import AdversaryScenario, RunConfig, RunReport, ScenarioKind, execute, run, run_scenario

__version__ = "0.1.0"

__all__ = [
    "SCALE",
    "AdversaryScenario",
    "CharacteristicTable",
    "RunConfig",
    "RunReport",
    "ScenarioKind",
    "ShapleyAllocation",
    "check_superadditivity",
    "collusion_gain",
    "exact_shapley",
    "execute",
    "monte_carlo_shapley",
    "normalize",
    "permutation_oracle",
    "run",
    "run_scenario",
]
