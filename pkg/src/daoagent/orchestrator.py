"""End-to-end task runs: execute and commit every coalition, verify and allocate,
prove, then verify and settle on the ledger, with optional adversarial injections.
"""

from __future__ import annotations

import enum
import json
import math
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

from . import circuit, proof
from .commitment import ContentStore, HashSet, OutputRecord, accept_outputs, hash_value
from .game import (
    SCALE,
    CharacteristicTable,
    ShapleyAllocation,
    check_superadditivity,
    collusion_gain,
    exact_shapley,
    members,
)
from .gas import GasModel, gas_report
from .ledger import Ledger
from .trading import PriceSeries, Role, SyntheticAgent, decode_signals, default_roles, derive_seed, evaluate_coalition


class ScenarioKind(str, enum.Enum):
    NONE = "none"
    OUTPUT_MANIPULATION = "A1_output_manipulation"
    VALUE_TAMPER = "A2_value_tamper"
    ALLOCATION_TAMPER = "A3_allocation_tamper"
    COLLUSION = "A4_collusion"
    WITHHOLDING = "A5_withholding"

    @classmethod
    def parse(cls, name: str) -> ScenarioKind:
        for kind in cls:
            if name in (kind.value, kind.name.lower()) or kind.value.split("_")[0] == name.upper():
                return kind
        raise ValueError(f"unknown scenario {name!r}")


@dataclass(frozen=True)
class AdversaryScenario:
    """An injected deviation.

    ``targets`` are agent ids (A1, A3, A5), a coalition mask (A2) or the
    colluding agents (A4).  ``delta`` is in raw fixed-point units.
    """

    kind: ScenarioKind = ScenarioKind.NONE
    targets: tuple[int, ...] = ()
    degradation: float = 1.0
    delta: int = SCALE

    @classmethod
    def default(cls, kind: ScenarioKind | str, n: int) -> AdversaryScenario:
        kind = ScenarioKind.parse(kind) if isinstance(kind, str) else kind
        if kind is ScenarioKind.VALUE_TAMPER:
            return cls(kind, ((1 << n) - 1,))
        if kind is ScenarioKind.ALLOCATION_TAMPER:
            return cls(kind, (0, 1 % n))
        if kind is ScenarioKind.COLLUSION:
            return cls(kind, (0, 1 % n), delta=SCALE // 2)
        if kind is ScenarioKind.NONE:
            return cls()
        return cls(kind, (0,))

    def validate(self, n: int) -> None:
        if self.kind is ScenarioKind.VALUE_TAMPER:
            if len(self.targets) != 1 or not 0 <= self.targets[0] < 1 << n:
                raise ValueError("A2 needs exactly one coalition mask target")
        elif any(not 0 <= t < n for t in self.targets):
            raise ValueError("scenario targets must be agent ids")
        if self.kind is not ScenarioKind.NONE and not self.targets:
            raise ValueError("scenario needs at least one target")
        if not 0.0 <= self.degradation <= 1.0:
            raise ValueError("degradation must be in [0, 1]")


@dataclass(frozen=True)
class RunConfig:
    n: int = 4
    seed: int = 0
    steps: int = 256
    drift: float = 0.0002
    volatility: float = 0.02
    k: int = proof.DEFAULT_K
    full_check: bool = False
    allow_deficit: bool = False
    nonce: int = 0
    roles: tuple[Role, ...] | None = None
    gas_model: GasModel = field(default_factory=GasModel)
    scenario: AdversaryScenario = field(default_factory=AdversaryScenario)

    def __post_init__(self):
        if not 1 <= self.n <= 16:
            raise ValueError("n must be in [1, 16]")
        if self.steps < 3:
            raise ValueError("need at least three price steps")
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if self.roles is not None and len(self.roles) != self.n:
            raise ValueError("one role per agent")
        self.scenario.validate(self.n)

    @property
    def agent_roles(self) -> list[Role]:
        return list(self.roles) if self.roles is not None else default_roles(self.n)

    @classmethod
    def from_dict(cls, data: dict[str, Any], base_dir: Path | None = None) -> RunConfig:
        data = dict(data)
        known = {"n", "seed", "steps", "drift", "volatility", "k", "full_check", "allow_deficit", "nonce"}
        kwargs = {key: data.pop(key) for key in list(data) if key in known}
        if "roles" in data:
            counts = data.pop("roles")
            roles = [Role.DATA_ANALYSIS] * counts.get("data_analysis", 0)
            roles += [Role.DECISION] * counts.get("decision", 0)
            roles += [Role.MARKET_PERSPECTIVE] * counts.get("market_perspective", 0)
            kwargs["roles"] = tuple(roles)
            kwargs.setdefault("n", len(roles))
        if "gas_model" in data:
            path = Path(data.pop("gas_model"))
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            kwargs["gas_model"] = GasModel.load(path)
        if "scenario" in data:
            entry = data.pop("scenario")
            if isinstance(entry, str):
                entry = {"kind": entry}
            n = kwargs.get("n", cls.n)
            default = AdversaryScenario.default(entry["kind"], n)
            kwargs["scenario"] = AdversaryScenario(
                default.kind,
                tuple(entry.get("targets", default.targets)),
                float(entry.get("degradation", default.degradation)),
                int(entry.get("delta", default.delta)),
            )
        if data:
            raise ValueError(f"unknown config keys: {sorted(data)}")
        return cls(**kwargs)

    @classmethod
    def load(cls, path: str | Path) -> RunConfig:
        path = Path(path)
        return cls.from_dict(json.loads(path.read_text()), base_dir=path.parent)

    def with_scenario(self, scenario: AdversaryScenario) -> RunConfig:
        return replace(self, scenario=scenario)

    def summary(self) -> dict[str, Any]:
        return {
            "n": self.n,
            "seed": self.seed,
            "steps": self.steps,
            "drift": self.drift,
            "volatility": self.volatility,
            "k": self.k,
            "full_check": self.full_check,
            "allow_deficit": self.allow_deficit,
            "nonce": self.nonce,
            "roles": [r.value for r in self.agent_roles],
            "scenario": {
                "kind": self.scenario.kind.value,
                "targets": list(self.scenario.targets),
                "degradation": self.scenario.degradation,
                "delta": self.scenario.delta,
            },
        }


class CoordinatorAbort(Exception):
    def __init__(self, phase: int, reason: str, coalition: int | None = None):
        super().__init__(reason)
        self.phase = phase
        self.reason = reason
        self.coalition = coalition


@dataclass
class CommittedState:
    """Everything Phase 1 leaves behind: off-chain payloads plus ledger/store handles."""

    config: RunConfig
    prices: PriceSeries
    agents: list[SyntheticAgent]
    outputs: list[OutputRecord]
    values: list[int]
    store: ContentStore
    ledger: Ledger
    received_outputs: list[list[OutputRecord]] = field(default_factory=list)
    received_values: list[int] = field(default_factory=list)

    def coalition_outputs(self, mask: int) -> list[OutputRecord]:
        return [self.outputs[i] for i in members(mask)]


def build_agents(config: RunConfig) -> list[SyntheticAgent]:
    agents = [
        SyntheticAgent.create(i, role, derive_seed(config.seed, "agent", i)) for i, role in enumerate(config.agent_roles)
    ]
    sc = config.scenario
    if sc.kind is ScenarioKind.WITHHOLDING:
        for t in sc.targets:
            agents[t] = agents[t].withholding(sc.degradation)
    return agents


def run_phase1(config: RunConfig, store: ContentStore | None = None, ledger: Ledger | None = None) -> CommittedState:
    """Execute every coalition, store and commit its output hash set, evaluate and commit its value."""
    store = store if store is not None else ContentStore()
    ledger = ledger if ledger is not None else Ledger(config.gas_model)
    prices = PriceSeries.random_walk(config.steps, config.drift, config.volatility, derive_seed(config.seed, "prices"))
    agents = build_agents(config)
    outputs = [OutputRecord(a.id, a.output(prices)) for a in agents]
    signals = [decode_signals(o.payload) for o in outputs]

    sc = config.scenario
    values = []
    for mask in range(1 << config.n):
        coalition = [outputs[i] for i in members(mask)]
        cid = store.store(HashSet.from_records(coalition))
        ledger.commit_cid(mask, cid)
        value = evaluate_coalition([signals[i] for i in members(mask)], prices)
        if sc.kind is ScenarioKind.COLLUSION and mask and all(mask >> t & 1 for t in sc.targets):
            value += sc.delta
        values.append(value)
        ledger.commit_value_hash(mask, hash_value(value, mask))

    state = CommittedState(config, prices, agents, outputs, values, store, ledger)
    state.received_outputs = [state.coalition_outputs(m) for m in range(1 << config.n)]
    state.received_values = list(values)
    _inject_post_commit(state)
    return state


def _inject_post_commit(state: CommittedState) -> None:
    sc = state.config.scenario
    if sc.kind is ScenarioKind.OUTPUT_MANIPULATION:
        for t in sc.targets:
            original = state.outputs[t]
            forged = bytearray(original.payload)
            forged[-1] ^= 0x01
            forged_record = OutputRecord(t, bytes(forged))
            for mask, records in enumerate(state.received_outputs):
                state.received_outputs[mask] = [forged_record if r.agent == t else r for r in records]
    elif sc.kind is ScenarioKind.VALUE_TAMPER:
        for mask in sc.targets:
            state.received_values[mask] += sc.delta


def run_phase2(state: CommittedState) -> tuple[CharacteristicTable, ShapleyAllocation]:
    """Coordinator checks every received output set and value against the ledger, then allocates."""
    n = state.config.n
    for mask in range(1 << n):
        cid = state.ledger.get_cid(mask)
        if not accept_outputs(state.store, state.received_outputs[mask], cid):
            raise CoordinatorAbort(2, f"output hash set mismatch for coalition {mask:#x}", mask)
    for mask in range(1 << n):
        if hash_value(state.received_values[mask], mask) != state.ledger.get_value_hash(mask):
            raise CoordinatorAbort(2, f"value hash mismatch for coalition {mask:#x}", mask)
    table = CharacteristicTable(n, tuple(state.received_values))
    return table, exact_shapley(table)


@dataclass
class RunReport:
    config: dict[str, Any]
    status: str
    abort_phase: int | None = None
    abort_reason: str = ""
    failing_coalition: int | None = None
    grand_value: int | None = None
    numerators: list[int] | None = None
    allocations: list[int] | None = None
    payouts: list[int] | None = None
    superadditivity: dict[str, Any] | None = None
    gas: dict[str, Any] | None = None
    proof: dict[str, Any] | None = None
    ledger: dict[str, Any] = field(default_factory=dict)
    detection: dict[str, Any] = field(default_factory=dict)
    timings: dict[str, float] = field(default_factory=dict)

    @property
    def settled(self) -> bool:
        return self.status == "settled"

    def to_dict(self) -> dict[str, Any]:
        out = asdict(self)
        out.pop("timings")  # wall-clock times would break byte-identical reports
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_text(self) -> str:
        lines = [f"status: {self.status}"]
        if self.abort_reason:
            lines.append(f"abort (phase {self.abort_phase}): {self.abort_reason}")
        if self.payouts is not None:
            lines.append(f"{'agent':>5}  {'role':<20} {'payout':>14}")
            for i, p in enumerate(self.payouts):
                lines.append(f"{i:>5}  {self.config['roles'][i]:<20} {p / SCALE:>14.6f}")
            lines.append(f"{'':>5}  {'v(N)':<20} {self.grand_value / SCALE:>14.6f}")
        if self.gas:
            g = self.gas
            lines.append(
                f"gas: baseline {g['baseline']:.0f}  hybrid {g['hybrid']:.0f}  "
                f"reduction {100 * g['reduction']:.2f}%  reference-backend {g['reference_backend']:.0f}"
            )
        for phase, secs in self.timings.items():
            lines.append(f"time {phase}: {secs:.3f}s")
        return "\n".join(lines) + "\n"


@dataclass
class RunArtifacts:
    report: RunReport
    state: CommittedState | None = None
    table: CharacteristicTable | None = None
    allocation: ShapleyAllocation | None = None
    trace: circuit.WitnessTrace | None = None
    public: circuit.PublicInputs | None = None
    proof: proof.Proof | None = None


def public_inputs(state: CommittedState, allocations, grand_value: int) -> circuit.PublicInputs:
    n = state.config.n
    return circuit.PublicInputs(
        allocations=tuple(allocations),
        grand_value=grand_value,
        output_hash_cids=tuple(state.ledger.get_cid(m) for m in range(1 << n)),
        value_hashes=tuple(state.ledger.get_value_hash(m) for m in range(1 << n)),
        nonce=state.config.nonce,
    )


def run_phase3_phase4(
    table: CharacteristicTable,
    allocation: ShapleyAllocation,
    state: CommittedState,
    k: int | None = None,
    report: RunReport | None = None,
) -> RunArtifacts:
    """Build witness and constraints, prove, and ask the ledger to verify and settle."""
    config = state.config
    n = config.n
    report = report or RunReport(config.summary(), "pending")
    k = k if k is not None else config.k

    t0 = time.perf_counter()
    trace = circuit.build_witness(table, state.received_outputs)
    cs = circuit.build_constraints(n)
    mus = list(allocation.as_fixed())
    sc = config.scenario
    if sc.kind is ScenarioKind.ALLOCATION_TAMPER:
        gainer, loser = sc.targets[0], sc.targets[-1]
        mus[gainer] += sc.delta
        mus[loser] -= sc.delta
    pub = public_inputs(state, mus, table.grand)
    if config.full_check:
        k = len(cs)
    if sc.kind is ScenarioKind.ALLOCATION_TAMPER:
        prf = proof.prove_dishonest(trace, cs, pub, k)
        report.detection["violated_constraints"] = len(circuit.violations(cs, trace, pub))
        report.detection["total_constraints"] = len(cs)
    else:
        prf = proof.prove(trace, cs, pub, k)
    report.timings["prove"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    settlement = state.ledger.verify_and_settle(prf, pub, allow_deficit=config.allow_deficit)
    report.timings["verify_settle"] = time.perf_counter() - t0

    g = gas_report(n, config.gas_model)
    report.gas = {
        "agents": n,
        "baseline": g.baseline,
        "hybrid": g.hybrid,
        "reduction": g.reduction,
        "reference_backend": settlement.reference_gas
        or proof.verifier_cost(prf, pub, cs, config.gas_model).units,
    }
    report.proof = {
        "k": prf.k,
        "openings": len(prf.openings),
        "size_bytes": len(prf.to_bytes()),
        "root": prf.root.hex(),
        "public_digest": prf.public_digest.hex(),
        "constraints": len(cs),
        "trace_rows": len(trace),
    }
    report.grand_value = table.grand
    report.numerators = list(allocation.numerators)
    report.allocations = mus
    if settlement.settled:
        report.status = "settled"
        report.payouts = list(settlement.payouts)
    else:
        report.status = "aborted"
        report.abort_phase = 4
        report.abort_reason = settlement.reason
    if sc.kind is ScenarioKind.ALLOCATION_TAMPER:
        report.detection["detected"] = not settlement.settled
    return RunArtifacts(report, state, table, allocation, trace, pub, prf)


def _ledger_summary(ledger: Ledger) -> dict[str, Any]:
    return {
        "height": ledger.height,
        "state": ledger.state.hex(),
        "gas_used": ledger.gas_used,
        "commitments": len(ledger.cids) + len(ledger.value_hashes),
    }


def execute(config: RunConfig, store: ContentStore | None = None) -> RunArtifacts:
    """Run all four phases with the config's scenario; aborts become report data."""
    report = RunReport(config.summary(), "pending")
    t0 = time.perf_counter()
    state = run_phase1(config, store=store)
    report.timings["phase1"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    try:
        table, allocation = run_phase2(state)
    except CoordinatorAbort as abort:
        state.ledger.record_abort(abort.phase, abort.reason)
        report.status = "aborted"
        report.abort_phase = abort.phase
        report.abort_reason = abort.reason
        report.failing_coalition = abort.coalition
        report.detection["detected"] = True
        report.ledger = _ledger_summary(state.ledger)
        return RunArtifacts(report, state)
    report.timings["phase2"] = time.perf_counter() - t0
    report.superadditivity = asdict(check_superadditivity(table))

    artifacts = run_phase3_phase4(table, allocation, state, report=report)
    sc = config.scenario
    if sc.kind is ScenarioKind.COLLUSION:
        _report_collusion(artifacts, config)
    elif sc.kind is ScenarioKind.WITHHOLDING:
        _report_withholding(artifacts, config)
    elif sc.kind in (ScenarioKind.OUTPUT_MANIPULATION, ScenarioKind.VALUE_TAMPER):
        report.detection["detected"] = False
    report.ledger = _ledger_summary(state.ledger)
    return artifacts


def _honest_allocation(config: RunConfig) -> ShapleyAllocation:
    honest_state = run_phase1(config.with_scenario(AdversaryScenario()))
    return run_phase2(honest_state)[1]


def _report_collusion(artifacts: RunArtifacts, config: RunConfig) -> None:
    sc = config.scenario
    honest = _honest_allocation(config)
    mask = sum(1 << t for t in sc.targets)
    rep = collusion_gain(artifacts.table, honest, artifacts.allocation, mask)
    artifacts.report.detection.update(
        {
            "coalition": mask,
            "gain": rep.gain,
            "bound": rep.bound,
            "slack": rep.slack,
            "within_bound": rep.within_bound,
            "honest_payouts": list(honest.as_fixed()),
        }
    )


def _report_withholding(artifacts: RunArtifacts, config: RunConfig) -> None:
    honest = _honest_allocation(config).as_fixed()
    deviated = artifacts.allocation.as_fixed()
    artifacts.report.detection.update(
        {
            "targets": list(config.scenario.targets),
            "honest_share": [honest[t] for t in config.scenario.targets],
            "deviated_share": [deviated[t] for t in config.scenario.targets],
            "share_lowered": all(deviated[t] < honest[t] for t in config.scenario.targets),
        }
    )


def run(config: RunConfig, store: ContentStore | None = None) -> RunReport:
    return execute(config, store).report


def run_scenario(scenario: AdversaryScenario, config: RunConfig) -> RunReport:
    return run(config.with_scenario(scenario))


def sign_test_pvalue(wins: int, trials: int) -> float:
    """One-sided binomial sign test, P(X >= wins) for X ~ Binomial(trials, 1/2)."""
    return sum(math.comb(trials, j) for j in range(wins, trials + 1)) / 2**trials


def withholding_study(config: RunConfig, repetitions: int = 30, degradation: float = 1.0, target: int = 0) -> dict:
    """Paired honest/withholding runs over seeds; the deviator's share should drop."""
    wins = 0
    pairs = []
    for r in range(repetitions):
        cfg = replace(config, seed=derive_seed(config.seed, "withholding", r))
        honest = run_phase2(run_phase1(cfg.with_scenario(AdversaryScenario())))[1].as_fixed()[target]
        scenario = AdversaryScenario(ScenarioKind.WITHHOLDING, (target,), degradation)
        deviated = run_phase2(run_phase1(cfg.with_scenario(scenario)))[1].as_fixed()[target]
        pairs.append((honest, deviated))
        wins += deviated < honest
    return {
        "pairs": pairs,
        "wins": wins,
        "p_value": sign_test_pvalue(wins, repetitions),
        "mean_drop": float(np.mean([h - d for h, d in pairs])),
    }
