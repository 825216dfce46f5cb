"""Command-line entry point.

Exit codes: 0 settled / success, 1 usage or config error, 2 run aborted,
3 ledger replay divergence.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import circuit, proof
from .commitment import ContentStore
from .game import CharacteristicTable, GameError, check_superadditivity, exact_shapley, monte_carlo_shapley, normalize
from .gas import GasModel, gas_table_csv
from .ledger import replay_journal
from .orchestrator import AdversaryScenario, RunConfig, execute

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_ABORT = 2
EXIT_DIVERGENCE = 3


class UsageError(Exception):
    pass


def _load_config(args) -> RunConfig:
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise UsageError(f"config file not found: {path}")
        try:
            config = RunConfig.load(path)
        except (ValueError, KeyError, TypeError) as exc:
            raise UsageError(f"malformed config {path}: {exc}") from exc
    else:
        config = RunConfig(n=args.n) if getattr(args, "n", None) else RunConfig()
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.k is not None:
        changes["k"] = args.k
    if args.full_check:
        changes["full_check"] = True
    if getattr(args, "allow_deficit", False):
        changes["allow_deficit"] = True
    if args.gas_model:
        changes["gas_model"] = GasModel.load(args.gas_model)
    if args.scenario:
        changes["scenario"] = AdversaryScenario.default(args.scenario, config.n)
    try:
        return replace(config, **changes)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _write_run(artifacts, out: Path | None) -> None:
    report = artifacts.report
    sys.stderr.write(report.to_text())
    if out is None:
        sys.stdout.write(report.to_json())
        return
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report.to_json())
    (out / "report.txt").write_text(replace(report, timings={}).to_text())
    artifacts.state.ledger.write_journal(out / "journal.log")
    if artifacts.proof is not None:
        (out / "proof.hex").write_text(artifacts.proof.hex() + "\n")
    if report.gas:
        (out / "gas.csv").write_text(gas_table_csv([report.config["n"]], artifacts.state.config.gas_model))


def cmd_run(args) -> int:
    config = _load_config(args)
    store = ContentStore(args.persist) if args.persist else None
    artifacts = execute(config, store)
    _write_run(artifacts, Path(args.out) if args.out else None)
    return EXIT_OK if artifacts.report.settled else EXIT_ABORT


def cmd_attack(args) -> int:
    if not args.scenario:
        raise UsageError("attack needs --scenario")
    return cmd_run(args)


def cmd_shapley(args) -> int:
    path = Path(args.table)
    if not path.is_file():
        raise UsageError(f"table file not found: {path}")
    data = path.read_bytes()
    try:
        table = CharacteristicTable.from_bytes(data) if data[:4] == b"CGAM" else CharacteristicTable.from_csv(data.decode())
        table = normalize(table)
        result = {"n": table.n, "grand_value": table.grand}
        if args.monte_carlo:
            est = monte_carlo_shapley(table, args.monte_carlo, args.seed or 0)
            result.update(estimates=list(est.as_fixed()), std_errors=list(est.std_errors), samples=est.samples)
        else:
            alloc = exact_shapley(table)
            result.update(numerators=list(alloc.numerators), denominator=alloc.denominator, payouts=list(alloc.as_fixed()))
        result["superadditivity"] = vars(check_superadditivity(table))
    except GameError as exc:
        raise UsageError(str(exc)) from exc
    text = json.dumps(result, indent=2, sort_keys=True) + "\n"
    _emit(text, args.out, "shapley.json")
    return EXIT_OK


def cmd_bench_gas(args) -> int:
    model = GasModel.load(args.gas_model) if args.gas_model else GasModel()
    _emit(gas_table_csv(args.n, model), args.out, "gas.csv")
    return EXIT_OK


def cmd_bench_proof(args) -> int:
    """Proof size and metered verifier work per agent count (no wall-clock columns)."""
    model = GasModel.load(args.gas_model) if args.gas_model else GasModel()
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["agents", "k", "constraints", "trace_rows", "proof_bytes", "verify_hashes", "verify_evals", "reference_gas"])
    for n in args.n:
        config = RunConfig(n=n, seed=args.seed or 0, k=args.k or proof.DEFAULT_K, allow_deficit=True, gas_model=model)
        art = execute(config)
        cs = circuit.build_constraints(n)
        cost = proof.verifier_cost(art.proof, art.public, cs, model)
        writer.writerow(
            [n, art.proof.k, len(cs), len(art.trace), len(art.proof.to_bytes()), cost.hashes, cost.evaluations, round(cost.units)]
        )
    _emit(buf.getvalue(), args.out, "proof.csv")
    return EXIT_OK


def cmd_replay(args) -> int:
    path = Path(args.journal)
    if not path.is_file():
        raise UsageError(f"journal not found: {path}")
    result = replay_journal(path.read_text())
    if result.ok:
        print(f"replay ok: {result.transactions} transactions")
        return EXIT_OK
    print(f"replay diverged at transaction {result.divergence}: {result.reason}")
    return EXIT_DIVERGENCE


def _emit(text: str, out: str | None, name: str) -> None:
    if out:
        target = Path(out)
        target.mkdir(parents=True, exist_ok=True)
        (target / name).write_text(text)
    else:
        sys.stdout.write(text)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="run config (JSON)")
    p.add_argument("--persist", help="directory for the content store")
    p.add_argument("--gas-model", help="gas model (JSON)")
    p.add_argument("--k", type=int, help="spot-check sample count")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--scenario", help="adversary scenario (A1..A5 or full name)")
    p.add_argument("--full-check", action="store_true", help="open every constraint instead of sampling")
    p.add_argument("--allow-deficit", action="store_true", help="settle negative payouts as signed balances")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="daoagent", description="Verifiable Shapley settlement for agent coalitions.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run all four phases")
    _common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("attack", help="run with an adversary scenario")
    _common(p)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("shapley", help="Shapley allocation of a game table (CSV or CGAM bytes)")
    p.add_argument("table")
    p.add_argument("--monte-carlo", type=int, metavar="SAMPLES")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_shapley)

    p = sub.add_parser("bench-gas", help="on-chain vs hybrid gas table")
    p.add_argument("--n", type=int, nargs="*", default=[4, 6, 8, 10])
    p.add_argument("--gas-model")
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench_gas)

    p = sub.add_parser("bench-proof", help="proof size and verifier work per agent count")
    p.add_argument("--n", type=int, nargs="*", default=[4, 6, 8, 10])
    p.add_argument("--k", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--gas-model")
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench_proof)

    p = sub.add_parser("replay", help="replay a ledger journal")
    p.add_argument("journal")
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
