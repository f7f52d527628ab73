"""``qsa`` command-line entry point."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .adversary import ATTACK_KINDS, CHANNEL_ATTACKS, AttackDescriptor, BasisPolicy, analytic_detection
from .bids import Bid
from .harness import efficiency_report, emit_report, run_trials, trial_seed
from .protocol import Verdict, run_auction
from .scenario import ScenarioError, example3_scenario, load_scenario

EXIT_OK = 0
EXIT_NOT_COMPLETED = 1
EXIT_SCENARIO = 2


def _int_list(text: str) -> list[int]:
    try:
        values = [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError("decoy counts must be positive integers")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qsa", description="Quantum sealed-bid auction simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario once or as a Monte Carlo batch")
    run.add_argument("--scenario", required=True, type=Path)
    run.add_argument("--trials", type=int, default=1)
    run.add_argument("--seed", type=int, default=None, help="master seed (defaults to the scenario's)")
    run.add_argument("--out", type=Path, default=None, help="report file (default: stdout)")
    run.add_argument("--format", choices=("json", "csv"), default="json")
    run.add_argument("--transcript", type=Path, default=None, help="also write the transcript of trial 0")
    run.add_argument("--workers", type=int, default=1)

    atk = sub.add_parser("attack", help="sweep an attack over decoy counts")
    atk.add_argument("--scenario", required=True, type=Path)
    atk.add_argument("--type", required=True, choices=ATTACK_KINDS)
    atk.add_argument("--basis-policy", choices=[p.value for p in BasisPolicy], default="uniform_xy")
    atk.add_argument("--channel", choices=("S2", "S5", "S6"), default="S2")
    atk.add_argument("--target", default=None)
    atk.add_argument("--winner", default=None, help="false_announcement: bidder Alice names as winner")
    atk.add_argument("--fabricated-bid", default=None)
    atk.add_argument("--colluders", default=None, help="collusion: comma-separated bidder names")
    atk.add_argument("--sweep-decoys", type=_int_list, default=[1, 2, 4, 8, 16])
    atk.add_argument("--trials", type=int, default=1000)
    atk.add_argument("--seed", type=int, default=None)
    atk.add_argument("--out", type=Path, default=None, help="write the sweep as JSON")
    atk.add_argument("--workers", type=int, default=1)

    ex = sub.add_parser("example3", help="run the built-in three-party example and print its transcript")
    ex.add_argument("--debug", action="store_true", help="include amplitudes in quantum payloads")

    t2 = sub.add_parser("table2", help="quantum consumption comparison")
    t2.add_argument("--scenario", type=Path, default=None, help="honest run to measure (default: example3)")
    t2.add_argument("--format", choices=("text", "json", "csv"), default="text")
    return parser


def _cmd_run(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.scenario)
    if args.trials < 1:
        raise ScenarioError("--trials", "must be at least 1")
    seed = scenario.seed if args.seed is None else args.seed
    if args.transcript is not None:
        _, transcript = run_auction(scenario, trial_seed(seed, 0))
        args.transcript.write_text(transcript.to_jsonl())
    stats = run_trials(scenario, args.trials, seed=seed, workers=args.workers)
    text = emit_report(stats, args.format, args.out)
    if args.out is None:
        sys.stdout.write(text)
    return EXIT_OK


def _descriptor(args: argparse.Namespace) -> AttackDescriptor:
    try:
        return AttackDescriptor(
            kind=args.type,
            basis_policy=BasisPolicy(args.basis_policy),
            channel=args.channel,
            target=args.target,
            winner=args.winner,
            fabricated_bid=Bid(args.fabricated_bid) if args.fabricated_bid else None,
            colluders=tuple(c.strip() for c in args.colluders.split(",")) if args.colluders else (),
        )
    except ValueError as exc:
        raise ScenarioError("attack", str(exc)) from None


def _cmd_attack(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.scenario)
    descriptor = _descriptor(args)
    base = scenario.with_changes(attack=descriptor)
    rows = []
    print(f"{'decoys':>6} {'trials':>7} {'channel':>8} {'99% CI':>18} {'analytic':>9} {'post-conf':>9}")
    for d in args.sweep_decoys:
        stats = run_trials(base.with_changes(decoy_count=d), args.trials, seed=args.seed, workers=args.workers)
        rates = stats.rates
        channel = rates["channel_abort_rate"]
        lo, hi = channel.interval()
        analytic = analytic_detection(descriptor, d) if descriptor.kind in CHANNEL_ATTACKS else None
        shown = f"{analytic:9.6f}" if analytic is not None else f"{'-':>9}"
        post = rates["post_confirmation_abort_rate"].value
        print(f"{d:>6} {stats.trials:>7} {channel.value:8.5f} [{lo:.5f}, {hi:.5f}] {shown} {post:9.5f}")
        rows.append({"decoys": d, "analytic_detection": analytic, **stats.to_dict()})
    if args.out is not None:
        args.out.write_text(json.dumps(rows, indent=2) + "\n")
    return EXIT_OK


def _cmd_example3(args: argparse.Namespace) -> int:
    outcome, transcript = run_auction(example3_scenario(), debug=args.debug)
    sys.stdout.write(transcript.to_jsonl())
    return EXIT_OK if outcome.verdict is Verdict.COMPLETED else EXIT_NOT_COMPLETED


def _cmd_table2(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.scenario) if args.scenario else None
    rows, usage = efficiency_report(scenario=scenario)
    if args.format == "json":
        payload = {"rows": [vars(r) for r in rows], "overhead": usage}
        sys.stdout.write(json.dumps(payload, indent=2) + "\n")
    elif args.format == "csv":
        writer = csv.writer(sys.stdout, lineterminator="\n")
        writer.writerow(["protocol", "resource", "qubits", "cbits", "xi", "detection_state", "source"])
        for r in rows:
            writer.writerow([r.protocol, r.resource, r.qubits_per_unit, r.cbits_per_unit, repr(r.xi), r.detection_state, r.source])
    else:
        print(f"{'protocol':<13} {'resource':<14} {'qubits':>6} {'cbits':>5} {'xi':>5}  detection state")
        for r in rows:
            print(f"{r.protocol:<13} {r.resource:<14} {r.qubits_per_unit:>6} {r.cbits_per_unit:>5} {r.xi:5.2f}  {r.detection_state} ({r.source})")
        print()
        print("overhead in the measured run (not counted in xi):")
        print(f"  message carriers   {usage['carrier_qubits']}")
        print(f"  bid bits conveyed  {usage['bid_bits']}")
        print(f"  carrier decoys     {usage['decoy_qubits']}")
        print(f"  EPR qubits         {usage['epr_qubits']}")
        print(f"  EPR decoys         {usage['epr_decoy_qubits']}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"run": _cmd_run, "attack": _cmd_attack, "example3": _cmd_example3, "table2": _cmd_table2}
    try:
        return handler[args.command](args)
    except ScenarioError as exc:
        print(f"qsa: scenario error: {exc}", file=sys.stderr)
        return EXIT_SCENARIO


if __name__ == "__main__":
    raise SystemExit(main())
