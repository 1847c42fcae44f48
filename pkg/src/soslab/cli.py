"""Command-line entry point: ``soslab <subcommand> ...``.

Records go to stdout, one JSON object per line; human-readable summaries go
to stderr. Exit codes: 0 ok, 1 internal error, 2 usage or parse error,
3 a check failed or the verdict is "unsolvable".
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .adversary import freeze_adversary
from .harness import (
    PROTOCOLS,
    CampaignError,
    Strategy,
    build_protocol,
    load_campaign,
    model_violation,
    run_campaign,
    safety_violation,
    target_sos,
)
from .kernel import (
    BudgetExceeded,
    CrashBudgetExceeded,
    CrashPoint,
    DecisionNotEnabled,
    Exhaustive,
    KernelError,
    Seeded,
    enumerate_runs,
    run,
    schedule_from_lines,
)
from .sos import (
    Sos,
    SosError,
    decide_solvability,
    disagreement_lower_bound,
    disagreement_upper_bound_n,
)
from .valence import StateGraphError, analyze, extract_state_graph, read_state_graph, write_state_graph

EXIT_OK, EXIT_INTERNAL, EXIT_USAGE, EXIT_FAILED = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _emit(rec: dict) -> None:
    sys.stdout.write(json.dumps(rec, sort_keys=True) + "\n")


def _say(text: str) -> None:
    sys.stderr.write(text + "\n")


def _default_seed() -> int:
    raw = os.environ.get("SOSLAB_SEED", "0")
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"SOSLAB_SEED must be an integer, got {raw!r}") from None


def _values(text: str | None) -> tuple[int, ...] | None:
    if text is None:
        return None
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError:
        raise UsageError(f"--values takes comma-separated integers, got {text!r}") from None


def _crash(text: str) -> CrashPoint:
    p, sep, step = text.partition("@")
    if not sep or not p.isdigit() or not step.isdigit():
        raise argparse.ArgumentTypeError(f"crash points look like PROCESS@STEP, got {text!r}")
    return CrashPoint(int(p), int(step))


def _protocol(args):
    sos = Sos.parse(args.sos) if args.sos is not None else None
    return build_protocol(args.protocol, n=args.n, t=args.t, sos=sos, d=args.d,
                          values=_values(args.values), relaxed=args.relaxed)


def _add_protocol_args(p: argparse.ArgumentParser, *, n_required: bool = True) -> None:
    p.add_argument("--protocol", required=True, choices=PROTOCOLS)
    p.add_argument("--sos", help="SOS text, e.g. '{{1},{1,2}}' (alg1, alg3)")
    p.add_argument("--d", type=int, help="number of values to disagree on (alg2)")
    p.add_argument("--values", help="comma-separated target values (alg2, constant)")
    p.add_argument("--n", type=int, required=n_required)
    p.add_argument("--t", type=int, default=0)
    p.add_argument("--relaxed", action="store_true",
                   help="alg2: accept n below the algorithm's requirement")


# -- subcommands ---------------------------------------------------------------


def cmd_decide(args) -> int:
    verdict = decide_solvability(Sos.parse(args.sos), args.t)
    _emit({"sos": str(Sos.parse(args.sos)), "t": args.t, **verdict.as_record()})
    _say(f"{'solvable' if verdict.solvable else 'unsolvable'} ({verdict.reason})")
    return EXIT_OK if verdict.solvable else EXIT_FAILED


def cmd_bounds(args) -> int:
    lo = disagreement_lower_bound(args.d, args.t)
    hi = disagreement_upper_bound_n(args.d, args.t)
    _emit({"d": args.d, "t": args.t, "lower": lo, "upper": hi})
    _say(f"d={args.d} t={args.t}: need n >= {lo}; the algorithm runs with n = {hi}")
    return EXIT_OK


def cmd_run(args) -> int:
    protocol = _protocol(args)
    if args.replay:
        schedule = schedule_from_lines(Path(args.replay).read_text().splitlines())
    else:
        seed = _default_seed() if args.seed is None else args.seed
        schedule = Seeded(seed, tuple(args.crash or ()))
    result = run(protocol, args.t, schedule, strict=False)
    for line in result.trace_lines():
        sys.stdout.write(line + "\n")
    summary = result.summary()
    problem = safety_violation(result, target_sos(protocol)) or model_violation(result)
    summary["check"] = "ok" if problem is None else problem
    _say(json.dumps(summary, sort_keys=True))
    return EXIT_OK if problem is None else EXIT_FAILED


def cmd_explore(args) -> int:
    protocol = _protocol(args)
    sos = target_sos(protocol)
    budget = Exhaustive(depth_bound=args.depth_bound, max_states=args.max_states)
    bad = 0
    seen: dict[str, int] = {}
    for i, r in enumerate(enumerate_runs(protocol, args.t, budget)):
        rec = r.summary()
        rec["run"] = i
        problem = safety_violation(r, sos) or model_violation(r)
        rec["check"] = "ok" if problem is None else problem
        bad += problem is not None
        seen[rec["output_set"]] = seen.get(rec["output_set"], 0) + 1
        _emit(rec)
    _say(f"{sum(seen.values())} runs; output sets: "
         + ", ".join(f"{o} x{k}" for o, k in sorted(seen.items())) + f"; {bad} failing")
    return EXIT_OK if bad == 0 else EXIT_FAILED


def cmd_adversary(args) -> int:
    if args.protocol != "alg2" and args.values is None:
        raise UsageError("--values is required for protocols other than alg2")
    protocol = _protocol(args)
    values = _values(args.values) or protocol.config.values
    d = args.d if args.d is not None else len(values)
    seed = args.seed if args.seed is not None else (
        None if "SOSLAB_SEED" not in os.environ else _default_seed())
    result, report = freeze_adversary(protocol, args.t, d, values, seed=seed)
    rec = report.as_record()
    rec.update(protocol=args.protocol, n=args.n, t=args.t, d=d, seed=seed)
    _emit(rec)
    _say(f"adversary {report.outcome}: output set {rec['output_set']} "
         f"with crashes {rec['crash_set']} (target {rec['target']})")
    return EXIT_FAILED if report.violated else EXIT_OK


def cmd_valence(args) -> int:
    if args.file:
        with open(args.file) as fh:
            graph = read_state_graph(fh)
    else:
        if args.protocol is None or args.n is None:
            raise UsageError("valence needs --file, or --protocol with --n")
        graph = extract_state_graph(_protocol(args), args.t, depth_bound=args.depth_bound,
                                    max_states=args.max_states)
    if args.dump:
        with open(args.dump, "w") as fh:
            write_state_graph(graph, fh)
    report = analyze(graph)
    if args.states:
        for rec in report.as_records():
            _emit(rec)
    summary = report.summary()
    _emit({"summary": summary})
    axioms = ", ".join(f"{k}={'yes' if v['holds'] else 'no'}" for k, v in summary["axioms"].items())
    _say(f"{summary['states']} states, {summary['output_states']} output, "
         f"{len(summary['disconnected'])} disconnected, {len(summary['critical'])} critical; {axioms}")
    return EXIT_OK


def cmd_campaign(args) -> int:
    overrides = {"n": args.n, "t": args.t, "seeds": args.seeds, "strategy": args.strategy}
    campaign = load_campaign(args.config, overrides)
    reports = run_campaign(campaign)
    width = max(len(r.check) for r in reports) if reports else 5
    _say(f"campaign {campaign.name}: {campaign.protocol} n={campaign.n} t={campaign.t}")
    for r in reports:
        _emit({"campaign": campaign.name, **r.as_record()})
        _say(f"  {r.check:<{width}}  {r.status:<12}  {r.runs_examined} runs")
    if args.counterexample:
        bad = next((r for r in reports if r.counterexample is not None), None)
        if bad is not None:
            protocol = campaign.instantiate()
            again = run(protocol, campaign.t, bad.counterexample.schedule,
                        bad.counterexample.inputs, strict=False)
            Path(args.counterexample).write_text("\n".join(again.trace_lines()) + "\n")
    return EXIT_OK if all(r.status != "failed" for r in reports) else EXIT_FAILED


# -- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="soslab", description="Simulate and analyze SOS tasks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decide", help="is an SOS task solvable with up to t crashes?")
    p.add_argument("--sos", required=True)
    p.add_argument("--t", type=int, required=True)
    p.set_defaults(func=cmd_decide)

    p = sub.add_parser("bounds", help="process-count bounds for d-disagreement")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--t", type=int, required=True)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("run", help="one seeded or replayed run; trace on stdout")
    _add_protocol_args(p)
    p.add_argument("--seed", type=int, help="defaults to $SOSLAB_SEED, else 0")
    p.add_argument("--crash", type=_crash, action="append", metavar="P@STEP")
    p.add_argument("--replay", metavar="TRACE", help="replay a JSON-lines trace instead of seeding")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("explore", help="enumerate every run of a small instance")
    _add_protocol_args(p)
    p.add_argument("--max-states", type=int, default=200_000)
    p.add_argument("--depth-bound", type=int, default=10_000)
    p.set_defaults(func=cmd_explore)

    p = sub.add_parser("adversary", help="attack a protocol with the freezing adversary")
    _add_protocol_args(p)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_adversary)

    p = sub.add_parser("valence", help="valence analysis of a state graph")
    p.add_argument("--file", help="state graph file to analyze")
    p.add_argument("--protocol", choices=PROTOCOLS)
    p.add_argument("--sos")
    p.add_argument("--d", type=int)
    p.add_argument("--values")
    p.add_argument("--n", type=int)
    p.add_argument("--t", type=int, default=0)
    p.add_argument("--relaxed", action="store_true")
    p.add_argument("--max-states", type=int, default=100_000)
    p.add_argument("--depth-bound", type=int, default=200)
    p.add_argument("--dump", metavar="FILE", help="also write the extracted graph here")
    p.add_argument("--states", action="store_true", help="emit one record per state")
    p.set_defaults(func=cmd_valence)

    p = sub.add_parser("campaign", help="run a campaign config file")
    p.add_argument("config")
    p.add_argument("--n", type=int)
    p.add_argument("--t", type=int)
    p.add_argument("--seeds", help="override, e.g. 0:500")
    p.add_argument("--strategy", choices=[s.value for s in Strategy])
    p.add_argument("--counterexample", metavar="FILE",
                   help="write the first failing run's trace here")
    p.set_defaults(func=cmd_campaign)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return args.func(args)
    except (UsageError, SosError, CampaignError, StateGraphError, OSError) as exc:
        _say(f"soslab {args.command}: error: {exc}")
        return EXIT_USAGE
    except KernelError as exc:
        _say(f"soslab {args.command}: error: {exc}")
        usage = isinstance(exc, (CrashBudgetExceeded, DecisionNotEnabled, BudgetExceeded))
        return EXIT_USAGE if usage else EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001 - last-resort handler for the exit-code contract
        _say(f"soslab {args.command}: internal error: {type(exc).__name__}: {exc}")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
