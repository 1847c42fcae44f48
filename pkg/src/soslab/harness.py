"""Checks and experiment drivers.

Every failed :class:`CheckReport` carries the decisions of the offending run,
so ``kernel.run(protocol, t, report.counterexample.schedule)`` reproduces it.
"""

from __future__ import annotations

import configparser
import enum
import itertools
import random
from collections.abc import Callable, Iterable, Iterator, Sequence
from dataclasses import dataclass, field
from pathlib import Path

from .kernel import (
    DELIVER,
    MOVE,
    START,
    TIMEOUT,
    CHOICE,
    CrashBudgetExceeded,
    CrashPoint,
    Decision,
    Exhaustive,
    Explicit,
    Info,
    RunResult,
    Seeded,
    check_model,
    enumerate_runs,
    run,
)
from .protocols import (
    Alg1,
    Alg1Config,
    Alg2,
    Alg3,
    Constant,
    alg1_behavior,
    alg1_instantiate,
    alg2_behavior,
    alg2_instantiate,
    alg3_behavior,
    alg3_instantiate,
    leaders_output_sets,
)
from .sos import Sos, SosError, format_set


class NonQuiescentRun(ValueError):
    pass


class PositionOutOfRange(ValueError):
    pass


class CampaignError(ValueError):
    pass


@dataclass(frozen=True)
class Counterexample:
    schedule: Explicit
    explanation: str
    inputs: tuple | None = None

    def as_record(self) -> dict:
        return {"explanation": self.explanation, "decisions": len(self.schedule.decisions)}


PASSED, FAILED, INCONCLUSIVE = "passed", "failed", "inconclusive"


@dataclass(frozen=True)
class CheckReport:
    check: str
    status: str
    runs_examined: int
    counterexample: Counterexample | None = None
    details: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.status == FAILED and self.counterexample is None:
            raise ValueError("a failed check must carry a counterexample")

    @property
    def passed(self) -> bool:
        return self.status == PASSED

    def as_record(self) -> dict:
        rec = {"check": self.check, "status": self.status, "runs_examined": self.runs_examined}
        rec.update(self.details)
        if self.counterexample is not None:
            rec["counterexample"] = self.counterexample.as_record()
        return rec


def _counterexample(result: RunResult, why: str) -> Counterexample:
    return Counterexample(result.replay_schedule(), why, result.input_vector)


# -- per-run checks ---------------------------------------------------------------
#
# A run check takes a RunResult and returns None when it holds, or a short
# explanation of what went wrong.

RunCheck = Callable[[RunResult], "str | None"]


def safety_violation(result: RunResult, sos: Sos) -> str | None:
    if not result.quiescent:
        return "run is not quiescent: a correct process never finished"
    if result.output_set not in sos:
        return f"output set {format_set(result.output_set)} is not in {sos}"
    return None


def check_safety(result: RunResult, sos: Sos) -> CheckReport:
    if not result.quiescent:
        raise NonQuiescentRun("safety is only defined on quiescent runs")
    why = safety_violation(result, sos)
    if why is None:
        return CheckReport("safety", PASSED, 1, details={"output_set": format_set(result.output_set)})
    return CheckReport("safety", FAILED, 1, _counterexample(result, why))


def model_violation(result: RunResult) -> str | None:
    m = check_model(result)
    if m.ok:
        return None
    return "; ".join(m.validity + m.integrity + m.closure + m.crash_bound)


def replay_violation(protocol, t: int, result: RunResult) -> str | None:
    again = run(protocol, t, result.replay_schedule(), result.input_vector, strict=False)
    return None if again == result else "replaying the decisions gave a different run"


def leaders_structure_violation(result: RunResult, config: Alg1Config) -> str | None:
    """LeadersOutputSets is a singleton {o_i} or a consecutive pair {o_i, o_i+1}."""
    los = leaders_output_sets(result, config)
    if not los:
        return "no leader communicated an output set"
    walk = config.walk
    if len(los) == 1:
        return None
    if len(los) == 2:
        a, b = los
        if any({walk[i], walk[i + 1]} == {a, b} for i in range(len(walk) - 1)):
            return None
    return f"LeadersOutputSets {sorted(format_set(o) for o in los)} is not a walk step"


def union_rule_violation(result: RunResult, config: Alg1Config) -> str | None:
    los = leaders_output_sets(result, config)
    union = frozenset().union(*los) if los else frozenset()
    if result.output_set != union:
        return (f"output set {format_set(result.output_set)} differs from the union "
                f"{format_set(union)} of LeadersOutputSets")
    return None


# -- witness schedules ------------------------------------------------------------


def build_lemmaA2_schedule(config: Alg1Config, i: int) -> Explicit:
    """Crash-free schedule in which all leaders advance in lockstep to walk
    position ``i`` and then all time out there. Everything after is left to
    the kernel's canonical completion."""
    walk, leaders = config.walk, config.leaders
    if not 1 <= i <= len(walk):
        raise PositionOutOfRange(f"walk position must be in 1..{len(walk)}, got {i}")
    ds = [Decision(START, p) for p in range(1, config.n + 1)]
    for j in range(1, i):
        for receiver in leaders:
            for sender in leaders:
                ds.append(Decision(DELIVER, receiver, sender, Info(MOVE, j + 1)))
        ds.extend(Decision(TIMEOUT, p, wait=j, arrived=True) for p in leaders)
    ds.extend(Decision(TIMEOUT, p, wait=i, arrived=False) for p in leaders)
    return Explicit(tuple(ds))


def witness_schedules(protocol) -> list[tuple[frozenset[int], Explicit]]:
    """(intended output set, schedule) pairs, one per output set the protocol should reach."""
    if isinstance(protocol, Alg1):
        c = protocol.config
        return [(o, build_lemmaA2_schedule(c, i)) for i, o in enumerate(c.walk, start=1)]
    if isinstance(protocol, Alg3) and protocol.config.leader is not None:
        leader = protocol.config.leader
        return [(o, Explicit((Decision(START, leader),
                              Decision(DELIVER, leader, leader, Info(CHOICE, o)))))
                for o in protocol.config.sos]
    return [(None, Explicit(()))]


# -- completeness ---------------------------------------------------------------------


class Strategy(enum.Enum):
    WITNESS = "witness"
    EXHAUSTIVE = "exhaustive"
    SEEDED = "seeded"


def _runs_for(protocol, t: int, strategy: Strategy, *, seeds: Iterable[int] = range(1000),
              budget: Exhaustive | None = None) -> Iterator[RunResult]:
    if strategy is Strategy.WITNESS:
        for _, sched in witness_schedules(protocol):
            yield run(protocol, t, sched, strict=False)
    elif strategy is Strategy.EXHAUSTIVE:
        yield from enumerate_runs(protocol, t, budget or Exhaustive())
    else:
        for s in seeds:
            yield run(protocol, t, Seeded(s), strict=False)


def check_completeness(protocol, t: int, sos: Sos, strategy: Strategy = Strategy.WITNESS, *,
                       seeds: Iterable[int] = range(1000),
                       budget: Exhaustive | None = None) -> CheckReport:
    """Does every output set of ``sos`` show up in some examined run?"""
    found: dict[frozenset[int], int] = {}
    runs = 0
    for r in _runs_for(protocol, t, strategy, seeds=seeds, budget=budget):
        runs += 1
        if r.quiescent:
            found[r.output_set] = found.get(r.output_set, 0) + 1
    missing = [o for o in sos if o not in found]
    details = {
        "strategy": strategy.value,
        "found": {format_set(o): k for o, k in sorted(found.items(), key=lambda kv: sorted(kv[0]))},
        "missing": [format_set(o) for o in missing],
    }
    if not missing:
        return CheckReport("completeness", PASSED, runs, details=details)
    if strategy is Strategy.SEEDED:
        return CheckReport("completeness", INCONCLUSIVE, runs, details=details)
    # the counterexample of a missing output set is "nothing produced it": we
    # attach the canonical run so the report stays replayable
    canonical = run(protocol, t, Explicit(()), strict=False)
    why = f"no examined run produced {', '.join(details['missing'])}"
    return CheckReport("completeness", FAILED, runs, _counterexample(canonical, why), details)


# -- crash sweeps ---------------------------------------------------------------------


@dataclass(frozen=True)
class SeedRange:
    seeds: Sequence[int]
    patterns: str = "all"  # "all": every crash set of size <= t per seed; "random": one per seed
    max_crashes: int | None = None  # cap on pattern size, defaults to t


def crash_patterns(n: int, k: int) -> list[tuple[int, ...]]:
    return [c for size in range(k + 1) for c in itertools.combinations(range(1, n + 1), size)]


def sweep_crash_patterns(protocol, t: int, source: SeedRange | Exhaustive,
                         checks: dict[str, RunCheck],
                         patterns: Iterable[Sequence[int]] | None = None,
                         on_run: Callable[[RunResult], None] | None = None) -> CheckReport:
    """Run every check on every run from ``source``, crashing processes per pattern.

    Seeded crash points are drawn uniformly over the length of the crash-free
    run for the same seed, so crashes land anywhere from before the first
    step to after the last.
    """
    n = protocol.n
    if patterns is not None:
        patterns = [tuple(p) for p in patterns]
        for p in patterns:
            if len(set(p)) > t:
                raise CrashBudgetExceeded(f"crash pattern {list(p)} exceeds t={t}")
            if any(not 1 <= q <= n for q in p):
                raise CrashBudgetExceeded(f"crash pattern {list(p)} names a missing process")
    runs = 0
    failures = 0
    first: Counterexample | None = None
    per_check = {name: 0 for name in checks}

    def examine(r: RunResult) -> None:
        nonlocal runs, failures, first
        runs += 1
        if on_run is not None:
            on_run(r)
        bad = False
        for name, fn in checks.items():
            why = fn(r)
            if why is not None:
                per_check[name] += 1
                bad = True
                if first is None:
                    first = _counterexample(r, f"{name}: {why}")
        failures += bad

    if isinstance(source, Exhaustive):
        if patterns is not None:
            for p in patterns:
                for r in enumerate_runs(protocol, len(p), Exhaustive(
                        source.depth_bound, frozenset(p), source.max_states)):
                    examine(r)
        else:
            for r in enumerate_runs(protocol, t, source):
                examine(r)
    else:
        k = t if source.max_crashes is None else min(t, source.max_crashes)
        pool = patterns if patterns is not None else crash_patterns(n, k)
        for seed in source.seeds:
            base = run(protocol, t, Seeded(seed), strict=False)
            horizon = sum(1 for e in base.trace if e.kind in (START, DELIVER, TIMEOUT, "release"))
            rng = random.Random(seed * 7919 + 17)
            chosen = pool if source.patterns == "all" else [pool[rng.randrange(len(pool))]]
            for p in chosen:
                if not p:
                    examine(base)
                    continue
                crashes = tuple(CrashPoint(q, rng.randint(0, horizon)) for q in p)
                examine(run(protocol, t, Seeded(seed, crashes), strict=False))
    details = {"failures": failures, "by_check": per_check}
    if failures:
        return CheckReport("sweep", FAILED, runs, first, details)
    return CheckReport("sweep", PASSED, runs, details=details)


# -- protocols by name ----------------------------------------------------------------


PROTOCOLS = ("alg1", "alg2", "alg3", "constant")


def build_protocol(name: str, *, n: int, t: int, sos: Sos | None = None, d: int | None = None,
                   values: Sequence[int] | None = None, relaxed: bool = False):
    """Instantiate a protocol by name; raises SosError subclasses on bad parameters."""
    if name == "alg1":
        if sos is None:
            raise SosError("alg1 needs an SOS")
        return alg1_behavior(alg1_instantiate(sos, n, t))
    if name == "alg2":
        if d is None:
            raise SosError("alg2 needs d")
        values = tuple(values) if values is not None else tuple(range(1, d + 1))
        return alg2_behavior(alg2_instantiate(d, values, n, t, relaxed=relaxed))
    if name == "alg3":
        if sos is None:
            raise SosError("alg3 needs an SOS")
        return alg3_behavior(alg3_instantiate(sos, n, t))
    if name == "constant":
        v = values[0] if values else 1
        return Constant(v, n)
    raise SosError(f"unknown protocol {name!r}; choose from {', '.join(PROTOCOLS)}")


def target_sos(protocol) -> Sos:
    if isinstance(protocol, Alg1):
        return protocol.config.sos
    if isinstance(protocol, Alg2):
        return protocol.sos
    return protocol.sos


# -- campaigns ------------------------------------------------------------------------


CAMPAIGN_HEADER = "# soslab-campaign v1"
CHECKS = ("safety", "completeness", "model", "replay", "leaders")


@dataclass(frozen=True)
class Campaign:
    name: str
    protocol: str
    n: int
    t: int
    sos: Sos | None = None
    d: int | None = None
    values: tuple[int, ...] | None = None
    relaxed: bool = False
    strategy: Strategy = Strategy.SEEDED
    seeds: tuple[int, ...] = tuple(range(100))
    crash_patterns: str = "all"  # all | random | none
    max_states: int = 200_000
    checks: tuple[str, ...] = ("safety", "model")

    def __post_init__(self) -> None:
        unknown = [c for c in self.checks if c not in CHECKS]
        if unknown:
            raise CampaignError(f"unknown checks {unknown}; choose from {', '.join(CHECKS)}")
        if self.crash_patterns not in ("all", "random", "none"):
            raise CampaignError(f"crash_patterns must be all, random or none, got {self.crash_patterns!r}")
        if "leaders" in self.checks and self.protocol != "alg1":
            raise CampaignError("the leaders check only applies to alg1")

    def instantiate(self):
        return build_protocol(self.protocol, n=self.n, t=self.t, sos=self.sos, d=self.d,
                              values=self.values, relaxed=self.relaxed)


def _parse_seeds(text: str) -> tuple[int, ...]:
    """``0:100`` (half-open range) or a comma-separated list."""
    text = text.strip()
    if ":" in text:
        lo, _, hi = text.partition(":")
        return tuple(range(int(lo), int(hi)))
    return tuple(int(x) for x in text.split(",") if x.strip())


def parse_campaign(text: str, overrides: dict | None = None) -> Campaign:
    first = next((ln.strip() for ln in text.splitlines() if ln.strip()), "")
    if first != CAMPAIGN_HEADER:
        raise CampaignError(f"campaign files must start with {CAMPAIGN_HEADER!r}")
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise CampaignError(str(exc)) from None
    if "campaign" not in cp:
        raise CampaignError("missing [campaign] section")
    sec = dict(cp["campaign"])
    sec.update({k: str(v) for k, v in (overrides or {}).items() if v is not None})
    try:
        return Campaign(
            name=sec.get("name", "campaign"),
            protocol=sec["protocol"],
            n=int(sec["n"]),
            t=int(sec["t"]),
            sos=Sos.parse(sec["sos"]) if "sos" in sec else None,
            d=int(sec["d"]) if "d" in sec else None,
            values=tuple(int(v) for v in sec["values"].split(",")) if "values" in sec else None,
            relaxed=sec.get("relaxed", "false").lower() in ("1", "true", "yes"),
            strategy=Strategy(sec.get("strategy", "seeded")),
            seeds=_parse_seeds(sec.get("seeds", "0:100")),
            crash_patterns=sec.get("crash_patterns", "all"),
            max_states=int(sec.get("max_states", 200_000)),
            checks=tuple(c.strip() for c in sec.get("checks", "safety,model").split(",") if c.strip()),
        )
    except KeyError as exc:
        raise CampaignError(f"missing campaign key {exc.args[0]!r}") from None
    except ValueError as exc:
        if isinstance(exc, (CampaignError, SosError)):
            raise
        raise CampaignError(str(exc)) from None


def load_campaign(path: str | Path, overrides: dict | None = None) -> Campaign:
    return parse_campaign(Path(path).read_text(), overrides)


def run_campaign(c: Campaign) -> list[CheckReport]:
    protocol = c.instantiate()
    sos = target_sos(protocol)
    checks: dict[str, RunCheck] = {}
    if "safety" in c.checks:
        checks["safety"] = lambda r: safety_violation(r, sos)
    if "model" in c.checks:
        checks["model"] = model_violation
    if "replay" in c.checks:
        checks["replay"] = lambda r: replay_violation(protocol, c.t, r)
    if "leaders" in c.checks:
        cfg = protocol.config
        checks["leaders-structure"] = lambda r: leaders_structure_violation(r, cfg)
        checks["union-rule"] = lambda r: union_rule_violation(r, cfg)
    reports = []
    if checks:
        if c.strategy is Strategy.EXHAUSTIVE:
            source = Exhaustive(max_states=c.max_states)
            patterns = [()] if c.crash_patterns == "none" else None
        else:
            source = SeedRange(c.seeds, patterns="random" if c.crash_patterns == "random" else "all")
            patterns = [()] if c.crash_patterns == "none" else None
        if c.strategy is Strategy.WITNESS:
            reports.append(_witness_sweep(protocol, c.t, checks))
        else:
            reports.append(sweep_crash_patterns(protocol, c.t, source, checks, patterns))
    if "completeness" in c.checks:
        reports.append(check_completeness(protocol, c.t, sos, c.strategy, seeds=c.seeds,
                                          budget=Exhaustive(max_states=c.max_states)))
    return reports


def _witness_sweep(protocol, t: int, checks: dict[str, RunCheck]) -> CheckReport:
    runs, first, failures = 0, None, 0
    for _, sched in witness_schedules(protocol):
        r = run(protocol, t, sched, strict=False)
        runs += 1
        whys = [f"{name}: {why}" for name, fn in checks.items() if (why := fn(r)) is not None]
        if whys:
            failures += 1
            first = first or _counterexample(r, whys[0])
    if failures:
        return CheckReport("sweep", FAILED, runs, first, {"failures": failures})
    return CheckReport("sweep", PASSED, runs, details={"failures": 0})
