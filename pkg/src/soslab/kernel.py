"""Deterministic simulator of the asynchronous communicate/observe model with crashes.

A run is a sequence of scheduler decisions applied to a :class:`RunState`:

``start``    a process takes its first step (and receives its input value)
``deliver``  one pending (sender, info) is observed by one recipient
``timeout``  a pending local timer expires; the outcome flag is whatever the
             process has observed at that instant, the scheduler only picks when
``release``  a process that is about to output performs the output
``crash``    a process halts for good

Everything a process does in reaction to a decision (communicate, arm a timer,
announce an output) happens atomically inside that decision. Outputs are
held as *intents* until a ``release`` decision, which is what lets an
adversary freeze a process at the instant before it outputs.

Deliveries are identified by their (sender, info, recipient) triple, so two
decisions touching different processes commute and lead to the same state.
"""

from __future__ import annotations

import json
import random
from collections.abc import Iterable, Iterator, Sequence
from dataclasses import dataclass, field
from typing import Any, NamedTuple, Protocol as TypingProtocol

from .sos import Sos, format_set

MOVE = "MOVE"
OUTPUTSET = "OUTPUTSET"
CHOICE = "CHOICE"
OUTPUT = "OUTPUT"

START = "start"
DELIVER = "deliver"
TIMEOUT = "timeout"
RELEASE = "release"
CRASH = "crash"
DECISION_KINDS = (START, RELEASE, DELIVER, TIMEOUT, CRASH)
_KIND_ORDER = {k: i for i, k in enumerate(DECISION_KINDS)}

_INIT, _LIVE, _EXITED, _CRASHED = range(4)


class KernelError(RuntimeError):
    pass


class DuplicateCommunication(KernelError):
    pass


class LiveRequired(KernelError):
    pass


class DecisionNotEnabled(KernelError):
    pass


class NonQuiescence(KernelError):
    pass


class BudgetExceeded(KernelError):
    pass


class CrashBudgetExceeded(KernelError):
    pass


class Info(NamedTuple):
    kind: str
    payload: Any  # int for MOVE/OUTPUT, frozenset for OUTPUTSET/CHOICE

    def __str__(self) -> str:
        p = self.payload
        inner = format_set(p) if isinstance(p, frozenset) else str(p)
        return f"{self.kind}({inner})"

    @classmethod
    def parse(cls, text: str) -> Info:
        kind, _, rest = text.partition("(")
        if not rest.endswith(")") or kind not in (MOVE, OUTPUTSET, CHOICE, OUTPUT):
            raise ValueError(f"not an info: {text!r}")
        body = rest[:-1]
        if kind in (OUTPUTSET, CHOICE):
            inner = body.strip()[1:-1].strip()
            return cls(kind, frozenset(int(x) for x in inner.split(",")) if inner else frozenset())
        return cls(kind, int(body))


class Decision(NamedTuple):
    kind: str
    process: int
    sender: int = 0
    info: Info | None = None
    wait: int = 0
    arrived: bool = False


class TraceEvent(NamedTuple):
    seq: int
    kind: str
    process: int
    sender: int | None
    payload: Any


class Behavior(TypingProtocol):
    """Local algorithm of one process. Callbacks return action tuples:
    ``("communicate", info)``, ``("output", value)``, ``("timer", wait_id)``."""

    def on_start(self, value: int | None) -> list: ...
    def on_observe(self, sender: int, info: Info) -> list: ...
    def on_timeout(self, wait: int, arrived: bool) -> list: ...
    def arrived(self, wait: int) -> bool: ...
    def blocked(self) -> bool: ...
    def done(self) -> bool: ...
    def key(self) -> Any: ...
    def clone(self) -> Behavior: ...


class ProtocolSpec(TypingProtocol):
    name: str
    n: int

    def behaviors(self) -> list[Behavior]: ...


@dataclass(frozen=True)
class RunResult:
    protocol: str
    n: int
    t: int
    input_vector: tuple[int | None, ...]
    output_vector: tuple[int | None, ...]
    output_set: frozenset[int]
    crashed: frozenset[int]
    trace: tuple[TraceEvent, ...]
    quiescent: bool

    def decisions(self) -> tuple[Decision, ...]:
        return tuple(_decision_of(e) for e in self.trace if e.kind in _KIND_ORDER)

    def replay_schedule(self) -> Explicit:
        return Explicit(self.decisions())

    def communicated(self, kind: str | None = None) -> list[tuple[int, Info]]:
        return [(e.process, e.payload) for e in self.trace
                if e.kind == "communicate" and (kind is None or e.payload.kind == kind)]

    def trace_lines(self) -> list[str]:
        return [json.dumps(record_of(e), sort_keys=True) for e in self.trace]

    def summary(self) -> dict:
        return {
            "protocol": self.protocol,
            "n": self.n,
            "t": self.t,
            "input_vector": list(self.input_vector),
            "output_vector": list(self.output_vector),
            "output_set": format_set(self.output_set),
            "crashed": sorted(self.crashed),
            "quiescent": self.quiescent,
            "steps": sum(1 for e in self.trace if e.kind in _KIND_ORDER),
        }


def record_of(e: TraceEvent) -> dict:
    payload = e.payload
    if isinstance(payload, Info):
        payload = str(payload)
    elif e.kind == TIMEOUT:
        payload = {"wait": payload[0], "arrived": payload[1]}
    return {"seq": e.seq, "kind": e.kind, "process": e.process, "sender": e.sender,
            "payload": payload}


def _decision_of(e: TraceEvent) -> Decision:
    if e.kind == DELIVER:
        return Decision(DELIVER, e.process, e.sender, e.payload)
    if e.kind == TIMEOUT:
        return Decision(TIMEOUT, e.process, wait=e.payload[0], arrived=e.payload[1])
    return Decision(e.kind, e.process)


def schedule_from_lines(lines: Iterable[str]) -> Explicit:
    """Read a JSON-lines trace (as written by :meth:`RunResult.trace_lines`) as a schedule."""
    decisions = []
    for line in lines:
        line = line.strip()
        if not line:
            continue
        rec = json.loads(line)
        kind = rec["kind"]
        if kind not in _KIND_ORDER:
            continue
        if kind == DELIVER:
            decisions.append(Decision(DELIVER, rec["process"], rec["sender"], Info.parse(rec["payload"])))
        elif kind == TIMEOUT:
            decisions.append(Decision(TIMEOUT, rec["process"], wait=rec["payload"]["wait"],
                                      arrived=rec["payload"]["arrived"]))
        else:
            decisions.append(Decision(kind, rec["process"]))
    return Explicit(tuple(decisions))


# -- schedules ---------------------------------------------------------------


class CrashPoint(NamedTuple):
    process: int
    step: int  # crash just before this many decisions have been taken


@dataclass(frozen=True)
class Seeded:
    seed: int
    crashes: tuple[CrashPoint, ...] = ()
    drops: bool = True  # on crash, may lose the victim's not-yet-observed infos


@dataclass(frozen=True)
class Explicit:
    decisions: tuple[Decision, ...]


@dataclass(frozen=True)
class Exhaustive:
    depth_bound: int = 10_000
    crashable: frozenset[int] | None = None
    max_states: int = 200_000


Schedule = Seeded | Explicit | Exhaustive


# -- run state ---------------------------------------------------------------


class RunState:
    """Mutable state of one run. Not shared between runs."""

    def __init__(self, protocol: ProtocolSpec, t: int, inputs: Sequence[int | None] | None = None):
        n = protocol.n
        if t < 0 or t > n:
            raise ValueError(f"crash bound must satisfy 0 <= t <= n, got t={t}, n={n}")
        if inputs is None:
            inputs = (None,) * n
        if len(inputs) != n:
            raise ValueError(f"input vector has length {len(inputs)}, expected {n}")
        self.protocol_name = protocol.name
        self.n = n
        self.t = t
        self.inputs = tuple(inputs)
        self.beh: list[Behavior] = [None, *protocol.behaviors()]  # 1-based
        self.status = [_CRASHED] + [_INIT] * n
        self.unstarted = list(range(1, n + 1))
        self.intents: dict[int, tuple[int, tuple]] = {}
        self.timers: dict[int, int] = {}
        self.pending: dict[tuple[int, Info, int], int] = {}
        self.deferred: dict[tuple[int, Info, int], int] = {}  # to exited recipients
        self.comm_seq: dict[tuple[int, Info], int] = {}
        self.observers: dict[tuple[int, Info], set[int]] = {}
        self.outputs: list[int | None] = [None] * (n + 1)
        self.crashed: set[int] = set()
        self.trace: list[TraceEvent] = []
        self.steps = 0

    # -- bookkeeping

    def _log(self, kind: str, process: int, sender: int | None, payload: Any) -> None:
        self.trace.append(TraceEvent(len(self.trace), kind, process, sender, payload))

    def clone(self) -> RunState:
        other = object.__new__(RunState)
        other.__dict__.update(self.__dict__)
        other.beh = [None] + [b.clone() for b in self.beh[1:]]
        other.status = list(self.status)
        other.unstarted = list(self.unstarted)
        other.intents = dict(self.intents)
        other.timers = dict(self.timers)
        other.pending = dict(self.pending)
        other.deferred = dict(self.deferred)
        other.comm_seq = dict(self.comm_seq)
        other.observers = {k: set(v) for k, v in self.observers.items()}
        other.outputs = list(self.outputs)
        other.crashed = set(self.crashed)
        other.trace = list(self.trace)
        return other

    def key(self) -> tuple:
        """Configuration identity, independent of the order commuting decisions were taken in."""
        return (
            tuple(self.status),
            tuple(b.key() for b in self.beh[1:]),
            frozenset(self.intents.items()),
            frozenset(self.timers.items()),
            frozenset(self.pending),
            frozenset(self.deferred),
            frozenset((k, frozenset(v)) for k, v in self.observers.items()),
            tuple(self.outputs),
        )

    def live(self, p: int) -> bool:
        return self.status[p] in (_INIT, _LIVE)

    def exited(self, p: int) -> bool:
        return self.status[p] == _EXITED

    def is_crashed(self, p: int) -> bool:
        return self.status[p] == _CRASHED

    def started(self, p: int) -> bool:
        return self.status[p] != _INIT

    def obligatory(self, sender: int, info: Info) -> bool:
        """Must (sender, info) reach every correct process before the run may end?"""
        if self.status[sender] != _CRASHED:
            return True
        return any(self.status[r] != _CRASHED for r in self.observers.get((sender, info), ()))

    # -- effects

    def communicate(self, p: int, info: Info) -> None:
        if not self.live(p) or not self.started(p):
            raise LiveRequired(f"process {p} cannot communicate: not live")
        ck = (p, info)
        if ck in self.comm_seq:
            raise DuplicateCommunication(f"process {p} communicated {info} twice")
        seq = len(self.trace)
        self.comm_seq[ck] = seq
        self._log("communicate", p, p, info)
        status = self.status
        for r in range(1, self.n + 1):
            s = status[r]
            if s == _CRASHED:
                continue
            if s == _EXITED:
                self.deferred[(p, info, r)] = seq
            else:
                self.pending[(p, info, r)] = seq

    def _apply(self, p: int, actions: Iterable) -> None:
        actions = tuple(actions)
        for i, (verb, arg) in enumerate(actions):
            if verb == "communicate":
                self.communicate(p, arg)
            elif verb == "timer":
                self.timers[p] = arg
            elif verb == "output":
                self.intents[p] = (arg, actions[i + 1 :])
                return
            else:
                raise KernelError(f"unknown action {verb!r}")
        self._check_exit(p)

    def _check_exit(self, p: int) -> None:
        if p in self.intents or p in self.timers or not self.beh[p].done():
            return
        self.status[p] = _EXITED
        self._log("exit", p, None, None)
        moved = [k for k in self.pending if k[2] == p]
        for k in moved:
            self.deferred[k] = self.pending.pop(k)

    # -- decisions

    def enabled(self, *, crashable: Iterable[int] | None = (), canonical: bool = False) -> list[Decision]:
        """Decisions the scheduler may take now. Deliveries to exited processes are
        left to :meth:`finalize` since they cannot influence anything."""
        out: list[Decision] = [Decision(START, p) for p in self.unstarted]
        intents = self.intents
        out.extend(Decision(RELEASE, p) for p in intents)
        status = self.status
        out.extend(Decision(DELIVER, r, s, info) for (s, info, r) in self.pending
                   if r not in intents and status[r] == _LIVE)
        beh = self.beh
        out.extend(Decision(TIMEOUT, p, wait=w, arrived=beh[p].arrived(w))
                   for p, w in self.timers.items() if p not in intents)
        if crashable is None or crashable:
            if len(self.crashed) < self.t:
                pool = range(1, self.n + 1) if crashable is None else crashable
                out.extend(Decision(CRASH, p) for p in pool if self.live(p))
        if canonical:
            out.sort(key=self.canon_key)
        return out

    def canon_key(self, d: Decision) -> tuple[int, int, int]:
        if d.kind == DELIVER:
            return (_KIND_ORDER[DELIVER], d.process, self.comm_seq[(d.sender, d.info)])
        return (_KIND_ORDER[d.kind], d.process, d.wait)

    def step(self, d: Decision) -> None:
        kind, p = d.kind, d.process
        if not 1 <= p <= self.n:
            raise DecisionNotEnabled(f"no process {p}")
        status = self.status
        if kind == DELIVER:
            k = (d.sender, d.info, p)
            if k in self.pending and p not in self.intents and status[p] == _LIVE:
                del self.pending[k]
            elif k in self.deferred:
                del self.deferred[k]
            else:
                raise DecisionNotEnabled(f"delivery of {d.info} from {d.sender} to {p} is not pending")
            self.observers.setdefault((d.sender, d.info), set()).add(p)
            self._log(DELIVER, p, d.sender, d.info)
            if status[p] == _LIVE:
                self._apply(p, self.beh[p].on_observe(d.sender, d.info))
        elif kind == START:
            if status[p] != _INIT:
                raise DecisionNotEnabled(f"process {p} already started or crashed")
            status[p] = _LIVE
            self.unstarted.remove(p)
            value = self.inputs[p - 1]
            self._log(START, p, None, value)
            self._apply(p, self.beh[p].on_start(value))
        elif kind == RELEASE:
            if p not in self.intents:
                raise DecisionNotEnabled(f"process {p} has no pending output")
            value, rest = self.intents.pop(p)
            prior = self.outputs[p]
            if prior is not None and prior != value:
                raise KernelError(f"process {p} output {value} after {prior}")
            self.outputs[p] = value
            self._log(RELEASE, p, None, value)
            self._log("output", p, None, value)
            self._apply(p, rest)
        elif kind == TIMEOUT:
            w = self.timers.get(p)
            if w is None or w != d.wait or p in self.intents:
                raise DecisionNotEnabled(f"process {p} has no pending timer {d.wait}")
            arrived = self.beh[p].arrived(w)
            if arrived != d.arrived:
                raise DecisionNotEnabled(f"timer {w} of process {p} would resolve arrived={arrived}")
            del self.timers[p]
            self._log(TIMEOUT, p, None, (w, arrived))
            self._apply(p, self.beh[p].on_timeout(w, arrived))
        elif kind == CRASH:
            if not self.live(p):
                raise DecisionNotEnabled(f"process {p} is not live")
            if len(self.crashed) >= self.t:
                raise DecisionNotEnabled(f"crash budget t={self.t} exhausted")
            self.crash(p)
        else:
            raise DecisionNotEnabled(f"unknown decision kind {kind!r}")
        self.steps += 1

    def crash(self, p: int) -> None:
        if self.status[p] == _INIT:
            self.unstarted.remove(p)
        self.status[p] = _CRASHED
        self.crashed.add(p)
        self.intents.pop(p, None)
        self.timers.pop(p, None)
        for k in [k for k in self.pending if k[2] == p]:
            del self.pending[k]
        self._log(CRASH, p, None, None)

    # -- termination

    def finalize(self, strict: bool = False) -> RunResult:
        """Complete the run: take every remaining non-crash step in canonical order,
        deliver every obligatory info to every correct process, then report."""
        while True:
            cands = [d for d in self.enabled()
                     if d.kind != DELIVER or self.obligatory(d.sender, d.info)]
            if not cands:
                break
            self.step(min(cands, key=self.canon_key))
        for k in sorted(self.deferred, key=self.deferred.__getitem__):
            s, info, r = k
            if self.status[r] != _CRASHED and self.obligatory(s, info):
                self.step(Decision(DELIVER, r, s, info))
        stuck = [p for p in range(1, self.n + 1)
                 if self.status[p] == _LIVE and self.beh[p].blocked()]
        if stuck and strict:
            raise NonQuiescence(f"correct processes {stuck} are blocked forever")
        outputs = tuple(self.outputs[1:])
        return RunResult(
            protocol=self.protocol_name,
            n=self.n,
            t=self.t,
            input_vector=self.inputs,
            output_vector=outputs,
            output_set=frozenset(v for v in outputs if v is not None),
            crashed=frozenset(self.crashed),
            trace=tuple(self.trace),
            quiescent=not stuck,
        )

    # -- seeded scheduling

    def seeded_pick(self, rng: random.Random, suppressed: set,
                    timeout_bias: float = 0.5) -> Decision | None:
        """Pick a pending timer with probability ``timeout_bias`` (when there is
        anything else to do), otherwise a kind uniformly, then one decision."""
        intents = self.intents
        status = self.status
        groups: list[list] = []
        if self.unstarted:
            groups.append([Decision(START, p) for p in self.unstarted])
        if intents:
            groups.append([Decision(RELEASE, p) for p in intents])
        dels = [k for k in self.pending
                if k[2] not in intents and status[k[2]] == _LIVE and (k[0], k[1]) not in suppressed]
        if dels:
            groups.append(dels)
        tims = [p for p in self.timers if p not in intents]
        if not groups:
            if not tims:
                return None
            group = tims
        elif tims and rng.random() < timeout_bias:
            group = tims
        else:
            group = groups[rng.randrange(len(groups))] if len(groups) > 1 else groups[0]
        choice = group[rng.randrange(len(group))]
        if group is dels:
            s, info, r = choice
            return Decision(DELIVER, r, s, info)
        if group is tims:
            w = self.timers[choice]
            return Decision(TIMEOUT, choice, wait=w, arrived=self.beh[choice].arrived(w))
        return choice


def _validate_crashes(crashes: Iterable[CrashPoint], t: int, n: int) -> None:
    victims = {c.process for c in crashes}
    if len(victims) > t:
        raise CrashBudgetExceeded(f"crash pattern {sorted(victims)} exceeds t={t}")
    for p in victims:
        if not 1 <= p <= n:
            raise CrashBudgetExceeded(f"no process {p} to crash")


def run(protocol: ProtocolSpec, t: int, schedule: Seeded | Explicit,
        inputs: Sequence[int | None] | None = None, *, strict: bool = True) -> RunResult:
    """Drive ``protocol`` to completion. Deterministic in all arguments.

    With ``strict`` a correct process left blocked raises :class:`NonQuiescence`.
    """
    state = RunState(protocol, t, inputs)
    if isinstance(schedule, Explicit):
        crashes = [d.process for d in schedule.decisions if d.kind == CRASH]
        if len(set(crashes)) > t:
            raise CrashBudgetExceeded(f"schedule crashes {sorted(set(crashes))}, exceeds t={t}")
        for d in schedule.decisions:
            state.step(d)
        return state.finalize(strict)
    if isinstance(schedule, Seeded):
        _validate_crashes(schedule.crashes, t, state.n)
        rng = random.Random(schedule.seed)
        # log-uniform over [1e-3, 1]: some runs time out eagerly, others wait for everything
        bias = 10 ** (-3 * rng.random())
        plan = sorted(schedule.crashes, key=lambda c: (c.step, c.process))
        suppressed: set = set()
        while True:
            while plan and plan[0].step <= state.steps:
                victim = plan.pop(0).process
                if state.live(victim):
                    state.step(Decision(CRASH, victim))
                    if schedule.drops and rng.random() < 0.5:
                        suppressed.update(ck for ck in state.comm_seq
                                          if ck[0] == victim and not state.obligatory(*ck))
            d = state.seeded_pick(rng, suppressed, bias)
            if d is None:
                break
            state.step(d)
        return state.finalize(strict)
    raise TypeError(f"run() takes a Seeded or Explicit schedule, got {type(schedule).__name__}")


def enumerate_runs(protocol: ProtocolSpec, t: int, schedule: Exhaustive | None = None,
                   inputs: Sequence[int | None] | None = None) -> Iterator[RunResult]:
    """Every distinct complete run, exploring decisions in canonical order.

    Decision sequences that reach the same configuration (e.g. commuting
    deliveries to different processes) are explored once. A run may also
    stop early whenever all that remains is delivering a crashed process's
    infos that no correct process has observed yet (the medium may lose them).
    """
    schedule = schedule or Exhaustive()
    crashable = schedule.crashable
    if crashable is not None:
        crashable = sorted(crashable)
    root = RunState(protocol, t, inputs)
    seen = {root.key()}
    stack = [root]
    finals: set = set()
    while stack:
        state = stack.pop()
        moves = state.enabled(crashable=crashable, canonical=True)
        progress = [d for d in moves if d.kind != CRASH]
        if not progress or all(d.kind == DELIVER and not state.obligatory(d.sender, d.info)
                               for d in progress):
            done = state.clone()
            result = done.finalize(strict=False)
            fk = done.key()
            if fk not in finals:
                finals.add(fk)
                yield result
            if not progress:
                continue
        if state.steps >= schedule.depth_bound:
            raise BudgetExceeded(f"run exceeded depth bound {schedule.depth_bound}")
        children = []
        for d in moves:
            child = state.clone()
            child.step(d)
            k = child.key()
            if k in seen:
                continue
            seen.add(k)
            if len(seen) > schedule.max_states:
                raise BudgetExceeded(f"more than {schedule.max_states} states")
            children.append(child)
        stack.extend(reversed(children))


# -- trace-level model checks -------------------------------------------------


@dataclass
class ModelCheck:
    validity: list[str] = field(default_factory=list)
    integrity: list[str] = field(default_factory=list)
    closure: list[str] = field(default_factory=list)
    crash_bound: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not (self.validity or self.integrity or self.closure or self.crash_bound)


def check_model(result: RunResult) -> ModelCheck:
    """C-Validity, C-Integrity, termination closure and the crash bound on one trace."""
    report = ModelCheck()
    communicated: set[tuple[int, Info]] = set()
    delivered: dict[tuple[int, Info], set[int]] = {}
    for e in result.trace:
        if e.kind == "communicate":
            communicated.add((e.process, e.payload))
        elif e.kind == DELIVER:
            ck = (e.sender, e.payload)
            if ck not in communicated:
                report.validity.append(f"seq {e.seq}: {e.payload} from {e.sender} observed before communicated")
            got = delivered.setdefault(ck, set())
            if e.process in got:
                report.integrity.append(f"seq {e.seq}: {e.payload} from {e.sender} observed twice by {e.process}")
            got.add(e.process)
    if len(result.crashed) > result.t:
        report.crash_bound.append(f"{len(result.crashed)} crashes exceed t={result.t}")
    if result.quiescent:
        correct = set(range(1, result.n + 1)) - result.crashed
        for ck in sorted(communicated, key=lambda c: (c[0], str(c[1]))):
            seen_by = delivered.get(ck, set())
            if ck[0] in correct or seen_by & correct:
                missing = correct - seen_by
                if missing:
                    report.closure.append(f"{ck[1]} from {ck[0]} never observed by {sorted(missing)}")
    return report


def sos_of(results: Iterable[RunResult]) -> Sos:
    return Sos(r.output_set for r in results)
