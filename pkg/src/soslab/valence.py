"""Valence analysis on explicit state graphs.

A state is a frozenset of :class:`AbstractEvent`; a :class:`StateGraph` is a
set of states together with the subset of them that are output states. The
valence of a state is the set of output sets reachable from it: for an
output state, the single set of values it outputs; otherwise the union over
all strict supersets in the graph. Since every output state that is a strict
superset of a superset is itself a strict superset, this collapses to the
output sets of the output states strictly above.

State graphs can be written by hand, read from a file, or extracted from a
protocol by exhaustive exploration in :mod:`soslab.kernel`.
"""

from __future__ import annotations

import json
from collections import deque
from collections.abc import Iterable, Iterator
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, TextIO

from .kernel import CRASH, DELIVER, RELEASE, START, TIMEOUT, BudgetExceeded, Decision, RunState
from .sos import Sos, build_sos_graph, format_set, is_connected

PLAIN = "PLAIN"
INPUT = "INPUT"
OUTPUT = "OUTPUT"

Valence = frozenset  # frozenset of output sets; empty only in malformed graphs


class StateGraphError(ValueError):
    pass


class AbstractEvent(NamedTuple):
    process: int
    index: int
    kind: str = PLAIN
    value: int | None = None
    label: str = ""

    def to_json(self) -> list:
        return [self.process, self.index, self.kind, self.value, self.label]

    @classmethod
    def from_json(cls, item) -> AbstractEvent:
        if not isinstance(item, list) or not 2 <= len(item) <= 5:
            raise StateGraphError(f"bad event record {item!r}")
        ev = cls(*item)
        if ev.kind not in (PLAIN, INPUT, OUTPUT):
            raise StateGraphError(f"unknown event kind {ev.kind!r}")
        return ev


State = frozenset  # frozenset[AbstractEvent]


def outputs_of(state: State) -> frozenset[int]:
    return frozenset(e.value for e in state if e.kind == OUTPUT)


@dataclass(frozen=True)
class StateGraph:
    states: frozenset
    outputs: frozenset
    # set when every strict superset of a state is reachable from it by
    # one-event steps inside the graph (true of extracted graphs); valences
    # may then be computed over extensions instead of all supersets
    step_closed: bool = field(default=False, compare=False)

    def __post_init__(self) -> None:
        if not self.outputs <= self.states:
            raise StateGraphError("output states must be states of the graph")
        for s in self.states:
            slots = [(e.process, e.index) for e in s]
            if len(slots) != len(set(slots)):
                raise StateGraphError(f"state repeats a (process, index) pair: {sorted(s)}")

    @cached_property
    def _ordered(self) -> tuple[State, ...]:
        return tuple(sorted(self.states, key=lambda s: (len(s), sorted(s))))

    def ordered(self) -> list[State]:
        """States by size, then by sorted events; the order used in files and reports."""
        return list(self._ordered)

    @cached_property
    def _children(self) -> dict[State, list[tuple[AbstractEvent, State]]]:
        children: dict[State, list] = {s: [] for s in self.states}
        for o in self.states:
            for e in o:
                parent = o - {e}
                if parent in children:
                    children[parent].append((e, o))
        for ext in children.values():
            ext.sort()
        return children

    @cached_property
    def _outputs_by_set(self) -> dict[frozenset[int], list[State]]:
        groups: dict[frozenset[int], list[State]] = {}
        for o in self.outputs:
            groups.setdefault(outputs_of(o), []).append(o)
        return groups

    def extensions(self, s: State) -> list[tuple[AbstractEvent, State]]:
        """One-event extensions of ``s`` present in the graph."""
        return self._children[s]

    def maximal_states(self) -> list[State]:
        leaves = [s for s in self._ordered if not self._children[s]]
        if self.step_closed:
            return leaves
        return [s for s in leaves if not any(s < o for o in self.states)]

    def input_state(self) -> State | None:
        """The state made of every input event in the graph, if it is one."""
        inputs = frozenset(e for s in self.states for e in s if e.kind == INPUT)
        return inputs if inputs in self.states else None


# -- valence ---------------------------------------------------------------------


def compute_valence(state: State, graph: StateGraph,
                    memo: dict[State, Valence] | None = None) -> Valence:
    if state not in graph.states:
        raise StateGraphError("state is not in the graph")
    if memo is not None and state in memo:
        return memo[state]
    if state in graph.outputs:
        val = frozenset({outputs_of(state)})
    else:
        val = frozenset(out for out, group in graph._outputs_by_set.items()
                        if any(state < o for o in group))
    if memo is not None:
        memo[state] = val
    return val


def all_valences(graph: StateGraph) -> dict[State, Valence]:
    memo: dict[State, Valence] = {}
    if not graph.step_closed:
        for s in graph.states:
            compute_valence(s, graph, memo)
        return memo
    # above[s]: output sets of output states strictly above s
    above: dict[State, frozenset] = {}
    for s in reversed(graph._ordered):
        acc: set = set()
        for _, c in graph.extensions(s):
            acc |= above[c]
            if c in graph.outputs:
                acc.add(outputs_of(c))
        above[s] = frozenset(acc)
        memo[s] = frozenset({outputs_of(s)}) if s in graph.outputs else above[s]
    return memo


def valence_connected(val: Valence) -> bool:
    if len(val) <= 1:
        return True
    return is_connected(build_sos_graph(Sos(val)))


def disconnected_states(graph: StateGraph, valences: dict | None = None) -> list[State]:
    valences = valences or all_valences(graph)
    return [s for s in graph.ordered() if not valence_connected(valences[s])]


def find_critical_states(graph: StateGraph, valences: dict | None = None) -> list[State]:
    """Disconnected states all of whose strict supersets are connected."""
    valences = valences or all_valences(graph)
    bad = disconnected_states(graph, valences)
    bad_set = set(bad)
    return [s for s in bad if not any(s < o for o in bad_set)]


# -- axioms ----------------------------------------------------------------------


@dataclass(frozen=True)
class AxiomResult:
    holds: bool
    witness: State | None = None
    detail: str = ""


def check_asynchrony(graph: StateGraph) -> AxiomResult:
    for s in graph.ordered():
        ext = graph.extensions(s)
        for i, (e1, _) in enumerate(ext):
            for e2, _ in ext[i + 1 :]:
                if e1.process != e2.process and s | {e1, e2} not in graph.states:
                    return AxiomResult(False, s, f"missing joint extension by {e1} and {e2}")
    return AxiomResult(True)


def check_termination(graph: StateGraph) -> AxiomResult:
    # states are finite sets by construction; what remains checkable is that
    # every maximal state is an output state
    for s in graph.maximal_states():
        if s not in graph.outputs:
            return AxiomResult(False, s, "maximal state is not an output state")
    return AxiomResult(True)


def check_resilience(graph: StateGraph) -> AxiomResult:
    for s in graph.ordered():
        if s in graph.outputs:
            continue
        procs = {e.process for e, _ in graph.extensions(s)}
        if len(procs) < 2:
            return AxiomResult(False, s, f"only processes {sorted(procs)} extend this state")
    return AxiomResult(True)


def check_axioms(graph: StateGraph) -> dict[str, AxiomResult]:
    return {
        "asynchrony": check_asynchrony(graph),
        "termination": check_termination(graph),
        "resilience": check_resilience(graph),
    }


# -- report ----------------------------------------------------------------------


@dataclass
class ValenceReport:
    graph: StateGraph
    valences: dict[State, Valence]
    disconnected: list[State]
    critical: list[State]
    axioms: dict[str, AxiomResult]
    ids: dict[State, int] = field(default_factory=dict)

    def as_records(self) -> Iterator[dict]:
        for s in self.graph.ordered():
            val = self.valences[s]
            yield {
                "state": self.ids[s],
                "size": len(s),
                "output": s in self.graph.outputs,
                "valence": [format_set(o) for o in sorted(val, key=lambda o: (len(o), sorted(o)))],
                "disconnected": s in self.disconnected,
                "critical": s in self.critical,
            }

    def summary(self) -> dict:
        inp = self.graph.input_state()
        return {
            "states": len(self.graph.states),
            "output_states": len(self.graph.outputs),
            "input_state": None if inp is None else self.ids[inp],
            "input_valence": None if inp is None else
                [format_set(o) for o in sorted(self.valences[inp], key=lambda o: (len(o), sorted(o)))],
            "disconnected": [self.ids[s] for s in self.disconnected],
            "critical": [self.ids[s] for s in self.critical],
            "axioms": {k: {"holds": r.holds,
                           "witness": None if r.witness is None else self.ids[r.witness],
                           "detail": r.detail} for k, r in self.axioms.items()},
        }


def analyze(graph: StateGraph) -> ValenceReport:
    valences = all_valences(graph)
    return ValenceReport(
        graph=graph,
        valences=valences,
        disconnected=disconnected_states(graph, valences),
        critical=find_critical_states(graph, valences),
        axioms=check_axioms(graph),
        ids={s: i for i, s in enumerate(graph.ordered())},
    )


# -- extraction from the simulator -----------------------------------------------------


def _event_of(state: RunState, d: Decision, index: int) -> AbstractEvent:
    if d.kind == START:
        return AbstractEvent(d.process, index, INPUT, state.inputs[d.process - 1], "start")
    if d.kind == RELEASE:
        return AbstractEvent(d.process, index, OUTPUT, state.intents[d.process][0], "output")
    if d.kind == DELIVER:
        return AbstractEvent(d.process, index, PLAIN, None, f"observe {d.info} from {d.sender}")
    if d.kind == TIMEOUT:
        return AbstractEvent(d.process, index, PLAIN, None,
                             f"timeout {d.wait} {'arrived' if d.arrived else 'expired'}")
    raise StateGraphError(f"no event for decision {d.kind}")


def extract_state_graph(protocol, t: int = 0, *, depth_bound: int = 200,
                        max_states: int = 100_000, inputs=None) -> StateGraph:
    """Every reachable crash-free state, as the set of events taken so far.

    Per-process event indices count that process's steps, so one event set
    pins down each local history and therefore the whole configuration.
    A state is an output state iff every process has exited in it.
    """
    root = RunState(protocol, t, inputs)
    start: State = frozenset()
    frontier = deque([(start, root)])
    seen: dict[State, RunState] = {start: root}
    outputs = set()
    while frontier:
        events, rs = frontier.popleft()
        if all(rs.exited(p) for p in range(1, rs.n + 1)):
            outputs.add(events)
        if len(events) >= depth_bound:
            raise BudgetExceeded(f"a run exceeded depth bound {depth_bound}")
        counts = {}
        for e in events:
            counts[e.process] = counts.get(e.process, 0) + 1
        for d in rs.enabled(canonical=True):
            if d.kind == CRASH:
                continue
            ev = _event_of(rs, d, counts.get(d.process, 0) + 1)
            nxt = events | {ev}
            if nxt in seen:
                continue
            child = rs.clone()
            child.step(d)
            seen[nxt] = child
            if len(seen) > max_states:
                raise BudgetExceeded(f"more than {max_states} states")
            frontier.append((nxt, child))
    return StateGraph(frozenset(seen), frozenset(outputs), step_closed=True)


# -- file format -------------------------------------------------------------------


def write_state_graph(graph: StateGraph, out: TextIO) -> None:
    """One line per state: ``state <id> events <json list> output <true|false>``."""
    for i, s in enumerate(graph.ordered()):
        events = json.dumps([e.to_json() for e in sorted(s)], separators=(",", ":"))
        out.write(f"state {i} events {events} output {'true' if s in graph.outputs else 'false'}\n")


def read_state_graph(lines: Iterable[str]) -> StateGraph:
    states, outputs, ids = set(), set(), set()
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        head, sep, rest = line.partition(" events ")
        parts = head.split()
        if not sep or len(parts) != 2 or parts[0] != "state":
            raise StateGraphError(f"line {lineno}: expected 'state <id> events [...] output <bool>'")
        body, sep, flag = rest.rpartition(" output ")
        if not sep or flag.strip() not in ("true", "false"):
            raise StateGraphError(f"line {lineno}: missing 'output true|false'")
        if parts[1] in ids:
            raise StateGraphError(f"line {lineno}: duplicate state id {parts[1]}")
        ids.add(parts[1])
        try:
            items = json.loads(body)
        except json.JSONDecodeError as exc:
            raise StateGraphError(f"line {lineno}: bad event list: {exc.msg}") from None
        if not isinstance(items, list):
            raise StateGraphError(f"line {lineno}: events must be a list")
        try:
            s = frozenset(AbstractEvent.from_json(item) for item in items)
        except (TypeError, StateGraphError) as exc:
            raise StateGraphError(f"line {lineno}: {exc}") from None
        states.add(s)
        if flag.strip() == "true":
            outputs.add(s)
    return StateGraph(frozenset(states), frozenset(outputs))
