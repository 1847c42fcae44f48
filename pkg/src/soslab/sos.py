"""SOS data model: output sets, the inclusion graph, walks, and the solvability rule.

Output sets are plain ``frozenset[int]``. An :class:`Sos` keeps its sets in
canonical order (by size, then lexicographic contents) so that graphs, walks
and traces are reproducible across runs.
"""

from __future__ import annotations

import itertools
from collections.abc import Iterable, Iterator
from dataclasses import dataclass
from fractions import Fraction

import networkx as nx

OutputSet = frozenset


class SosError(ValueError):
    """Base class for malformed SOS inputs and violated preconditions."""


class SosParseError(SosError):
    def __init__(self, message: str, line: int, column: int) -> None:
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class DisconnectedGraph(SosError):
    pass


class UniverseTooSmall(SosError):
    pass


def set_key(o: Iterable[int]) -> tuple[int, tuple[int, ...]]:
    values = tuple(sorted(o))
    return (len(values), values)


def format_set(o: Iterable[int]) -> str:
    return "{" + ",".join(str(v) for v in sorted(o)) + "}"


class Sos:
    """A non-empty finite set of output sets, stored in canonical order."""

    __slots__ = ("sets", "_members")

    def __init__(self, sets: Iterable[Iterable[int]]) -> None:
        members = {frozenset(o) for o in sets}
        if not members:
            raise SosError("an SOS must contain at least one output set")
        for o in members:
            for v in o:
                if not isinstance(v, int) or isinstance(v, bool) or v < 0:
                    raise SosError(f"values must be non-negative integers, got {v!r}")
        self.sets: tuple[frozenset[int], ...] = tuple(sorted(members, key=set_key))
        self._members = frozenset(members)

    @classmethod
    def parse(cls, text: str) -> Sos:
        return cls(_Parser(text).parse())

    @property
    def values(self) -> tuple[int, ...]:
        """All values appearing in some output set, ascending."""
        return tuple(sorted(set().union(*self.sets)))

    @property
    def max_size(self) -> int:
        return max(len(o) for o in self.sets)

    def is_trivial(self) -> bool:
        return self._members == {frozenset()}

    def __iter__(self) -> Iterator[frozenset[int]]:
        return iter(self.sets)

    def __len__(self) -> int:
        return len(self.sets)

    def __contains__(self, o: object) -> bool:
        return frozenset(o) in self._members if isinstance(o, (set, frozenset)) else False

    def __eq__(self, other: object) -> bool:
        if isinstance(other, Sos):
            return self._members == other._members
        return NotImplemented

    def __hash__(self) -> int:
        return hash(self._members)

    def __str__(self) -> str:
        return "{" + ",".join(format_set(o) for o in self.sets) + "}"

    def __repr__(self) -> str:
        return f"Sos({self})"


class _Parser:
    """Recursive-descent parser for ``{{1},{1,2}}``-style text."""

    def __init__(self, text: str) -> None:
        self.text = text
        self.pos = 0

    def _where(self, pos: int | None = None) -> tuple[int, int]:
        pos = self.pos if pos is None else pos
        before = self.text[:pos]
        line = before.count("\n") + 1
        column = pos - (before.rfind("\n") + 1) + 1
        return line, column

    def _fail(self, message: str, pos: int | None = None) -> SosParseError:
        return SosParseError(message, *self._where(pos))

    def _skip(self) -> None:
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def _peek(self) -> str:
        self._skip()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def _expect(self, char: str) -> None:
        got = self._peek()
        if got != char:
            shown = repr(got) if got else "end of input"
            raise self._fail(f"expected {char!r}, found {shown}")
        self.pos += 1

    def parse(self) -> list[frozenset[int]]:
        start = self.pos
        self._expect("{")
        sets: list[frozenset[int]] = []
        if self._peek() != "}":
            sets.append(self._set())
            while self._peek() == ",":
                self.pos += 1
                sets.append(self._set())
        self._expect("}")
        if self._peek():
            raise self._fail("unexpected trailing input")
        if not sets:
            raise self._fail("an SOS must contain at least one output set", start)
        return sets

    def _set(self) -> frozenset[int]:
        self._expect("{")
        values: list[int] = []
        if self._peek() != "}":
            values.append(self._int())
            while self._peek() == ",":
                self.pos += 1
                values.append(self._int())
        self._expect("}")
        return frozenset(values)

    def _int(self) -> int:
        self._skip()
        start = self.pos
        while self.pos < len(self.text) and self.text[self.pos].isdigit():
            self.pos += 1
        if start == self.pos:
            got = self.text[start] if start < len(self.text) else "end of input"
            raise self._fail(f"expected a non-negative integer, found {got!r}")
        return int(self.text[start : self.pos])


@dataclass(frozen=True)
class SosGraph:
    vertices: tuple[frozenset[int], ...]
    edges: frozenset[frozenset[frozenset[int]]]

    def adjacent(self, a: frozenset[int], b: frozenset[int]) -> bool:
        return frozenset((a, b)) in self.edges

    def to_networkx(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(self.vertices)
        index = {v: i for i, v in enumerate(self.vertices)}
        # insertion order drives DFS neighbour order, keep it canonical
        for a, b in sorted((tuple(sorted(e, key=index.__getitem__)) for e in self.edges),
                           key=lambda ab: (index[ab[0]], index[ab[1]])):
            g.add_edge(a, b)
        return g

    def components(self) -> tuple[tuple[frozenset[int], ...], ...]:
        index = {v: i for i, v in enumerate(self.vertices)}
        comps = [tuple(sorted(c, key=index.__getitem__))
                 for c in nx.connected_components(self.to_networkx())]
        return tuple(sorted(comps, key=lambda c: index[c[0]]))


def build_sos_graph(sos: Sos) -> SosGraph:
    edges = frozenset(
        frozenset((a, b)) for a, b in itertools.combinations(sos.sets, 2) if a < b or b < a
    )
    return SosGraph(vertices=sos.sets, edges=edges)


def is_connected(graph: SosGraph) -> bool:
    if len(graph.vertices) <= 1:
        return True
    return len(graph.components()) == 1


def construct_walk(graph: SosGraph) -> tuple[frozenset[int], ...]:
    """Walk visiting every vertex, built by DFS with re-emitted parents on backtrack.

    The DFS starts from the lowest-degree vertex (ties broken canonically),
    which yields a simple path whenever the graph is itself a path. The
    result has at most ``2 * len(vertices) - 1`` steps.
    """
    if not graph.vertices:
        raise DisconnectedGraph("cannot walk an empty graph")
    if not is_connected(graph):
        raise DisconnectedGraph("SOS graph is not connected; no covering walk exists")
    g = graph.to_networkx()
    start = min(graph.vertices, key=lambda v: g.degree(v))
    walk = [start]
    last_new = 0
    for u, v, kind in nx.dfs_labeled_edges(g, source=start):
        if u == v:
            continue
        if kind == "forward":
            walk.append(v)
            last_new = len(walk)
        elif kind == "reverse":
            walk.append(u)
    return tuple(walk[:last_new] if last_new else walk)


def is_valid_walk(graph: SosGraph, walk: Iterable[frozenset[int]]) -> bool:
    steps = list(walk)
    if not steps or set(steps) != set(graph.vertices):
        return False
    return all(graph.adjacent(a, b) for a, b in zip(steps, steps[1:]))


@dataclass(frozen=True)
class Verdict:
    solvable: bool
    reason: str
    components: tuple[tuple[frozenset[int], ...], ...]

    def as_record(self) -> dict:
        return {
            "solvable": self.solvable,
            "reason": self.reason,
            "components": [[format_set(o) for o in c] for c in self.components],
        }


def decide_solvability(sos: Sos, t: int) -> Verdict:
    """Solvable iff no crashes are allowed or the SOS graph is connected."""
    if t < 0:
        raise SosError(f"crash bound must be non-negative, got {t}")
    graph = build_sos_graph(sos)
    components = graph.components()
    if sos.is_trivial():
        return Verdict(True, "trivial-empty-sos", components)
    if len(components) == 1:
        return Verdict(True, "connected-graph", components)
    if t == 0:
        return Verdict(True, "zero-crashes", components)
    return Verdict(False, "disconnected-graph", components)


def ksa_sos(k: int, universe: Iterable[int]) -> Sos:
    """Validity-less k-set agreement: every non-empty subset of size at most k."""
    values = sorted(set(universe))
    if k < 1:
        raise SosError(f"k must be at least 1, got {k}")
    if len(values) < k + 1:
        raise UniverseTooSmall(f"k={k} needs at least {k + 1} values, got {len(values)}")
    return Sos(c for size in range(1, k + 1) for c in itertools.combinations(values, size))


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def disagreement_lower_bound(d: int, t: int) -> int:
    """Minimum n for d-disagreement under t crashes: sum of ceil((t+1)/i), i=1..d."""
    if d < 1 or t < 0:
        raise SosError(f"need d >= 1 and t >= 0, got d={d}, t={t}")
    return sum(_ceil_div(t + 1, i) for i in range(1, d + 1))


def disagreement_upper_bound_n(d: int, t: int) -> int:
    """n sufficient for the d-disagreement algorithm: d*ceil((t+1)/2) + floor((t+1)/2)."""
    if d < 1 or t < 0:
        raise SosError(f"need d >= 1 and t >= 0, got d={d}, t={t}")
    return d * _ceil_div(t + 1, 2) + (t + 1) // 2


def harmonic(d: int) -> Fraction:
    return sum((Fraction(1, i) for i in range(1, d + 1)), Fraction(0))
