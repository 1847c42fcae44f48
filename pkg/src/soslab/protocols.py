"""The three SOS algorithms as process behaviours for :mod:`soslab.kernel`.

``alg1``  t-resilient walk-following algorithm for connected SOS tasks
``alg2``  d-disagreement with blocks of size ceil((t+1)/2) plus a completer block
``alg3``  crash-free algorithm for any SOS (leader picks the first CHOICE it observes)

Leaders and partition blocks are always chosen canonically, lowest process
indices first.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

from .kernel import CHOICE, MOVE, OUTPUT, OUTPUTSET, Info
from .sos import (
    Sos,
    SosError,
    build_sos_graph,
    construct_walk,
    format_set,
    is_connected,
    is_valid_walk,
)


class InstantiationError(SosError):
    pass


class NotEnoughProcesses(InstantiationError):
    pass


class DisconnectedSos(InstantiationError):
    pass


class NonzeroT(InstantiationError):
    pass


def _ceil_half(k: int) -> int:
    return (k + 1) // 2


class _Base:
    def clone(self):
        return copy.copy(self)

    def on_timeout(self, wait, arrived):
        raise AssertionError(f"{type(self).__name__} arms no timers")

    def arrived(self, wait):
        return False


# -- Algorithm 1 ---------------------------------------------------------------


@dataclass(frozen=True)
class Alg1Config:
    sos: Sos
    n: int
    t: int
    walk: tuple[frozenset[int], ...]
    leaders: tuple[int, ...]
    value_partition: tuple[tuple[int, tuple[int, ...]], ...]

    def block_of(self, p: int) -> int:
        for v, block in self.value_partition:
            if p in block:
                return v
        raise KeyError(p)

    def check(self) -> None:
        if len(self.leaders) <= self.t:
            raise InstantiationError(f"need more than t={self.t} leaders, got {len(self.leaders)}")
        if not is_valid_walk(build_sos_graph(self.sos), self.walk):
            raise InstantiationError("walk does not cover the SOS graph along its edges")
        members = [p for _, block in self.value_partition for p in block]
        if sorted(members) != list(range(1, self.n + 1)):
            raise InstantiationError("value blocks must partition the processes")
        if tuple(v for v, _ in self.value_partition) != self.sos.values:
            raise InstantiationError("need exactly one block per output value")
        for v, block in self.value_partition:
            if len(block) <= self.t:
                raise InstantiationError(f"block of value {v} has {len(block)} <= t processes")


def alg1_instantiate(sos: Sos, n: int, t: int) -> Alg1Config:
    if sos.is_trivial():
        raise InstantiationError("the SOS {{}} needs no algorithm: processes simply do nothing")
    graph = build_sos_graph(sos)
    if not is_connected(graph):
        raise DisconnectedSos(f"SOS graph of {sos} is disconnected")
    values = sos.values
    need = len(values) * (t + 1)
    if n < need:
        raise NotEnoughProcesses(f"alg1 needs n >= |V|(t+1) = {need}, got n={n}")
    blocks = [list(range(i * (t + 1) + 1, (i + 1) * (t + 1) + 1)) for i in range(len(values))]
    blocks[-1].extend(range(need + 1, n + 1))
    config = Alg1Config(
        sos=sos,
        n=n,
        t=t,
        walk=construct_walk(graph),
        leaders=tuple(range(1, t + 2)),
        value_partition=tuple((v, tuple(b)) for v, b in zip(values, blocks)),
    )
    config.check()
    return config


class Alg1Process(_Base):
    """Leader role (if any) and outputter role run side by side in one process.
    Each role exits on its own; the process exits once both have."""

    def __init__(self, config: Alg1Config, pid: int) -> None:
        self.walk = config.walk
        self.n_leaders = len(config.leaders)
        self.leaders = frozenset(config.leaders)
        self.is_leader = pid in self.leaders
        self.value = config.block_of(pid)
        self.iteration = 0
        self.leading = self.is_leader
        self.waiting_output = True
        self.moves: tuple[frozenset[int], ...] = (frozenset(),) * (len(config.walk) + 2)

    def _iterate(self) -> list:
        i = self.iteration
        acts = []
        if i != len(self.walk):
            acts.append(("communicate", Info(MOVE, i + 1)))
        acts.append(("timer", i))
        return acts

    def on_start(self, value):
        if not self.is_leader:
            return []
        self.iteration = 1
        return self._iterate()

    def on_observe(self, sender, info):
        if info.kind == MOVE:
            if sender in self.leaders:
                j = info.payload
                moves = list(self.moves)
                moves[j] = moves[j] | {sender}
                self.moves = tuple(moves)
            return []
        if info.kind == OUTPUTSET and self.waiting_output and self.value in info.payload:
            self.waiting_output = False
            return [("output", self.value)]
        return []

    def arrived(self, wait):
        j = wait + 1
        return j < len(self.moves) and len(self.moves[j]) >= self.n_leaders

    def on_timeout(self, wait, arrived):
        if not arrived:
            self.leading = False
            return [("communicate", Info(OUTPUTSET, self.walk[wait - 1]))]
        self.iteration = wait + 1
        return self._iterate()

    def blocked(self):
        return False

    def done(self):
        return not self.leading and not self.waiting_output

    def key(self):
        return (self.iteration, self.leading, self.waiting_output, self.moves)


@dataclass(frozen=True)
class Alg1:
    config: Alg1Config
    name: str = "alg1"

    @property
    def n(self) -> int:
        return self.config.n

    def behaviors(self):
        return [Alg1Process(self.config, p) for p in range(1, self.n + 1)]


def alg1_behavior(config: Alg1Config) -> Alg1:
    return Alg1(config)


def leaders_output_sets(result, config: Alg1Config) -> frozenset[frozenset[int]]:
    """Output sets communicated in OUTPUTSET by leaders during one run."""
    leaders = set(config.leaders)
    return frozenset(info.payload for p, info in result.communicated(OUTPUTSET) if p in leaders)


# -- Algorithm 2 ---------------------------------------------------------------


@dataclass(frozen=True)
class Alg2Config:
    d: int
    t: int
    n: int
    values: tuple[int, ...]
    blocks: tuple[tuple[int, ...], ...]  # P_1 .. P_d
    completers: tuple[int, ...]  # P_?

    def role_of(self, p: int) -> int | None:
        for i, block in enumerate(self.blocks):
            if p in block:
                return i
        return None

    def resilient(self) -> bool:
        """Does every pair of blocks (completers included) hold more than t processes?"""
        sizes = [len(b) for b in self.blocks] + [len(self.completers)]
        return all(a + b > self.t for i, a in enumerate(sizes) for b in sizes[i + 1 :])


def alg2_instantiate(d: int, values, n: int, t: int, *, relaxed: bool = False) -> Alg2Config:
    """Partition for d-disagreement. With ``relaxed`` any n is accepted and the
    blocks are filled in order, which is how below-bound systems are built."""
    values = tuple(values)
    if d < 1 or len(values) != d or len(set(values)) != d:
        raise InstantiationError(f"need d={d} distinct values, got {values}")
    size = _ceil_half(t + 1)
    need = d * size + (t + 1) // 2
    if n < need and not relaxed:
        raise NotEnoughProcesses(f"alg2 needs n >= d*ceil((t+1)/2) + floor((t+1)/2) = {need}, got n={n}")
    blocks, nxt = [], 1
    for _ in range(d):
        take = max(0, min(size, n - nxt + 1))
        blocks.append(tuple(range(nxt, nxt + take)))
        nxt += take
    return Alg2Config(d=d, t=t, n=n, values=values, blocks=tuple(blocks),
                      completers=tuple(range(nxt, n + 1)))


class Alg2Process(_Base):
    def __init__(self, config: Alg2Config, pid: int) -> None:
        self.values = config.values
        self.role = config.role_of(pid)
        self.need = config.d - 1
        self.seen: frozenset[int] = frozenset()
        self.finished = False

    def on_start(self, value):
        if self.role is not None:
            v = self.values[self.role]
            self.finished = True
            return [("output", v), ("communicate", Info(OUTPUT, v))]
        return self._maybe_output()

    def _maybe_output(self):
        if self.finished or len(self.seen) < self.need:
            return []
        self.finished = True
        missing = [v for v in self.values if v not in self.seen]
        return [("output", missing[0])]

    def on_observe(self, sender, info):
        if info.kind != OUTPUT or self.finished:
            return []
        self.seen = self.seen | {info.payload}
        return self._maybe_output()

    def blocked(self):
        return not self.finished

    def done(self):
        return self.finished

    def key(self):
        return (self.seen, self.finished)


@dataclass(frozen=True)
class Alg2:
    config: Alg2Config
    name: str = "alg2"

    @property
    def n(self) -> int:
        return self.config.n

    @property
    def sos(self) -> Sos:
        return Sos([self.config.values])

    def behaviors(self):
        return [Alg2Process(self.config, p) for p in range(1, self.n + 1)]


def alg2_behavior(config: Alg2Config) -> Alg2:
    return Alg2(config)


# -- Algorithm 3 ---------------------------------------------------------------


@dataclass(frozen=True)
class Alg3Config:
    sos: Sos
    n: int
    leader: int | None
    blocks: tuple[tuple[int, ...], ...]  # P_1 .. P_m

    def block_index(self, p: int) -> int:
        for i, block in enumerate(self.blocks, start=1):
            if p in block:
                return i
        raise KeyError(p)


def alg3_instantiate(sos: Sos, n: int, t: int = 0) -> Alg3Config:
    if t != 0:
        raise NonzeroT(f"alg3 tolerates no crash, got t={t}")
    if n == 0:
        if not sos.is_trivial():
            raise NotEnoughProcesses(f"with no process only {{{{}}}} can be produced, not {sos}")
        return Alg3Config(sos=sos, n=0, leader=None, blocks=())
    m = max(sos.max_size, 1)
    if n < m:
        raise NotEnoughProcesses(f"alg3 needs n >= max|o| = {m}, got n={n}")
    blocks = [[i] for i in range(1, m + 1)]
    blocks[-1].extend(range(m + 1, n + 1))
    return Alg3Config(sos=sos, n=n, leader=1, blocks=tuple(tuple(b) for b in blocks))


def rank_pick(o: frozenset[int], i: int) -> int:
    """Value taken by a process of block ``i``: the ((i mod |o|)+1)-th in ascending order."""
    return sorted(o)[i % len(o)]


class Alg3Process(_Base):
    def __init__(self, config: Alg3Config, pid: int) -> None:
        self.is_leader = pid == config.leader
        self.choices = config.sos.sets
        self.index = config.block_index(pid)
        self.awaiting_choice = self.is_leader
        self.awaiting_set = True

    def on_start(self, value):
        if not self.is_leader:
            return []
        return [("communicate", Info(CHOICE, o)) for o in self.choices]

    def on_observe(self, sender, info):
        if info.kind == CHOICE and self.awaiting_choice:
            self.awaiting_choice = False
            return [("communicate", Info(OUTPUTSET, info.payload))]
        if info.kind == OUTPUTSET and self.awaiting_set:
            self.awaiting_set = False
            if info.payload:
                return [("output", rank_pick(info.payload, self.index))]
        return []

    def blocked(self):
        return self.awaiting_choice or self.awaiting_set

    def done(self):
        return not self.blocked()

    def key(self):
        return (self.awaiting_choice, self.awaiting_set)


@dataclass(frozen=True)
class Alg3:
    config: Alg3Config
    name: str = "alg3"

    @property
    def n(self) -> int:
        return self.config.n

    @property
    def sos(self) -> Sos:
        return self.config.sos

    def behaviors(self):
        return [Alg3Process(self.config, p) for p in range(1, self.n + 1)]


def alg3_behavior(config: Alg3Config) -> Alg3:
    return Alg3(config)


# -- helpers -----------------------------------------------------------------


class _ConstantProcess(_Base):
    def __init__(self, value: int) -> None:
        self.value = value
        self.finished = False

    def on_start(self, value):
        self.finished = True
        return [("output", self.value)]

    def on_observe(self, sender, info):
        return []

    def blocked(self):
        return False

    def done(self):
        return self.finished

    def key(self):
        return self.finished


@dataclass(frozen=True)
class Constant:
    """Every process outputs the same fixed value and communicates nothing."""

    value: int
    n: int = 1
    name: str = "constant"

    @property
    def sos(self) -> Sos:
        return Sos([{self.value}]) if self.n else Sos([()])

    def behaviors(self):
        return [_ConstantProcess(self.value) for _ in range(self.n)]


def describe(protocol) -> dict:
    """Structured summary of a protocol instance for reports."""
    c = getattr(protocol, "config", None)
    rec = {"protocol": protocol.name, "n": protocol.n}
    if isinstance(c, Alg1Config):
        rec.update(sos=str(c.sos), t=c.t, walk=[format_set(o) for o in c.walk],
                   leaders=list(c.leaders),
                   partition={str(v): list(b) for v, b in c.value_partition})
    elif isinstance(c, Alg2Config):
        rec.update(d=c.d, t=c.t, values=list(c.values), blocks=[list(b) for b in c.blocks],
                   completers=list(c.completers))
    elif isinstance(c, Alg3Config):
        rec.update(sos=str(c.sos), leader=c.leader, blocks=[list(b) for b in c.blocks])
    return rec
