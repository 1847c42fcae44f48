"""Freeze/thaw/crash adversary against d-disagreement protocols.

The adversary lets the system run, but holds back every process that is
about to output a value not yet committed. Once t+1 processes are held, the
most common held value is committed, the processes holding it are released,
and the next fragment begins with the leftovers still held. In the last
fragment the adversary holds t processes and crashes all of them.

Holding a process costs nothing in the kernel: a process with an
unreleased output intent takes no delivery and no timeout, so it is
suspended until the adversary issues its ``release``.
"""

from __future__ import annotations

import random
from collections import Counter
from collections.abc import Sequence
from dataclasses import dataclass, field

from .kernel import CRASH, DELIVER, RELEASE, Decision, ProtocolSpec, RunResult, RunState
from .sos import format_set


@dataclass(frozen=True)
class Fragment:
    index: int
    frozen: tuple[tuple[int, int], ...]  # (process, pending value) when the fragment closed
    committed: int | None  # w_k, None for the last fragment
    thawed: tuple[int, ...]  # P_k

    @property
    def quota(self) -> int:
        return len(self.thawed)


@dataclass(frozen=True)
class AdversaryReport:
    violated: bool
    outcome: str  # "violated" | "no-violation"
    stalled: bool  # the protocol stopped producing output intents before the quota was met
    fragments: tuple[Fragment, ...]
    committed_values: tuple[int, ...]
    crash_set: frozenset[int]
    output_set: frozenset[int]
    target: frozenset[int]

    @property
    def quotas(self) -> tuple[int, ...]:
        return tuple(f.quota for f in self.fragments if f.committed is not None)

    def as_record(self) -> dict:
        return {
            "violated": self.violated,
            "outcome": self.outcome,
            "stalled": self.stalled,
            "committed_values": list(self.committed_values),
            "quotas": list(self.quotas),
            "fragments": [
                {"index": f.index, "frozen": [list(pv) for pv in f.frozen],
                 "committed": f.committed, "thawed": list(f.thawed)}
                for f in self.fragments
            ],
            "crash_set": sorted(self.crash_set),
            "output_set": format_set(self.output_set),
            "target": format_set(self.target),
            "note": ("demonstration against this protocol instance only"
                     if self.violated else "the protocol withstood this adversary run"),
        }


@dataclass
class _Adversary:
    state: RunState
    committed: list[int] = field(default_factory=list)
    frozen: dict[int, int] = field(default_factory=dict)  # insertion order = freeze order
    rng: random.Random | None = None

    def _settle_intents(self) -> None:
        """Release intents for committed values, freeze the others."""
        for p, (value, _) in sorted(self.state.intents.items()):
            if p in self.frozen:
                continue
            if value in self.committed:
                self.state.step(Decision(RELEASE, p))
            else:
                self.frozen[p] = value

    def advance(self, quota: int) -> bool:
        """Run freely until ``quota`` processes are frozen. False if the run stalls first."""
        state = self.state
        while True:
            self._settle_intents()
            if len(self.frozen) >= quota:
                return True
            moves = [d for d in state.enabled() if d.kind != CRASH
                     and not (d.kind == RELEASE and d.process in self.frozen)]
            # infos of crashed senders nobody correct has seen may be lost; never force them
            moves = [d for d in moves
                     if d.kind != DELIVER or state.obligatory(d.sender, d.info)]
            if not moves:
                return False
            if self.rng is None:
                d = min(moves, key=state.canon_key)
            else:
                d = moves[self.rng.randrange(len(moves))]
            state.step(d)

    def thaw_most_frequent(self) -> tuple[int, tuple[int, ...]]:
        counts = Counter(self.frozen.values())
        top = max(counts.values())
        w = min(v for v, c in counts.items() if c == top)
        thawed = tuple(sorted(p for p, v in self.frozen.items() if v == w))
        self.committed.append(w)
        for p in thawed:
            del self.frozen[p]
            self.state.step(Decision(RELEASE, p))
        return w, thawed

    def crash_frozen(self) -> None:
        for p in sorted(self.frozen):
            self.state.step(Decision(CRASH, p))
        self.frozen.clear()


def freeze_adversary(protocol: ProtocolSpec, t: int, d: int, values: Sequence[int],
                     seed: int | None = None,
                     inputs: Sequence[int | None] | None = None) -> tuple[RunResult, AdversaryReport]:
    """Attack ``protocol`` (meant to output all of ``values``) with at most ``t`` crashes.

    With ``seed=None`` the free-running phases take enabled decisions in
    canonical order (starts, then releases, deliveries, timeouts); a seed
    picks uniformly among them instead.
    """
    values = tuple(values)
    if d < 1 or len(values) != d:
        raise ValueError(f"need exactly d={d} target values, got {values}")
    state = RunState(protocol, t, inputs)
    adv = _Adversary(state, rng=None if seed is None else random.Random(seed))
    fragments: list[Fragment] = []
    stalled = False
    for k in range(1, d):
        if not adv.advance(t + 1):
            stalled = True
            break
        snapshot = tuple(adv.frozen.items())
        w, thawed = adv.thaw_most_frequent()
        fragments.append(Fragment(k, snapshot, w, thawed))
    if not stalled:
        stalled = not adv.advance(t)
    # at most t are frozen here: either the last fragment stopped at t, or a
    # stall cut an earlier fragment short of t+1
    fragments.append(Fragment(len(fragments) + 1, tuple(adv.frozen.items()), None, ()))
    adv.crash_frozen()
    result = state.finalize(strict=False)
    target = frozenset(values)
    violated = len(result.crashed) <= t and (result.output_set != target or not result.quiescent)
    report = AdversaryReport(
        violated=violated,
        outcome="violated" if violated else "no-violation",
        stalled=stalled,
        fragments=tuple(fragments),
        committed_values=tuple(adv.committed),
        crash_set=result.crashed,
        output_set=result.output_set,
        target=target,
    )
    return result, report
