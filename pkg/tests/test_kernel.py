from dataclasses import dataclass

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from soslab.harness import build_protocol
from soslab.kernel import (
    CRASH,
    DELIVER,
    MOVE,
    OUTPUT,
    OUTPUTSET,
    START,
    TIMEOUT,
    BudgetExceeded,
    CrashBudgetExceeded,
    CrashPoint,
    Decision,
    DecisionNotEnabled,
    DuplicateCommunication,
    Exhaustive,
    Explicit,
    Info,
    NonQuiescence,
    RunResult,
    RunState,
    Seeded,
    TraceEvent,
    check_model,
    enumerate_runs,
    run,
    schedule_from_lines,
)
from soslab.protocols import Constant


@pytest.fixture
def alg1(left):
    return build_protocol("alg1", n=6, t=1, sos=left)


@pytest.fixture
def alg2():
    return build_protocol("alg2", n=3, t=1, d=2)


def test_info_text_roundtrip():
    for info in (Info(MOVE, 3), Info(OUTPUTSET, frozenset({2, 1})), Info(OUTPUTSET, frozenset())):
        assert Info.parse(str(info)) == info
    assert str(Info(OUTPUTSET, frozenset({2, 1}))) == "OUTPUTSET({1,2})"
    with pytest.raises(ValueError):
        Info.parse("PING(1)")


def test_seeded_runs_are_deterministic(alg1):
    a = run(alg1, 1, Seeded(11, (CrashPoint(2, 9),)))
    b = run(alg1, 1, Seeded(11, (CrashPoint(2, 9),)))
    assert a == b and a.trace_lines() == b.trace_lines()


def test_different_seeds_differ(alg1):
    traces = {tuple(run(alg1, 1, Seeded(s)).trace_lines()) for s in range(20)}
    assert len(traces) > 1


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 6), st.integers(0, 40), st.booleans())
def test_replay_is_identical(seed, victim, step, drops):
    alg1 = build_protocol("alg1", n=6, t=1, sos=__import__("soslab").Sos.parse("{{1},{3},{1,2},{1,3},{2,3}}"))
    r = run(alg1, 1, Seeded(seed, (CrashPoint(victim, step),), drops), strict=False)
    assert run(alg1, 1, r.replay_schedule(), strict=False) == r
    assert run(alg1, 1, schedule_from_lines(r.trace_lines()), strict=False) == r
    assert check_model(r).ok


def test_outputs_are_held_until_released(alg2):
    state = RunState(alg2, 1)
    state.step(Decision(START, 1))
    assert 1 in state.intents and state.outputs[1] is None
    # nothing was communicated yet: the OUTPUT info follows the output
    assert not state.pending
    state.step(Decision("release", 1))
    assert state.outputs[1] == 1
    assert any(k[1] == Info(OUTPUT, 1) for k in state.pending)


def test_commuting_deliveries_reach_same_configuration(alg1):
    state = RunState(alg1, 1)
    for p in (1, 2, 3):
        state.step(Decision(START, p))
    a, b = state.clone(), state.clone()
    d1 = Decision(DELIVER, 3, 1, Info(MOVE, 2))
    d2 = Decision(DELIVER, 2, 1, Info(MOVE, 2))
    a.step(d1), a.step(d2)
    b.step(d2), b.step(d1)
    assert a.key() == b.key()
    assert a.trace != b.trace


def test_undeliverable_decision_rejected(alg2):
    state = RunState(alg2, 1)
    with pytest.raises(DecisionNotEnabled):
        state.step(Decision(DELIVER, 2, 1, Info(OUTPUT, 1)))
    with pytest.raises(DecisionNotEnabled):
        state.step(Decision(TIMEOUT, 1, wait=1))
    state.step(Decision(START, 1))
    with pytest.raises(DecisionNotEnabled):
        state.step(Decision(START, 1))


def test_timeout_outcome_follows_observations(alg1):
    state = RunState(alg1, 1)
    state.step(Decision(START, 1))
    with pytest.raises(DecisionNotEnabled):
        state.step(Decision(TIMEOUT, 1, wait=1, arrived=True))
    state.step(Decision(TIMEOUT, 1, wait=1, arrived=False))


def test_crash_budget_enforced(alg1):
    with pytest.raises(CrashBudgetExceeded):
        run(alg1, 1, Seeded(0, (CrashPoint(1, 0), CrashPoint(2, 0))))
    with pytest.raises(CrashBudgetExceeded):
        run(alg1, 1, Explicit((Decision(CRASH, 1), Decision(CRASH, 2))))
    state = RunState(alg1, 1)
    state.step(Decision(CRASH, 3))
    with pytest.raises(DecisionNotEnabled):
        state.step(Decision(CRASH, 4))


@dataclass
class _Chatty:
    """Communicates the same info twice on start."""

    def on_start(self, value):
        return [("communicate", Info(MOVE, 1)), ("communicate", Info(MOVE, 1))]

    def on_observe(self, sender, info):
        return []

    def on_timeout(self, wait, arrived):
        return []

    def arrived(self, wait):
        return False

    def blocked(self):
        return False

    def done(self):
        return True

    def key(self):
        return 0

    def clone(self):
        return self


class _Waiter(_Chatty):
    def on_start(self, value):
        return []

    def blocked(self):
        return True

    def done(self):
        return False


@dataclass
class _Toy:
    behavior: type
    n: int = 1
    name: str = "toy"

    def behaviors(self):
        return [self.behavior() for _ in range(self.n)]


def test_duplicate_communication_rejected():
    with pytest.raises(DuplicateCommunication):
        run(_Toy(_Chatty), 0, Seeded(0))


def test_blocked_correct_process_is_not_quiescent():
    with pytest.raises(NonQuiescence):
        run(_Toy(_Waiter), 0, Seeded(0))
    r = run(_Toy(_Waiter), 0, Seeded(0), strict=False)
    assert not r.quiescent


def test_crashed_senders_infos_may_be_lost(alg1):
    # leader 1 communicates MOVE(2), then crashes before anyone observes it
    r = run(alg1, 1, Explicit((Decision(START, 1), Decision(CRASH, 1))))
    assert ("communicate", 1) in {(e.kind, e.process) for e in r.trace}
    assert all(e.kind != DELIVER or e.sender != 1 for e in r.trace)
    assert check_model(r).ok


def test_observed_infos_reach_every_correct_process(alg1):
    sched = Explicit((Decision(START, 1), Decision(START, 3),
                      Decision(DELIVER, 3, 1, Info(MOVE, 2)), Decision(CRASH, 1)))
    r = run(alg1, 1, sched)
    got = {e.process for e in r.trace if e.kind == DELIVER and e.sender == 1}
    assert got == {2, 3, 4, 5, 6}


def test_model_check_negative_controls():
    info = Info(OUTPUT, 1)
    trace = (
        TraceEvent(0, DELIVER, 2, 1, info),
        TraceEvent(1, "communicate", 1, 1, info),
        TraceEvent(2, DELIVER, 2, 1, info),
        TraceEvent(3, DELIVER, 2, 1, info),
    )
    r = RunResult("fake", 3, 0, (None,) * 3, (1, None, None), frozenset({1}), frozenset({2, 3}),
                  trace, True)
    m = check_model(r)
    assert m.validity and m.integrity and m.crash_bound and not m.ok


def test_missing_delivery_breaks_closure():
    info = Info(OUTPUT, 1)
    trace = (TraceEvent(0, "communicate", 1, 1, info), TraceEvent(1, DELIVER, 1, 1, info))
    r = RunResult("fake", 2, 0, (None, None), (1, None), frozenset({1}), frozenset(), trace, True)
    assert check_model(r).closure


def test_enumeration_small_instances():
    runs = list(enumerate_runs(Constant(7, 2), 0))
    assert len(runs) == 1 and runs[0].output_set == {7}


def test_enumeration_budget(alg1):
    with pytest.raises(BudgetExceeded):
        list(enumerate_runs(alg1, 1, Exhaustive(max_states=50)))


def test_enumerated_runs_replay(alg2):
    for r in enumerate_runs(alg2, 1):
        assert run(alg2, 1, r.replay_schedule(), strict=False) == r
        assert check_model(r).ok
