import dataclasses
import textwrap

import pytest

from soslab.harness import (
    FAILED,
    INCONCLUSIVE,
    PASSED,
    CampaignError,
    SeedRange,
    Strategy,
    build_lemmaA2_schedule,
    build_protocol,
    check_completeness,
    check_safety,
    leaders_structure_violation,
    NonQuiescentRun,
    PositionOutOfRange,
    parse_campaign,
    run_campaign,
    safety_violation,
    sweep_crash_patterns,
    union_rule_violation,
)
from soslab.kernel import CrashBudgetExceeded, Exhaustive, Seeded, run
from soslab.protocols import leaders_output_sets
from soslab.sos import Sos


@pytest.fixture
def alg1(left):
    return build_protocol("alg1", n=6, t=1, sos=left)


def test_safety_pass_and_negative_control(alg1, left):
    r = run(alg1, 1, Seeded(3))
    assert check_safety(r, left).status == PASSED
    fake = dataclasses.replace(r, output_set=frozenset({1, 2, 3}))
    rep = check_safety(fake, left)
    assert rep.status == FAILED and rep.counterexample is not None
    again = run(alg1, 1, rep.counterexample.schedule)
    assert again == r


def test_safety_requires_quiescence(alg1, left):
    r = dataclasses.replace(run(alg1, 1, Seeded(3)), quiescent=False)
    with pytest.raises(NonQuiescentRun):
        check_safety(r, left)


def test_alg2_safety():
    p = build_protocol("alg2", n=3, t=1, d=2)
    assert check_safety(run(p, 1, Seeded(0)), Sos.parse("{{1,2}}")).passed


@pytest.mark.parametrize("i", range(1, 6))
def test_lemma_schedule(alg1, i):
    c = alg1.config
    r = run(alg1, 1, build_lemmaA2_schedule(c, i))
    assert leaders_output_sets(r, c) == {c.walk[i - 1]}
    assert r.output_set == c.walk[i - 1]
    assert run(alg1, 1, r.replay_schedule()) == r


def test_lemma_schedule_range(alg1):
    for bad in (0, 6):
        with pytest.raises(PositionOutOfRange):
            build_lemmaA2_schedule(alg1.config, bad)


def test_completeness_strategies(alg1, left, right):
    assert check_completeness(alg1, 1, left, Strategy.WITNESS).runs_examined == 5
    a3 = build_protocol("alg3", n=1, t=0, sos=Sos.parse("{{0},{1}}"))
    rep = check_completeness(a3, 0, a3.sos, Strategy.EXHAUSTIVE)
    assert rep.passed and rep.runs_examined == 2
    a2 = build_protocol("alg2", n=3, t=1, d=2)
    for s in Strategy:
        assert check_completeness(a2, 1, a2.sos, s, seeds=range(5)).passed


def test_seeded_miss_is_inconclusive(alg1, left):
    bigger = Sos(list(left) + [{9}])
    rep = check_completeness(alg1, 1, bigger, Strategy.SEEDED, seeds=range(10))
    assert rep.status == INCONCLUSIVE
    rep = check_completeness(alg1, 1, bigger, Strategy.WITNESS)
    assert rep.status == FAILED and rep.details["missing"] == ["{9}"]


def test_sweep_alg2_exhaustive():
    p = build_protocol("alg2", n=3, t=1, d=2)
    rep = sweep_crash_patterns(p, 1, Exhaustive(), {"safety": lambda r: safety_violation(r, p.sos)})
    assert rep.passed and rep.runs_examined > 1


def test_sweep_rejects_oversized_patterns(alg1):
    with pytest.raises(CrashBudgetExceeded):
        sweep_crash_patterns(alg1, 1, SeedRange(range(2)), {}, patterns=[(1, 2)])
    a3 = build_protocol("alg3", n=2, t=0, sos=Sos.parse("{{0},{1}}"))
    with pytest.raises(CrashBudgetExceeded):
        sweep_crash_patterns(a3, 0, SeedRange(range(2)), {}, patterns=[(1,)])


def test_sweep_failure_replays(alg1):
    # an impossible target forces failures; each must come with a replayable run
    tiny = Sos.parse("{{1,2}}")
    rep = sweep_crash_patterns(alg1, 1, SeedRange(range(30)), {"safety": lambda r: safety_violation(r, tiny)})
    assert rep.status == FAILED
    r = run(alg1, 1, rep.counterexample.schedule, strict=False)
    assert safety_violation(r, tiny) is not None


def test_leader_checks_on_witnesses(alg1):
    for i in range(1, 6):
        r = run(alg1, 1, build_lemmaA2_schedule(alg1.config, i))
        assert leaders_structure_violation(r, alg1.config) is None
        assert union_rule_violation(r, alg1.config) is None


CAMPAIGN = textwrap.dedent("""\
    # soslab-campaign v1
    [campaign]
    name = demo
    protocol = alg2
    d = 2
    n = 3
    t = 1
    strategy = seeded
    seeds = 0:20
    checks = safety, model, replay, completeness
""")


def test_campaign_roundtrip():
    c = parse_campaign(CAMPAIGN)
    assert c.seeds == tuple(range(20)) and c.d == 2
    reports = run_campaign(c)
    assert [r.check for r in reports] == ["sweep", "completeness"]
    assert all(r.passed for r in reports)


def test_campaign_overrides_win():
    c = parse_campaign(CAMPAIGN, {"seeds": "5,6", "n": 4})
    assert c.seeds == (5, 6) and c.n == 4


@pytest.mark.parametrize("text", [
    CAMPAIGN.replace("# soslab-campaign v1", "# something else"),
    CAMPAIGN.replace("checks = safety", "checks = vibes"),
    CAMPAIGN.replace("protocol = alg2\n", ""),
    CAMPAIGN.replace("checks = safety", "checks = leaders, safety"),
])
def test_campaign_errors(text):
    with pytest.raises(CampaignError):
        parse_campaign(text)
