import math

import pytest

from soslab.adversary import freeze_adversary
from soslab.kernel import check_model, run
from soslab.protocols import Constant, alg2_behavior, alg2_instantiate
from soslab.sos import disagreement_lower_bound


def _alg2(d, t, n, relaxed=False):
    values = tuple(range(1, d + 1))
    return alg2_behavior(alg2_instantiate(d, values, n, t, relaxed=relaxed)), values


@pytest.mark.parametrize("d,t", [(2, 1), (3, 1), (2, 3), (3, 2), (4, 1)])
def test_below_bound_is_violated(d, t):
    n = disagreement_lower_bound(d, t) - 1
    p, values = _alg2(d, t, n, relaxed=True)
    result, rep = freeze_adversary(p, t, d, values)
    assert rep.violated and rep.outcome == "violated"
    assert len(rep.crash_set) <= t
    assert result.output_set < frozenset(values)
    # committed values are distinct and the thawed sets meet the per-fragment quotas
    assert len(set(rep.committed_values)) == len(rep.committed_values)
    for k, c in enumerate(rep.quotas, start=1):
        assert c >= math.ceil((t + 1) / (d - k + 1))


def test_expected_fragments_for_two_values():
    p, values = _alg2(2, 1, 2, relaxed=True)
    _, rep = freeze_adversary(p, 1, 2, values)
    assert rep.committed_values == (1,)
    assert rep.fragments[0].frozen == ((1, 1), (2, 2))
    assert rep.fragments[0].thawed == (1,)
    assert rep.crash_set == {2}


def test_properly_sized_alg2_withstands():
    p, values = _alg2(2, 1, 3)
    for seed in [None, *range(200)]:
        result, rep = freeze_adversary(p, 1, 2, values, seed=seed)
        assert not rep.violated and result.output_set == {1, 2}


def test_no_crash_budget_no_violation():
    result, rep = freeze_adversary(Constant(4, 1), 0, 1, (4,))
    assert not rep.violated and not rep.crash_set and result.output_set == {4}


def test_stall_is_reported():
    # one process, two target values: the protocol never produces a second intent
    _, rep = freeze_adversary(Constant(4, 1), 1, 2, (4, 5))
    assert rep.stalled and rep.violated


def test_adversary_runs_are_well_formed_and_replay():
    p, values = _alg2(2, 3, 5, relaxed=True)
    for seed in range(20):
        result, rep = freeze_adversary(p, 3, 2, values, seed=seed)
        assert check_model(result).ok
        assert run(p, 3, result.replay_schedule(), strict=False) == result


def test_bad_target():
    p, _ = _alg2(2, 1, 3)
    with pytest.raises(ValueError):
        freeze_adversary(p, 1, 3, (1, 2))
