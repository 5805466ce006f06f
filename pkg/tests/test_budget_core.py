import numpy as np
import pytest

from pbdistortion.budget_core import (Budget, BudgetError, VoteProfile, check_budget, check_profile,
                                      cost, normalize, overlap_utility, social_cost)


def test_check_budget_accepts_simplex_point():
    assert np.array_equal(check_budget([0.25, 0.75]), [0.25, 0.75])


@pytest.mark.parametrize("bad", [[0.5, 0.6], [-0.1, 1.1], [], [[0.5, 0.5]], [np.nan, 1.0]])
def test_check_budget_rejects(bad):
    with pytest.raises(BudgetError):
        check_budget(bad)


def test_check_budget_caps():
    with pytest.raises(BudgetError):
        check_budget([0.7, 0.3], caps=[0.5, 1.0])
    check_budget([0.5, 0.5], caps=[0.5, 1.0])


def test_normalize_is_explicit():
    assert np.allclose(normalize([2, 2]), [0.5, 0.5])
    with pytest.raises(BudgetError):
        normalize([0, 0])


def test_profile_validation_names_row():
    with pytest.raises(BudgetError, match="vote 1"):
        check_profile([[1.0, 0.0], [0.5, 0.6]])
    with pytest.raises(BudgetError):
        VoteProfile(np.zeros((0, 2)))


def test_budget_is_immutable_and_hashable():
    b = Budget([0.5, 0.5])
    with pytest.raises(ValueError):
        b.alloc[0] = 1.0
    assert hash(b) == hash(Budget([0.5, 0.5]))
    assert b == Budget([0.5, 0.5])


def test_overlap_and_cost_examples():
    assert overlap_utility([1, 0], [0, 1]) == 0.0
    assert cost([1, 0], [0, 1]) == 2.0
    assert overlap_utility([0.3, 0.7], [0.3, 0.7]) == pytest.approx(1.0)


def test_cost_is_two_minus_twice_overlap(rng):
    a = rng.dirichlet(np.ones(6), size=500)
    b = rng.dirichlet(np.ones(6), size=500)
    assert np.allclose(cost(a, b), 2 - 2 * overlap_utility(a, b), atol=1e-12)


def test_dimension_mismatch():
    with pytest.raises(BudgetError):
        overlap_utility([1.0, 0.0], [1.0, 0.0, 0.0])


def test_social_cost_sums_voters():
    P = VoteProfile.from_rows([[1, 0], [0, 1]])
    assert social_cost(P, [0.5, 0.5]) == pytest.approx(2.0)
    assert P.subset([1]).n == 1
