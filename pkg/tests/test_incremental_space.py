import numpy as np
import pytest

from pbdistortion.budget_core import overlap_utility
from pbdistortion.incremental_space import (AllocTable, TableError, build_X, build_Z, label_mask,
                                            monotonicity_check, project_X, utility_from_table)

from conftest import random_votes

EXAMPLE = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.25, 0.25, 0.5]])


def test_worked_example_values():
    X = build_X(EXAMPLE)
    expect = {"a": 0.75, "b": 0.75, "c": 0.5, "ac": 0.25, "abc": 0.0, "": 0.5, "bc": 0.25, "ab": 0.0}
    for word, value in expect.items():
        assert X[label_mask("abc", word)] == pytest.approx(value, abs=1e-12)


def test_single_voter():
    X = build_X([[0.3, 0.7]])
    assert X[1] == pytest.approx(1.0)
    # the empty set keeps 1 - v_j on each project
    assert X[0] == pytest.approx(1.0)
    assert build_X([[1.0]])[0] == 0.0


def test_columns_and_voter_sums(rng):
    for _ in range(200):
        n, m = int(rng.integers(1, 7)), int(rng.integers(1, 6))
        v = random_votes(rng, n, m)
        X = build_X(v)
        assert np.allclose(X.per_project.sum(axis=1), 1.0, atol=1e-12)
        masks = np.arange(1 << n)
        for i in range(n):
            has = (masks >> i) & 1 == 1
            assert np.allclose(X.per_project[:, has].sum(axis=1), v[i], atol=1e-12)


def test_projection_matches_direct_build(rng):
    for _ in range(200):
        n, m = int(rng.integers(2, 7)), int(rng.integers(1, 5))
        v = random_votes(rng, n, m)
        Q = int(rng.integers(1, 1 << n))
        members = [i for i in range(n) if Q >> i & 1]
        direct = build_X(v[members]).per_project
        assert np.allclose(project_X(build_X(v), Q).per_project, direct, atol=1e-12)


def test_projection_examples():
    X = build_X(EXAMPLE)
    assert project_X(X, 0b111).per_project == pytest.approx(X.per_project)
    assert project_X(X, 0b101)[0b11] == pytest.approx(0.25)
    assert project_X(X, 0b010)[1] == pytest.approx(1.0)
    with pytest.raises(TableError):
        project_X(X, 0)


def test_z_worked_example():
    P = np.array([[0.2, 0.8], [0.5, 0.5], [0.8, 0.2]])
    Z = build_Z(P, [0.4, 0.6])
    assert Z.value(1, 0b011) == pytest.approx(0.3, abs=1e-12)
    assert Z.value(1, 0b001) == pytest.approx(0.1, abs=1e-12)


def test_z_table_properties(rng):
    for _ in range(300):
        n, m = int(rng.integers(1, 7)), int(rng.integers(1, 6))
        v = random_votes(rng, n, m)
        z = rng.dirichlet(np.ones(m))
        X, Z = build_X(v), build_Z(v, z)
        assert np.all(Z.per_project <= X.per_project + 1e-12)
        assert np.allclose(Z.per_project.sum(axis=1), z, atol=1e-12)
        for i in range(n):
            assert utility_from_table(Z, i) == pytest.approx(overlap_utility(v[i], z), abs=1e-12)
        assert monotonicity_check(X, Z)


def test_utility_of_own_vote_is_one(rng):
    v = random_votes(rng, 4, 5)
    assert utility_from_table(build_Z(v, v[2]), 2) == pytest.approx(1.0)


def test_monotonicity_trivial_and_failing():
    X = build_X(EXAMPLE)
    assert monotonicity_check(X, X)
    bad = X.per_project.copy()
    bad[0, 0b001] = 0.3  # partial on {a} while its superset {a, c} is short
    bad[0, 0b101] = 0.0
    assert not monotonicity_check(X, AllocTable(3, np.maximum(bad, 0)))


def test_too_many_voters():
    with pytest.raises(TableError):
        build_X(np.full((17, 2), 0.5))
