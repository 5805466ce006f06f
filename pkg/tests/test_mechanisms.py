import itertools

import numpy as np
import pytest

from pbdistortion.budget_core import overlap_utility
from pbdistortion.incremental_space import build_X, label_mask, monotonicity_check, project_X
from pbdistortion.mechanisms import (BargainCase, FillStrategy, build_Z_tilde, deliberation_path,
                                     deliberation_paths, distribute, excess_of, get_mechanism,
                                     lemma_table, median_conditions_hold, median_points, median_scheme,
                                     nash_bargain, nash_gain, nash_points, nash_product_bound, nash_rand,
                                     random_diarchy, random_dictator, random_referee, referee_choice,
                                     sequential_deliberation)

from conftest import random_votes

FILLS = [FillStrategy.proportional(), FillStrategy.lexicographic(), FillStrategy.seeded_random(5)]
APPENDIX = np.array([[0.4, 0.1, 0.4, 0.1], [0.1, 0.4, 0.1, 0.4], [0.2, 0.05, 0.2, 0.55],
                     [0.25, 0.25, 0.25, 0.25]])


def simplex_grid(step):
    k = int(round(1 / step))
    pts = [(i, j, k - i - j) for i in range(k + 1) for j in range(k + 1 - i)]
    return np.array(pts, dtype=float) / k


def test_distribute_respects_caps_and_total(rng):
    for fill in FILLS:
        for _ in range(200):
            cap = rng.random(6) * (rng.random(6) < 0.7)
            amount = rng.random() * cap.sum()
            r = distribute(cap, amount, fill, rng)
            assert np.all(r >= -1e-15) and np.all(r <= cap + 1e-15)
            assert r.sum() == pytest.approx(amount, abs=1e-12)


def test_distribute_variants():
    cap = np.array([0.2, 0.1, 0.3])
    assert distribute(cap, 0.25, FillStrategy.lexicographic()) == pytest.approx([0.2, 0.05, 0.0])
    assert distribute(cap, 0.3, FillStrategy.proportional()) == pytest.approx([0.1, 0.05, 0.15])
    a = distribute(cap, 0.3, FillStrategy.seeded_random(3))
    b = distribute(cap, 0.3, FillStrategy.seeded_random(3))
    assert np.array_equal(a, b)
    with pytest.raises(ValueError):
        distribute(cap, 0.7)


def test_random_fill_is_proportional_in_expectation():
    cap = np.array([0.2, 0.1, 0.3])
    rng = np.random.default_rng(0)
    draws = np.array([distribute(cap, 0.3, FillStrategy.seeded_random(), rng) for _ in range(4000)])
    assert draws.mean(axis=0) == pytest.approx([0.1, 0.05, 0.15], abs=2e-3)


def test_disjoint_triple():
    out = nash_bargain([1, 0, 0], [0, 1, 0], [0, 0, 1])
    assert out.excess == 1.0 and out.case is BargainCase.CASE1
    assert out.z.alloc == pytest.approx([0.5, 0.5, 0.0])
    for fill in FILLS:
        assert nash_rand([1, 0, 0], [0, 1, 0], [0, 0, 1], np.random.default_rng(1), fill).alloc == \
            pytest.approx([0.5, 0.5, 0.0])


def test_identical_agents():
    a = np.array([0.2, 0.3, 0.5])
    out = nash_bargain(a, a, [1.0, 0.0, 0.0])
    assert out.z.alloc == pytest.approx(a)
    assert out.z_table[0b011] + out.z_table[0b111] == pytest.approx(1.0)


def test_appendix_example_steps():
    a, b, c, _ = APPENDIX
    out = median_scheme(a, b, c)
    assert np.median(APPENDIX[:3], axis=0) == pytest.approx([0.2, 0.1, 0.2, 0.4])
    assert out.excess == pytest.approx(0.1)
    assert out.case is BargainCase.CASE1


def test_zero_excess_gives_median():
    a, b, c = np.array([0.6, 0.4, 0]), np.array([0.4, 0.6, 0]), np.array([0.5, 0.5, 0])
    assert excess_of(a, b, c) == pytest.approx(0.0)
    z = nash_rand(a, b, c, np.random.default_rng(0), FillStrategy.seeded_random())
    assert z.alloc == pytest.approx([0.5, 0.5, 0.0])


def _lemma_close(out, a, b, c):
    table = lemma_table(a, b, c)
    agg = out.z_table.aggregated
    return all(abs(agg[s] - v) <= 1e-9 for s, v in table.items())


def test_nash_matches_closed_form_table(rng):
    for fill in FILLS:
        for _ in range(300):
            m = int(rng.integers(2, 7))
            a, b, c = random_votes(rng, 3, m)
            out = nash_bargain(a, b, c, fill, rng)
            assert _lemma_close(out, a, b, c)
            assert out.case is (BargainCase.CASE1 if out.excess >= 0 else BargainCase.CASE2)


def test_nash_is_median_scheme_and_rational(rng):
    for _ in range(500):
        m = int(rng.integers(2, 7))
        a, b, c = random_votes(rng, 3, m)
        z = nash_bargain(a, b, c).z
        assert median_conditions_hold(a, b, c, z)
        ga, gb = nash_gain(a, b, c, z)
        assert ga >= -1e-12 and gb >= -1e-12
        assert ga * gb == pytest.approx(nash_product_bound(a, b, c), abs=1e-12)
        for fill in FILLS:
            assert median_conditions_hold(a, b, c, median_scheme(a, b, c, fill, rng).z)


def test_nash_product_against_grid():
    rng = np.random.default_rng(11)
    grid = simplex_grid(0.01)
    for _ in range(30):
        a, b, c = random_votes(rng, 3, 3, sparsity=0.0)
        ua = overlap_utility(grid, a) - overlap_utility(c, a)
        ub = overlap_utility(grid, b) - overlap_utility(c, b)
        ours = np.prod(nash_gain(a, b, c, nash_bargain(a, b, c).z))
        strict = (ua >= -1e-12) & (ub >= -1e-12)
        if strict.any():
            assert ours >= float(np.max((ua * ub)[strict])) - 1e-12
        # the rational set can be thin, so compare against a slightly relaxed one
        loose = (ua >= -0.02) & (ub >= -0.02)
        assert abs(ours - float(np.max((ua * ub)[loose]))) <= 0.05


def test_median_utility_sum_against_grid():
    rng = np.random.default_rng(12)
    grid = simplex_grid(0.02)
    for _ in range(30):
        a, b, c = random_votes(rng, 3, 3, sparsity=0.0)
        total = overlap_utility(grid, a) + overlap_utility(grid, b) + overlap_utility(grid, c)
        z = median_scheme(a, b, c).z
        ours = overlap_utility(z, a) + overlap_utility(z, b) + overlap_utility(z, c)
        assert ours >= total.max() - 1e-12
        assert ours <= total.max() + 0.05


def test_median_symmetric_in_inputs(rng):
    for _ in range(100):
        trio = random_votes(rng, 3, 5)
        values = []
        for perm in itertools.permutations(range(3)):
            z = median_scheme(*trio[list(perm)]).z
            values.append(sum(overlap_utility(z, v) for v in trio))
        assert np.ptp(values) < 1e-12


def test_batched_cores_match_scalar(rng):
    trios = np.array([random_votes(rng, 3, 5) for _ in range(200)])
    zs = nash_points(trios[:, 0], trios[:, 1], trios[:, 2])
    ms = median_points(trios[:, 0], trios[:, 1], trios[:, 2])
    for t, z, mz in zip(trios, zs, ms):
        assert z == pytest.approx(nash_bargain(*t).z.alloc, abs=1e-12)
        assert mz == pytest.approx(median_scheme(*t).z.alloc, abs=1e-12)


def test_case1_capacity_never_short(rng):
    a, b, c = (rng.dirichlet(np.ones(5), size=100000) for _ in range(3))
    med = np.median(np.stack([a, b, c]), axis=0)
    excess = 1 - med.sum(axis=1)
    room_a = np.maximum(a - med, 0).sum(axis=1)
    assert np.all(room_a[excess > 0] >= excess[excess > 0] - 1e-12)


def test_z_tilde_appendix_example():
    Zt = build_Z_tilde(APPENDIX, 0, 1, 2, r_a=[0.02, 0, 0.03, 0], r_b=[0, 0.05, 0, 0])
    assert Zt.value(0, label_mask("abcd", "a")) == pytest.approx(0.015, abs=1e-12)
    assert Zt.value(0, label_mask("abcd", "ad")) == pytest.approx(0.005, abs=1e-12)
    assert Zt.value(0, label_mask("abcd", "acd")) == pytest.approx(0.1, abs=1e-12)
    assert not monotonicity_check(build_X(APPENDIX), Zt)


def test_z_tilde_properties(rng):
    for _ in range(150):
        n, m = int(rng.integers(3, 7)), int(rng.integers(2, 6))
        v = random_votes(rng, n, m)
        a, b, c = (int(i) for i in rng.choice(n, size=3, replace=False))
        X = build_X(v)
        Zt = build_Z_tilde(v, a, b, c)
        assert np.all(Zt.per_project <= X.per_project + 1e-12)
        assert Zt.total() == pytest.approx(1.0, abs=1e-12)
        Q = (1 << a) | (1 << b) | (1 << c)
        proj = project_X(Zt, Q).aggregated
        bit = {voter: 1 << k for k, voter in enumerate(sorted((a, b, c)))}
        remap = {s: sum(bit[x] for x, flag in zip((a, b, c), (s & 1, s & 2, s & 4)) if flag)
                 for s in range(8)}
        for s, value in lemma_table(v[a], v[b], v[c]).items():
            assert proj[remap[s]] == pytest.approx(value, abs=1e-9)


def test_z_tilde_proportional_scaling(rng):
    for _ in range(100):
        n, m = 5, 4
        v = random_votes(rng, n, m)
        a, b, c = 0, 1, 2
        excess = excess_of(v[a], v[b], v[c])
        if excess <= 1e-9:
            continue
        X = build_X(v)
        Zt = build_Z_tilde(v, a, b, c)
        room_a = np.maximum(v[a] - np.median(v[:3], axis=0), 0).sum()
        gamma = excess / (2 * room_a)
        masks = np.arange(1 << n)
        sel = (masks & 1 == 1) & (masks & 6 == 0)
        assert Zt.aggregated[sel] == pytest.approx(gamma * X.aggregated[sel], abs=1e-12)


def test_dictator_and_diarchy():
    rng = np.random.default_rng(0)
    assert random_dictator([[0.2, 0.8]], rng).alloc == pytest.approx([0.2, 0.8])
    P = np.array([[1.0, 0.0], [0.0, 1.0]])
    out = random_diarchy(P, lambda P, i, j: 1.0, rng).alloc
    assert any(np.array_equal(out, row) for row in P)
    seen = {tuple(random_diarchy(P, rng=rng).alloc) for _ in range(50)}
    assert (0.5, 0.5) in seen
    a = random_dictator(P, np.random.default_rng(7))
    assert a == random_dictator(P, np.random.default_rng(7))


def test_referee_rules():
    a, b = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    assert all(np.array_equal(out, a) for _, out in referee_choice(a, a, b))
    assert referee_choice(a, b, a)[0][1] is a and len(referee_choice(a, b, a)) == 1
    assert len(referee_choice(a, b, np.array([0.5, 0.5]))) == 2
    out = random_referee(np.array([a, a]), np.random.default_rng(0))
    assert out.alloc == pytest.approx(a)


def test_deliberation_unanimous_and_one_round():
    v = np.tile([0.1, 0.9], (5, 1))
    assert sequential_deliberation(v, 7, "nash", np.random.default_rng(0)).alloc == pytest.approx(v[0])
    rng = np.random.default_rng(3)
    votes = random_votes(rng, 6, 4)
    path = deliberation_path(votes, 1, "nash", np.random.default_rng(42))
    draw = np.random.default_rng(42)
    c = votes[draw.integers(6)]
    i, j = draw.integers(6, size=2)
    assert path[1] == pytest.approx(nash_bargain(votes[i], votes[j], c).z.alloc, abs=1e-12)


def test_batched_paths_are_budgets(rng):
    votes = random_votes(rng, 30, 5)
    for scheme in ("nash", "median", "nash-rand"):
        paths = deliberation_paths(votes, 3, 20, scheme, seed=1)
        assert paths.shape == (4, 20, 5)
        assert np.allclose(paths.sum(axis=2), 1.0)
        assert np.all(paths >= -1e-12)
        again = deliberation_paths(votes, 3, 20, scheme, seed=1)
        assert np.array_equal(paths, again)


def test_mechanism_registry():
    with pytest.raises(ValueError):
        get_mechanism("plurality")
    mech = get_mechanism("referee")
    assert mech.arity == 3
    v = np.array([[1.0, 0.0], [0.0, 1.0]])
    assert mech.sample(v, np.random.default_rng(0)).shape == (2,)
