import itertools

import numpy as np
import pytest

from pbdistortion import pd_verifier as pv
from pbdistortion.lp_solver import LpStatus, solve
from pbdistortion.mechanisms import build_Z_tilde

from conftest import random_votes


def test_case_strings_round_trip():
    for kappa in (0, 1, 0xABCDE, pv.CASE_FULL):
        assert pv.parse_case(pv.case_hex(kappa)) == kappa
    with pytest.raises(ValueError):
        pv.parse_case("100000")
    assert pv.toggle_case(0) == pv.CASE_FULL


def test_permute_case_matches_direct_relabeling(rng):
    for _ in range(50):
        kappa = int(rng.integers(pv.CASE_COUNT))
        perm = [int(i) for i in rng.permutation(6)]
        direct = 0
        for q, trio in enumerate(pv.TRIPLES):
            image = tuple(sorted(perm[i] for i in trio))
            direct |= pv.case_bit(kappa, q) << pv.TRIPLE_INDEX[image]
        assert pv.permute_case(kappa, perm) == direct


def test_canonical_counts():
    median = pv.canonicalize_cases("median")
    assert len(median.representatives) == 2136
    assert sum(median.orbit_sizes) == 2**20
    rand = pv.canonicalize_cases("rand")
    assert len(rand.representatives) == 1244
    assert sum(rand.orbit_sizes) == 2**20
    assert len(pv.canonicalize_cases("rand-quotient").representatives) == 1088


def test_unanimous_point_is_feasible_with_zero_objective(rng):
    x = pv.unanimous_point()
    for kappa in [0, pv.CASE_FULL] + [int(k) for k in rng.integers(pv.CASE_COUNT, size=3)]:
        lp = pv.build_median_lp(kappa)
        assert lp.violation(x) <= 1e-12
        assert lp.objective(x) == pytest.approx(0.0, abs=1e-12)


def test_lifted_profiles_are_feasible_and_objectives_agree(rng):
    votes = np.array([random_votes(rng, 6, 4) for _ in range(60)])
    lifted = pv.lift_profiles(votes)
    c, constant = pv.median_objective(pv.MEDIAN_BOUND)
    table_route = lifted.points @ c + constant
    assert table_route == pytest.approx(lifted.direct, abs=1e-12)
    for x, kappa in zip(lifted.points[:10], lifted.cases[:10]):
        assert pv.build_median_lp(int(kappa)).violation(x) <= 1e-9


def test_single_median_case_solves():
    kappa = pv.canonicalize_cases("median").representatives[5]
    report = pv.solve_median_case(kappa)
    assert report.lp_status == "OPTIMAL"
    assert report.passed and report.objective_value <= 1e-6


def test_median_bound_is_tight_for_unanimous_cases():
    sol = solve(pv.build_median_lp(0, bound=1.30))
    assert sol.status is LpStatus.OPTIMAL
    assert sol.objective_value > 1e-4


def test_select_cases():
    assert len(pv.select_cases("median", 5, seed=1)) == 5
    assert pv.select_cases("median", 5, seed=1) == pv.select_cases("median", 5, seed=1)
    reps = set(pv.canonicalize_cases("median").representatives)
    picked = pv.select_cases("median", ["fffff", "00001"])
    assert set(picked) <= reps


def test_rand_program_base_and_full_agree():
    prog = pv.build_rand_bilinear(0)
    rng = np.random.default_rng(2)
    gamma = rng.random(prog.gamma_dim)
    base = solve(prog.base_lp(gamma))
    full = solve(prog.full_lp(gamma))
    assert base.optimal and full.optimal
    assert base.objective_value == pytest.approx(full.objective_value, abs=1e-7)
    lifted = prog.lift(base.primal, gamma)
    assert prog.full_lp(gamma).violation(lifted) <= 1e-8


def test_profile_points_are_feasible_for_rand_program(rng):
    for _ in range(10):
        votes = random_votes(rng, 6, 4)
        kappa, x, gamma = pv.rand_point_from_profile(votes)
        prog = pv.build_rand_bilinear(kappa)
        point = prog.lift(x, gamma)
        full = prog.full_lp(gamma)
        assert full.violation(point) <= 1e-9
        assert prog.base_lp(gamma).violation(x) <= 1e-9
        for t in range(0, len(pv.DESIGNATED), 7):
            c, a, b = pv.DESIGNATED[t]
            table = build_Z_tilde(votes, a, b, c).aggregated
            start = pv.zbar_index(t, 0)
            assert point[start:start + pv.SUBSETS] == pytest.approx(table, abs=1e-12)


def test_toggle_map_on_feasible_points(rng):
    for _ in range(20):
        votes = random_votes(rng, 6, 5)
        kappa, x, gamma = pv.rand_point_from_profile(votes)
        check = pv.toggle_map_check(kappa, pv.build_rand_bilinear(kappa).lift(x, gamma), gamma)
        assert check.testable and check.passed


def test_rand_case_heuristic_label():
    kappa = int(pv.canonicalize_cases("rand").representatives[3])
    report = pv.verify_rand_bound(cases=[pv.case_hex(kappa)], restarts=2)
    assert report.certificate == pv.HEURISTIC_LABEL
    assert report.cases_total == 1


def test_triples_cover_all_three_subsets():
    assert len(pv.TRIPLES) == 20
    assert set(pv.TRIPLES) == set(itertools.combinations(range(6), 3))
