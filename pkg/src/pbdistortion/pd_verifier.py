"""Case-indexed certification programs for six-voter pessimistic distortion.

Six voters give twenty voter triples.  Each triple is bargained in one of
two regimes, selected by whether the mass its members pairwise agree on
reaches one.  A case string fixes the regime of every triple (bit value 0
for the "agreement >= 1" regime, 1 for "agreement <= 1"), which turns the
worst-case search into one linear program per case for median schemes, and
one bilinear program per case for the randomized Nash scheme.

Bit ``k`` belongs to ``TRIPLES[k]``, the ``k``-th 3-subset of
``{0, ..., 5}`` in lexicographic order.  Voter permutations act on case
strings by moving triples; only one representative per orbit is solved.

Variable layout of the median program (1408 columns)::

    X(S)      at S               for S in 0..63
    V(S)      at 64 + S
    Z^Q(S)    at 128 + 64*q + S  for the q-th triple Q
"""

from __future__ import annotations

import itertools
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .distortion_engine import greedy_optimal
from .incremental_space import outcome_entries, subset_extremes
from .lp_solver import (
    BilinearProgram,
    LinearProgram,
    LpStatus,
    bilinear_starts,
    solve,
    solve_bilinear,
)
from .mechanisms import median_points

log = logging.getLogger(__name__)

VOTERS = 6
SUBSETS = 1 << VOTERS
FULL = SUBSETS - 1
TRIPLES: tuple[tuple[int, ...], ...] = tuple(itertools.combinations(range(VOTERS), 3))
TRIPLE_INDEX = {t: k for k, t in enumerate(TRIPLES)}
CASE_BITS = len(TRIPLES)
CASE_COUNT = 1 << CASE_BITS
CASE_FULL = CASE_COUNT - 1
MEDIAN_BOUND = 1.80
RAND_BOUND = 1.66
DEFAULT_TOL = 1e-6
HEURISTIC_LABEL = "heuristic: no counterexample found within search budget"
SOUND_LABEL = "exact simplex optimum per case"

N_MEDIAN_VARS = 2 * SUBSETS + CASE_BITS * SUBSETS

_POP = np.array([bin(s).count("1") for s in range(SUBSETS)])


def x_index(S: int) -> int:
    return S


def v_index(S: int) -> int:
    return SUBSETS + S


def z_index(q: int, S: int) -> int:
    return 2 * SUBSETS + SUBSETS * q + S


def triple_mask(q: int) -> int:
    return sum(1 << i for i in TRIPLES[q])


def outside_subsets(Q: int) -> list[int]:
    """All subsets of the voters outside ``Q``."""
    free = FULL & ~Q
    return [s for s in range(SUBSETS) if s & ~free == 0]


# ---------------------------------------------------------------------------
# case strings


def case_hex(kappa: int) -> str:
    return f"{int(kappa):05x}"


def parse_case(text: str) -> int:
    value = int(text, 16)
    if not 0 <= value < CASE_COUNT:
        raise ValueError(f"case string {text!r} is outside 20 bits")
    return value


def case_bit(kappa: int, q: int) -> int:
    return (int(kappa) >> q) & 1


@lru_cache(maxsize=1)
def _permutation_tables() -> tuple[np.ndarray, np.ndarray]:
    """Per voter permutation, lookup tables for the low and high ten case bits."""
    perms = list(itertools.permutations(range(VOTERS)))
    low = np.zeros((len(perms), 1024), dtype=np.int32)
    high = np.zeros((len(perms), 1024), dtype=np.int32)
    chunk = np.arange(1024)
    for p, perm in enumerate(perms):
        image = np.array([TRIPLE_INDEX[tuple(sorted(perm[i] for i in t))] for t in TRIPLES])
        for k in range(10):
            low[p] |= ((chunk >> k) & 1) << image[k]
            high[p] |= ((chunk >> k) & 1) << image[10 + k]
    return low, high


def permute_case(kappa: int, perm: Sequence[int]) -> int:
    """Image of a case string when voter ``i`` is relabelled ``perm[i]``."""
    out = 0
    for q, t in enumerate(TRIPLES):
        if kappa >> q & 1:
            out |= 1 << TRIPLE_INDEX[tuple(sorted(perm[i] for i in t))]
    return out


def toggle_case(kappa: int) -> int:
    return CASE_FULL ^ int(kappa)


@dataclass(frozen=True)
class Canonicalization:
    """Orbit representatives (lexicographic minima) and their orbit sizes."""

    mode: str
    representatives: np.ndarray
    orbit_sizes: np.ndarray
    canonical_of: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return int(self.representatives.size)


CANON_MODES = ("median", "rand", "rand-quotient")


@lru_cache(maxsize=1)
def _orbit_extremes() -> tuple[np.ndarray, np.ndarray]:
    """Smallest and largest image of every case string under the 720 voter permutations."""
    low, high = _permutation_tables()
    s = np.arange(CASE_COUNT, dtype=np.int32)
    lo_bits = s & 1023
    hi_bits = s >> 10
    min_img = s.copy()
    max_img = s.copy()
    for p in range(low.shape[0]):
        img = low[p][lo_bits] | high[p][hi_bits]
        np.minimum(min_img, img, out=min_img)
        np.maximum(max_img, img, out=max_img)
    min_img.setflags(write=False)
    max_img.setflags(write=False)
    return min_img, max_img


@lru_cache(maxsize=3)
def canonicalize_cases(mode: str = "median") -> Canonicalization:
    """Representatives of all case strings up to voter permutation, plus toggling in rand modes.

    ``median``: one representative per permutation orbit.
    ``rand``: permutation orbits whose strings have at most ten set bits.
    Toggling maps weight ``k`` to ``20 - k``, so this covers every orbit of
    permutations plus toggling; weight-ten orbits are kept unpaired.
    ``rand-quotient``: the strict quotient by permutations and toggling.

    ``canonical_of[s]`` is the representative solved in place of ``s``.
    """
    if mode not in CANON_MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {CANON_MODES}")
    min_img, max_img = _orbit_extremes()
    s = np.arange(CASE_COUNT, dtype=np.int32)
    if mode == "median":
        canon = min_img
    elif mode == "rand-quotient":
        canon = np.minimum(min_img, CASE_FULL ^ max_img)
    else:
        weight = np.zeros(CASE_COUNT, dtype=np.int8)
        for k in range(CASE_BITS):
            weight += ((s >> k) & 1).astype(np.int8)
        canon = np.where(weight <= CASE_BITS // 2, min_img, min_img[CASE_FULL ^ s])
    reps = np.flatnonzero(canon == s)
    sizes = np.bincount(canon, minlength=CASE_COUNT)[reps]
    return Canonicalization(mode, reps, sizes, canon)


# ---------------------------------------------------------------------------
# median program


def _agreement_columns(Q: int) -> list[int]:
    """Columns X(Q' | V') for Q' a pair or the triple inside Q, V' outside Q."""
    members = [i for i in range(VOTERS) if Q >> i & 1]
    inner = [sum(1 << i for i in c) for r in (2, 3) for c in itertools.combinations(members, r)]
    return [x_index(a | b) for a in inner for b in outside_subsets(Q)]


def median_objective(bound: float) -> tuple[np.ndarray, float]:
    c = np.zeros(N_MEDIAN_VARS)
    for q in range(CASE_BITS):
        Q = triple_mask(q)
        outside = np.array([_POP[S & ~Q] for S in range(SUBSETS)])
        c[z_index(q, 0):z_index(q, 0) + SUBSETS] = -(2.0 / 60.0) * outside
    c[SUBSETS:2 * SUBSETS] = bound * (2.0 / 6.0) * _POP
    return c, 2.0 - 2.0 * bound


def build_median_lp(kappa: int, bound: float = MEDIAN_BOUND) -> LinearProgram:
    """Worst-case program over six budgets whose triples bargain in the regimes of ``kappa``.

    The objective is the average cost of each triple's outcome to the three
    voters outside it, minus ``bound`` times the average cost of the best
    single budget ``v``.  A positive optimum is a profile breaking ``bound``.
    """
    kappa = int(kappa)
    if not 0 <= kappa < CASE_COUNT:
        raise ValueError("case string must fit in 20 bits")
    n = N_MEDIAN_VARS
    c, constant = median_objective(bound)
    eq_rows: list[np.ndarray] = []
    eq_rhs: list[float] = []
    ub_rows: list[np.ndarray] = []
    ub_rhs: list[float] = []

    def row(entries: Iterable[tuple[int, float]]) -> np.ndarray:
        r = np.zeros(n)
        for j, a in entries:
            r[j] += a
        return r

    for i in range(VOTERS):
        eq_rows.append(row((x_index(S), 1.0) for S in range(SUBSETS) if S >> i & 1))
        eq_rhs.append(1.0)
    eq_rows.append(row((v_index(S), 1.0) for S in range(SUBSETS)))
    eq_rhs.append(1.0)
    for S in range(SUBSETS):
        ub_rows.append(row([(v_index(S), 1.0), (x_index(S), -1.0)]))
        ub_rhs.append(0.0)
    for q in range(CASE_BITS):
        Q = triple_mask(q)
        outside = outside_subsets(Q)
        eq_rows.append(row((z_index(q, S), 1.0) for S in range(SUBSETS)))
        eq_rhs.append(1.0)
        for S in range(SUBSETS):
            ub_rows.append(row([(z_index(q, S), 1.0), (x_index(S), -1.0)]))
            ub_rhs.append(0.0)
        for W in outside:
            eq_rows.append(row([(z_index(q, Q | W), 1.0), (x_index(Q | W), -1.0)]))
            eq_rhs.append(0.0)
            eq_rows.append(row([(z_index(q, W), 1.0)]))
            eq_rhs.append(0.0)
        agree = row((j, 1.0) for j in _agreement_columns(Q))
        members = [1 << i for i in TRIPLES[q]]
        if case_bit(kappa, q) == 0:
            ub_rows.append(-agree)
            ub_rhs.append(-1.0)
            for single in members:
                for W in outside:
                    eq_rows.append(row([(z_index(q, single | W), 1.0)]))
                    eq_rhs.append(0.0)
        else:
            ub_rows.append(agree)
            ub_rhs.append(1.0)
            for a, b in itertools.combinations(members, 2):
                for W in outside:
                    eq_rows.append(row([(z_index(q, a | b | W), 1.0), (x_index(a | b | W), -1.0)]))
                    eq_rhs.append(0.0)
    names = [f"X_{S:02x}" for S in range(SUBSETS)] + [f"V_{S:02x}" for S in range(SUBSETS)]
    names += [f"Z{q:02d}_{S:02x}" for q in range(CASE_BITS) for S in range(SUBSETS)]
    return LinearProgram.build(c, A_eq=np.array(eq_rows), b_eq=np.array(eq_rhs),
                               A_ub=np.array(ub_rows), b_ub=np.array(ub_rhs),
                               bounds=(0.0, None), constant=constant, names=names)


def unanimous_point() -> np.ndarray:
    """Feasible point of every median program: six identical budgets, all outcomes equal."""
    x = np.zeros(N_MEDIAN_VARS)
    x[x_index(FULL)] = 1.0
    x[v_index(FULL)] = 1.0
    for q in range(CASE_BITS):
        x[z_index(q, FULL)] = 1.0
    return x


@dataclass
class LiftedProfiles:
    """Concrete six-voter profiles written as points of the median program.

    ``points`` holds one program vector per profile, ``cases`` the case
    string its triples realize, and ``direct`` the objective evaluated from
    L1 costs of the actual budgets rather than from the tables.
    """

    points: np.ndarray
    cases: np.ndarray
    direct: np.ndarray


def lift_profiles(votes: np.ndarray, bound: float = MEDIAN_BOUND, outcome=median_points,
                  optimum=greedy_optimal) -> LiftedProfiles:
    """Map profiles of shape ``(B, 6, m)`` to median-program points.

    Each triple's outcome comes from ``outcome`` and ``v`` from ``optimum``;
    a triple gets case bit 1 when its excess is nonnegative.
    """
    votes = np.asarray(votes, dtype=float)
    if votes.ndim != 3 or votes.shape[1] != VOTERS:
        raise ValueError(f"expected profiles of shape (B, {VOTERS}, m)")
    B = votes.shape[0]
    min_in, max_out = subset_extremes(votes)
    points = np.zeros((B, N_MEDIAN_VARS))
    points[:, :SUBSETS] = np.maximum(min_in - max_out, 0.0).sum(axis=-1)
    v = optimum(votes)
    points[:, SUBSETS:2 * SUBSETS] = outcome_entries(min_in, max_out, v).sum(axis=-1)
    cases = np.zeros(B, dtype=np.int64)
    outsider_cost = np.zeros(B)
    for q, trio in enumerate(TRIPLES):
        a, b, c = (votes[:, i] for i in trio)
        z = outcome(a, b, c)
        start = z_index(q, 0)
        points[:, start:start + SUBSETS] = outcome_entries(min_in, max_out, z).sum(axis=-1)
        excess = 1.0 - np.median(np.stack([a, b, c]), axis=0).sum(axis=-1)
        cases |= (excess >= 0).astype(np.int64) << q
        for i in set(range(VOTERS)) - set(trio):
            outsider_cost += np.abs(votes[:, i] - z).sum(axis=-1)
    v_cost = np.abs(votes - v[:, None, :]).sum(axis=(1, 2))
    direct = outsider_cost / (3 * CASE_BITS) - bound * v_cost / VOTERS
    return LiftedProfiles(points, cases, direct)


# ---------------------------------------------------------------------------
# randomized Nash program

DESIGNATED: tuple[tuple[int, int, int], ...] = tuple(
    (c, x, y) for c in range(VOTERS)
    for x, y in itertools.combinations([i for i in range(VOTERS) if i != c], 2)
)
N_RAND_BASE = 2 * SUBSETS
N_RAND_FULL = 2 * SUBSETS + len(DESIGNATED) * SUBSETS


def zbar_index(t: int, S: int) -> int:
    return 2 * SUBSETS + SUBSETS * t + S


@dataclass(frozen=True)
class _TripleLayout:
    """Which subsets of one designated triple are fixed, scaled by alpha, or scaled by beta."""

    Q: int
    q: int
    fixed: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    side_x: np.ndarray
    side_y: np.ndarray
    pair_xc: np.ndarray
    pair_yc: np.ndarray
    outside: np.ndarray


@lru_cache(maxsize=2)
def _layouts(kappa: int) -> tuple[_TripleLayout, ...]:
    out = []
    S = np.arange(SUBSETS)
    for c, x, y in DESIGNATED:
        bx, by, bc = 1 << x, 1 << y, 1 << c
        Q = bx | by | bc
        q = TRIPLE_INDEX[tuple(sorted((c, x, y)))]
        part = S & Q
        fixed = ((part == bx | by) | (part == Q)).astype(float)
        single_x, single_y = part == bx, part == by
        pair_xc, pair_yc = part == bx | bc, part == by | bc
        if case_bit(kappa, q) == 0:
            alpha, beta = pair_xc, pair_yc
        else:
            fixed = fixed + pair_xc + pair_yc
            alpha, beta = single_x, single_y
        out.append(_TripleLayout(Q, q, fixed, alpha.astype(float), beta.astype(float),
                                 (single_x | pair_xc).astype(float), (single_y | pair_yc).astype(float),
                                 pair_xc.astype(float), pair_yc.astype(float),
                                 _POP[S & ~Q].astype(float)))
    return tuple(out)


def _agreement_row(Q: int) -> np.ndarray:
    row = np.zeros(SUBSETS)
    row[_agreement_columns(Q)] = 1.0
    return row


class RandBilinearProgram(BilinearProgram):
    """Worst-case program for the randomized Nash scheme under case string ``kappa``.

    The averaged outcome table of each designated triple ``(c, {x, y})`` is
    ``w(S) * X(S)`` with ``w`` in ``{0, 1, alpha, beta}``, so for fixed
    ``gamma = (alpha_0, beta_0, alpha_1, ...)`` the program is an LP over
    ``X`` and ``V`` alone (:meth:`base_lp`).  :meth:`full_lp` keeps the
    averaged tables as explicit variables for auditing that reduction.
    """

    def __init__(self, kappa: int, bound: float = RAND_BOUND):
        if not 0 <= int(kappa) < CASE_COUNT:
            raise ValueError("case string must fit in 20 bits")
        self.kappa = int(kappa)
        self.bound = float(bound)
        self.gamma_dim = 2 * len(DESIGNATED)
        self.layouts = _layouts(self.kappa)
        self.constant = 2.0 - 2.0 * self.bound
        self._scale = 2.0 / (3.0 * len(DESIGNATED))

    def weights(self, gamma: np.ndarray) -> np.ndarray:
        """``(60, 64)`` array of the factors ``w`` per designated triple."""
        gamma = np.asarray(gamma, dtype=float)
        return np.array([L.fixed + gamma[2 * t] * L.alpha + gamma[2 * t + 1] * L.beta
                         for t, L in enumerate(self.layouts)])

    def _shared_rows(self, n: int):
        eq, eq_b, ub, ub_b = [], [], [], []
        S = np.arange(SUBSETS)
        for i in range(VOTERS):
            r = np.zeros(n)
            r[:SUBSETS][(S >> i) & 1 == 1] = 1.0
            eq.append(r)
            eq_b.append(1.0)
        r = np.zeros(n)
        r[SUBSETS:2 * SUBSETS] = 1.0
        eq.append(r)
        eq_b.append(1.0)
        for s in range(SUBSETS):
            r = np.zeros(n)
            r[v_index(s)] = 1.0
            r[x_index(s)] = -1.0
            ub.append(r)
            ub_b.append(0.0)
        for q in range(CASE_BITS):
            r = np.zeros(n)
            r[:SUBSETS] = _agreement_row(triple_mask(q))
            if case_bit(self.kappa, q) == 0:
                ub.append(-r)
                ub_b.append(-1.0)
            else:
                ub.append(r)
                ub_b.append(1.0)
        return eq, eq_b, ub, ub_b

    def base_lp(self, gamma: np.ndarray) -> LinearProgram:
        n = N_RAND_BASE
        w = self.weights(gamma)
        c = np.zeros(n)
        c[:SUBSETS] = -self._scale * sum(L.outside * w[t] for t, L in enumerate(self.layouts))
        c[SUBSETS:] = self.bound * (2.0 / 6.0) * _POP
        eq, eq_b, ub, ub_b = self._shared_rows(n)
        for t, L in enumerate(self.layouts):
            half_agree = 0.5 * _agreement_row(L.Q)
            for side, pair in ((L.side_x, L.pair_xc), (L.side_y, L.pair_yc)):
                r = np.zeros(n)
                r[:SUBSETS] = side * w[t] - pair + half_agree
                eq.append(r)
                eq_b.append(0.5)
        return LinearProgram.build(c, A_eq=np.array(eq), b_eq=np.array(eq_b), A_ub=np.array(ub),
                                   b_ub=np.array(ub_b), bounds=(0.0, None), constant=self.constant)

    def gamma_lp(self, x: np.ndarray) -> LinearProgram | None:
        X = np.asarray(x, dtype=float)[:SUBSETS]
        V = np.asarray(x, dtype=float)[SUBSETS:2 * SUBSETS]
        dim = self.gamma_dim
        c = np.zeros(dim)
        constant = self.constant + self.bound * (2.0 / 6.0) * float(_POP @ V)
        rows, rhs = [], []
        for t, L in enumerate(self.layouts):
            constant -= self._scale * float((L.outside * L.fixed) @ X)
            c[2 * t] = -self._scale * float((L.outside * L.alpha) @ X)
            c[2 * t + 1] = -self._scale * float((L.outside * L.beta) @ X)
            half_agree = 0.5 * float(_agreement_row(L.Q) @ X)
            for k, (side, pair, scaled) in enumerate(((L.side_x, L.pair_xc, L.alpha),
                                                      (L.side_y, L.pair_yc, L.beta))):
                coef = float(scaled @ X)
                if coef < 1e-9:
                    continue
                r = np.zeros(dim)
                r[2 * t + k] = coef
                rows.append(r)
                rhs.append(0.5 - half_agree - float((side * L.fixed - pair) @ X))
        return LinearProgram.build(c, A_eq=np.array(rows).reshape(-1, dim), b_eq=np.array(rhs),
                                   bounds=(0.0, 1.0), constant=constant)

    def objective(self, x: np.ndarray, gamma: np.ndarray) -> float:
        return self.base_lp(gamma).objective(np.asarray(x)[:N_RAND_BASE])

    def lift(self, x: np.ndarray, gamma: np.ndarray) -> np.ndarray:
        """Point of :meth:`full_lp` with averaged tables filled in from ``X``."""
        x = np.asarray(x, dtype=float)
        out = np.zeros(N_RAND_FULL)
        out[:N_RAND_BASE] = x[:N_RAND_BASE]
        out[N_RAND_BASE:] = (self.weights(gamma) * x[:SUBSETS]).ravel()
        return out

    def full_lp(self, gamma: np.ndarray) -> LinearProgram:
        """The program with every averaged table ``Zbar^t(S)`` as its own variable."""
        gamma = np.asarray(gamma, dtype=float)
        n = N_RAND_FULL
        c = np.zeros(n)
        c[SUBSETS:2 * SUBSETS] = self.bound * (2.0 / 6.0) * _POP
        eq, eq_b, ub, ub_b = self._shared_rows(n)
        for t, L in enumerate(self.layouts):
            base = zbar_index(t, 0)
            c[base:base + SUBSETS] = -self._scale * L.outside
            for s in range(SUBSETS):
                r = np.zeros(n)
                r[base + s] = 1.0
                r[x_index(s)] = -1.0
                ub.append(r)
                ub_b.append(0.0)
                if L.alpha[s] or L.beta[s]:
                    factor = gamma[2 * t] if L.alpha[s] else gamma[2 * t + 1]
                else:
                    factor = L.fixed[s]
                r = np.zeros(n)
                r[base + s] = 1.0
                r[x_index(s)] = -factor
                eq.append(r)
                eq_b.append(0.0)
            half_agree = 0.5 * _agreement_row(L.Q)
            for side, pair in ((L.side_x, L.pair_xc), (L.side_y, L.pair_yc)):
                r = np.zeros(n)
                r[base:base + SUBSETS] = side
                r[:SUBSETS] += half_agree - pair
                eq.append(r)
                eq_b.append(0.5)
        return LinearProgram.build(c, A_eq=np.array(eq), b_eq=np.array(eq_b), A_ub=np.array(ub),
                                   b_ub=np.array(ub_b), bounds=(0.0, None), constant=self.constant)


def rand_point_from_profile(votes: np.ndarray) -> tuple[int, np.ndarray, np.ndarray]:
    """Case string, base point ``(X, V)`` and scaling factors realized by a six-voter profile.

    Factors follow proportional fill: with nonnegative excess each agent's
    share ``excess / 2`` scales the mass held by that agent alone; otherwise
    ``|excess| / 2`` is taken off the mass the agent shares only with ``c``.
    """
    votes = np.asarray(votes, dtype=float)
    if votes.shape[0] != VOTERS:
        raise ValueError(f"expected {VOTERS} votes")
    min_in, max_out = subset_extremes(votes)
    X = np.maximum(min_in - max_out, 0.0).sum(axis=-1)
    V = outcome_entries(min_in, max_out, greedy_optimal(votes)).sum(axis=-1)
    kappa = 0
    for q, trio in enumerate(TRIPLES):
        if 1.0 - np.median(votes[list(trio)], axis=0).sum() >= 0:
            kappa |= 1 << q
    S = np.arange(SUBSETS)
    gamma = np.zeros(2 * len(DESIGNATED))
    for t, (c, x, y) in enumerate(DESIGNATED):
        Q = (1 << x) | (1 << y) | (1 << c)
        excess = 1.0 - float(_agreement_row(Q) @ X)
        for k, agent in enumerate((x, y)):
            if case_bit(kappa, TRIPLE_INDEX[tuple(sorted((c, x, y)))]):
                held = float(X[(S & Q) == 1 << agent].sum())
                gamma[2 * t + k] = excess / 2 / held if held > 0 else 0.0
            else:
                held = float(X[(S & Q) == (1 << agent) | (1 << c)].sum())
                gamma[2 * t + k] = 1.0 + excess / 2 / held if held > 0 else 1.0
    return kappa, np.concatenate([X, V]), np.clip(gamma, 0.0, 1.0)


def build_rand_bilinear(kappa: int, bound: float = RAND_BOUND) -> RandBilinearProgram:
    return RandBilinearProgram(kappa, bound)


def toggle_gamma(gamma: np.ndarray) -> np.ndarray:
    """Scaling factors of the toggled case: ``(alpha, beta) -> (1 - beta, 1 - alpha)``."""
    gamma = np.asarray(gamma, dtype=float).reshape(-1, 2)
    return np.stack([1.0 - gamma[:, 1], 1.0 - gamma[:, 0]], axis=1).ravel()


def toggle_point(point: np.ndarray) -> np.ndarray | None:
    """Map a full-program point to the toggled case; ``None`` when the scale is degenerate."""
    point = np.asarray(point, dtype=float)
    X = point[:SUBSETS]
    scale = float(X.sum()) - 1.0
    if scale <= 1e-9:
        return None
    comp = FULL ^ np.arange(SUBSETS)
    out = np.empty_like(point)
    out[:SUBSETS] = X[comp] / scale
    out[SUBSETS:2 * SUBSETS] = (X - point[SUBSETS:2 * SUBSETS])[comp] / scale
    for t in range(len(DESIGNATED)):
        z = point[zbar_index(t, 0):zbar_index(t, 0) + SUBSETS]
        out[zbar_index(t, 0):zbar_index(t, 0) + SUBSETS] = (X - z)[comp] / scale
    return out


@dataclass(frozen=True)
class ToggleCheck:
    testable: bool
    passed: bool
    violation: float = 0.0
    ratio_error: float = 0.0


def toggle_map_check(kappa: int, point: np.ndarray, gamma: np.ndarray,
                     bound: float = RAND_BOUND, tol: float = 1e-7) -> ToggleCheck:
    """Check that the toggle map sends a feasible point of ``kappa`` to one of its complement.

    ``point`` is a full-program point (see :meth:`RandBilinearProgram.lift`).
    The objective must scale by ``1 / (sum X - 1)``.
    """
    prog = RandBilinearProgram(kappa, bound)
    lp = prog.full_lp(gamma)
    if lp.violation(point) > tol:
        raise ValueError("point is not feasible for the given case")
    mapped = toggle_point(point)
    if mapped is None:
        return ToggleCheck(False, False)
    scale = float(np.sum(point[:SUBSETS])) - 1.0
    other = RandBilinearProgram(toggle_case(kappa), bound).full_lp(toggle_gamma(gamma))
    viol = other.violation(mapped)
    err = abs(other.objective(mapped) - lp.objective(point) / scale)
    return ToggleCheck(True, viol <= tol and err <= tol, viol, err)


# ---------------------------------------------------------------------------
# sweeps and reports


@dataclass
class CaseReport:
    canonical_case: str
    orbit_size: int
    lp_status: str
    objective_value: float
    max_violation: float
    passed: bool
    lp_solves: int = 1
    seconds: float = 0.0


@dataclass
class SweepReport:
    mode: str
    bound: float
    tol: float
    cases_total: int
    cases_passed: int
    worst_objective: float
    worst_case: str | None
    wall_time: float
    certificate: str
    search_budget: dict = field(default_factory=dict)
    cases: list[CaseReport] = field(default_factory=list)

    @property
    def all_passed(self) -> bool:
        return self.cases_total > 0 and self.cases_passed == self.cases_total

    def summary(self) -> dict:
        out = asdict(self)
        out.pop("cases")
        return out

    def to_json(self, path: str | os.PathLike | None = None, include_cases: bool = False) -> str:
        payload = asdict(self) if include_cases else self.summary()
        text = json.dumps(payload, indent=2, allow_nan=True)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text

    def to_csv(self, path: str | os.PathLike) -> None:
        cols = ["canonical_case", "orbit_size", "lp_status", "objective_value",
                "max_violation", "passed", "lp_solves", "seconds"]
        lines = [",".join(cols)]
        for r in self.cases:
            d = asdict(r)
            lines.append(",".join(repr(d[c]) if isinstance(d[c], float) else str(d[c]) for c in cols))
        Path(path).write_text("\n".join(lines) + "\n")


def select_cases(mode: str, cases="all", seed: int = 0) -> list[int]:
    """Resolve a case request: ``"all"``, a count ``N`` (seeded sample), or case integers / hex strings.

    Explicit cases are mapped to their representatives.
    """
    canon = canonicalize_cases(mode)
    reps = canon.representatives
    if isinstance(cases, str) and cases == "all":
        return [int(r) for r in reps]
    if isinstance(cases, (int, np.integer)) and not isinstance(cases, bool):
        if cases >= reps.size:
            return [int(r) for r in reps]
        pick = np.random.default_rng(seed).choice(reps.size, size=int(cases), replace=False)
        return sorted(int(reps[i]) for i in pick)
    out = set()
    for c in cases:
        k = parse_case(c) if isinstance(c, str) else int(c)
        if not 0 <= k < CASE_COUNT:
            raise ValueError(f"case {k} is outside 20 bits")
        out.add(int(canon.canonical_of[k]))
    return sorted(out)


def _orbit_size(mode: str, kappa: int) -> int:
    canon = canonicalize_cases(mode)
    i = np.searchsorted(canon.representatives, kappa)
    if i < canon.representatives.size and canon.representatives[i] == kappa:
        return int(canon.orbit_sizes[i])
    return 0


def solve_median_case(kappa: int, bound: float = MEDIAN_BOUND, tol: float = DEFAULT_TOL,
                      dump_dir: str | None = None) -> CaseReport:
    start = time.perf_counter()
    try:
        lp = build_median_lp(kappa, bound)
        if dump_dir:
            Path(dump_dir, f"median_{case_hex(kappa)}.lp").write_text(lp.to_lp_text(case_hex(kappa)))
        sol = solve(lp)
        status, value, viol = sol.status.name, float(sol.objective_value), float(sol.max_violation)
    except Exception as exc:  # a failed case is recorded, never aborts the sweep
        log.error("median case %s failed: %s", case_hex(kappa), exc)
        status, value, viol = f"ERROR: {exc}", float("nan"), float("nan")
    passed = status == LpStatus.OPTIMAL.name and value <= tol and viol <= 1e-8
    return CaseReport(case_hex(kappa), _orbit_size("median", kappa), status, value, viol, passed,
                      1, time.perf_counter() - start)


def solve_rand_case(kappa: int, bound: float = RAND_BOUND, tol: float = DEFAULT_TOL,
                    restarts: int = 16, seed: int = 0, mode: str = "rand") -> CaseReport:
    start = time.perf_counter()
    try:
        prog = RandBilinearProgram(kappa, bound)
        res = solve_bilinear(prog, restarts=restarts, seed=seed, stop_above=tol)
        value = float(res.best_value)
        status = LpStatus.OPTIMAL.name if res.x is not None else LpStatus.INFEASIBLE.name
        viol = float(prog.base_lp(res.gamma).violation(res.x)) if res.x is not None else float("nan")
        solves = res.lp_solves
    except Exception as exc:
        log.error("rand case %s failed: %s", case_hex(kappa), exc)
        status, value, viol, solves = f"ERROR: {exc}", float("nan"), float("nan"), 0
    passed = status == LpStatus.OPTIMAL.name and value <= tol and viol <= 1e-8
    return CaseReport(case_hex(kappa), _orbit_size(mode, kappa), status, value, viol, passed,
                      solves, time.perf_counter() - start)


def default_jobs() -> int:
    env = os.environ.get("PB_JOBS")
    if env:
        return max(1, int(env))
    return 1


def _run(worker, kappas: list[int], jobs: int, **kwargs) -> list[CaseReport]:
    if jobs <= 1 or len(kappas) <= 1:
        return [worker(k, **kwargs) for k in kappas]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(worker, k, **kwargs) for k in kappas]
        return [f.result() for f in futures]


def _merge(mode: str, bound: float, tol: float, reports: list[CaseReport], wall: float,
           certificate: str, budget: dict) -> SweepReport:
    reports = sorted(reports, key=lambda r: r.canonical_case)
    worst = None
    for r in reports:
        if worst is None or not (r.objective_value <= worst.objective_value):
            worst = r
    return SweepReport(mode, bound, tol, len(reports), sum(r.passed for r in reports),
                       worst.objective_value if worst else float("nan"),
                       worst.canonical_case if worst else None, wall, certificate, budget, reports)


def verify_median_bound(bound: float = MEDIAN_BOUND, tol: float = DEFAULT_TOL, cases="all",
                        jobs: int | None = None, seed: int = 0,
                        dump_dir: str | None = None) -> SweepReport:
    """Solve the median program of every requested representative case.

    A case passes when its exact optimum is at most ``tol``.
    """
    start = time.perf_counter()
    kappas = select_cases("median", cases, seed)
    reports = _run(solve_median_case, kappas, jobs or default_jobs(), bound=bound, tol=tol,
                   dump_dir=dump_dir)
    return _merge("median", bound, tol, reports, time.perf_counter() - start, SOUND_LABEL,
                  {"solver": "bounded primal simplex"})


def verify_rand_bound(bound: float = RAND_BOUND, tol: float = DEFAULT_TOL, restarts: int = 16,
                      cases="all", jobs: int | None = None, seed: int = 0,
                      mode: str = "rand") -> SweepReport:
    """Multistart search for a positive value of each requested randomized-Nash program.

    Passing means no counterexample was found; it is not a proof of the bound.
    """
    if mode not in ("rand", "rand-quotient"):
        raise ValueError("mode must be 'rand' or 'rand-quotient'")
    start = time.perf_counter()
    kappas = select_cases(mode, cases, seed)
    reports = _run(solve_rand_case, kappas, jobs or default_jobs(), bound=bound, tol=tol,
                   restarts=restarts, seed=seed, mode=mode)
    starts = len(bilinear_starts(2 * len(DESIGNATED), restarts, seed))
    return _merge(mode, bound, tol, reports, time.perf_counter() - start, HEURISTIC_LABEL,
                  {"restarts": restarts, "starts_per_case": starts, "seed": seed,
                   "max_alternations": 25, "grid_step": 0.25})

