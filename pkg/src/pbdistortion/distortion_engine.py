"""Optimal budgets, distortion of sampled mechanisms, lower-bound instances.

The distortion of a random outcome is its expected social cost divided by
the smallest social cost any budget achieves.  The minimum is computed by
linear programming: the total L1 cost is separable, and each project's
cost ``sum_i |v_ij - b_j|`` is convex piecewise linear with breakpoints at
the votes.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .budget_core import Budget, VoteProfile, check_profile
from .lp_solver import LinearProgram, solve
from .mechanisms import Mechanism, deliberation_paths, get_mechanism

ENUMERATION_LIMIT = 10**7
EPIGRAPH_LIMIT = 400  # voters times projects; larger profiles use the segment LP
UNANIMOUS_TOL = 1e-12


class DistortionError(ValueError):
    """Invalid request: enumeration too large, bad instance sizes, bad mechanism."""


def _votes(P) -> np.ndarray:
    if isinstance(P, VoteProfile):
        return P.votes
    return check_profile(P)


# ---------------------------------------------------------------------------
# social cost


def social_costs(votes: np.ndarray, outcomes: np.ndarray) -> np.ndarray:
    """Social cost of each row of ``outcomes``, via sorted votes and prefix sums.

    Cost is ``O(log n)`` per outcome and project, so large batches stay cheap.
    """
    votes = np.asarray(votes, dtype=float)
    outcomes = np.atleast_2d(np.asarray(outcomes, dtype=float))
    n, m = votes.shape
    total = np.zeros(outcomes.shape[0])
    for j in range(m):
        col = np.sort(votes[:, j])
        prefix = np.concatenate([[0.0], np.cumsum(col)])
        x = outcomes[:, j]
        k = np.searchsorted(col, x, side="left")
        below = x * k - prefix[k]
        above = (prefix[n] - prefix[k]) - x * (n - k)
        total += below + above
    return total


# ---------------------------------------------------------------------------
# optimal budget


@dataclass(frozen=True)
class OptimalBudget:
    budget: Budget
    cost: float
    method: str


def _order_stats(votes: np.ndarray) -> np.ndarray:
    """Per-project sorted votes padded with 0 below and 1 above, shape ``(n + 2, m)``."""
    s = np.sort(votes, axis=0)
    return np.vstack([np.zeros(votes.shape[1]), s, np.ones(votes.shape[1])])


def greedy_optimal(votes: np.ndarray) -> np.ndarray:
    """Minimizer found by filling cost segments in order of slope.

    Between the ``k``-th and ``(k+1)``-th smallest vote on a project, raising
    that project's funding changes the cost at rate ``2k - n``.  Filling all
    segments of slope below ``2K - n`` puts every project at its ``K``-th
    order statistic; the optimum interpolates between the first two such
    levels that straddle a total of one.  Works on batches ``(..., n, m)``.
    """
    votes = np.asarray(votes, dtype=float)
    s = np.sort(votes, axis=-2)
    zeros = np.zeros(votes.shape[:-2] + (1, votes.shape[-1]))
    levels = np.concatenate([zeros, s], axis=-2)  # levels[k] = k-th order statistic, 0 at k = 0
    totals = levels.sum(axis=-1)  # nondecreasing in k; last entry >= 1
    K = np.argmax(totals >= 1.0 - 1e-15, axis=-1)
    K = np.maximum(K, 1)
    lo = np.take_along_axis(totals, (K - 1)[..., None], axis=-1)[..., 0]
    hi = np.take_along_axis(totals, K[..., None], axis=-1)[..., 0]
    theta = np.where(hi > lo, (1.0 - lo) / np.where(hi > lo, hi - lo, 1.0), 1.0)
    lower = np.take_along_axis(levels, (K - 1)[..., None, None], axis=-2)[..., 0, :]
    upper = np.take_along_axis(levels, K[..., None, None], axis=-2)[..., 0, :]
    return lower + theta[..., None] * (upper - lower)


def segment_lp(votes: np.ndarray) -> tuple[LinearProgram, np.ndarray]:
    """One variable per cost segment of each project, one equality row.

    Variable ``(j, k)`` is how far project ``j`` is funded into the gap
    between its ``k``-th and ``(k+1)``-th smallest votes; its cost rate is
    ``2k - n``.  The objective is the negated social cost (the solver
    maximizes), offset by the cost ``sum(votes)`` of the zero budget.
    Also returns the project of each variable.
    """
    n, m = votes.shape
    stats = _order_stats(votes)
    widths = np.diff(stats, axis=0)  # (n + 1, m)
    slopes = 2.0 * np.arange(n + 1) - n
    keep = widths > 0
    jj = np.nonzero(keep)[1]
    kk = np.nonzero(keep)[0]
    c = -slopes[kk]
    upper = widths[keep]
    names = [f"seg_{j}_{k}" for j, k in zip(jj, kk)]
    lp = LinearProgram.build(c, A_eq=np.ones((1, c.size)), b_eq=np.ones(1),
                             bounds=(np.zeros(c.size), upper),
                             constant=-float(votes.sum()), names=names)
    return lp, jj


def epigraph_lp(votes: np.ndarray) -> LinearProgram:
    """Budget ``b`` plus one deviation variable ``t_ij >= |v_ij - b_j|`` per vote entry."""
    n, m = votes.shape
    nv = m + n * m
    c = np.concatenate([np.zeros(m), -np.ones(n * m)])
    rows = []
    rhs = []
    for i in range(n):
        for j in range(m):
            t = m + i * m + j
            up = np.zeros(nv)
            up[j], up[t] = 1.0, -1.0  # b_j - t_ij <= v_ij
            down = np.zeros(nv)
            down[j], down[t] = -1.0, -1.0  # -b_j - t_ij <= -v_ij
            rows += [up, down]
            rhs += [votes[i, j], -votes[i, j]]
    A_eq = np.concatenate([np.ones(m), np.zeros(n * m)])[None, :]
    bounds = (np.zeros(nv), np.concatenate([np.ones(m), np.full(n * m, np.inf)]))
    names = [f"b_{j}" for j in range(m)] + [f"t_{i}_{j}" for i in range(n) for j in range(m)]
    return LinearProgram.build(c, A_eq=A_eq, b_eq=np.ones(1), A_ub=np.array(rows), b_ub=np.array(rhs),
                               bounds=bounds, names=names)


def optimal_budget(P, method: str = "auto") -> OptimalBudget:
    """Budget of least social cost.

    ``method``: ``"epigraph"`` (deviation-variable LP), ``"segment"``
    (per-segment LP), ``"greedy"`` (order statistics, no LP) or ``"auto"``
    (epigraph for small profiles, segment otherwise).
    """
    votes = _votes(P)
    n, m = votes.shape
    if method == "auto":
        method = "epigraph" if n * m <= EPIGRAPH_LIMIT else "segment"
    if method == "greedy":
        b = greedy_optimal(votes)
    elif method == "segment":
        lp, proj = segment_lp(votes)
        sol = solve(lp)
        if not sol.optimal:
            raise RuntimeError(f"optimal-budget LP ended {sol.status.name}")
        b = np.bincount(proj, weights=sol.primal, minlength=m)
    elif method == "epigraph":
        sol = solve(epigraph_lp(votes))
        if not sol.optimal:
            raise RuntimeError(f"optimal-budget LP ended {sol.status.name}")
        b = sol.primal[:m]
    else:
        raise ValueError(f"unknown method {method!r}")
    b = np.clip(b, 0.0, None)
    b = b / b.sum()
    return OptimalBudget(Budget(b), float(np.abs(votes - b).sum()), method)


# ---------------------------------------------------------------------------
# reports


@dataclass
class RoundStats:
    round: int
    mean_distortion: float
    sd_distortion: float
    alloc_mean: list[float]
    alloc_sd: list[float]


@dataclass
class DistortionReport:
    mechanism: str
    mode: str
    optimal_cost: float
    mechanism_cost: float
    distortion: float
    stderr: float = 0.0
    replicates: int = 0
    unanimous: bool = False
    rounds: list[RoundStats] | None = None
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, path: str | None = None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text

    def to_csv(self, path: str) -> None:
        """Per-round series: round, mean and SD of distortion, SD of each project's allocation."""
        if not self.rounds:
            raise ValueError("report has no per-round series")
        m = len(self.rounds[0].alloc_sd)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["round", "mean_distortion", "sd_distortion"] + [f"sd_alloc_{j}" for j in range(m)])
            for r in self.rounds:
                w.writerow([r.round, repr(r.mean_distortion), repr(r.sd_distortion)]
                           + [repr(x) for x in r.alloc_sd])


def _resolve(mechanism) -> Mechanism:
    if isinstance(mechanism, Mechanism):
        return mechanism
    return get_mechanism(str(mechanism))


def _unanimous(votes: np.ndarray) -> bool:
    return bool(np.all(np.abs(votes - votes[0]) <= UNANIMOUS_TOL))


def _unanimous_report(mech: str, mode: str, replicates: int = 0) -> DistortionReport:
    return DistortionReport(mech, mode, 0.0, 0.0, 1.0, 0.0, replicates, unanimous=True)


def exact_distortion(P, mechanism, limit: int = ENUMERATION_LIMIT) -> DistortionReport:
    """Expected distortion by enumerating every ordered tuple of sampled voters (with replacement)."""
    votes = _votes(P)
    mech = _resolve(mechanism)
    n = votes.shape[0]
    if n ** mech.arity > limit:
        raise DistortionError(f"{n}^{mech.arity} tuples exceeds the enumeration limit {limit}")
    if _unanimous(votes):
        return _unanimous_report(mech.name, "exact")
    opt = optimal_budget(votes)
    total = 0.0
    for idx in itertools.product(range(n), repeat=mech.arity):
        branches = mech.branches(votes, idx)
        outs = np.array([b for _, b in branches])
        w = np.array([p for p, _ in branches])
        total += float(w @ social_costs(votes, outs))
    expected = total / n ** mech.arity
    return DistortionReport(mech.name, "exact", opt.cost, expected, expected / opt.cost)


def mc_distortion(P, mechanism, replicates: int = 1000, seed: int = 0,
                  rounds: int | None = None) -> DistortionReport:
    """Monte-Carlo distortion.

    With ``rounds`` set, runs sequential deliberation with the named triadic
    scheme for that many rounds and reports a per-round series (round 0 is
    the random-dictator starting point); the headline numbers are those of
    the final round.
    """
    if replicates < 1:
        raise DistortionError("replicates must be at least 1")
    votes = _votes(P)
    name = mechanism.name if isinstance(mechanism, Mechanism) else str(mechanism)
    mode = "mc" if rounds is None else "mc-deliberation"
    if _unanimous(votes):
        return _unanimous_report(name, mode, replicates)
    opt = optimal_budget(votes)
    if rounds is None:
        mech = _resolve(mechanism)
        rng = np.random.default_rng(seed)
        outs = np.array([mech.sample(votes, rng) for _ in range(replicates)])
        d = social_costs(votes, outs) / opt.cost
        series = None
    else:
        paths = deliberation_paths(votes, rounds, replicates, name, seed)
        series = []
        for t, outs in enumerate(paths):
            dt = social_costs(votes, outs) / opt.cost
            series.append(RoundStats(t, float(dt.mean()), float(dt.std(ddof=1)) if replicates > 1 else 0.0,
                                     outs.mean(axis=0).tolist(),
                                     (outs.std(axis=0, ddof=1) if replicates > 1 else np.zeros(outs.shape[1])).tolist()))
        d = social_costs(votes, paths[-1]) / opt.cost
    sd = float(d.std(ddof=1)) if replicates > 1 else 0.0
    mean = float(d.mean())
    return DistortionReport(name, mode, opt.cost, mean * opt.cost, mean, sd / math.sqrt(replicates),
                            replicates, rounds=series, meta={"seed": seed})


# ---------------------------------------------------------------------------
# lower-bound instances


LOWER_BOUND_KINDS = ("dictator", "diarchy", "referee", "nash")


def dist2_instance(n: int) -> VoteProfile:
    """``n`` voters over ``2n`` projects: voter ``i`` funds project ``i`` and every
    second-half project except its own, each at ``1/n``."""
    if n < 1:
        raise DistortionError("n must be at least 1")
    v = np.zeros((n, 2 * n))
    for i in range(n):
        v[i, i] = 1.0 / n
        v[i, n:] = 1.0 / n
        v[i, n + i] = 0.0
    return VoteProfile(v)


def nash_lb_instance(n_A: int, n_B: int) -> VoteProfile:
    """Voter ``i < n_A`` puts everything on project ``i``; the ``n_B`` others all on project ``n_A``."""
    if n_A < 1 or n_B < 1:
        raise DistortionError("group sizes must be at least 1")
    v = np.zeros((n_A + n_B, n_A + 1))
    v[np.arange(n_A), np.arange(n_A)] = 1.0
    v[n_A:, n_A] = 1.0
    return VoteProfile(v)


def gen_lower_bound_instance(kind: str, n: int | None = None, n_A: int | None = None,
                             n_B: int | None = None) -> VoteProfile:
    kind = kind.lower()
    if kind in ("dictator", "diarchy", "referee"):
        if n is None:
            raise DistortionError(f"{kind} instance needs n")
        return dist2_instance(int(n))
    if kind in ("nash", "nashlb"):
        if n_A is None or n_B is None:
            raise DistortionError("nash instance needs n_A and n_B")
        return nash_lb_instance(int(n_A), int(n_B))
    raise DistortionError(f"unknown instance kind {kind!r}; choose from {LOWER_BOUND_KINDS}")


def nash_lb_closed_form(n_A: int, n_B: int) -> float:
    """Expected distortion of triadic Nash bargaining on :func:`nash_lb_instance`.

    Three outcome events, by the sampled triple:
    at least two of ``a, b, c`` from group B gives the optimum (cost ``2 n_A``);
    one agent from each group with a third distinct group-A referee gives the
    half-half budget (cost ``2 n_A + n_B - 1``);
    anything else gives a single group-A vote (cost ``2 n_A + 2 n_B - 2``).
    """
    if n_A < 1 or n_B < 1:
        raise DistortionError("group sizes must be at least 1")
    N3 = float(n_A + n_B) ** 3
    p1 = (n_B**3 + 3 * n_A * n_B**2) / N3
    p2 = 2 * n_A * (n_A - 1) * n_B / N3
    p3 = 1.0 - p1 - p2
    return (2 * n_A * p1 + (2 * n_A + n_B - 1) * p2 + (2 * n_A + 2 * n_B - 2) * p3) / (2 * n_A)


def recognize_instance(votes: np.ndarray) -> tuple | None:
    """``("nash", n_A, n_B)`` or ``("dist2", n)`` when ``votes`` is such an instance up to voter order."""
    votes = np.asarray(votes, dtype=float)
    n, m = votes.shape
    if m == 2 * n:
        ref = dist2_instance(n).votes
        order = np.lexsort(votes.T[::-1])
        if np.allclose(votes[order], ref[np.lexsort(ref.T[::-1])], atol=1e-12, rtol=0):
            return ("dist2", n)
    if m >= 2 and np.all((votes == 0.0) | (votes == 1.0)) and np.all(votes.sum(axis=1) == 1.0):
        counts = votes.sum(axis=0)
        if np.all(counts[:-1] == 1) and counts[-1] >= 1:
            return ("nash", m - 1, int(counts[-1]))
    return None


def expected_referee_cost(n: int) -> float:
    """Social cost of any referee outcome on the ``n``-voter dist2 instance."""
    return (4 * (n - 2) + 4) / n


# ---------------------------------------------------------------------------
# synthetic profiles


def clustered_profile(n: int, m: int, clusters: int = 3, spread: float = 50.0,
                      seed: int = 0) -> VoteProfile:
    """Voters drawn around a few Dirichlet cluster centers; ``spread`` is the concentration."""
    rng = np.random.default_rng(seed)
    centers = rng.dirichlet(np.ones(m), size=clusters)
    labels = rng.integers(clusters, size=n)
    votes = np.array([rng.dirichlet(spread * centers[k] + 1e-3) for k in labels])
    return VoteProfile(votes / votes.sum(axis=1, keepdims=True))


def random_profile(n: int, m: int, rng: np.random.Generator, sparsity: float = 0.0) -> np.ndarray:
    """Uniform simplex votes; with ``sparsity`` > 0 some entries are zeroed before normalizing."""
    v = rng.dirichlet(np.ones(m), size=n)
    if sparsity > 0:
        v = np.where(rng.random(v.shape) < sparsity, 0.0, v)
        empty = v.sum(axis=1) == 0
        v[empty, rng.integers(m, size=int(empty.sum()))] = 1.0
        v = v / v.sum(axis=1, keepdims=True)
    return v


__all__ = [
    "DistortionError", "DistortionReport", "OptimalBudget", "RoundStats", "clustered_profile",
    "dist2_instance", "epigraph_lp", "exact_distortion", "expected_referee_cost",
    "gen_lower_bound_instance", "greedy_optimal", "mc_distortion", "nash_lb_closed_form",
    "nash_lb_instance", "optimal_budget", "random_profile", "recognize_instance", "segment_lp", "social_costs",
]
