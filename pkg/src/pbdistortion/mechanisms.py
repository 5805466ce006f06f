"""Sampled budget-aggregation mechanisms.

One-voter and two-voter rules (random dictator, random diarchy, random
referee) and three-voter bargaining: two agents ``a`` and ``b`` bargain
with the budget ``c`` of a third voter as the disagreement point.

All bargaining rules start from the per-project median of ``(a, b, c)``,
which funds exactly the mass that at least two of the three budgets agree
on.  The ``excess`` is what remains to reach a total of one::

    excess = 1 - sum_j median(a_j, b_j, c_j)

With ``excess >= 0`` (case 1) funds are added; with ``excess < 0``
(case 2) funds are removed.  Median schemes may add from the part of any
single budget above the median, or remove from the part of any pair above
the third budget.  Nash bargaining splits the excess evenly between the
two agents: it adds ``excess / 2`` where ``a`` sits above the median and
``excess / 2`` where ``b`` does (case 1), or removes ``|excess| / 2``
where the median exceeds ``a`` and as much where it exceeds ``b`` (case 2).

Voter bits in three-voter tables: ``a`` is bit 0, ``b`` bit 1, ``c`` bit 2.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .budget_core import Budget, BudgetError, VoteProfile, check_budget, overlap_utility
from .incremental_space import AllocTable, build_X, build_Z, project_X

A, B, C = 1, 2, 4
EPSILON_UNIT = 1e-6
_TOL = 1e-12


class BargainCase(enum.Enum):
    CASE1 = "case1"  # excess >= 0: funds are added
    CASE2 = "case2"  # excess < 0: funds are removed


@dataclass(frozen=True)
class FillStrategy:
    """How a fixed amount is spread over per-project capacities.

    ``proportional`` spreads it in proportion to capacity; ``lexicographic``
    saturates capacities in project order; ``random`` draws discretized
    units without replacement (a multivariate hypergeometric draw with unit
    ``EPSILON_UNIT``), which is proportional in expectation.
    """

    variant: str = "proportional"
    seed: int | None = None

    def __post_init__(self):
        if self.variant not in ("proportional", "lexicographic", "random"):
            raise ValueError(f"unknown fill variant {self.variant!r}")

    @classmethod
    def proportional(cls) -> "FillStrategy":
        return cls("proportional")

    @classmethod
    def lexicographic(cls) -> "FillStrategy":
        return cls("lexicographic")

    @classmethod
    def seeded_random(cls, seed: int | None = None) -> "FillStrategy":
        return cls("random", seed)


PROPORTIONAL = FillStrategy.proportional()


@dataclass(frozen=True)
class BargainOutcome:
    z: Budget
    z_table: AllocTable
    excess: float
    case: BargainCase


def _as_vec(x) -> np.ndarray:
    if isinstance(x, Budget):
        return x.alloc
    return np.asarray(x, dtype=float)


def _triple(a, b, c) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    a, b, c = _as_vec(a), _as_vec(b), _as_vec(c)
    if not (a.shape == b.shape == c.shape):
        raise BudgetError(f"dimension mismatch: {a.shape}, {b.shape}, {c.shape}")
    return a, b, c


def distribute(cap, amount: float, fill: FillStrategy = PROPORTIONAL,
               rng: np.random.Generator | None = None) -> np.ndarray:
    """Split ``amount`` into ``r`` with ``0 <= r <= cap`` and ``sum(r) == amount``."""
    cap = np.maximum(np.asarray(cap, dtype=float), 0.0)
    total = float(cap.sum())
    amount = float(amount)
    if amount < -1e-12:
        raise ValueError("amount must be nonnegative")
    if amount > total + 1e-9:
        raise ValueError(f"amount {amount:.6g} exceeds capacity {total:.6g}")
    amount = min(max(amount, 0.0), total)
    if amount == 0.0 or total == 0.0:
        return np.zeros_like(cap)
    if fill.variant == "proportional":
        r = cap * (amount / total)
    elif fill.variant == "lexicographic":
        before = np.concatenate([[0.0], np.cumsum(cap)[:-1]])
        r = np.clip(amount - before, 0.0, cap)
    else:
        if rng is None:
            rng = np.random.default_rng(fill.seed)
        units = np.floor(cap / EPSILON_UNIT).astype(np.int64)
        draw = min(int(round(amount / EPSILON_UNIT)), int(units.sum()))
        r = rng.multivariate_hypergeometric(units, draw).astype(float) * EPSILON_UNIT
        r = np.minimum(r, cap)
    # put the rounding residual where there is the most room
    residual = amount - float(r.sum())
    for j in np.argsort(-(cap - r) if residual > 0 else -r, kind="stable"):
        if abs(residual) <= 0.0:
            break
        step = min(residual, cap[j] - r[j]) if residual > 0 else max(residual, -r[j])
        r[j] += step
        residual -= step
    return r


def excess_of(a, b, c) -> float:
    """One minus the mass agreed on by at least two of ``a, b, c``."""
    a, b, c = _triple(a, b, c)
    return float(1.0 - np.median(np.stack([a, b, c]), axis=0).sum())


def _finish(z: np.ndarray) -> Budget:
    z = np.where(np.abs(z) < _TOL, 0.0, z)
    return Budget(check_budget(z))


def _outcome(a, b, c, z: np.ndarray, excess: float) -> BargainOutcome:
    budget = _finish(z)
    table = build_Z(np.stack([a, b, c]), budget.alloc)
    case = BargainCase.CASE1 if excess >= 0 else BargainCase.CASE2
    return BargainOutcome(budget, table, excess, case)


# ---------------------------------------------------------------------------
# vectorized proportional cores (leading batch axes allowed)


def _safe_ratio(num, den):
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    return np.divide(num, den, out=np.zeros(np.broadcast(num, den).shape), where=den > 0)


def nash_points(a, b, c) -> np.ndarray:
    """Nash outcomes with proportional fill; broadcasts over leading axes."""
    a, b, c = (np.asarray(x, dtype=float) for x in (a, b, c))
    med = np.median(np.stack(np.broadcast_arrays(a, b, c)), axis=0)
    excess = 1.0 - med.sum(axis=-1, keepdims=True)
    add = excess >= 0
    side_a = np.where(add, np.maximum(a - med, 0.0), np.maximum(med - a, 0.0))
    side_b = np.where(add, np.maximum(b - med, 0.0), np.maximum(med - b, 0.0))
    half = np.abs(excess) / 2.0
    ra = side_a * _safe_ratio(half, side_a.sum(axis=-1, keepdims=True))
    rb = side_b * _safe_ratio(half, side_b.sum(axis=-1, keepdims=True))
    return np.where(add, med + ra + rb, med - ra - rb)


def median_points(a, b, c) -> np.ndarray:
    """Median-scheme outcomes with proportional fill; broadcasts over leading axes."""
    a, b, c = (np.asarray(x, dtype=float) for x in (a, b, c))
    stack = np.stack(np.broadcast_arrays(a, b, c))
    med = np.median(stack, axis=0)
    excess = 1.0 - med.sum(axis=-1, keepdims=True)
    add = excess >= 0
    cap = np.where(add, stack.max(axis=0) - med, med - stack.min(axis=0))
    r = cap * _safe_ratio(np.abs(excess), cap.sum(axis=-1, keepdims=True))
    return np.where(add, med + r, med - r)


# ---------------------------------------------------------------------------
# bargaining


def _nash_steps(a, b, c, fill: FillStrategy, rng) -> tuple[np.ndarray, float, np.ndarray, np.ndarray]:
    med = np.median(np.stack([a, b, c]), axis=0)
    excess = float(1.0 - med.sum())
    if excess >= 0:
        ra = distribute(np.maximum(a - med, 0.0), excess / 2, fill, rng)
        rb = distribute(np.maximum(b - med, 0.0), excess / 2, fill, rng)
        return med + ra + rb, excess, ra, rb
    ra = distribute(np.maximum(med - a, 0.0), -excess / 2, fill, rng)
    rb = distribute(np.maximum(med - b, 0.0), -excess / 2, fill, rng)
    return med - ra - rb, excess, ra, rb


def nash_bargain(a, b, c, fill: FillStrategy = PROPORTIONAL,
                 rng: np.random.Generator | None = None) -> BargainOutcome:
    """Nash bargaining between ``a`` and ``b`` with disagreement point ``c``."""
    a, b, c = _triple(a, b, c)
    z, excess, _, _ = _nash_steps(a, b, c, fill, rng)
    return _outcome(a, b, c, z, excess)


def nash_rand(a, b, c, rng: np.random.Generator | None = None,
              fill: FillStrategy = PROPORTIONAL) -> Budget:
    """Randomized Nash bargaining; the excess goes out in proportion to capacity in expectation."""
    a, b, c = _triple(a, b, c)
    z, _, _, _ = _nash_steps(a, b, c, fill, rng)
    return _finish(z)


def median_scheme(a, b, c, fill: FillStrategy = PROPORTIONAL,
                  rng: np.random.Generator | None = None) -> BargainOutcome:
    """An outcome maximizing ``u(z, a) + u(z, b) + u(z, c)``.

    Adds the excess above the median (case 1) or removes it below the median
    (case 2), choosing projects per ``fill``.
    """
    a, b, c = _triple(a, b, c)
    stack = np.stack([a, b, c])
    med = np.median(stack, axis=0)
    excess = float(1.0 - med.sum())
    if excess >= 0:
        z = med + distribute(stack.max(axis=0) - med, excess, fill, rng)
    else:
        z = med - distribute(med - stack.min(axis=0), -excess, fill, rng)
    return _outcome(a, b, c, z, excess)


def lemma_table(a, b, c) -> dict[int, float]:
    """Closed-form outcome table of Nash bargaining over the three voters (keys are voter masks)."""
    a, b, c = _triple(a, b, c)
    X = build_X(np.stack([a, b, c])).aggregated
    excess = 1.0 - X[A | B | C] - X[A | B] - X[A | C] - X[B | C]
    return {
        A | B | C: X[A | B | C],
        A | B: X[A | B],
        A | C: X[A | C] + min(excess / 2, 0.0),
        B | C: X[B | C] + min(excess / 2, 0.0),
        A: max(0.0, excess / 2),
        B: max(0.0, excess / 2),
        C: 0.0,
        0: 0.0,
    }


def median_conditions_hold(a, b, c, z, tol: float = 1e-9) -> bool:
    """Whether ``z`` satisfies the characterization of median-scheme outcomes.

    Always: all mass common to the three budgets is kept and nothing outside
    all of them is funded.  Case 1 keeps all pairwise mass; case 2 funds no
    mass held by a single budget alone.
    """
    a, b, c = _triple(a, b, c)
    X = build_X(np.stack([a, b, c])).aggregated
    Z = build_Z(np.stack([a, b, c]), _as_vec(z)).aggregated
    excess = 1.0 - X[A | B | C] - X[A | B] - X[A | C] - X[B | C]
    ok = abs(Z[A | B | C] - X[A | B | C]) <= tol and abs(Z[0]) <= tol
    if excess >= 0:
        ok &= all(abs(Z[s] - X[s]) <= tol for s in (A | B, A | C, B | C))
    else:
        ok &= all(abs(Z[s]) <= tol for s in (A, B, C))
    return bool(ok)


def nash_gain(a, b, c, z) -> tuple[float, float]:
    """Utility gains of ``a`` and ``b`` over the disagreement point."""
    a, b, c = _triple(a, b, c)
    z = _as_vec(z)
    return (overlap_utility(a, z) - overlap_utility(a, c), overlap_utility(b, z) - overlap_utility(b, c))


def nash_product_bound(a, b, c) -> float:
    """Largest achievable Nash product, from the closed-form table: ``(X(ab) + excess/2)**2``."""
    a, b, c = _triple(a, b, c)
    X = build_X(np.stack([a, b, c])).aggregated
    excess = 1.0 - X[A | B | C] - X[A | B] - X[A | C] - X[B | C]
    return float((X[A | B] + excess / 2) ** 2)


# ---------------------------------------------------------------------------
# hypothetical table construction over a larger profile


def build_Z_tilde(P, a: int, b: int, c: int, rng: np.random.Generator | None = None,
                  fill: FillStrategy = PROPORTIONAL, r_a=None, r_b=None) -> AllocTable:
    """Outcome table over all of ``P`` that spreads each side's excess share across subsets.

    Subsets holding at least two of ``a, b, c`` are kept in full.  In case 1,
    the amount ``r_a[j]`` added for ``a`` is split over subsets containing
    ``a`` but neither ``b`` nor ``c``, in proportion to their incremental
    allocation on project ``j``; likewise for ``b``.  In case 2, ``r_a[j]``
    is removed from subsets containing ``b`` and ``c`` but not ``a``, and
    ``r_b[j]`` from those containing ``a`` and ``c`` but not ``b``.

    ``r_a`` and ``r_b`` default to the Nash fill amounts under ``fill``.
    """
    votes = P.votes if isinstance(P, VoteProfile) else np.asarray(P, dtype=float)
    n = votes.shape[0]
    for i in (a, b, c):
        if not 0 <= i < n:
            raise IndexError(f"voter {i} out of range for {n} voters")
    X = build_X(votes)
    va, vb, vc = votes[a], votes[b], votes[c]
    _, excess, ra, rb = _nash_steps(va, vb, vc, fill, rng)
    if r_a is not None:
        ra = np.asarray(r_a, dtype=float)
    if r_b is not None:
        rb = np.asarray(r_b, dtype=float)
    masks = np.arange(1 << n)
    in_a, in_b, in_c = ((masks >> i) & 1 for i in (a, b, c))
    count = in_a + in_b + in_c
    Zt = np.where(count >= 2, X.per_project, 0.0)
    if len({a, b, c}) < 3:
        return AllocTable(n, Zt)
    Q = (1 << a) | (1 << b) | (1 << c)
    XQ = project_X(X, Q).per_project
    bit = {v: k for k, v in enumerate(sorted((a, b, c)))}
    qa, qb, qc = (1 << bit[a]), (1 << bit[b]), (1 << bit[c])
    if excess >= 0:
        parts = (((in_a == 1) & (in_b == 0) & (in_c == 0), ra, XQ[:, qa], 1.0),
                 ((in_b == 1) & (in_a == 0) & (in_c == 0), rb, XQ[:, qb], 1.0))
    else:
        parts = (((in_b == 1) & (in_c == 1) & (in_a == 0), ra, XQ[:, qb | qc], -1.0),
                 ((in_a == 1) & (in_c == 1) & (in_b == 0), rb, XQ[:, qa | qc], -1.0))
    for sel, r, denom, sign in parts:
        share = _safe_ratio(r, denom)[:, None]
        Zt = Zt + sign * np.where(sel[None, :], share * X.per_project, 0.0)
    Zt = np.where(np.abs(Zt) < _TOL, 0.0, Zt)
    return AllocTable(n, Zt)


# ---------------------------------------------------------------------------
# single-round mechanisms


def _votes(P) -> np.ndarray:
    if isinstance(P, VoteProfile):
        return P.votes
    votes = np.asarray(P, dtype=float)
    if votes.ndim != 2 or votes.shape[0] == 0:
        raise BudgetError("profile must be a nonempty 2-d array")
    return votes


def random_dictator(P, rng: np.random.Generator) -> Budget:
    votes = _votes(P)
    return Budget(votes[rng.integers(votes.shape[0])])


def half_split(P, i: int, j: int) -> float:
    return 0.5


def random_diarchy(P, alpha_rule: Callable[[object, int, int], float] = half_split,
                   rng: np.random.Generator | None = None) -> Budget:
    """Convex combination ``alpha * a + (1 - alpha) * b`` of two sampled votes."""
    votes = _votes(P)
    rng = rng if rng is not None else np.random.default_rng()
    i, j = rng.integers(votes.shape[0], size=2)
    return Budget(_diarchy_point(votes, P, int(i), int(j), alpha_rule))


def _diarchy_point(votes, P, i, j, alpha_rule) -> np.ndarray:
    alpha = float(alpha_rule(P, i, j))
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha {alpha} outside [0, 1]")
    return alpha * votes[i] + (1.0 - alpha) * votes[j]


def referee_choice(a, b, c) -> list[tuple[float, np.ndarray]]:
    """Referee ``c`` picks whichever of ``a, b`` it overlaps more; a tie is a fair coin."""
    ua, ub = overlap_utility(a, c), overlap_utility(b, c)
    if ua > ub:
        return [(1.0, a)]
    if ub > ua:
        return [(1.0, b)]
    return [(0.5, a), (0.5, b)]


def random_referee(P, rng: np.random.Generator) -> Budget:
    votes = _votes(P)
    i, j, k = rng.integers(votes.shape[0], size=3)
    branches = referee_choice(votes[i], votes[j], votes[k])
    if len(branches) == 1:
        return Budget(branches[0][1])
    return Budget(branches[int(rng.integers(2))][1])


# ---------------------------------------------------------------------------
# deliberation


Scheme = Callable[[np.ndarray, np.ndarray, np.ndarray, np.random.Generator], np.ndarray]


def nash_scheme(a, b, c, rng=None) -> np.ndarray:
    return nash_points(a, b, c)


def median_scheme_point(a, b, c, rng=None) -> np.ndarray:
    return median_points(a, b, c)


def nash_rand_scheme(a, b, c, rng=None) -> np.ndarray:
    return nash_rand(a, b, c, rng, FillStrategy.seeded_random()).alloc


SCHEMES: dict[str, Scheme] = {
    "nash": nash_scheme,
    "median": median_scheme_point,
    "nash-rand": nash_rand_scheme,
}


def sequential_deliberation(P, T: int, scheme: Scheme | str = "nash",
                            rng: np.random.Generator | None = None) -> Budget:
    """Run ``T`` rounds; each round two sampled voters bargain against the current outcome."""
    path = deliberation_path(P, T, scheme, rng)
    return Budget(path[-1])


def deliberation_path(P, T: int, scheme: Scheme | str = "nash",
                      rng: np.random.Generator | None = None) -> np.ndarray:
    """Outcomes of rounds ``0..T``; round 0 is a uniformly sampled vote."""
    if T < 1:
        raise ValueError("T must be at least 1")
    votes = _votes(P)
    fn = SCHEMES[scheme] if isinstance(scheme, str) else scheme
    rng = rng if rng is not None else np.random.default_rng()
    n = votes.shape[0]
    c = votes[rng.integers(n)]
    path = [c]
    for _ in range(T):
        i, j = rng.integers(n, size=2)
        c = np.asarray(fn(votes[i], votes[j], c, rng), dtype=float)
        path.append(c)
    return np.array(path)


def deliberation_paths(votes: np.ndarray, T: int, reps: int, scheme: str = "nash",
                       seed: int = 0) -> np.ndarray:
    """``reps`` independent deliberations at once, shape ``(T + 1, reps, m)``.

    Proportional schemes run batched.  Draw order per round: disagreement
    point (round 0), then the two agents of every replicate.
    """
    votes = _votes(votes)
    if T < 1 or reps < 1:
        raise ValueError("T and reps must be positive")
    rng = np.random.default_rng(seed)
    n = votes.shape[0]
    c = votes[rng.integers(n, size=reps)]
    out = [c]
    batched = {"nash": nash_points, "median": median_points}
    for _ in range(T):
        pair = rng.integers(n, size=(2, reps))
        a, b = votes[pair[0]], votes[pair[1]]
        if scheme in batched:
            c = batched[scheme](a, b, c)
        else:
            c = np.array([SCHEMES[scheme](a[r], b[r], c[r], rng) for r in range(reps)])
        out.append(c)
    return np.array(out)


# ---------------------------------------------------------------------------
# exact outcome distributions


@dataclass(frozen=True)
class Mechanism:
    """A sampled mechanism: ``arity`` voters drawn uniformly with replacement,
    then ``branches`` maps the drawn indices to weighted outcomes."""

    name: str
    arity: int
    branches: Callable[[np.ndarray, tuple[int, ...]], list[tuple[float, np.ndarray]]]

    def sample(self, votes: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        idx = tuple(int(i) for i in rng.integers(votes.shape[0], size=self.arity))
        options = self.branches(votes, idx)
        if len(options) == 1:
            return options[0][1]
        w = np.array([p for p, _ in options])
        return options[int(rng.choice(len(options), p=w / w.sum()))][1]


def dictator_mechanism() -> Mechanism:
    return Mechanism("dictator", 1, lambda v, idx: [(1.0, v[idx[0]])])


def diarchy_mechanism(alpha_rule=half_split) -> Mechanism:
    return Mechanism("diarchy", 2,
                     lambda v, idx: [(1.0, _diarchy_point(v, v, idx[0], idx[1], alpha_rule))])


def referee_mechanism() -> Mechanism:
    return Mechanism("referee", 3, lambda v, idx: referee_choice(v[idx[0]], v[idx[1]], v[idx[2]]))


def triadic_mechanism(scheme: str = "nash") -> Mechanism:
    """Two agents ``idx[0], idx[1]`` bargain with disagreement point ``idx[2]``."""
    fn = {"nash": nash_points, "median": median_points, "nash-rand": nash_points}[scheme]
    return Mechanism(scheme, 3, lambda v, idx: [(1.0, fn(v[idx[0]], v[idx[1]], v[idx[2]]))])


MECHANISMS: dict[str, Callable[[], Mechanism]] = {
    "dictator": dictator_mechanism,
    "diarchy": diarchy_mechanism,
    "referee": referee_mechanism,
    "nash": lambda: triadic_mechanism("nash"),
    "median": lambda: triadic_mechanism("median"),
    "nash-rand": lambda: triadic_mechanism("nash-rand"),
}


def get_mechanism(name: str) -> Mechanism:
    try:
        return MECHANISMS[name]()
    except KeyError:
        raise ValueError(f"unknown mechanism {name!r}; choose from {sorted(MECHANISMS)}") from None


__all__ = [
    "BargainCase", "BargainOutcome", "FillStrategy", "Mechanism", "PROPORTIONAL", "build_Z_tilde",
    "deliberation_path", "deliberation_paths", "distribute", "excess_of", "get_mechanism",
    "lemma_table", "median_conditions_hold", "median_points", "median_scheme", "nash_bargain",
    "nash_gain", "nash_points", "nash_product_bound", "nash_rand", "random_diarchy",
    "random_dictator", "random_referee", "referee_choice", "sequential_deliberation",
]
