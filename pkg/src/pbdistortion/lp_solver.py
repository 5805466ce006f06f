"""Dense linear programming (maximization) and a multistart bilinear driver.

``solve`` handles problems of the form::

    maximize    c @ x + constant
    subject to  A_eq @ x == b_eq
                A_ub @ x <= b_ub
                lo <= x <= hi          (lo may be -inf, hi may be +inf)

Pipeline: presolve (fixed variables, singleton and doubleton equality
rows, singleton inequality rows become bounds), row/column equilibration,
removal of linearly dependent equality rows, then a two-phase bounded-variable primal simplex on a dense tableau.
Pricing is Dantzig's largest reduced cost; after ``10 * ncols``
consecutive degenerate pivots it switches to Bland's rule until a pivot
makes progress.  Outside Bland mode the ratio test is Harris's two-pass
rule, which prefers large pivot elements among nearly tied rows.  The
tableau is rebuilt from the original data every ``REFACTOR_EVERY`` pivots
and at the end of each phase to wash out accumulated round-off.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

log = logging.getLogger(__name__)

PIVOT_TOL = 1e-9
OPT_TOL = 1e-9
FEAS_TOL = 1e-9
RESIDUAL_TOL = 1e-8
FAIL_RESIDUAL = 1e-6
REFACTOR_EVERY = 100
DEPENDENT_TOL = 1e-9


class LpStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ITERATION_LIMIT = "iteration_limit"
    NUMERICAL_ERROR = "numerical_error"


class LpError(ValueError):
    """Malformed linear program (shapes, non-finite data)."""


def _as_matrix(a, ncols: int) -> np.ndarray:
    if a is None:
        return np.zeros((0, ncols))
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a.reshape(1, -1) if a.size else np.zeros((0, ncols))
    return a


@dataclass(frozen=True)
class LinearProgram:
    c: np.ndarray
    A_eq: np.ndarray
    b_eq: np.ndarray
    A_ub: np.ndarray
    b_ub: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    constant: float = 0.0
    names: tuple[str, ...] | None = None

    @classmethod
    def build(cls, c, A_eq=None, b_eq=None, A_ub=None, b_ub=None, bounds=None,
              constant: float = 0.0, names=None) -> "LinearProgram":
        """Assemble and validate.

        ``bounds`` is a tuple ``(lo, hi)`` of scalars or arrays, or a list of
        per-variable pairs with ``None`` for an open side.  Default: ``x >= 0``.
        """
        c = np.asarray(c, dtype=float).ravel()
        n = c.size
        A_eq = _as_matrix(A_eq, n)
        A_ub = _as_matrix(A_ub, n)
        b_eq = np.asarray(b_eq if b_eq is not None else np.zeros(0), dtype=float).ravel()
        b_ub = np.asarray(b_ub if b_ub is not None else np.zeros(0), dtype=float).ravel()
        if bounds is None:
            lo, hi = np.zeros(n), np.full(n, np.inf)
        elif isinstance(bounds, tuple):
            lo_in = -np.inf if bounds[0] is None else bounds[0]
            hi_in = np.inf if bounds[1] is None else bounds[1]
            lo = np.broadcast_to(np.asarray(lo_in, dtype=float), (n,)).copy()
            hi = np.broadcast_to(np.asarray(hi_in, dtype=float), (n,)).copy()
        else:
            pairs = np.asarray([(-np.inf if p[0] is None else p[0], np.inf if p[1] is None else p[1])
                                for p in bounds], dtype=float)
            if pairs.shape != (n, 2):
                raise LpError("bounds must give one (lo, hi) pair per variable")
            lo, hi = pairs[:, 0].copy(), pairs[:, 1].copy()
        lp = cls(c, A_eq, b_eq, A_ub, b_ub, lo, hi, float(constant),
                 tuple(names) if names is not None else None)
        lp.validate()
        return lp

    @property
    def n(self) -> int:
        return self.c.size

    def validate(self) -> None:
        n = self.n
        if self.A_eq.shape != (self.b_eq.size, n):
            raise LpError(f"A_eq has shape {self.A_eq.shape}, expected ({self.b_eq.size}, {n})")
        if self.A_ub.shape != (self.b_ub.size, n):
            raise LpError(f"A_ub has shape {self.A_ub.shape}, expected ({self.b_ub.size}, {n})")
        if self.lo.shape != (n,) or self.hi.shape != (n,):
            raise LpError("bounds do not match the variable count")
        for name in ("c", "A_eq", "b_eq", "A_ub", "b_ub"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise LpError(f"{name} has non-finite entries")
        if np.any(np.isnan(self.lo)) or np.any(np.isnan(self.hi)):
            raise LpError("bounds contain NaN")
        if self.names is not None and len(self.names) != n:
            raise LpError("names do not match the variable count")

    def objective(self, x) -> float:
        return float(self.c @ np.asarray(x, dtype=float) + self.constant)

    def violation(self, x) -> float:
        """Largest constraint or bound violation at ``x``."""
        x = np.asarray(x, dtype=float)
        parts = [0.0]
        if self.b_eq.size:
            parts.append(float(np.abs(self.A_eq @ x - self.b_eq).max()))
        if self.b_ub.size:
            parts.append(float(np.maximum(self.A_ub @ x - self.b_ub, 0).max()))
        parts.append(float(np.maximum(self.lo - x, 0).max(initial=0.0)))
        parts.append(float(np.maximum(x - self.hi, 0).max(initial=0.0)))
        return max(parts)

    def scaled(self, factor: float) -> "LinearProgram":
        return LinearProgram(self.c * factor, self.A_eq, self.b_eq, self.A_ub, self.b_ub,
                             self.lo, self.hi, self.constant * factor, self.names)

    def to_lp_text(self, name: str = "lp") -> str:
        """CPLEX-LP style text for cross-checking with external solvers."""
        names = self.names or tuple(f"x{j}" for j in range(self.n))
        safe = [s.replace("(", "_").replace(")", "").replace(",", "_").replace(" ", "") for s in names]

        def expr(row) -> str:
            terms = [f"{'+' if v >= 0 else '-'} {abs(v):.17g} {safe[j]}" for j, v in enumerate(row) if v != 0]
            return " ".join(terms) if terms else "0 " + safe[0]

        lines = [f"\\ {name}", "Maximize", f" obj: {expr(self.c)}"]
        if self.constant:
            lines[-1] += f" + {self.constant:.17g} constant_term"
        lines.append("Subject To")
        for i, row in enumerate(self.A_eq):
            lines.append(f" e{i}: {expr(row)} = {self.b_eq[i]:.17g}")
        for i, row in enumerate(self.A_ub):
            lines.append(f" u{i}: {expr(row)} <= {self.b_ub[i]:.17g}")
        lines.append("Bounds")
        for j in range(self.n):
            lo = "-inf" if np.isneginf(self.lo[j]) else f"{self.lo[j]:.17g}"
            hi = "+inf" if np.isposinf(self.hi[j]) else f"{self.hi[j]:.17g}"
            lines.append(f" {lo} <= {safe[j]} <= {hi}")
        if self.constant:
            lines.append(" constant_term = 1")
        lines.append("End")
        return "\n".join(lines) + "\n"


@dataclass
class LpSolution:
    status: LpStatus
    objective_value: float
    primal: np.ndarray
    iterations: int = 0
    max_violation: float = 0.0
    presolved_shape: tuple[int, int] = (0, 0)

    @property
    def optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


class _Infeasible(Exception):
    pass


@dataclass
class _Reduced:
    """Working copy of the LP during presolve, with an undo log."""

    c: np.ndarray
    A_eq: np.ndarray
    b_eq: np.ndarray
    A_ub: np.ndarray
    b_ub: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    constant: float
    active: np.ndarray
    eq_rows: np.ndarray
    ub_rows: np.ndarray
    log: list = field(default_factory=list)


def _tighten(red: _Reduced, j: int, lo: float, hi: float) -> None:
    if lo > red.lo[j]:
        red.lo[j] = lo
    if hi < red.hi[j]:
        red.hi[j] = hi
    if red.lo[j] > red.hi[j] + FEAS_TOL * max(1.0, abs(red.hi[j])):
        raise _Infeasible(f"variable {j} has empty bounds")
    if red.lo[j] > red.hi[j]:
        red.lo[j] = red.hi[j]


def _fix(red: _Reduced, j: int, value: float) -> None:
    red.b_eq -= red.A_eq[:, j] * value
    red.b_ub -= red.A_ub[:, j] * value
    red.constant += red.c[j] * value
    red.A_eq[:, j] = 0.0
    red.A_ub[:, j] = 0.0
    red.c[j] = 0.0
    red.active[j] = False
    red.log.append(("fix", j, value))


def _substitute(red: _Reduced, k: int, l: int, p: float, q: float) -> None:
    """Eliminate ``x_k = p + q * x_l``."""
    if q > 0:
        new_lo, new_hi = (red.lo[k] - p) / q, (red.hi[k] - p) / q
    else:
        new_lo, new_hi = (red.hi[k] - p) / q, (red.lo[k] - p) / q
    _tighten(red, l, new_lo, new_hi)
    for A, b in ((red.A_eq, red.b_eq), (red.A_ub, red.b_ub)):
        col = A[:, k]
        rows = np.flatnonzero(col)
        if rows.size:
            A[rows, l] += col[rows] * q
            b[rows] -= col[rows] * p
            A[rows, k] = 0.0
    red.c[l] += red.c[k] * q
    red.constant += red.c[k] * p
    red.c[k] = 0.0
    red.active[k] = False
    red.log.append(("sub", k, l, p, q))


def _presolve(lp: LinearProgram) -> _Reduced:
    red = _Reduced(lp.c.copy(), lp.A_eq.copy(), lp.b_eq.copy(), lp.A_ub.copy(), lp.b_ub.copy(),
                   lp.lo.copy(), lp.hi.copy(), lp.constant, np.ones(lp.n, bool),
                   np.ones(lp.b_eq.size, bool), np.ones(lp.b_ub.size, bool))
    for j in np.flatnonzero(red.lo == red.hi):
        _fix(red, int(j), float(red.lo[j]))
    changed = True
    while changed:
        changed = False
        for i in np.flatnonzero(red.eq_rows):
            row = red.A_eq[i]
            nz = np.flatnonzero(row)
            if nz.size > 2:
                continue
            changed = True
            red.eq_rows[i] = False
            if nz.size == 0:
                if abs(red.b_eq[i]) > FEAS_TOL * max(1.0, abs(red.b_eq[i])):
                    raise _Infeasible(f"equality row {i} reads 0 = {red.b_eq[i]}")
            elif nz.size == 1:
                j = int(nz[0])
                value = red.b_eq[i] / row[j]
                slack = FEAS_TOL * max(1.0, abs(value))
                if value < red.lo[j] - slack or value > red.hi[j] + slack:
                    raise _Infeasible(f"equality row {i} fixes variable {j} outside its bounds")
                _fix(red, j, float(min(max(value, red.lo[j]), red.hi[j])))
            else:
                j1, j2 = int(nz[0]), int(nz[1])
                nnz1 = np.count_nonzero(red.A_eq[:, j1]) + np.count_nonzero(red.A_ub[:, j1])
                nnz2 = np.count_nonzero(red.A_eq[:, j2]) + np.count_nonzero(red.A_ub[:, j2])
                k, l = (j1, j2) if nnz1 <= nnz2 else (j2, j1)
                _substitute(red, k, l, float(red.b_eq[i] / row[k]), float(-row[l] / row[k]))
        for i in np.flatnonzero(red.ub_rows):
            row = red.A_ub[i]
            nz = np.flatnonzero(row)
            if nz.size > 1:
                continue
            red.ub_rows[i] = False
            if nz.size == 0:
                if red.b_ub[i] < -FEAS_TOL * max(1.0, abs(red.b_ub[i])):
                    raise _Infeasible(f"inequality row {i} reads 0 <= {red.b_ub[i]}")
                continue
            j = int(nz[0])
            bound = red.b_ub[i] / row[j]
            if row[j] > 0:
                _tighten(red, j, -np.inf, bound)
            else:
                _tighten(red, j, bound, np.inf)
            if red.lo[j] == red.hi[j]:
                _fix(red, j, float(red.lo[j]))
                changed = True
    return red


def _postsolve(red: _Reduced, x_active: np.ndarray, n: int) -> np.ndarray:
    x = np.zeros(n)
    x[np.flatnonzero(red.active)] = x_active
    for entry in reversed(red.log):
        if entry[0] == "fix":
            x[entry[1]] = entry[2]
        else:
            _, k, l, p, q = entry
            x[k] = p + q * x[l]
    return x


class _Tableau:
    """Bounded-variable primal simplex on ``A y = b, 0 <= y <= u`` (maximize ``c @ y``)."""

    def __init__(self, A: np.ndarray, b: np.ndarray, c: np.ndarray, u: np.ndarray,
                 basis: np.ndarray, max_iter: int):
        self.A = A
        self.b = b
        self.c = c
        self.u = u
        self.m, self.n = A.shape
        self.basis = basis.copy()
        self.at_upper = np.zeros(self.n, bool)
        self.max_iter = max_iter
        self.iterations = 0
        self.refactor()

    def refactor(self) -> None:
        B = self.A[:, self.basis]
        self.T = np.linalg.solve(B, self.A)
        self.T[np.abs(self.T) < 1e-14] = 0.0
        nb_upper = self.at_upper.copy()
        nb_upper[self.basis] = False
        rhs = self.b - self.A[:, nb_upper] @ self.u[nb_upper]
        self.xB = np.linalg.solve(B, rhs)
        self.d = self.c - self.c[self.basis] @ self.T
        self.d[self.basis] = 0.0
        self.is_basic = np.zeros(self.n, bool)
        self.is_basic[self.basis] = True

    def values(self) -> np.ndarray:
        y = np.where(self.at_upper, self.u, 0.0)
        y[self.basis] = self.xB
        return y

    def _entering(self, bland: bool, allowed: np.ndarray) -> int:
        d = self.d
        score = np.where(self.at_upper, -d, d)
        cand = allowed & ~self.is_basic & (score > OPT_TOL)
        if not cand.any():
            return -1
        if bland:
            return int(np.flatnonzero(cand)[0])
        idx = np.flatnonzero(cand)
        return int(idx[np.argmax(score[idx])])

    def run(self, allowed: np.ndarray) -> LpStatus:
        degenerate = 0
        bland = False
        threshold = 10 * self.n
        while True:
            q = self._entering(bland, allowed)
            if q < 0:
                return LpStatus.OPTIMAL
            if self.iterations >= self.max_iter:
                return LpStatus.ITERATION_LIMIT
            self.iterations += 1
            direction = -1.0 if self.at_upper[q] else 1.0
            alpha = self.T[:, q] * direction
            if bland:
                theta, row, to_upper = self._textbook_ratio(alpha, q)
            else:
                theta, row, to_upper = self._harris_ratio(alpha, q)
            if not np.isfinite(theta):
                return LpStatus.UNBOUNDED
            if theta <= PIVOT_TOL:
                degenerate += 1
                if degenerate > threshold:
                    bland = True
            else:
                degenerate = 0
                bland = False
            self.xB -= theta * alpha
            if row < 0:
                self.at_upper[q] = not self.at_upper[q]
                continue
            entering_value = (self.u[q] - theta) if self.at_upper[q] else theta
            self._pivot(row, q)
            leaving = self.basis[row]
            self.basis[row] = q
            self.is_basic[leaving] = False
            self.is_basic[q] = True
            self.at_upper[leaving] = to_upper
            self.at_upper[q] = False
            self.xB[row] = entering_value
            if self.iterations % REFACTOR_EVERY == 0:
                self.refactor()

    def _step_ratios(self, alpha: np.ndarray, slack: float) -> tuple[np.ndarray, np.ndarray]:
        """Step to each blocking bound (``slack`` widens the bounds) and whether it is the upper one."""
        ratios = np.full(self.m, np.inf)
        upper = np.zeros(self.m, bool)
        pos = alpha > PIVOT_TOL
        ratios[pos] = (np.maximum(self.xB[pos], 0.0) + slack) / alpha[pos]
        ub = self.u[self.basis]
        neg = (alpha < -PIVOT_TOL) & np.isfinite(ub)
        ratios[neg] = (np.maximum(ub[neg] - self.xB[neg], 0.0) + slack) / -alpha[neg]
        upper[neg] = True
        return ratios, upper

    def _textbook_ratio(self, alpha: np.ndarray, q: int) -> tuple[float, int, bool]:
        ratios, upper = self._step_ratios(alpha, 0.0)
        best = ratios.min()
        if not best < self.u[q]:
            return float(self.u[q]), -1, False
        ties = np.flatnonzero(ratios <= best + 1e-12)
        r = int(ties[np.argmin(self.basis[ties])])
        return float(best), r, bool(upper[r])

    def _harris_ratio(self, alpha: np.ndarray, q: int) -> tuple[float, int, bool]:
        """Two-pass ratio test: bound the step with slightly relaxed bounds, then
        take the largest pivot among rows that block within that step."""
        relaxed, _ = self._step_ratios(alpha, FEAS_TOL)
        limit = relaxed.min()
        if self.u[q] <= limit:
            return float(self.u[q]), -1, False
        if not np.isfinite(limit):
            return np.inf, -1, False
        ratios, upper = self._step_ratios(alpha, 0.0)
        cand = np.flatnonzero(ratios <= limit)
        r = int(cand[np.argmax(np.abs(alpha[cand]))])
        return float(ratios[r]), r, bool(upper[r])

    def _pivot(self, r: int, q: int) -> None:
        T = self.T
        piv = T[r, q]
        T[r] /= piv
        col = T[:, q].copy()
        col[r] = 0.0
        rows = np.flatnonzero(col)
        if rows.size:
            cols = np.flatnonzero(T[r])
            if cols.size * 3 < T.shape[1]:
                T[np.ix_(rows, cols)] -= np.outer(col[rows], T[r, cols])
            else:
                T[rows] -= np.outer(col[rows], T[r])
        dq = self.d[q]
        if dq != 0.0:
            self.d -= dq * T[r]
        self.d[q] = 0.0

    def largest_pivot_rows(self, r: int, allowed: np.ndarray) -> int:
        row = np.abs(self.T[r]) * (allowed & ~self.is_basic)
        j = int(np.argmax(row))
        return j if row[j] > 1e-7 else -1


def _independent_rows(E: np.ndarray, rhs: np.ndarray) -> np.ndarray | None:
    """Mask of equality rows to keep, dropping those in the span of earlier rows.

    The diagonal of R in a QR factorization of the row-normalized ``E.T``
    gives each row's distance from the span of the rows before it.  A
    dropped row must be reproduced by the kept ones, right-hand side
    included; ``None`` means the system is inconsistent.
    """
    k, n = E.shape
    norms = np.linalg.norm(E, axis=1)
    norms[norms == 0] = 1.0
    En = E / norms[:, None]
    rn = rhs / norms
    diag = np.abs(np.diag(np.linalg.qr(En.T, mode="r")))
    keep = np.zeros(k, bool)
    keep[:diag.size] = diag > DEPENDENT_TOL
    drop = np.flatnonzero(~keep)
    if drop.size == 0:
        return keep
    basis = keep.copy()
    W = np.linalg.lstsq(En[basis].T, En[drop].T, rcond=None)[0]
    lhs_gap = np.abs(W.T @ En[basis] - En[drop]).max(axis=1)
    sure = lhs_gap <= 1e-7
    if np.any(np.abs(W.T[sure] @ rn[basis] - rn[drop[sure]]) > 1e-7):
        return None
    keep[drop[~sure]] = True  # not reproduced after all; leave it to the simplex
    return keep


def _solve_core(c, A_eq, b_eq, A_ub, b_ub, u, max_iter):
    """Maximize over ``0 <= y <= u``; returns (status, y, iterations)."""
    n = c.size
    k_eq, k_ub = b_eq.size, b_ub.size
    m = k_eq + k_ub
    if m == 0:
        if np.any((c > OPT_TOL) & ~np.isfinite(u)):
            return LpStatus.UNBOUNDED, np.zeros(n), 0
        return LpStatus.OPTIMAL, np.where(c > 0, u, 0.0), 0
    A = np.zeros((m, n + k_ub))
    A[:k_eq, :n] = A_eq
    A[k_eq:, :n] = A_ub
    A[k_eq:, n:] = np.eye(k_ub)
    b = np.concatenate([b_eq, b_ub])
    # equilibrate rows, then structural columns
    row_scale = np.abs(A[:, :n]).max(axis=1)
    row_scale[row_scale == 0] = 1.0
    row_scale = 1.0 / row_scale
    A *= row_scale[:, None]
    b = b * row_scale
    A[k_eq:, n:] = np.eye(k_ub)
    col_scale = np.abs(A[:, :n]).max(axis=0)
    col_scale[col_scale == 0] = 1.0
    col_scale = 1.0 / col_scale
    A[:, :n] *= col_scale
    us = np.concatenate([u / col_scale, np.full(k_ub, np.inf)])
    cs = np.concatenate([c * col_scale, np.zeros(k_ub)])
    if k_eq > 1:
        keep = _independent_rows(A[:k_eq, :n], b[:k_eq])
        if keep is None:
            return LpStatus.INFEASIBLE, np.zeros(n), 0
        if not keep.all():
            rows = np.concatenate([keep, np.ones(k_ub, bool)])
            A, b = A[rows], b[rows]
            k_eq = int(keep.sum())
            m = k_eq + k_ub
    flip = b < 0
    A[flip] *= -1
    b = np.where(flip, -b, b)
    need_art = np.ones(m, bool)
    need_art[k_eq:] = flip[k_eq:]
    art_rows = np.flatnonzero(need_art)
    n_art = art_rows.size
    total = n + k_ub + n_art
    A_full = np.zeros((m, total))
    A_full[:, :n + k_ub] = A
    A_full[art_rows, n + k_ub + np.arange(n_art)] = 1.0
    u_full = np.concatenate([us, np.full(n_art, np.inf)])
    basis = np.empty(m, dtype=np.int64)
    slack_rows = np.flatnonzero(~need_art)
    basis[slack_rows] = n + slack_rows - k_eq
    basis[art_rows] = n + k_ub + np.arange(n_art)
    iterations = 0
    allowed = np.ones(total, bool)
    if n_art:
        c1 = np.zeros(total)
        c1[n + k_ub:] = -1.0
        tab = _Tableau(A_full, b, c1, u_full, basis, max_iter)
        status = tab.run(allowed)
        tab.refactor()
        status = tab.run(allowed)
        iterations = tab.iterations
        if status is LpStatus.ITERATION_LIMIT:
            return status, np.zeros(n), iterations
        infeas = float(tab.xB[tab.basis >= n + k_ub].sum())
        if infeas > 1e-7:
            return LpStatus.INFEASIBLE, np.zeros(n), iterations
        # drive remaining artificials out of the basis
        allowed[n + k_ub:] = False
        # a stuck artificial marks its own constraint row as redundant;
        # tableau positions and constraint rows are distinct index spaces
        keep_rows = np.ones(m, bool)
        keep_pos = np.ones(m, bool)
        for r in np.flatnonzero(tab.basis >= n + k_ub):
            j = tab.largest_pivot_rows(r, allowed)
            if j < 0:
                keep_rows[art_rows[tab.basis[r] - (n + k_ub)]] = False
                keep_pos[r] = False
                continue
            value = tab.u[j] if tab.at_upper[j] else 0.0
            tab._pivot(r, j)
            tab.is_basic[tab.basis[r]] = False
            tab.basis[r] = j
            tab.is_basic[j] = True
            tab.at_upper[j] = False
            tab.xB[r] = value
        cols = np.arange(n + k_ub)
        basis = tab.basis[keep_pos]
        at_upper = tab.at_upper[:n + k_ub]
        A2 = A_full[keep_rows][:, cols]
        b2 = b[keep_rows]
        tab2 = _Tableau.__new__(_Tableau)
        tab2.A, tab2.b, tab2.u = A2, b2, us
        tab2.c = cs
        tab2.m, tab2.n = A2.shape
        tab2.basis = basis.copy()
        tab2.at_upper = at_upper.copy()
        tab2.max_iter = max_iter
        tab2.iterations = iterations
        tab2.refactor()
        tab = tab2
        allowed = np.ones(tab.n, bool)
    else:
        tab = _Tableau(A_full, b, np.concatenate([cs, np.zeros(0)]), u_full, basis, max_iter)
    status = tab.run(allowed)
    if status is LpStatus.OPTIMAL:
        tab.refactor()
        status = tab.run(allowed)
    y = tab.values()[:n] * col_scale
    return status, y, tab.iterations


def solve(lp: LinearProgram, max_iter: int | None = None, presolve: bool = True) -> LpSolution:
    """Solve a maximization LP; see the module docstring for the algorithm.

    A point whose residual exceeds ``FAIL_RESIDUAL``, or a singular basis,
    is never reported as optimal: the solve is repeated without presolve,
    and if that also fails the status is ``NUMERICAL_ERROR``.
    """
    lp.validate()

    def attempt(with_presolve: bool) -> LpSolution:
        try:
            return _solve_once(lp, max_iter, with_presolve)
        except np.linalg.LinAlgError as exc:
            log.info("singular basis (%s)", exc)
            return LpSolution(LpStatus.NUMERICAL_ERROR, float("nan"), np.full(lp.n, np.nan))

    def broken(sol: LpSolution) -> bool:
        return sol.status is LpStatus.NUMERICAL_ERROR or (
            sol.optimal and sol.max_violation > FAIL_RESIDUAL)

    sol = attempt(presolve)
    if broken(sol) and presolve:
        log.info("numerical trouble after presolve; retrying without it")
        sol = attempt(False)
    if sol.optimal and sol.max_violation > FAIL_RESIDUAL:
        log.warning("LP residual %.3e; reporting a numerical failure", sol.max_violation)
        return LpSolution(LpStatus.NUMERICAL_ERROR, float("nan"), sol.primal, sol.iterations,
                          sol.max_violation, sol.presolved_shape)
    return sol


def _solve_once(lp: LinearProgram, max_iter: int | None, presolve: bool) -> LpSolution:
    n = lp.n
    try:
        if presolve:
            red = _presolve(lp)
        else:
            red = _Reduced(lp.c.copy(), lp.A_eq.copy(), lp.b_eq.copy(), lp.A_ub.copy(), lp.b_ub.copy(),
                           lp.lo.copy(), lp.hi.copy(), lp.constant, np.ones(n, bool),
                           np.ones(lp.b_eq.size, bool), np.ones(lp.b_ub.size, bool))
    except _Infeasible as exc:
        log.debug("presolve: %s", exc)
        return LpSolution(LpStatus.INFEASIBLE, float("nan"), np.full(n, np.nan))
    act = np.flatnonzero(red.active)
    c = red.c[act]
    A_eq = red.A_eq[np.ix_(np.flatnonzero(red.eq_rows), act)]
    b_eq = red.b_eq[red.eq_rows]
    A_ub = red.A_ub[np.ix_(np.flatnonzero(red.ub_rows), act)]
    b_ub = red.b_ub[red.ub_rows]
    lo, hi = red.lo[act], red.hi[act]
    # map every variable to y >= 0 with an optional upper bound
    kind = np.where(np.isfinite(lo), 0, np.where(np.isfinite(hi), 1, 2))
    shift = np.where(kind == 0, lo, np.where(kind == 1, hi, 0.0))
    sign = np.where(kind == 1, -1.0, 1.0)
    u = np.where(kind == 0, hi - lo, np.inf)
    free = np.flatnonzero(kind == 2)

    def expand(M):
        M = M * sign
        return np.hstack([M, -M[:, free]]) if free.size else M

    c_y = expand(c.reshape(1, -1)).ravel()
    b_eq_y = b_eq - A_eq @ shift
    b_ub_y = b_ub - A_ub @ shift
    A_eq_y = expand(A_eq)
    A_ub_y = expand(A_ub)
    u_y = np.concatenate([u, np.full(free.size, np.inf)])
    if max_iter is None:
        max_iter = 50 * (A_eq_y.shape[0] + A_ub_y.shape[0] + c_y.size) + 1000
    status, y, iters = _solve_core(c_y, A_eq_y, b_eq_y, A_ub_y, b_ub_y, u_y, max_iter)
    shape = (b_eq.size + b_ub.size, act.size)
    if status is not LpStatus.OPTIMAL:
        return LpSolution(status, float("nan"), np.full(n, np.nan), iters, presolved_shape=shape)
    x_act = shift + sign * y[:act.size]
    if free.size:
        x_act[free] -= y[act.size:]
    x_act = np.minimum(np.maximum(x_act, lo), hi)
    x = _postsolve(red, x_act, n)
    viol = lp.violation(x)
    if RESIDUAL_TOL < viol <= FAIL_RESIDUAL:
        log.warning("LP residual %.3e exceeds %.0e", viol, RESIDUAL_TOL)
    return LpSolution(LpStatus.OPTIMAL, lp.objective(x), x, iters, viol, shape)


# ---------------------------------------------------------------------------
# bilinear programs


class BilinearProgram:
    """A program affine in base variables ``x`` for fixed ``gamma`` and vice versa.

    Subclasses provide ``base_lp(gamma)`` (an LP over ``x``), ``gamma_lp(x)``
    (an LP over ``gamma``; may return ``None`` when ``gamma`` is pinned) and
    ``objective(x, gamma)``.
    """

    gamma_dim: int = 0

    def base_lp(self, gamma: np.ndarray) -> LinearProgram:
        raise NotImplementedError

    def gamma_lp(self, x: np.ndarray) -> LinearProgram | None:
        return None

    def objective(self, x: np.ndarray, gamma: np.ndarray) -> float:
        return self.base_lp(gamma).objective(x)


@dataclass
class BilinearResult:
    best_value: float
    x: np.ndarray | None
    gamma: np.ndarray | None
    starts: int
    lp_solves: int
    heuristic: bool = True
    history: list = field(default_factory=list)


def _grid_points(dim: int, step: float) -> np.ndarray:
    levels = np.arange(0.0, 1.0 + 1e-12, step)
    mesh = np.meshgrid(*([levels] * dim), indexing="ij")
    return np.stack([g.ravel() for g in mesh], axis=1)


def bilinear_starts(gamma_dim: int, restarts: int, seed: int, grid_step: float = 0.25,
                    full_grid_limit: int = 4096) -> list[np.ndarray]:
    """Starting points: both all-0/all-1 corners, the coarse grid when it is small,
    then per restart one random corner, one random grid point and one uniform point.

    Each family comes from its own stream, so raising ``restarts`` only appends.
    """
    if gamma_dim == 0:
        return [np.zeros(0)]
    starts = [np.zeros(gamma_dim), np.ones(gamma_dim)]
    levels = np.arange(0.0, 1.0 + 1e-12, grid_step)
    if levels.size ** gamma_dim <= full_grid_limit:
        starts.extend(_grid_points(gamma_dim, grid_step))
    corner_rng = np.random.default_rng([seed, 0])
    grid_rng = np.random.default_rng([seed, 1])
    uniform_rng = np.random.default_rng([seed, 2])
    for _ in range(restarts):
        starts.append(corner_rng.integers(0, 2, gamma_dim).astype(float))
        starts.append(grid_rng.choice(levels, gamma_dim))
        starts.append(uniform_rng.random(gamma_dim))
    return starts


def solve_bilinear(program: BilinearProgram, restarts: int = 16, seed: int = 0,
                   grid_step: float = 0.25, max_alternations: int = 25,
                   tol: float = 1e-10, starts: Sequence[np.ndarray] | None = None,
                   stop_above: float | None = None) -> BilinearResult:
    """Multistart alternating maximization.  The value returned is a lower bound
    on the true maximum (heuristic search, not a certificate of optimality).

    ``stop_above`` ends the search early once a value above it is found.
    """
    dim = program.gamma_dim
    if starts is None:
        starts = bilinear_starts(dim, restarts, seed, grid_step)
    best = BilinearResult(-np.inf, None, None, 0, 0)
    solves = 0
    for k, gamma in enumerate(starts):
        gamma = np.asarray(gamma, dtype=float).copy()
        value = -np.inf
        x = x_gamma = None
        for _ in range(max_alternations):
            sol = solve(program.base_lp(gamma))
            solves += 1
            if not sol.optimal:
                break
            new_value = sol.objective_value
            improved = new_value > value + tol
            if new_value > value:
                value, x, x_gamma = new_value, sol.primal, gamma.copy()
            if dim == 0:
                break
            glp = program.gamma_lp(sol.primal)
            if glp is None:
                break
            gsol = solve(glp)
            solves += 1
            if not gsol.optimal:
                break
            new_gamma = np.clip(gsol.primal, 0.0, 1.0)
            if gsol.objective_value <= value + tol and not improved:
                break
            if np.allclose(new_gamma, gamma, atol=1e-12):
                break
            gamma = new_gamma
        if x is not None and value > best.best_value:
            best.best_value, best.x, best.gamma = value, x, x_gamma
        best.history.append(value)
        if stop_above is not None and best.best_value > stop_above:
            best.starts = k + 1
            break
    else:
        best.starts = len(starts)
    best.lp_solves = solves
    return best
