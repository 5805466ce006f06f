"""Budgets on the unit simplex, overlap utility and L1 cost.

A budget assigns a fraction of a fixed fund to each of ``m`` projects.
Fractions are nonnegative and sum to one.  Two budgets are compared with
the overlap utility ``sum_j min(a_j, b_j)`` and the L1 cost
``sum_j |a_j - b_j|``; on the simplex the cost equals ``2 - 2 * utility``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

SIMPLEX_TOL = 1e-9


class BudgetError(ValueError):
    """Raised when a vector is not a valid budget or shapes disagree."""


def check_budget(values, m: int | None = None, caps=None, tol: float = SIMPLEX_TOL) -> np.ndarray:
    """Validate ``values`` as a simplex point and return it as a float array.

    No renormalization happens here; use :func:`normalize` explicitly.
    """
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise BudgetError("budget must be a nonempty 1-d vector")
    if m is not None and arr.size != m:
        raise BudgetError(f"budget has {arr.size} entries, expected {m}")
    if not np.all(np.isfinite(arr)):
        raise BudgetError("budget has non-finite entries")
    if np.any(arr < 0):
        raise BudgetError(f"budget has negative entry {arr.min():.3g}")
    total = float(arr.sum())
    if abs(total - 1.0) > tol:
        raise BudgetError(f"budget sums to {total!r}, not 1")
    if caps is not None:
        caps_arr = np.asarray(caps, dtype=float)
        if caps_arr.shape != arr.shape:
            raise BudgetError("caps must match the number of projects")
        if np.any(arr > caps_arr + tol):
            j = int(np.argmax(arr - caps_arr))
            raise BudgetError(f"project {j} exceeds its cap")
    return arr


def check_profile(votes, tol: float = SIMPLEX_TOL) -> np.ndarray:
    """Validate a 2-d array of votes (one row per voter) and return it."""
    arr = np.asarray(votes, dtype=float)
    if arr.ndim != 2:
        raise BudgetError("profile must be a 2-d array (voters x projects)")
    if arr.shape[0] == 0:
        raise BudgetError("profile has no voters")
    if arr.shape[1] == 0:
        raise BudgetError("profile has no projects")
    if not np.all(np.isfinite(arr)):
        raise BudgetError("profile has non-finite entries")
    if np.any(arr < 0):
        i = int(np.argwhere(arr < 0)[0, 0])
        raise BudgetError(f"vote {i} has a negative entry")
    sums = arr.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > tol)
    if bad.size:
        raise BudgetError(f"vote {int(bad[0])} sums to {sums[bad[0]]!r}, not 1")
    return arr


def normalize(values) -> np.ndarray:
    """Rescale a nonnegative vector to sum to one."""
    arr = np.asarray(values, dtype=float)
    if np.any(arr < 0):
        raise BudgetError("cannot normalize a vector with negative entries")
    total = arr.sum()
    if total <= 0:
        raise BudgetError("cannot normalize a zero vector")
    return arr / total


@dataclass(frozen=True)
class Budget:
    """A validated point on the simplex, with optional per-project caps."""

    alloc: np.ndarray
    caps: np.ndarray | None = None

    def __post_init__(self):
        alloc = check_budget(self.alloc, caps=self.caps)
        alloc = alloc.copy()
        alloc.setflags(write=False)
        object.__setattr__(self, "alloc", alloc)
        if self.caps is not None:
            caps = np.array(self.caps, dtype=float)
            caps.setflags(write=False)
            object.__setattr__(self, "caps", caps)

    @property
    def m(self) -> int:
        return self.alloc.size

    def __array__(self, dtype=None, copy=None):
        return self.alloc if dtype is None else self.alloc.astype(dtype)

    def __len__(self) -> int:
        return self.alloc.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, Budget):
            return NotImplemented
        return bool(np.array_equal(self.alloc, other.alloc))

    def __hash__(self) -> int:
        return hash(self.alloc.tobytes())


@dataclass(frozen=True)
class VoteProfile:
    """Ordered, nonempty list of votes over a shared set of projects."""

    votes: np.ndarray
    names: tuple[str, ...] | None = None
    caps: np.ndarray | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        votes = check_profile(self.votes).copy()
        votes.setflags(write=False)
        object.__setattr__(self, "votes", votes)
        if self.names is not None:
            names = tuple(str(s) for s in self.names)
            if len(names) != votes.shape[1]:
                raise BudgetError("project names do not match the project count")
            object.__setattr__(self, "names", names)
        if self.caps is not None:
            caps = np.array(self.caps, dtype=float)
            if caps.shape != (votes.shape[1],):
                raise BudgetError("caps do not match the project count")
            if np.any(votes > caps + SIMPLEX_TOL):
                raise BudgetError("a vote exceeds a project cap")
            caps.setflags(write=False)
            object.__setattr__(self, "caps", caps)

    @classmethod
    def from_rows(cls, rows: Iterable[Sequence[float]], **kwargs) -> "VoteProfile":
        return cls(np.array([list(r) for r in rows], dtype=float), **kwargs)

    @property
    def n(self) -> int:
        return self.votes.shape[0]

    @property
    def m(self) -> int:
        return self.votes.shape[1]

    def __len__(self) -> int:
        return self.n

    def __getitem__(self, i: int) -> np.ndarray:
        return self.votes[i]

    def subset(self, voters: Sequence[int]) -> "VoteProfile":
        return VoteProfile(self.votes[list(voters)], names=self.names, caps=self.caps)


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape[-1] != b.shape[-1]:
        raise BudgetError(f"dimension mismatch: {a.shape[-1]} vs {b.shape[-1]} projects")
    return a, b


def overlap_utility(a, b) -> float | np.ndarray:
    """Sum over projects of the smaller allocation.  Broadcasts over leading axes."""
    a, b = _pair(a, b)
    out = np.minimum(a, b).sum(axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def cost(a, b) -> float | np.ndarray:
    """L1 distance between two budgets.  Broadcasts over leading axes."""
    a, b = _pair(a, b)
    out = np.abs(a - b).sum(axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def social_cost(profile, b) -> float:
    """Total cost of outcome ``b`` summed over all voters of ``profile``."""
    votes = profile.votes if isinstance(profile, VoteProfile) else check_profile(profile)
    b = np.asarray(b, dtype=float)
    if b.shape != (votes.shape[1],):
        raise BudgetError(f"dimension mismatch: {b.size} vs {votes.shape[1]} projects")
    return float(np.abs(votes - b).sum())
