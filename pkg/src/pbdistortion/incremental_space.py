"""Incremental allocation tables indexed by voter subsets.

For a profile ``P`` of ``n`` votes and a project ``j``, the incremental
allocation of a subset ``S`` of voters is how far every member of ``S``
funds ``j`` above every non-member::

    X[j, S] = max(min_{i in S} v[i, j] - max_{i not in S} v[i, j], 0)

with the minimum over the empty set taken as 1 and the maximum over the
empty set taken as 0.  Subsets are bitmasks: bit ``i`` set means voter
``i`` belongs to ``S``.  Each project column sums to one, and summing the
entries that contain voter ``i`` recovers ``v[i, j]``.

An outcome table ``Z`` for a budget ``z`` records which part of each
``X[j, S]`` the outcome also funds; it is the ``X`` table of the profile
extended by ``z``, read on the subsets that contain ``z``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .budget_core import BudgetError, VoteProfile, check_profile

MAX_VOTERS = 16
CLAMP_TOL = 1e-12
NEGATIVE_TOL = 1e-9


class TableError(ValueError):
    """Invalid table request (too many voters, bad subset, negative mass)."""


def popcount(masks) -> np.ndarray:
    masks = np.asarray(masks, dtype=np.int64)
    out = np.zeros(masks.shape, dtype=np.int64)
    m = masks.copy()
    while np.any(m):
        out += m & 1
        m >>= 1
    return out


def mask_of(members: Iterable[int]) -> int:
    out = 0
    for i in members:
        out |= 1 << int(i)
    return out


def members_of(mask: int) -> list[int]:
    return [i for i in range(int(mask).bit_length()) if mask >> i & 1]


def clamp_nonnegative(values: np.ndarray) -> np.ndarray:
    """Clamp tiny negative round-off to zero; reject real negatives."""
    values = np.asarray(values, dtype=float)
    low = values.min() if values.size else 0.0
    if low < -NEGATIVE_TOL:
        raise TableError(f"incremental allocation {low:.3e} is negative")
    if low < 0:
        values = np.where(values < 0, 0.0, values)
    return values


@dataclass(frozen=True)
class AllocTable:
    """Per-project incremental allocations over all subsets of ``n`` voters.

    ``per_project`` has shape ``(m, 2**n)``; ``aggregated`` is its column sum.
    """

    n: int
    per_project: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.per_project, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 1 << self.n:
            raise TableError(f"table must have shape (m, {1 << self.n})")
        arr = clamp_nonnegative(arr).copy()
        arr.setflags(write=False)
        object.__setattr__(self, "per_project", arr)

    @property
    def m(self) -> int:
        return self.per_project.shape[0]

    @property
    def aggregated(self) -> np.ndarray:
        return self.per_project.sum(axis=0)

    def __getitem__(self, mask: int) -> float:
        return float(self.per_project[:, int(mask)].sum())

    def value(self, j: int, mask: int) -> float:
        return float(self.per_project[j, int(mask)])

    def total(self) -> float:
        return float(self.per_project.sum())


def _check_n(n: int) -> None:
    if n > MAX_VOTERS:
        raise TableError(f"{n} voters exceeds the exact-table limit of {MAX_VOTERS}")


def _votes(profile) -> np.ndarray:
    if isinstance(profile, VoteProfile):
        return profile.votes
    return check_profile(profile)


def incremental_columns(votes: np.ndarray) -> np.ndarray:
    """X values of a raw ``(n, m)`` array, returned with shape ``(m, 2**n)``.

    The rows need not be budgets; only the order statistics matter.
    """
    votes = np.asarray(votes, dtype=float)
    n, m = votes.shape
    _check_n(n)
    size = 1 << n
    min_in = np.empty((size, m))
    max_in = np.empty((size, m))
    min_in[0] = 1.0
    max_in[0] = 0.0
    for mask in range(1, size):
        low = mask & -mask
        i = low.bit_length() - 1
        rest = mask ^ low
        min_in[mask] = np.minimum(min_in[rest], votes[i]) if rest else votes[i]
        max_in[mask] = np.maximum(max_in[rest], votes[i]) if rest else votes[i]
    full = size - 1
    max_out = max_in[full ^ np.arange(size)]
    return np.maximum(min_in - max_out, 0.0).T


def subset_extremes(votes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-subset minimum inside and maximum outside for batches of profiles.

    ``votes`` has shape ``(..., n, m)``; both results have shape
    ``(..., 2**n, m)``.  The X entry of subset ``S`` is
    ``max(min_in[S] - max_out[S], 0)``; the outcome entry for a budget ``z``
    is ``max(min(min_in[S], z) - max_out[S], 0)``.
    """
    votes = np.asarray(votes, dtype=float)
    n = votes.shape[-2]
    _check_n(n)
    size = 1 << n
    shape = votes.shape[:-2] + (size, votes.shape[-1])
    min_in = np.empty(shape)
    max_in = np.empty(shape)
    min_in[..., 0, :] = 1.0
    max_in[..., 0, :] = 0.0
    for mask in range(1, size):
        low = mask & -mask
        i = low.bit_length() - 1
        rest = mask ^ low
        vi = votes[..., i, :]
        min_in[..., mask, :] = np.minimum(min_in[..., rest, :], vi) if rest else vi
        max_in[..., mask, :] = np.maximum(max_in[..., rest, :], vi) if rest else vi
    max_out = max_in[..., (size - 1) ^ np.arange(size), :]
    return min_in, max_out


def outcome_entries(min_in: np.ndarray, max_out: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Per-project outcome entries of budgets ``z`` (shape ``(..., m)``), shape ``(..., 2**n, m)``."""
    z = np.asarray(z, dtype=float)[..., None, :]
    return np.maximum(np.minimum(min_in, z) - max_out, 0.0)


def build_X(profile) -> AllocTable:
    """Incremental allocation table of a profile."""
    votes = _votes(profile)
    return AllocTable(votes.shape[0], incremental_columns(votes))


def restrict_mask(masks, keep: int) -> np.ndarray:
    """Compress each mask onto the bit positions listed in ``keep``."""
    masks = np.asarray(masks, dtype=np.int64)
    out = np.zeros_like(masks)
    for k, i in enumerate(members_of(keep)):
        out |= ((masks >> i) & 1) << k
    return out


def project_X(table: AllocTable, Q: int) -> AllocTable:
    """Table over the sub-profile ``Q`` obtained by summing out the other voters.

    Voters of ``Q`` keep their relative order; bit ``k`` of the result is the
    ``k``-th smallest member of ``Q``.
    """
    full = (1 << table.n) - 1
    Q = int(Q)
    if Q & ~full or Q == 0:
        raise TableError("Q must be a nonempty subset of the table's voters")
    k = len(members_of(Q))
    target = restrict_mask(np.arange(1 << table.n), Q)
    out = np.zeros((table.m, 1 << k))
    for j in range(table.m):
        out[j] = np.bincount(target, weights=table.per_project[j], minlength=1 << k)
    return AllocTable(k, out)


def build_Z(profile, z) -> AllocTable:
    """Outcome table of budget ``z`` relative to ``profile``."""
    votes = _votes(profile)
    z = np.asarray(z, dtype=float)
    if z.shape != (votes.shape[1],):
        raise BudgetError(f"dimension mismatch: {z.size} vs {votes.shape[1]} projects")
    n = votes.shape[0]
    _check_n(n + 1)
    ext = incremental_columns(np.vstack([votes, z]))
    return AllocTable(n, ext[:, 1 << n:])


def utility_from_table(table: AllocTable, voter: int) -> float:
    """Sum of aggregated entries over subsets containing ``voter``."""
    if not 0 <= voter < table.n:
        raise IndexError(f"voter {voter} out of range for {table.n} voters")
    masks = np.arange(1 << table.n)
    return float(table.aggregated[(masks >> voter) & 1 == 1].sum())


def _strict_superset_any(flags: np.ndarray, n: int) -> np.ndarray:
    """For each mask S: is ``flags[T]`` true for some strict superset T of S."""
    sup = flags.copy()
    idx = np.arange(1 << n)
    for i in range(n):
        without = (idx >> i) & 1 == 0
        sup[without] |= sup[idx[without] | (1 << i)]
    strict = np.zeros_like(flags)
    for i in range(n):
        without = (idx >> i) & 1 == 0
        strict[without] |= sup[idx[without] | (1 << i)]
    return strict


def monotonicity_check(X: AllocTable, Z: AllocTable, tol: float = 1e-12) -> bool:
    """Whether a partially accepted entry forces every strict superset to be fully accepted."""
    if X.n != Z.n or X.m != Z.m:
        raise TableError("tables must share voters and projects")
    for j in range(X.m):
        x = X.per_project[j]
        z = Z.per_project[j]
        partial = (z > tol) & (z < x - tol)
        if not partial.any():
            continue
        short = np.abs(z - x) > tol
        if np.any(partial & _strict_superset_any(short, X.n)):
            return False
    return True


def subsets_containing(n: int, voter: int) -> np.ndarray:
    masks = np.arange(1 << n)
    return masks[(masks >> voter) & 1 == 1]


def supersets_within(base: int, free: int) -> list[int]:
    """All masks ``base | U`` for ``U`` ranging over subsets of ``free``."""
    out = []
    sub = free
    while True:
        out.append(base | sub)
        if sub == 0:
            break
        sub = (sub - 1) & free
    return sorted(out)


def label_mask(labels: Sequence[str], word: str) -> int:
    """Mask for a word of single-letter voter labels, e.g. ``label_mask("abc", "ac")``."""
    return mask_of(labels.index(ch) for ch in word)
