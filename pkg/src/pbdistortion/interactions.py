"""Project interactions: perfect complements and perfect substitutes.

Projects are partitioned into complement groups (usable only together,
so a group is worth ``size * min``), substitute groups (interchangeable,
so a group is worth its ``max``) and regular singletons.  The efficiency
vector ``f(b)`` lists these worths in the order complements, substitutes,
regular projects; it sums to at most one, with equality exactly when ``b``
funds every complement group evenly and at most one project per
substitute group.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .budget_core import Budget, check_budget
from .mechanisms import FillStrategy, PROPORTIONAL, median_scheme

RESPECT_TOL = 1e-9


class InteractionError(ValueError):
    """Malformed interaction spec or a spec that does not fit the budget."""


@dataclass(frozen=True)
class InteractionSpec:
    """Groups over ``m`` projects; projects not listed are regular."""

    m: int
    complements: tuple[tuple[int, ...], ...] = ()
    substitutes: tuple[tuple[int, ...], ...] = ()

    def __post_init__(self):
        comp = tuple(tuple(int(j) for j in g) for g in self.complements)
        subs = tuple(tuple(int(j) for j in g) for g in self.substitutes)
        object.__setattr__(self, "complements", comp)
        object.__setattr__(self, "substitutes", subs)
        seen: set[int] = set()
        for g in comp + subs:
            if len(g) < 2:
                raise InteractionError(f"group {g} needs at least two projects")
            for j in g:
                if not 0 <= j < self.m:
                    raise InteractionError(f"project {j} outside 0..{self.m - 1}")
                if j in seen:
                    raise InteractionError(f"project {j} appears in two groups")
                seen.add(j)

    @classmethod
    def regular(cls, m: int) -> "InteractionSpec":
        return cls(m)

    @property
    def regulars(self) -> tuple[int, ...]:
        grouped = {j for g in self.complements + self.substitutes for j in g}
        return tuple(j for j in range(self.m) if j not in grouped)

    @property
    def groups(self) -> list[tuple[str, tuple[int, ...]]]:
        """All groups in efficiency-vector order, tagged by kind."""
        return ([("complement", g) for g in self.complements]
                + [("substitute", g) for g in self.substitutes]
                + [("regular", (j,)) for j in self.regulars])

    def sizes(self) -> list[int]:
        return [len(g) for _, g in self.groups]

    def to_dict(self) -> dict:
        return {"complements": [list(g) for g in self.complements],
                "substitutes": [list(g) for g in self.substitutes]}

    @classmethod
    def from_dict(cls, m: int, data: dict | None) -> "InteractionSpec":
        data = data or {}
        return cls(m, tuple(map(tuple, data.get("complements", []))),
                   tuple(map(tuple, data.get("substitutes", []))))


def _alloc(b, spec: InteractionSpec) -> np.ndarray:
    arr = b.alloc if isinstance(b, Budget) else np.asarray(b, dtype=float)
    if arr.shape != (spec.m,):
        raise InteractionError(f"budget has {arr.size} projects, spec expects {spec.m}")
    return arr


def efficiency(b, spec: InteractionSpec) -> np.ndarray:
    arr = _alloc(b, spec)
    out = []
    for kind, g in spec.groups:
        vals = arr[list(g)]
        if kind == "complement":
            out.append(len(g) * vals.min())
        elif kind == "substitute":
            out.append(vals.max())
        else:
            out.append(vals[0])
    return np.array(out)


def respects_interactions(b, spec: InteractionSpec, tol: float = RESPECT_TOL) -> bool:
    return bool(abs(efficiency(b, spec).sum() - 1.0) <= tol)


def group_respects(b, spec: InteractionSpec, q: int, tol: float = RESPECT_TOL) -> bool:
    """Direct check of one group: even funding (complements) or one funded project (substitutes)."""
    kind, g = spec.groups[q]
    vals = _alloc(b, spec)[list(g)]
    if kind == "complement":
        return bool(vals.max() - vals.min() <= tol)
    if kind == "substitute":
        return bool(np.sum(vals > tol) <= 1)
    return True


def interaction_utility(a, b, spec: InteractionSpec) -> float:
    """Overlap utility measured on efficiency vectors."""
    return float(np.minimum(efficiency(a, spec), efficiency(b, spec)).sum())


def _freed(arr: np.ndarray, kind: str, g: tuple[int, ...]) -> tuple[np.ndarray, float]:
    """Strip a group down to what it uses; return the new vector and the freed amount."""
    out = arr.copy()
    idx = list(g)
    vals = arr[idx]
    if kind == "complement":
        out[idx] = vals.min()
    else:
        keep = int(np.argmax(vals))
        cut = np.zeros_like(vals)
        cut[keep] = vals[keep]
        out[idx] = cut
    return out, float(arr.sum() - out.sum())


def _add_to_group(arr: np.ndarray, kind: str, g: tuple[int, ...], amount: float) -> np.ndarray:
    out = arr.copy()
    idx = list(g)
    if kind == "complement":
        out[idx] += amount / len(g)
    else:
        out[idx[int(np.argmax(arr[idx]))]] += amount
    return out


def violating_groups(b, spec: InteractionSpec, tol: float = RESPECT_TOL) -> list[int]:
    return [q for q in range(len(spec.groups)) if not group_respects(b, spec, q, tol)]


def repair(b, spec: InteractionSpec, target: int | None = None, tol: float = RESPECT_TOL) -> Budget:
    """One Pareto step: free the unused funds of the first violating group and give them to ``target``.

    The freed amount is the excess above the minimum in a complement group,
    or everything but the largest project in a substitute group.  It goes to
    group ``target`` (default: the violating group itself), spread evenly for
    a complement group or to the most funded project of a substitute group.
    The violating group keeps its efficiency value; the target's rises by
    the freed amount.  A respecting budget is returned unchanged.
    """
    arr = check_budget(_alloc(b, spec))
    bad = violating_groups(arr, spec, tol)
    if not bad:
        return Budget(arr)
    groups = spec.groups
    g = bad[0]
    out, freed = _freed(arr, *groups[g])
    k = g if target is None else int(target)
    if not 0 <= k < len(groups):
        raise InteractionError(f"target group {k} out of range")
    out = _add_to_group(out, *groups[k], freed)
    return Budget(check_budget(out))


def repair_to_fixpoint(b, spec: InteractionSpec, reference=None,
                       tol: float = RESPECT_TOL) -> tuple[Budget, int]:
    """Repeat :func:`repair` until ``b`` respects the interactions.

    With a ``reference`` budget the target is the group where the reference
    has the largest efficiency lead, so its utility rises strictly while it
    leads anywhere.  Returns the budget and the number of steps, which is at
    most the number of non-regular groups.
    """
    cur = Budget(check_budget(_alloc(b, spec)))
    ref = None if reference is None else efficiency(reference, spec)
    limit = len(spec.complements) + len(spec.substitutes)
    steps = 0
    while violating_groups(cur, spec, tol):
        if steps >= limit:
            raise InteractionError("repair did not converge")  # unreachable for valid specs
        target = None
        if ref is not None:
            lead = ref - efficiency(cur, spec)
            if lead.max() > tol:
                target = int(np.argmax(lead))
        cur = repair(cur, spec, target, tol)
        steps += 1
    return cur, steps


def interaction_median(a, b, c, spec: InteractionSpec, fill: FillStrategy = PROPORTIONAL,
                       rng: np.random.Generator | None = None) -> Budget:
    """Median-scheme outcome repaired until it respects the interactions.

    This does not claim to maximize the interaction-aware utility sum; it
    only moves the standard outcome monotonically toward a respecting one.
    """
    z = median_scheme(a, b, c, fill, rng).z
    reference = next((x for x in (a, b) if respects_interactions(x, spec)), None)
    return repair_to_fixpoint(z, spec, reference)[0]


def random_spec(m: int, rng: np.random.Generator, max_groups: int = 3) -> InteractionSpec:
    """Random partition used by property tests and the CLI generator."""
    perm = [int(j) for j in rng.permutation(m)]
    comps: list[tuple[int, ...]] = []
    subs: list[tuple[int, ...]] = []
    pos = 0
    for _ in range(int(rng.integers(0, max_groups + 1))):
        size = int(rng.integers(2, 4))
        if pos + size > m:
            break
        group = tuple(sorted(perm[pos:pos + size]))
        (comps if rng.random() < 0.5 else subs).append(group)
        pos += size
    return InteractionSpec(m, tuple(comps), tuple(subs))


def respecting_budget(spec: InteractionSpec, rng: np.random.Generator) -> Budget:
    """Random budget that respects ``spec``: one draw per group, spread to fit the group kind."""
    groups = spec.groups
    w = rng.dirichlet(np.ones(len(groups)))
    out = np.zeros(spec.m)
    for (kind, g), share in zip(groups, w):
        if kind == "complement":
            out[list(g)] = share / len(g)
        else:
            out[g[int(rng.integers(len(g)))]] = share
    return Budget(check_budget(out / out.sum()))


__all__ = [
    "InteractionError", "InteractionSpec", "efficiency", "group_respects", "interaction_median",
    "interaction_utility", "random_spec", "repair", "repair_to_fixpoint", "respecting_budget",
    "respects_interactions", "violating_groups",
]
