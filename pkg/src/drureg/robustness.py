"""Worst-case-distribution machinery over discrete empirical distributions.

Given an empirical loss distribution, the adversary reweights points by a
density ratio confined to [gamma**-1, gamma] while keeping a valid
distribution. The maximizing ratio profile is two-level: ratio gamma on the
highest-loss mass fraction 1/(gamma+1) (one boundary atom split fractionally)
and gamma**-1 everywhere else. The directional variant restricts the
upweighted points to those whose residual sign matches the announced bias
direction. An independent LP solver cross-checks the greedy constructions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .errors import InfeasibleError, ParameterError

_NORM_TOL = 1e-9


@dataclass(frozen=True)
class DiscreteDistribution:
    """Weighted support points (value_i, prob_i) with probs > 0 summing to 1."""

    values: np.ndarray
    probs: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        probs = np.asarray(self.probs, dtype=float)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "probs", probs)
        if values.ndim != 1 or values.shape != probs.shape:
            raise ParameterError("values and probs must be 1-D arrays of equal length")
        if values.size == 0:
            raise ParameterError("distribution needs at least one point")
        if not np.isfinite(values).all() or not np.isfinite(probs).all():
            raise ParameterError("distribution entries must be finite")
        if (probs <= 0).any():
            raise ParameterError("probabilities must be strictly positive")
        if abs(probs.sum() - 1.0) > 1e-12:
            raise ParameterError(f"probabilities must sum to 1, got {probs.sum()!r}")

    @classmethod
    def from_points(cls, points) -> "DiscreteDistribution":
        values, probs = zip(*points)
        return cls(np.array(values, dtype=float), np.array(probs, dtype=float))

    def mean(self) -> float:
        return float(self.values @ self.probs)


@dataclass(frozen=True)
class WorstCase:
    """A worst-case reweighting: per-point density ratios and the achieved sup."""

    ratios: np.ndarray
    sup_value: float

    def validate(self, dist: DiscreteDistribution, gamma: float) -> None:
        """Check the box and normalization invariants against their source distribution."""
        ratios = np.asarray(self.ratios, dtype=float)
        lo, hi = 1.0 / gamma, gamma
        if (ratios < lo - _NORM_TOL).any() or (ratios > hi + _NORM_TOL).any():
            raise ParameterError("ratio outside [gamma**-1, gamma]")
        total = float(ratios @ dist.probs)
        if abs(total - 1.0) > _NORM_TOL:
            raise ParameterError(f"reweighted mass is {total!r}, expected 1")


def eta(gamma: float) -> float:
    """Mass-split point gamma / (gamma + 1) of the two-level worst case.

    Satisfies gamma * (1 - eta) + gamma**-1 * eta = 1: the fraction 1 - eta
    of the mass can carry ratio gamma while the rest carries gamma**-1 and
    the reweighting stays a valid distribution.
    """
    if not np.isfinite(gamma) or gamma < 1.0:
        raise ParameterError(f"gamma must be finite and >= 1, got {gamma}")
    return gamma / (gamma + 1.0)


def quantile(dist: DiscreteDistribution, level: float) -> float:
    """Lower quantile: smallest support value whose CDF reaches `level`."""
    if not (0.0 < level < 1.0):
        raise ParameterError(f"level must be in (0, 1), got {level}")
    order = np.argsort(dist.values, kind="stable")
    cum = np.cumsum(dist.probs[order])
    idx = int(np.searchsorted(cum, level - 1e-15))
    return float(dist.values[order[min(idx, dist.values.size - 1)]])


def cvar(dist: DiscreteDistribution, level: float) -> float:
    """Expectation over the top (1 - level) probability mass.

    The atom at the level-quantile is included fractionally so the
    conditioning mass is exactly 1 - level.
    """
    if not (0.0 < level < 1.0):
        raise ParameterError(f"level must be in (0, 1), got {level}")
    tail = 1.0 - level
    order = np.argsort(-dist.values, kind="stable")
    acc = 0.0
    remaining = tail
    for i in order:
        take = min(float(dist.probs[i]), remaining)
        acc += take * float(dist.values[i])
        remaining -= take
        if remaining <= 1e-15:
            break
    return acc / tail


def _greedy_fill(losses: np.ndarray, probs: np.ndarray, gamma: float,
                 raisable: np.ndarray) -> WorstCase:
    """Shared greedy: start all ratios at gamma**-1 and spend the unit-mass
    budget raising raisable points toward gamma in descending loss order,
    splitting one boundary point fractionally."""
    g_inv = 1.0 / gamma
    ratios = np.full(losses.shape, g_inv)
    budget = 1.0 - g_inv  # total extra weight available above the floor
    if budget > 0.0:
        capacity = float(((gamma - g_inv) * probs)[raisable].sum())
        if capacity < budget - _NORM_TOL:
            deficit = (budget - capacity) / (gamma - g_inv)
            raise InfeasibleError(
                "not enough raisable mass to renormalize the worst case: "
                f"short by {deficit:.6g} probability mass"
            )
        order = np.argsort(-losses, kind="stable")
        for i in order:
            if not raisable[i]:
                continue
            room = (gamma - g_inv) * probs[i]
            spend = min(room, budget)
            ratios[i] += spend / probs[i]
            budget -= spend
            if budget <= _NORM_TOL:
                break
    sup = float((ratios * probs) @ losses)
    return WorstCase(ratios=ratios, sup_value=sup)


def worst_case_ru(losses: DiscreteDistribution, gamma: float) -> WorstCase:
    """Maximize the reweighted mean loss over the box [gamma**-1, gamma]
    with total mass 1, by greedy fill from the highest loss down."""
    if gamma < 1.0:
        raise ParameterError(f"gamma must be >= 1, got {gamma}")
    raisable = np.ones(losses.values.shape, dtype=bool)
    return _greedy_fill(losses.values, losses.probs, gamma, raisable)


def worst_case_dru(losses: DiscreteDistribution, signs, meta) -> WorstCase:
    """Directional worst case: only points whose residual sign equals the
    announced direction may be upweighted above gamma**-1.

    Infeasible when the directional mass falls below 1/(gamma+1), the
    fraction that must carry ratio gamma for the reweighting to stay a
    distribution; the error names the missing mass.
    """
    signs = np.asarray(signs)
    if signs.shape != losses.values.shape:
        raise ParameterError("signs must align with the loss points")
    if not np.isin(signs, (-1, 1)).all():
        raise ParameterError("signs must be -1 or +1")
    if meta.direction not in (-1, 1):
        raise ParameterError("meta.direction must be -1 or +1")
    if meta.gamma == 1.0:
        return _greedy_fill(losses.values, losses.probs, 1.0, np.ones_like(signs, dtype=bool))
    return _greedy_fill(losses.values, losses.probs, meta.gamma, signs == meta.direction)


def sup_oracle_lp(losses: DiscreteDistribution, gamma: float, constraint=None) -> float:
    """Exact sup of the reweighted mean loss, solved as a linear program.

    Decision variables are the reweighted point masses w_i within
    [gamma**-1 p_i, gamma p_i] summing to 1; with a directional sign mask,
    points off the constraint direction are pinned at their floor. Solved
    with an off-the-shelf LP solver, independent of the greedy construction.
    """
    if gamma < 1.0:
        raise ParameterError(f"gamma must be >= 1, got {gamma}")
    probs = losses.probs
    lo = probs / gamma
    hi = probs * gamma
    if constraint is not None:
        mask_signs, direction = constraint
        mask_signs = np.asarray(mask_signs)
        hi = np.where(mask_signs == direction, hi, lo)
    res = linprog(
        c=-losses.values,
        A_eq=np.ones((1, probs.size)),
        b_eq=np.array([1.0]),
        bounds=list(zip(lo, hi)),
        method="highs",
    )
    if res.status == 2:
        raise InfeasibleError("LP constraint set is infeasible")
    if not res.success:
        raise RuntimeError(f"LP solver failed: {res.message}")
    return float(-res.fun)


def mean_shift(outcomes, probs, ratios) -> float:
    """E_Q[y] - E_P[y] for a reweighting: used to check ex post whether a
    directional worst case actually moves the mean to the announced side."""
    outcomes = np.asarray(outcomes, dtype=float)
    probs = np.asarray(probs, dtype=float)
    ratios = np.asarray(ratios, dtype=float)
    return float(((ratios - 1.0) * probs) @ outcomes)
