"""Pointwise loss functions and their gradients: squared, RU, dRU, squared pinball.

All losses accept scalars or numpy arrays (broadcasting elementwise) and are
pure functions; gradients are subgradients, taking the lower branch at hinge
and indicator boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

DIRECTION_DOWN = -1
DIRECTION_NONE = 0
DIRECTION_UP = 1

_LOSS_KINDS = ("squared", "ru", "dru", "pinball")


@dataclass(frozen=True)
class MetaInfo:
    """Robustness meta-information for one target.

    gamma bounds the conditional density ratio between the target and sampled
    distributions (gamma = 1 means no bias). direction says on which side of
    the sample the population mean is believed to lie: +1 above, -1 below,
    0 for no directional information (plain RU behavior, or gamma = 1).
    """

    gamma: float
    direction: int

    def __post_init__(self) -> None:
        if not np.isfinite(self.gamma) or self.gamma < 1.0:
            raise ParameterError(f"gamma must be finite and >= 1, got {self.gamma}")
        if self.direction not in (DIRECTION_DOWN, DIRECTION_NONE, DIRECTION_UP):
            raise ParameterError(f"direction must be -1, 0 or +1, got {self.direction}")


@dataclass(frozen=True)
class LossSpec:
    """Which pointwise loss to train with, plus its parameters.

    kind            one of "squared", "ru", "dru", "pinball"
    meta            required for "ru" and "dru"
    pinball_p       required for "pinball", in (0, 1)
    """

    kind: str
    meta: MetaInfo | None = None
    pinball_p: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in _LOSS_KINDS:
            raise ParameterError(f"unknown loss kind {self.kind!r}, expected one of {_LOSS_KINDS}")
        if self.kind in ("ru", "dru"):
            if self.meta is None:
                raise ParameterError(f"loss kind {self.kind!r} requires meta")
            if self.kind == "dru" and self.meta.direction == DIRECTION_NONE and self.meta.gamma > 1.0:
                raise ParameterError("dru with direction=0 and gamma > 1 is undefined; use kind='ru'")
        elif self.meta is not None:
            raise ParameterError(f"loss kind {self.kind!r} does not take meta")
        if self.kind == "pinball":
            if self.pinball_p is None or not (0.0 < self.pinball_p < 1.0):
                raise ParameterError(f"pinball requires pinball_p in (0, 1), got {self.pinball_p}")
        elif self.pinball_p is not None:
            raise ParameterError(f"loss kind {self.kind!r} does not take pinball_p")

    @property
    def needs_alpha(self) -> bool:
        return self.kind in ("ru", "dru")


def squared_loss(z, y):
    """(z - y)**2."""
    return (np.asarray(z, dtype=float) - np.asarray(y, dtype=float)) ** 2


def ru_loss(z, a, y, gamma: float):
    """Robust loss over a gamma-bounded density-ratio ball.

    gamma**-1 * L + (1 - gamma**-1) * a + (gamma - gamma**-1) * (L - a)+
    with L the squared loss. Collapses to the squared loss at gamma = 1.
    """
    if gamma < 1.0:
        raise ParameterError(f"gamma must be >= 1, got {gamma}")
    g_inv = 1.0 / gamma
    loss = squared_loss(z, y)
    a = np.asarray(a, dtype=float)
    hinge = np.maximum(loss - a, 0.0)
    return g_inv * loss + (1.0 - g_inv) * a + (gamma - g_inv) * hinge


def _dru_gate(z, y, direction: int):
    """True where the robustness surcharge applies: the observation lies on
    the side of the prediction the population is believed to lean toward
    (direction=+1: y above z; -1: y below z). Boundary z == y counts as off."""
    residual = np.asarray(y, dtype=float) - np.asarray(z, dtype=float)
    if direction == DIRECTION_UP:
        return residual > 0.0
    return residual < 0.0


def dru_loss(z, a, y, meta: MetaInfo):
    """Directional robust loss: the hinge surcharge is gated by residual side.

    gamma**-1 * L + (gamma - 1) * a
      + ((gamma**2 - 1) / gamma) * (L - a)+ * [observation on the `direction` side]

    For direction=+1 under-predictions carry the surcharge, pulling the fit
    upward (toward a population mean believed to be above the sample's);
    direction=-1 mirrors. Collapses to the squared loss at gamma = 1.
    """
    gamma = meta.gamma
    if meta.direction == DIRECTION_NONE:
        if gamma > 1.0:
            raise ParameterError("dru_loss needs direction in {-1, +1} when gamma > 1; use ru_loss")
        return squared_loss(z, y)
    g_inv = 1.0 / gamma
    loss = squared_loss(z, y)
    a = np.asarray(a, dtype=float)
    hinge = np.maximum(loss - a, 0.0)
    gate = _dru_gate(z, y, meta.direction)
    return g_inv * loss + (gamma - 1.0) * a + ((gamma * gamma - 1.0) / gamma) * hinge * gate


def pinball_loss(z, y, p: float):
    """Squared pinball: p*(z-y)**2 above the observation, (1-p)*(z-y)**2 below."""
    if not (0.0 < p < 1.0):
        raise ParameterError(f"p must be in (0, 1), got {p}")
    z = np.asarray(z, dtype=float)
    y = np.asarray(y, dtype=float)
    weight = np.where(z > y, p, 1.0 - p)
    return weight * (z - y) ** 2


def loss_value(spec: LossSpec, z, a, y):
    """Evaluate the configured loss pointwise. `a` is ignored unless needed."""
    if spec.kind == "squared":
        return squared_loss(z, y)
    if spec.kind == "ru":
        return ru_loss(z, a, y, spec.meta.gamma)
    if spec.kind == "dru":
        return dru_loss(z, a, y, spec.meta)
    return pinball_loss(z, y, spec.pinball_p)


def loss_gradients(spec: LossSpec, z, a, y):
    """(dLoss/dz, dLoss/da) pointwise subgradients.

    At hinge and gate boundaries the inactive (lower) branch's gradient is
    returned; the indicators are treated as locally constant in z.
    """
    z = np.asarray(z, dtype=float)
    a = np.asarray(a, dtype=float)
    y = np.asarray(y, dtype=float)
    diff = z - y
    if spec.kind == "squared":
        return 2.0 * diff, np.zeros_like(a)
    if spec.kind == "pinball":
        p = spec.pinball_p
        weight = np.where(diff > 0.0, p, np.where(diff < 0.0, 1.0 - p, 0.0))
        return 2.0 * weight * diff, np.zeros_like(a)
    gamma = spec.meta.gamma
    g_inv = 1.0 / gamma
    active = squared_loss(z, y) - a > 0.0
    if spec.kind == "ru":
        coef = gamma - g_inv
        dz = 2.0 * diff * (g_inv + coef * active)
        da = (1.0 - g_inv) - coef * active
        return dz, da
    # dru
    if spec.meta.direction == DIRECTION_NONE:
        return 2.0 * diff, np.zeros_like(a)
    coef = (gamma * gamma - 1.0) / gamma
    gated = active & _dru_gate(z, y, spec.meta.direction)
    dz = 2.0 * diff * (g_inv + coef * gated)
    da = (gamma - 1.0) - coef * gated
    return dz, da
