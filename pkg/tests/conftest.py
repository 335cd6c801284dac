"""Shared test helpers: finite-difference gradient oracle and small datasets."""

from __future__ import annotations

import numpy as np
import pytest

from drureg.losses import LossSpec, loss_gradients, loss_value
from drureg.nn import MLP, _forward_cached, backward, forward_batch, init_mlp, mlp_architecture


def total_loss(h: MLP, alpha: MLP | None, X, y, spec: LossSpec) -> float:
    z = forward_batch(h, X)
    a = forward_batch(alpha, X) if alpha is not None else np.zeros_like(z)
    return float(np.mean(loss_value(spec, z, a, y)))


def analytic_param_grads(h: MLP, alpha: MLP | None, X, y, spec: LossSpec):
    """Gradient of the mean pointwise loss w.r.t. every parameter of both nets."""
    z = forward_batch(h, X)
    a = forward_batch(alpha, X) if alpha is not None else np.zeros_like(z)
    dz, da = loss_gradients(spec, z, a, y)
    n = X.shape[0]
    grads_h = backward(h, X, dz / n)
    grads_a = backward(alpha, X, da / n) if alpha is not None else None
    return grads_h, grads_a


def fd_param_grads(h: MLP, alpha: MLP | None, X, y, spec: LossSpec, step: float = 1e-5):
    """Central finite differences over every weight and bias entry."""

    def perturb(net: MLP):
        grads = []
        for k in range(len(net.layers)):
            dw = np.zeros_like(net.weights[k])
            for idx in np.ndindex(net.weights[k].shape):
                orig = net.weights[k][idx]
                net.weights[k][idx] = orig + step
                up = total_loss(h, alpha, X, y, spec)
                net.weights[k][idx] = orig - step
                down = total_loss(h, alpha, X, y, spec)
                net.weights[k][idx] = orig
                dw[idx] = (up - down) / (2 * step)
            db = np.zeros_like(net.biases[k])
            for idx in np.ndindex(net.biases[k].shape):
                orig = net.biases[k][idx]
                net.biases[k][idx] = orig + step
                up = total_loss(h, alpha, X, y, spec)
                net.biases[k][idx] = orig - step
                down = total_loss(h, alpha, X, y, spec)
                net.biases[k][idx] = orig
                db[idx] = (up - down) / (2 * step)
            grads.append((dw, db))
        return grads

    grads_h = perturb(h)
    grads_a = perturb(alpha) if alpha is not None else None
    return grads_h, grads_a


def boundary_margin(h: MLP, alpha: MLP | None, X, y, spec: LossSpec) -> float:
    """Distance to the nearest nondifferentiable boundary: relu kinks,
    the z = y residual boundary, and the hinge L = a."""
    margins = []
    for net in (h,) + ((alpha,) if alpha is not None else ()):
        _, _, preacts = _forward_cached(net, np.asarray(X, dtype=float))
        for k, layer in enumerate(net.layers):
            if layer.activation == "relu":
                margins.append(np.abs(preacts[k]).min())
    z = forward_batch(h, X)
    margins.append(np.abs(z - y).min())
    if spec.kind in ("ru", "dru"):
        a = forward_batch(alpha, X)
        margins.append(np.abs((z - y) ** 2 - a).min())
    return float(min(margins))


def sample_smooth_instance(rng: np.random.Generator, spec: LossSpec, n_features: int = 3,
                           batch: int = 4, margin: float = 1e-3):
    """Draw (h, alpha, X, y) resampled until every boundary is at least
    `margin` away, so finite differences see a smooth function."""
    for _ in range(200):
        h = init_mlp(mlp_architecture(n_features, 3), seed=int(rng.integers(2**31)))
        alpha = None
        if spec.needs_alpha:
            alpha = init_mlp(mlp_architecture(n_features, 3, output_activation="relu"),
                             seed=int(rng.integers(2**31)))
        X = rng.normal(size=(batch, n_features))
        y = rng.normal(size=batch)
        if boundary_margin(h, alpha, X, y, spec) > margin:
            return h, alpha, X, y
    raise AssertionError("could not sample an instance away from loss boundaries")


def max_rel_error(analytic, numeric) -> float:
    worst = 0.0
    for (aw, ab), (nw, nb) in zip(analytic, numeric):
        for a, n in ((aw, nw), (ab, nb)):
            diff = np.abs(a - n)
            scale = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-6)
            rel = np.where(diff < 1e-7, 0.0, diff / scale)
            worst = max(worst, float(rel.max()))
    return worst


@pytest.fixture
def rng():
    return np.random.default_rng(20220925)
