"""Additive angular margin (ArcFace) loss and its gradient, as pure functions.

For feature x_i with label y_i and unit class centers w_j::

    z_j = s * cos(theta_j)              for j != y_i
    z_y = s * cos(theta_y + m)
    loss_i = logsumexp(z) - z_y

with cos(theta_j) = <x_i, w_j>.  The loss is the mean over samples.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fairaudit.errors import InputError

CLAMP = 1e-7
UNIT_TOL = 1e-6


class MarginDomainError(InputError):
    def __init__(self, samples):
        self.samples = list(samples)
        super().__init__(f"theta + m >= pi for samples {self.samples[:20]}")


@dataclass(frozen=True, eq=False)
class MarginLossParams:
    s: float
    m: float
    class_centers: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.class_centers, dtype=np.float64)
        if w.ndim != 2:
            raise InputError("class_centers must be a C x dim matrix")
        if self.s <= 0:
            raise InputError("scale s must be positive")
        if not 0 <= self.m < np.pi / 2:
            raise InputError("margin m must lie in [0, pi/2)")
        if np.abs(np.linalg.norm(w, axis=1) - 1.0).max() > UNIT_TOL:
            raise InputError("class centers must be unit-normalized")
        object.__setattr__(self, "class_centers", w)


def _check(features, labels, params: MarginLossParams, check_unit: bool):
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    c, dim = params.class_centers.shape
    if x.ndim != 2 or x.shape[1] != dim:
        raise InputError(f"features must be n x {dim}")
    if y.shape != (len(x),) or not np.issubdtype(y.dtype, np.integer):
        raise InputError("labels must be one integer per feature row")
    if len(y) and (y.min() < 0 or y.max() >= c):
        raise InputError(f"labels must lie in [0, {c})")
    if check_unit and len(x):
        off = np.abs(np.linalg.norm(x, axis=1) - 1.0) > UNIT_TOL
        if off.any():
            raise InputError(f"feature rows {np.flatnonzero(off)[:20].tolist()} are not unit-normalized")
    return x, y


def _logits(x, y, params: MarginLossParams):
    cos = x @ params.class_centers.T
    rows = np.arange(len(x))
    c_y = np.clip(cos[rows, y], -1.0 + CLAMP, 1.0 - CLAMP)
    theta = np.arccos(c_y)
    bad = np.flatnonzero(theta + params.m >= np.pi)
    if len(bad):
        raise MarginDomainError(bad.tolist())
    z = params.s * cos
    z[rows, y] = params.s * np.cos(theta + params.m)
    return z, theta, c_y, cos[rows, y]


def _log_softmax(z):
    zmax = z.max(axis=1, keepdims=True)
    lse = zmax + np.log(np.exp(z - zmax).sum(axis=1, keepdims=True))
    return z - lse


def arcface_loss(features, labels, params: MarginLossParams, check_unit: bool = True) -> tuple[float, np.ndarray]:
    """Mean loss and per-sample losses."""
    x, y = _check(features, labels, params, check_unit)
    z, *_ = _logits(x, y, params)
    per_sample = -_log_softmax(z)[np.arange(len(x)), y]
    return float(per_sample.mean()), per_sample


def arcface_grad(features, labels, params: MarginLossParams, check_unit: bool = True) -> np.ndarray:
    """Gradient of the mean loss with respect to each feature row.

    The dot products are differentiated as functions of the raw rows (no
    projection back onto the sphere).  Where the target cosine is clamped
    its derivative is zero.
    """
    x, y = _check(features, labels, params, check_unit)
    n = len(x)
    z, theta, c_y, raw = _logits(x, y, params)
    rows = np.arange(n)
    probs = np.exp(_log_softmax(z))
    dz = probs
    dz[rows, y] -= 1.0
    dz /= n
    # d cos(theta + m) / d cos(theta) = sin(theta + m) / sin(theta)
    dtarget = np.sin(theta + params.m) / np.sin(theta)
    dtarget[(raw <= -1.0 + CLAMP) | (raw >= 1.0 - CLAMP)] = 0.0
    coef = params.s * dz
    coef_y = coef[rows, y].copy()
    coef[rows, y] = 0.0
    w = params.class_centers
    return coef @ w + (coef_y * dtarget)[:, None] * w[y]


def softmax_cross_entropy(logits, labels) -> tuple[float, np.ndarray]:
    z = np.asarray(logits, dtype=np.float64)
    per = -_log_softmax(z)[np.arange(len(z)), np.asarray(labels)]
    return float(per.mean()), per


def gradient_check(features, labels, params: MarginLossParams, h: float = 1e-6) -> float:
    """Max-norm relative error between analytic and central-difference gradients."""
    x = np.asarray(features, dtype=np.float64)
    analytic = arcface_grad(x, labels, params)
    numeric = np.zeros_like(x)
    for idx in np.ndindex(*x.shape):
        xp = x.copy()
        xm = x.copy()
        xp[idx] += h
        xm[idx] -= h
        numeric[idx] = (arcface_loss(xp, labels, params, check_unit=False)[0]
                        - arcface_loss(xm, labels, params, check_unit=False)[0]) / (2 * h)
    scale = max(np.abs(numeric).max(), np.abs(analytic).max(), 1e-12)
    return float(np.abs(analytic - numeric).max() / scale)


def random_fixture(seed: int, n: int = 5, dim: int = 8, classes: int = 4):
    """Unit features, labels and centers for gradient checks."""
    rng = np.random.default_rng(seed)
    w = rng.normal(size=(classes, dim))
    w /= np.linalg.norm(w, axis=1, keepdims=True)
    x = rng.normal(size=(n, dim))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    labels = rng.integers(0, classes, size=n)
    return x, labels, w
