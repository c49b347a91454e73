"""Differentiable distances between two sample batches.

``mmd_gaussian`` is the biased (V-statistic) MMD with a sum of Gaussian
kernels over several bandwidths; diagonal self-terms are included.
``coral`` matches first and second moments.

Both return the scalar value, and with ``return_grad=True`` also the exact
gradients with respect to each input batch.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DegenerateBatchError, ShapeError

DEFAULT_GAMMAS = (0.001, 0.01, 0.1, 1.0, 10.0, 100.0, 1000.0)
CLAMP_MIN = 1e-30


def _pair(A, B):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != B.shape[1]:
        raise ShapeError(f"feature dimensions differ: {A.shape[1]} vs {B.shape[1]}")
    if A.shape[1] < 1 or A.shape[0] < 1 or B.shape[0] < 1:
        raise ShapeError("batches must be non-empty with at least one feature")
    return A, B


def _raw_sq_dists(A, B):
    # ||a||^2 + ||b||^2 - 2 a.b, same expansion as the usual cdist shortcut
    a2 = (A * A).sum(axis=1)[:, None]
    b2 = (B * B).sum(axis=1)[None, :]
    return a2 + b2 - 2.0 * (A @ B.T)


def pairwise_sq_dists(A, B):
    """Squared Euclidean distances between rows, clamped below at 1e-30."""
    A, B = _pair(A, B)
    return np.maximum(_raw_sq_dists(A, B), CLAMP_MIN)


def _kernel_terms(A, B, gammas):
    raw = _raw_sq_dists(A, B)
    live = raw > CLAMP_MIN
    D = np.where(live, raw, CLAMP_MIN)
    K = np.zeros_like(D)
    dK = np.zeros_like(D)  # dK/dD
    for g in gammas:
        e = np.exp(-g * D)
        K += e
        dK -= g * e
    return K, np.where(live, dK, 0.0)


def _sq_dist_backward(A, B, W):
    """Gradients of sum(W * D(A, B)) with respect to A and B."""
    gA = 2.0 * (W.sum(axis=1)[:, None] * A - W @ B)
    gB = 2.0 * (W.sum(axis=0)[:, None] * B - W.T @ A)
    return gA, gB


def mmd_gaussian(X, Y, gammas=DEFAULT_GAMMAS, return_grad=False):
    """mean(Kxx) + mean(Kyy) - 2 mean(Kxy) with K = sum_g exp(-g * ||.||^2)."""
    X, Y = _pair(X, Y)
    gammas = tuple(gammas)
    if not gammas or any(g <= 0 for g in gammas):
        raise ConfigurationError("gammas must be a non-empty list of positive numbers")
    Kxx, dKxx = _kernel_terms(X, X, gammas)
    Kyy, dKyy = _kernel_terms(Y, Y, gammas)
    Kxy, dKxy = _kernel_terms(X, Y, gammas)
    value = float(Kxx.mean() + Kyy.mean() - 2.0 * Kxy.mean())
    if not return_grad:
        return value
    n, m = X.shape[0], Y.shape[0]
    a, b = _sq_dist_backward(X, X, dKxx / (n * n))
    gX = a + b
    a, b = _sq_dist_backward(Y, Y, dKyy / (m * m))
    gY = a + b
    a, b = _sq_dist_backward(X, Y, -2.0 * dKxy / (n * m))
    return value, gX + a, gY + b


def _moments(X):
    mu = X.mean(axis=0)
    Xc = X - mu
    return mu, Xc, Xc.T @ Xc / (X.shape[0] - 1)


def coral(X, Y, return_grad=False):
    """Mean squared difference of the means plus that of the covariances.

    Covariances use the 1/(n-1) normalization; both terms are averaged over
    their entries so the scale does not depend on the feature count.
    """
    X, Y = _pair(X, Y)
    if X.shape[0] < 2 or Y.shape[0] < 2:
        raise DegenerateBatchError("coral needs at least 2 rows per batch")
    d = X.shape[1]
    mx, Xc, Cx = _moments(X)
    my, Yc, Cy = _moments(Y)
    dm = mx - my
    dC = Cx - Cy
    value = float((dm * dm).mean() + (dC * dC).mean())
    if not return_grad:
        return value
    n, m = X.shape[0], Y.shape[0]
    G = 2.0 * dC / (d * d)
    gX = 2.0 * dm / d / n + 2.0 * Xc @ G / (n - 1)
    gY = -2.0 * dm / d / m - 2.0 * Yc @ G / (m - 1)
    return value, np.broadcast_to(gX, X.shape).copy(), np.broadcast_to(gY, Y.shape).copy()


@dataclass
class DistanceKind:
    """Which distance to use, with an evaluation counter for cost accounting."""

    variant: str = "mmd"  # "mmd" | "coral"
    gammas: tuple = DEFAULT_GAMMAS
    evaluations: int = field(default=0, compare=False)

    def __post_init__(self):
        if self.variant not in ("mmd", "coral"):
            raise ConfigurationError(f"unknown distance {self.variant!r}")
        self.gammas = tuple(float(g) for g in self.gammas)
        if self.variant == "mmd" and (not self.gammas or any(g <= 0 for g in self.gammas)):
            raise ConfigurationError("gammas must be a non-empty list of positive numbers")

    @classmethod
    def mmd(cls, gammas=DEFAULT_GAMMAS):
        return cls("mmd", tuple(gammas))

    @classmethod
    def coral(cls):
        return cls("coral")

    def value(self, X, Y):
        self.evaluations += 1
        if self.variant == "mmd":
            return mmd_gaussian(X, Y, self.gammas)
        return coral(X, Y)

    def value_and_grad(self, X, Y):
        self.evaluations += 1
        if self.variant == "mmd":
            return mmd_gaussian(X, Y, self.gammas, return_grad=True)
        return coral(X, Y, return_grad=True)
