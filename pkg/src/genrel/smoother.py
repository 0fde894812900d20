"""Nonparametric conditional-mean smoother.

Local-linear regression (loess-style nearest-neighbor bandwidth) or a k-NN
kernel mean, evaluated at every sample point. Predictors are standardized
per column before distances are taken, so the fit does not depend on the
units of the predictors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.spatial import cKDTree

from .errors import DegenerateInputError

METHODS = ("local-linear", "k-nn-mean")
KERNELS = ("tricube", "uniform")

# elements per distance block; bounds peak memory at large n
_BLOCK_ELEMENTS = 2_000_000
DIRECT_LIMIT = 4000
_VERTICES_1D = 401
_VERTICES_2D = 41


@dataclass(frozen=True)
class SmootherConfig:
    method: str = "local-linear"
    span: float = 0.75
    k: int = 50
    kernel: str = "tricube"

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.kernel not in KERNELS:
            raise ValueError(f"kernel must be one of {KERNELS}, got {self.kernel!r}")
        if not 0.0 < self.span <= 1.0:
            raise ValueError(f"span must lie in (0, 1], got {self.span}")
        if int(self.k) != self.k or self.k < 2:
            raise ValueError(f"k must be an integer >= 2, got {self.k}")

    def neighborhood(self, n: int) -> int:
        if self.method == "local-linear":
            q = int(math.ceil(self.span * n))
        else:
            q = int(self.k)
        return max(2, min(q, n))

    def to_dict(self) -> dict:
        return {"method": self.method, "span": self.span, "k": self.k, "kernel": self.kernel}


def _as_predictors(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise ValueError("predictors must be a vector or an n x p matrix")
    return x


def standardize(x: np.ndarray) -> np.ndarray:
    x = _as_predictors(x)
    mu = x.mean(axis=0)
    sd = x.std(axis=0)
    # spread below rounding noise of the column magnitude counts as constant
    scale = np.maximum(np.abs(mu), 1.0) * 1e-12
    bad = np.flatnonzero(~(sd > scale))
    if bad.size:
        raise DegenerateInputError(f"predictor column {int(bad[0])} has zero variance")
    return (x - mu) / sd


def _kernel_weights(dist: np.ndarray, h: np.ndarray, kernel: str) -> np.ndarray:
    tiny = h <= 0
    h = np.where(tiny, 1.0, h)
    r = dist / h[:, None]
    if kernel == "tricube":
        w = np.clip(1.0 - r**3, 0.0, None) ** 3
    else:
        w = (r <= 1.0).astype(float)
    # all neighbors coincide with the target: plain mean over the ties
    if tiny.any():
        w[tiny] = (dist[tiny] == 0.0).astype(float)
    return w


def _local_linear(targets: np.ndarray, z: np.ndarray, u: np.ndarray, q: int, kernel: str) -> np.ndarray:
    """Local-linear intercepts at ``targets`` from data ``(z, u)``."""
    n, p = z.shape
    out = np.empty(targets.shape[0])
    block = max(1, _BLOCK_ELEMENTS // n)
    for start in range(0, targets.shape[0], block):
        rows = slice(start, min(start + block, targets.shape[0]))
        dx = [z[None, :, j] - targets[rows, j, None] for j in range(p)]
        if p == 1:
            dist = np.abs(dx[0])
        else:
            dist = np.sqrt(dx[0] ** 2 + dx[1] ** 2)
        h = np.partition(dist, q - 1, axis=1)[:, q - 1]
        w = _kernel_weights(dist, h, kernel)
        wdx = [w * d for d in dx]
        b = w.shape[0]
        gram = np.empty((b, p + 1, p + 1))
        rhs = np.empty((b, p + 1))
        gram[:, 0, 0] = w.sum(axis=1)
        rhs[:, 0] = w @ u
        for j in range(p):
            gram[:, 0, j + 1] = gram[:, j + 1, 0] = wdx[j].sum(axis=1)
            rhs[:, j + 1] = wdx[j] @ u
            for l in range(j, p):
                gram[:, j + 1, l + 1] = gram[:, l + 1, j + 1] = np.einsum("bn,bn->b", wdx[j], dx[l])
        # scale-equilibrate before pinv; rank-deficient designs fall back to the weighted mean
        scale = 1.0 / np.sqrt(np.einsum("bii->bi", gram))
        scale[~np.isfinite(scale)] = 0.0
        g = gram * scale[:, :, None] * scale[:, None, :]
        beta = np.einsum("bac,bc->ba", np.linalg.pinv(g, rcond=1e-10, hermitian=True), rhs * scale)
        out[rows] = beta[:, 0] * scale[:, 0]
    return out


def _vertices(z: np.ndarray) -> list[np.ndarray]:
    per_axis = _VERTICES_1D if z.shape[1] == 1 else _VERTICES_2D
    return [np.linspace(col.min(), col.max(), per_axis) for col in z.T]


def _interpolated_local_linear(z: np.ndarray, u: np.ndarray, q: int, kernel: str) -> np.ndarray:
    axes = _vertices(z)
    if z.shape[1] == 1:
        vals = _local_linear(axes[0][:, None], z, u, q, kernel)
        return np.interp(z[:, 0], axes[0], vals)
    g0, g1 = np.meshgrid(axes[0], axes[1], indexing="ij")
    vals = _local_linear(np.column_stack([g0.ravel(), g1.ravel()]), z, u, q, kernel)
    interp = RegularGridInterpolator(axes, vals.reshape(g0.shape), method="linear")
    return interp(z)


def _knn_mean(z: np.ndarray, u: np.ndarray, k: int, kernel: str) -> np.ndarray:
    dist, idx = cKDTree(z).query(z, k=k)
    w = _kernel_weights(dist, dist[:, -1], kernel)
    # tricube gives the k-th neighbor zero weight; the target itself always counts
    return (w * u[idx]).sum(axis=1) / w.sum(axis=1)


def fit_predict(x, u, config: SmootherConfig | None = None) -> np.ndarray:
    """Fitted values of E[u | x] at every sample point.

    Parameters
    ----------
    x : array_like, shape (n,) or (n, p)
        Predictors, p in {1, 2}.
    u : array_like, shape (n,)
        Outcome.
    config : SmootherConfig, optional
        Defaults to local-linear, span 0.75, tricube weights.

    Returns
    -------
    ndarray, shape (n,)

    Notes
    -----
    Above ``DIRECT_LIMIT`` observations the local-linear surface is evaluated
    on a regular vertex grid in standardized coordinates and linearly
    interpolated to the sample points.
    """
    config = config or SmootherConfig()
    x = _as_predictors(x)
    u = np.asarray(u, dtype=float).reshape(-1)
    n, p = x.shape
    if u.shape[0] != n:
        raise ValueError("x and u must have the same number of rows")
    if p not in (1, 2):
        raise ValueError(f"only 1 or 2 predictor columns are supported, got {p}")
    if n < 10 * p:
        raise ValueError(f"need at least {10 * p} observations for {p} predictors, got {n}")
    z = standardize(x)
    q = config.neighborhood(n)
    if config.method == "k-nn-mean":
        return _knn_mean(z, u, q, config.kernel)
    if n <= DIRECT_LIMIT:
        return _local_linear(z, z, u, q, config.kernel)
    return _interpolated_local_linear(z, u, q, config.kernel)
