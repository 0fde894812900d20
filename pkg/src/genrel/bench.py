"""Error benchmarks for EAP recovery of the latent variables."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError


@dataclass(frozen=True)
class BenchmarkResult:
    rrmse: float
    rae: float


def rrmse(eap, eta) -> float:
    """Root relative mean squared error of ``eap`` against the true ``eta``."""
    eap = np.asarray(eap, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if eap.shape != eta.shape:
        raise ValueError(f"shape mismatch: {eap.shape} vs {eta.shape}")
    denom = np.sum(eta**2)
    if not denom > 0:
        raise DegenerateInputError("latent scores are all zero")
    return float(np.sqrt(np.sum((eap - eta) ** 2) / denom))


def rae(eap, target_corr: float = 0.5) -> float:
    """Relative absolute error of the inter-column EAP correlation."""
    eap = np.asarray(eap, dtype=float)
    if eap.ndim != 2 or eap.shape[1] != 2:
        raise ValueError("rae needs an n x 2 score matrix")
    if eap.shape[0] < 3:
        raise ValueError("rae needs at least 3 rows")
    if target_corr == 0:
        raise ValueError("target correlation must be non-zero")
    d = eap - eap.mean(axis=0)
    ss = np.einsum("ij,ij->j", d, d)
    if not np.all(ss > 0):
        raise DegenerateInputError("an EAP column has zero variance")
    r = (d[:, 0] @ d[:, 1]) / np.sqrt(ss[0] * ss[1])
    return float(abs(r - target_corr) / abs(target_corr))


def benchmarks(eap, eta, target_corr: float = 0.5) -> BenchmarkResult:
    return BenchmarkResult(rrmse(eap, eta), rae(eap, target_corr))
