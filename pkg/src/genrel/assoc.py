"""Association measures between observed and latent scores.

Each estimator maps a sample of paired scores to a number on (roughly) the
unit interval:

- ``r_squared``: nonparametric coefficient of determination.
- ``squared_correlation``: squared Pearson correlation.
- ``schweizer_wolff_sigma``: empirical-copula sigma and its 4 sin^2 rescaling.
- ``ksg_mutual_information``: Kraskov-Stoegbauer-Grassberger estimate, with
  the ``1 - exp(-2 I)`` rescaling.
- ``codec_t``: Azadkia-Chatterjee conditional dependence coefficient.
- ``coefficient_w``: one minus the determinant ratio of residual to total
  covariance of a multivariate nonparametric regression.

``table1_battery`` evaluates all nine observed/latent pairings on a
:class:`ScoreSet`.
"""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import digamma
from scipy.stats import rankdata

from .errors import DegenerateInputError, EstimationError
from .smoother import SmootherConfig, fit_predict

SYMMETRIC = "symmetric"
OBSERVED_OUTCOME = "observed-as-outcome"
LATENT_OUTCOME = "latent-as-outcome"

# name -> direction, in report order
BATTERY = {
    "R2_measure": OBSERVED_OUTCOME,
    "R2_predict": LATENT_OUTCOME,
    "Corr2": SYMMETRIC,
    "Sigma": SYMMETRIC,
    "T_measure": OBSERVED_OUTCOME,
    "T_predict": LATENT_OUTCOME,
    "MI": SYMMETRIC,
    "W_measure": OBSERVED_OUTCOME,
    "W_predict": LATENT_OUTCOME,
}

JITTER_SCALE = 1e-9
DEFAULT_MI_K = 5


@dataclass(frozen=True)
class ReliabilityEstimate:
    name: str
    value: float
    direction: str

    def __post_init__(self):
        if self.name not in BATTERY:
            raise ValueError(f"unknown coefficient {self.name!r}")
        if BATTERY[self.name] != self.direction:
            raise ValueError(f"{self.name} must have direction {BATTERY[self.name]!r}")

    @property
    def clamped(self) -> float:
        return float(min(1.0, max(0.0, self.value)))


@dataclass(frozen=True, eq=False)
class ScoreSet:
    """Observed (EAP) and latent score matrices for one condition."""

    observed: np.ndarray
    latent: np.ndarray
    transform_tag: str = "raw"

    def __post_init__(self):
        obs = np.asarray(self.observed, dtype=float)
        lat = np.asarray(self.latent, dtype=float)
        if obs.ndim != 2 or lat.ndim != 2:
            raise ValueError("observed and latent scores must be matrices")
        if obs.shape[0] != lat.shape[0]:
            raise ValueError("observed and latent scores must have equal row counts")
        if self.transform_tag not in ("raw", "percentile"):
            raise ValueError(f"unknown transform tag {self.transform_tag!r}")
        object.__setattr__(self, "observed", obs)
        object.__setattr__(self, "latent", lat)

    @property
    def n(self) -> int:
        return self.observed.shape[0]


def _vector(u, name="input") -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.ndim == 2 and u.shape[1] == 1:
        u = u[:, 0]
    if u.ndim != 1:
        raise ValueError(f"{name} must be a vector")
    return u


def _matrix(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise ValueError("expected a vector or a matrix")
    return x


# --- coefficients of determination -------------------------------------------

def _r2_from_fit(u: np.ndarray, fitted: np.ndarray) -> float:
    total = np.var(u)
    if not total > 0:
        raise DegenerateInputError("outcome has zero variance")
    return float(1.0 - np.var(u - fitted) / total)


def r_squared(u, x, config: SmootherConfig | None = None) -> float:
    """Nonparametric R^2 of outcome ``u`` regressed on predictors ``x``."""
    u = _vector(u, "outcome")
    if not np.var(u) > 0:
        raise DegenerateInputError("outcome has zero variance")
    return _r2_from_fit(u, fit_predict(x, u, config))


def squared_correlation(u, v) -> float:
    u = _vector(u)
    v = _vector(v)
    if u.shape != v.shape:
        raise ValueError("inputs must have equal length")
    du = u - u.mean()
    dv = v - v.mean()
    suu = du @ du
    svv = dv @ dv
    if not (suu > 0 and svv > 0):
        raise DegenerateInputError("squared correlation needs two non-constant inputs")
    return float((du @ dv) ** 2 / (suu * svv))


def _w_from_fits(outcome: np.ndarray, fitted: np.ndarray) -> float:
    total = np.atleast_2d(np.cov(outcome, rowvar=False))
    resid = np.atleast_2d(np.cov(outcome - fitted, rowvar=False))
    det_total = np.linalg.det(total)
    scale = np.prod(np.diag(total))
    if not (det_total > 1e-12 * scale and scale > 0):
        raise DegenerateInputError("outcome covariance is singular")
    return float(1.0 - np.linalg.det(resid) / det_total)


def coefficient_w(U, X, config: SmootherConfig | None = None) -> float:
    """One minus generalized residual variance over generalized total variance."""
    U = _matrix(U)
    fitted = np.column_stack([fit_predict(X, U[:, j], config) for j in range(U.shape[1])])
    return _w_from_fits(U, fitted)


# --- coefficient sigma -------------------------------------------------------

def _grid_index(u: np.ndarray) -> np.ndarray:
    # average ranks; a tied block is first counted at the grid line ceil(rank)
    return np.ceil(rankdata(u, method="average")).astype(np.int64)


def _sigma_sum(iu: np.ndarray, iv: np.ndarray, n: int) -> int:
    """Exact integer sum over the n x n grid of |n * N(i, j) - i * j|.

    ``N(i, j)`` counts points with u-index <= i and v-index <= j.
    """
    block = max(1, 4_000_000 // n)
    # n * N and i * j stay below n^2; int32 holds them up to n = 46340
    itype = np.int32 if n <= 46340 else np.int64
    order = np.argsort(iu, kind="stable")
    iu, iv = iu[order], iv[order]
    j = np.arange(1, n + 1, dtype=itype)
    carry = np.zeros(n, dtype=itype)  # per-column counts of rows already passed
    total = 0
    lo = 0
    for i0 in range(1, n + 1, block):
        i1 = min(i0 + block, n + 1)
        hi = np.searchsorted(iu, i1, side="left")
        inc = np.zeros((i1 - i0, n), dtype=itype)
        np.add.at(inc, (iu[lo:hi] - i0, iv[lo:hi] - 1), 1)
        cols = np.cumsum(inc, axis=0, dtype=itype)
        cols += carry
        carry = cols[-1].copy()
        counts = np.cumsum(cols, axis=1, dtype=itype)
        counts *= n
        counts -= np.arange(i0, i1, dtype=itype)[:, None] * j
        np.abs(counts, out=counts)
        total += int(counts.sum(dtype=np.int64))
        lo = hi
    return total


def schweizer_wolff_sigma(u, v) -> tuple[float, float]:
    """Empirical Schweizer-Wolff sigma.

    Returns ``(raw, rescaled)`` with
    ``raw = 12 / (n^2 - 1) * sum_ij |C_n(i/n, j/n) - ij/n^2|`` and
    ``rescaled = 4 sin^2(pi/6 * raw)``.
    """
    u = _vector(u)
    v = _vector(v)
    n = u.shape[0]
    if v.shape[0] != n:
        raise ValueError("inputs must have equal length")
    if n < 10:
        raise ValueError(f"coefficient sigma needs at least 10 observations, got {n}")
    s = _sigma_sum(_grid_index(u), _grid_index(v), n)
    raw = 12.0 / (n * n - 1.0) * (s / float(n) ** 2)
    rescaled = 4.0 * np.sin(np.pi / 6.0 * raw) ** 2
    return float(raw), float(rescaled)


# --- mutual information ------------------------------------------------------

def _content_seed(x: np.ndarray, seed: int) -> list[int]:
    digest = hashlib.blake2b(np.ascontiguousarray(x).tobytes(), digest_size=8).digest()
    return [int(seed), int.from_bytes(digest, "little")]


def _jitter_duplicates(x: np.ndarray, seed: int) -> np.ndarray:
    """Sub-resolution jitter for blocks holding repeated rows.

    The jitter stream depends on the block content and ``seed`` only, so the
    result does not depend on argument order.
    """
    if np.unique(x, axis=0).shape[0] == x.shape[0]:
        return x
    sd = x.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    rng = np.random.default_rng(_content_seed(x, seed))
    return x + JITTER_SCALE * sd * rng.standard_normal(x.shape)


def _unit_scale(x: np.ndarray) -> np.ndarray:
    sd = x.std(axis=0)
    if not np.all(sd > 0):
        raise DegenerateInputError("mutual information input has a constant column")
    return x / sd


def ksg_mutual_information(U, V, k: int = DEFAULT_MI_K, seed: int = 0) -> tuple[float, float]:
    """KSG (variant 1) mutual information in nats and its rescaled value.

    Every column is scaled to unit variance first. Max-norm distances in the
    joint space; marginal neighbors are counted strictly inside each point's
    joint k-NN radius. Negative estimates are floored at zero before
    rescaling with ``1 - exp(-2 I)``.
    """
    U = _matrix(U)
    V = _matrix(V)
    n = U.shape[0]
    if V.shape[0] != n:
        raise ValueError("inputs must have equal row counts")
    if n < 100:
        raise ValueError(f"mutual information needs at least 100 observations, got {n}")
    if k < 2 or k >= n:
        raise ValueError(f"k must lie in [2, n), got {k}")
    joint_dups = n - np.unique(np.hstack([U, V]), axis=0).shape[0]
    if joint_dups > 0.01 * n:
        warnings.warn(
            f"{joint_dups} duplicate joint points out of {n}; applying sub-resolution jitter",
            RuntimeWarning,
            stacklevel=2,
        )
    U = _jitter_duplicates(_unit_scale(U), seed)
    V = _jitter_duplicates(_unit_scale(V), seed)
    joint = np.hstack([U, V])
    eps = cKDTree(joint).query(joint, k=k + 1, p=np.inf)[0][:, k]
    radius = np.nextafter(eps, 0.0)
    nu = cKDTree(U).query_ball_point(U, radius, p=np.inf, return_length=True) - 1
    nv = cKDTree(V).query_ball_point(V, radius, p=np.inf, return_length=True) - 1
    nu = np.maximum(nu, 0)
    nv = np.maximum(nv, 0)
    nats = digamma(k) + digamma(n) - np.mean(digamma(nu + 1) + digamma(nv + 1))
    nats = max(float(nats), 0.0)
    return nats, float(1.0 - np.exp(-2.0 * nats))


# --- coefficient T -----------------------------------------------------------

def _nearest_neighbors(X: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Euclidean nearest neighbor of every row, self excluded.

    Ties (including exact duplicates) are broken uniformly at random among
    all tied candidate rows.
    """
    n = X.shape[0]
    uniq, inverse, counts = np.unique(X, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    members = np.argsort(inverse, kind="stable")
    offsets = np.concatenate([[0], np.cumsum(counts)])
    nn = np.empty(n, dtype=np.int64)

    def pick(groups, exclude):
        sizes = counts[groups] - (groups == inverse[exclude])
        cum = np.cumsum(sizes)
        r = int(rng.integers(cum[-1]))
        g = int(np.searchsorted(cum, r, side="right"))
        r -= int(cum[g - 1]) if g else 0
        grp = groups[g]
        pool = members[offsets[grp]:offsets[grp + 1]]
        if grp == inverse[exclude]:
            pool = pool[pool != exclude]
        return int(pool[r])

    n_uniq = uniq.shape[0]
    if n_uniq == 1:
        raise DegenerateInputError("predictors take a single value")
    tree = cKDTree(uniq)
    kq = min(3, n_uniq)
    dist, idx = tree.query(uniq, k=kq)
    untied = dist[:, 1] < dist[:, 2] if kq == 3 else np.ones(n_uniq, dtype=bool)
    first = idx[:, 1]
    # singleton rows whose unique nearest row is itself a singleton need no draw
    simple = (counts[inverse] == 1) & untied[inverse] & (counts[first[inverse]] == 1)
    nn[simple] = members[offsets[first[inverse[simple]]]]
    for i in np.flatnonzero(~simple):
        g = inverse[i]
        if counts[g] > 1:
            nn[i] = pick(np.array([g]), i)
        elif untied[g]:
            nn[i] = pick(np.array([first[g]]), i)
        else:
            kk = kq
            while True:
                kk = min(2 * kk, n_uniq)
                d_row, i_row = tree.query(uniq[g], k=kk)
                tied = d_row == d_row[1]
                if not tied[-1] or kk == n_uniq:
                    break
            nn[i] = pick(np.sort(i_row[tied & (i_row != g)]), i)
    return nn


def codec_t(u, X, seed: int = 0) -> float:
    """Azadkia-Chatterjee coefficient T_n of outcome ``u`` given predictors ``X``.

    Rank counts enter as exact integers, so the value is unchanged (bit for
    bit) by any strictly increasing transform of ``u``.
    """
    u = _vector(u, "outcome")
    X = _matrix(X)
    n = u.shape[0]
    if X.shape[0] != n:
        raise ValueError("u and X must have equal row counts")
    if n < 30:
        raise ValueError(f"coefficient T needs at least 30 observations, got {n}")
    srt = np.sort(u)
    R = np.searchsorted(srt, u, side="right").astype(np.int64)
    L = (n - np.searchsorted(srt, u, side="left")).astype(np.int64)
    den = int((L * (n - L)).sum())
    if den == 0:
        raise DegenerateInputError("outcome is constant")
    nn = _nearest_neighbors(X, np.random.default_rng(seed))
    num = int((n * np.minimum(R, R[nn]) - L * L).sum())
    return num / den


# --- battery -----------------------------------------------------------------

def table1_battery(
    scores: ScoreSet,
    smoother: SmootherConfig | None = None,
    mi_k: int = DEFAULT_MI_K,
    seed: int = 0,
) -> list[ReliabilityEstimate]:
    """Nine reliability estimates for one score set.

    ``s`` is the observed score matrix and ``xi`` the latent one; ``s1`` and
    ``xi1`` are their first columns. Measurement directions regress observed
    on latent, prediction directions latent on observed.
    """
    s, xi = scores.observed, scores.latent
    s1, xi1 = s[:, 0], xi[:, 0]

    def run(name, fn):
        try:
            return fn()
        except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
            raise EstimationError(f"{name}: {exc}", coefficient=name) from exc

    fit_s_on_xi = run("W_measure", lambda: np.column_stack(
        [fit_predict(xi, s[:, j], smoother) for j in range(s.shape[1])]))
    fit_xi_on_s = run("W_predict", lambda: np.column_stack(
        [fit_predict(s, xi[:, j], smoother) for j in range(xi.shape[1])]))

    values = {
        "R2_measure": run("R2_measure", lambda: _r2_from_fit(s1, fit_s_on_xi[:, 0])),
        "R2_predict": run("R2_predict", lambda: _r2_from_fit(xi1, fit_xi_on_s[:, 0])),
        "Corr2": run("Corr2", lambda: squared_correlation(s1, xi1)),
        "Sigma": run("Sigma", lambda: schweizer_wolff_sigma(s1, xi1)[1]),
        "T_measure": run("T_measure", lambda: codec_t(s1, xi, seed=seed)),
        "T_predict": run("T_predict", lambda: codec_t(xi1, s, seed=seed)),
        "MI": run("MI", lambda: ksg_mutual_information(s, xi, k=mi_k, seed=seed)[1]),
        "W_measure": run("W_measure", lambda: _w_from_fits(s, fit_s_on_xi)),
        "W_predict": run("W_predict", lambda: _w_from_fits(xi, fit_xi_on_s)),
    }
    return [ReliabilityEstimate(name, values[name], BATTERY[name]) for name in BATTERY]
