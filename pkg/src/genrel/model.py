"""Two-dimensional 3PL measurement model.

Latent draws, item banks, dichotomous response simulation, EAP scoring on a
tensor-product quadrature grid, and the percentile-rank transform of latent
scores. CSV readers and writers for item banks and Monte Carlo samples live
here as well.

Random draws take a ``seed`` argument that is passed to
:func:`numpy.random.default_rng`; an int, a sequence of ints or a
:class:`numpy.random.SeedSequence` all work. Sweeps derive one seed per
``(master_seed, m, replication, purpose)`` so each stream can be reproduced
on its own.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.special import erfc, log_expit
from scipy.stats import norm

from .errors import ComputationError

DEFAULT_NODES_PER_DIM = 61
DEFAULT_BOUNDS = (-5.0, 5.0)

# item parameter ranges used by the numerical study
A_RANGE = (0.5, 2.0)
B_RANGE = (-2.0, 2.0)
C_RANGE = (0.0, 0.2)


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass(frozen=True, eq=False)
class LatentSpec:
    """Mean vector and covariance matrix of the multivariate normal LVs."""

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        d = mean.shape[0]
        if mean.ndim != 1 or d < 1:
            raise ValueError("mean must be a non-empty vector")
        if cov.shape != (d, d):
            raise ValueError(f"covariance must be {d}x{d}, got {cov.shape}")
        if not np.allclose(cov, cov.T, rtol=0.0, atol=1e-12):
            raise ValueError("covariance must be symmetric")
        if np.linalg.eigvalsh(cov).min() <= 0.0:
            raise ValueError("covariance must be positive definite")
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)

    @property
    def d(self) -> int:
        return self.mean.shape[0]

    @classmethod
    def default(cls, correlation: float = 0.5) -> "LatentSpec":
        return cls(np.zeros(2), np.array([[1.0, correlation], [correlation, 1.0]]))

    @property
    def correlation(self) -> np.ndarray:
        sd = np.sqrt(np.diag(self.covariance))
        return self.covariance / np.outer(sd, sd)


@dataclass(frozen=True)
class Item:
    """One 3PL item. ``dim`` is the 1-based index of the LV it loads on."""

    a: float
    b: float
    c: float
    dim: int

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError(f"discrimination must be positive, got {self.a}")
        if not 0.0 <= self.c < 1.0:
            raise ValueError(f"pseudo-guessing must lie in [0, 1), got {self.c}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError(f"dim must be a positive integer, got {self.dim}")


@dataclass(frozen=True, eq=False)
class ItemBank:
    """Item parameters stored column-wise.

    ``dim`` holds 1-based LV indices. ``n_dims`` is the dimension of the latent
    space the bank is defined on; it may exceed ``dim.max()`` (for instance an
    empty bank still lives in a two-dimensional model).
    """

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    dim: np.ndarray
    n_dims: int = 2

    def __post_init__(self):
        arrays = {}
        for name in ("a", "b", "c"):
            arrays[name] = np.asarray(getattr(self, name), dtype=float).reshape(-1)
        dim = np.asarray(self.dim).reshape(-1)
        if dim.size and not np.all(dim == np.round(dim)):
            raise ValueError("dim entries must be integers")
        dim = dim.astype(np.int64)
        m = dim.shape[0]
        if any(arr.shape[0] != m for arr in arrays.values()):
            raise ValueError("a, b, c and dim must have equal length")
        if np.any(arrays["a"] <= 0):
            raise ValueError("all discriminations must be positive")
        if np.any((arrays["c"] < 0) | (arrays["c"] >= 1)):
            raise ValueError("pseudo-guessing parameters must lie in [0, 1)")
        if np.any((dim < 1) | (dim > self.n_dims)):
            raise ValueError(f"dim entries must lie in 1..{self.n_dims}")
        for name, arr in arrays.items():
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        dim.setflags(write=False)
        object.__setattr__(self, "dim", dim)

    @classmethod
    def from_items(cls, items: Iterable[Item], n_dims: int | None = None) -> "ItemBank":
        items = list(items)
        dims = [it.dim for it in items]
        if n_dims is None:
            n_dims = max(dims, default=1)
        return cls(
            a=[it.a for it in items],
            b=[it.b for it in items],
            c=[it.c for it in items],
            dim=dims,
            n_dims=n_dims,
        )

    @property
    def items(self) -> list[Item]:
        return [
            Item(float(a), float(b), float(c), int(k))
            for a, b, c, k in zip(self.a, self.b, self.c, self.dim)
        ]

    @property
    def m(self) -> int:
        return self.a.shape[0]

    def __len__(self) -> int:
        return self.m

    def take(self, order: Sequence[int]) -> "ItemBank":
        order = np.asarray(order, dtype=np.int64)
        return ItemBank(self.a[order], self.b[order], self.c[order], self.dim[order], self.n_dims)


@dataclass(frozen=True, eq=False)
class MonteCarloSample:
    """Paired latent draws ``eta`` (n x d) and binary responses ``y`` (n x m)."""

    eta: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        eta = np.asarray(self.eta, dtype=float)
        y = np.asarray(self.y)
        if eta.ndim != 2 or y.ndim != 2:
            raise ValueError("eta and y must be matrices")
        if eta.shape[0] != y.shape[0]:
            raise ValueError("eta and y must have the same number of rows")
        if y.size and not np.isin(y, (0, 1)).all():
            raise ValueError("responses must be 0/1")
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "y", y.astype(np.int8))

    @property
    def n(self) -> int:
        return self.eta.shape[0]


@dataclass(frozen=True, eq=False)
class QuadratureGrid:
    """Rectangular tensor grid with normalized prior weights at the nodes."""

    nodes_per_dim: int
    lower: float
    upper: float
    axis: np.ndarray
    nodes: np.ndarray
    prior_weights: np.ndarray
    log_prior_weights: np.ndarray

    @property
    def d(self) -> int:
        return self.nodes.shape[1]

    @classmethod
    def build(
        cls,
        spec: LatentSpec,
        nodes_per_dim: int = DEFAULT_NODES_PER_DIM,
        lower: float = DEFAULT_BOUNDS[0],
        upper: float = DEFAULT_BOUNDS[1],
    ) -> "QuadratureGrid":
        if nodes_per_dim < 2:
            raise ValueError("nodes_per_dim must be at least 2")
        if not upper > lower:
            raise ValueError("upper bound must exceed lower bound")
        sd = np.sqrt(np.diag(spec.covariance))
        mass = norm.cdf((upper - spec.mean) / sd) - norm.cdf((lower - spec.mean) / sd)
        if np.any(mass < 0.9999):
            raise ValueError(
                f"grid [{lower}, {upper}] covers only {mass.min():.6f} of the prior mass"
            )
        axis = np.linspace(lower, upper, nodes_per_dim)
        mesh = np.meshgrid(*([axis] * spec.d), indexing="ij")
        nodes = np.stack([g.reshape(-1) for g in mesh], axis=1)
        diff = nodes - spec.mean
        prec = np.linalg.inv(spec.covariance)
        logw = -0.5 * np.einsum("gi,ij,gj->g", diff, prec, diff)
        logw -= logw.max()
        logw -= np.log(np.exp(logw).sum())
        weights = np.exp(logw)
        weights /= weights.sum()
        for arr in (axis, nodes, weights, logw):
            arr.setflags(write=False)
        return cls(nodes_per_dim, float(lower), float(upper), axis, nodes, weights, logw)


def draw_item_bank(m: int, seed, n_dims: int = 2) -> ItemBank:
    """Draw a simple-structure 3PL bank with ``m // n_dims`` items per LV.

    Discriminations, difficulties and pseudo-guessing parameters are uniform
    on ``A_RANGE``, ``B_RANGE`` and ``C_RANGE``.
    """
    if isinstance(m, bool) or int(m) != m or m < n_dims or m % n_dims:
        raise ValueError(f"m must be a positive multiple of {n_dims}, got {m}")
    m = int(m)
    rng = _rng(seed)
    a = rng.uniform(*A_RANGE, size=m)
    b = rng.uniform(*B_RANGE, size=m)
    c = rng.uniform(*C_RANGE, size=m)
    dim = np.repeat(np.arange(1, n_dims + 1), m // n_dims)
    return ItemBank(a, b, c, dim, n_dims)


def sample_latents(n: int, spec: LatentSpec, seed) -> np.ndarray:
    if n < 0:
        raise ValueError("n must be non-negative")
    if n == 0:
        return np.empty((0, spec.d))
    rng = _rng(seed)
    chol = np.linalg.cholesky(spec.covariance)
    z = rng.standard_normal((n, spec.d))
    return spec.mean + z @ chol.T


def response_probability(item: Item, eta) -> float | np.ndarray:
    """3PL probability of a correct response; ``eta`` is a d-vector (or n x d)."""
    eta = np.asarray(eta, dtype=float)
    theta = eta[..., item.dim - 1]
    with np.errstate(over="ignore"):
        p = item.c + (1.0 - item.c) / (1.0 + np.exp(-item.a * (theta - item.b)))
    return float(p) if np.ndim(p) == 0 else p


def item_probabilities(bank: ItemBank, eta: np.ndarray) -> np.ndarray:
    """n x m matrix of correct-response probabilities."""
    eta = np.asarray(eta, dtype=float)
    theta = eta[:, bank.dim - 1]
    with np.errstate(over="ignore"):
        return bank.c + (1.0 - bank.c) / (1.0 + np.exp(-bank.a * (theta - bank.b)))


def simulate_responses(eta: np.ndarray, bank: ItemBank, seed) -> np.ndarray:
    eta = np.asarray(eta, dtype=float)
    if eta.ndim != 2 or eta.shape[1] != bank.n_dims:
        raise ValueError(
            f"eta must have {bank.n_dims} columns to match the item bank, got shape {eta.shape}"
        )
    rng = _rng(seed)
    p = item_probabilities(bank, eta)
    return (rng.random(p.shape) < p).astype(np.int8)


def _log_item_probs(bank: ItemBank, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """log P and log(1 - P) on a 1-D node axis; shapes (m, nodes)."""
    z = bank.a[:, None] * (theta[None, :] - bank.b[:, None])
    with np.errstate(divide="ignore"):
        log_c = np.log(bank.c)[:, None]
    log_1mc = np.log1p(-bank.c)[:, None]
    log_p = np.logaddexp(log_c, log_1mc + log_expit(z))
    log_q = log_1mc + log_expit(-z)
    return log_p, log_q


def eap_scores(
    y: np.ndarray,
    bank: ItemBank,
    spec: LatentSpec,
    grid: QuadratureGrid | None = None,
    chunk_rows: int = 2048,
) -> np.ndarray:
    """Posterior means E[eta | y] on a tensor quadrature grid.

    Per-LV log-likelihoods are accumulated on the 1-D axis and broadcast onto
    the tensor grid; posterior weights use max-shifted exponentiation.
    """
    y = np.asarray(y)
    if y.ndim != 2 or y.shape[1] != bank.m:
        raise ValueError(f"y must have {bank.m} columns, got shape {y.shape}")
    if spec.d != bank.n_dims:
        raise ValueError("latent spec and item bank disagree on the number of LVs")
    if grid is None:
        grid = QuadratureGrid.build(spec)
    if grid.d != spec.d:
        raise ValueError("quadrature grid dimension does not match the latent spec")
    n, d, q = y.shape[0], spec.d, grid.nodes_per_dim
    out = np.empty((n, d))
    if n == 0:
        return out

    log_p, log_q = _log_item_probs(bank, grid.axis)
    # zero-probability events (step-function items): keep 0 * -inf out of the matmul
    imp_p, imp_q = np.isneginf(log_p), np.isneginf(log_q)
    has_impossible = bool(imp_p.any() or imp_q.any())
    if has_impossible:
        log_p = np.where(imp_p, 0.0, log_p)
        log_q = np.where(imp_q, 0.0, log_q)
    yf = y.astype(float)
    for start in range(0, n, chunk_rows):
        rows = slice(start, min(start + chunk_rows, n))
        yc = yf[rows]
        total = np.broadcast_to(grid.log_prior_weights.reshape((q,) * d), (yc.shape[0],) + (q,) * d)
        total = total.copy()
        for k in range(d):
            cols = np.flatnonzero(bank.dim == k + 1)
            if cols.size == 0:
                continue
            ll = yc[:, cols] @ log_p[cols] + (1.0 - yc[:, cols]) @ log_q[cols]
            if has_impossible:
                hits = yc[:, cols] @ imp_p[cols] + (1.0 - yc[:, cols]) @ imp_q[cols]
                ll[hits > 0] = -np.inf
            shape = [yc.shape[0]] + [1] * d
            shape[k + 1] = q
            total += ll.reshape(shape)
        total = total.reshape(yc.shape[0], -1)
        top = total.max(axis=1, keepdims=True)
        with np.errstate(invalid="ignore"):  # all -inf rows are reported below
            w = np.exp(total - top)
        mass = w.sum(axis=1)
        bad = ~np.isfinite(mass) | (mass <= 0) | ~np.isfinite(top[:, 0])
        if bad.any():
            row = start + int(np.flatnonzero(bad)[0])
            raise ComputationError(f"posterior mass vanished for response row {row}")
        out[rows] = (w @ grid.nodes) / mass[:, None]
    return out


def percentile_ranks(eta: np.ndarray) -> np.ndarray:
    """Elementwise 100 * Phi(eta) through the complementary error function."""
    eta = np.asarray(eta, dtype=float)
    return 50.0 * erfc(-eta / np.sqrt(2.0))


# --- CSV --------------------------------------------------------------------

def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_item_bank_csv(bank: ItemBank, path: str | os.PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["a", "b", "c", "dim"])
        for a, b, c, k in zip(bank.a, bank.b, bank.c, bank.dim):
            w.writerow([_fmt(a), _fmt(b), _fmt(c), int(k)])


def read_item_bank_csv(path: str | os.PathLike, n_dims: int | None = None) -> ItemBank:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = {"a", "b", "c", "dim"} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"item CSV is missing columns: {sorted(missing)}")
        items = [Item(float(r["a"]), float(r["b"]), float(r["c"]), int(r["dim"])) for r in reader]
    return ItemBank.from_items(items, n_dims=n_dims)


def write_sample_csv(sample: MonteCarloSample, path: str | os.PathLike) -> None:
    d, m = sample.eta.shape[1], sample.y.shape[1]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"eta_{k + 1}" for k in range(d)] + [f"y_{j + 1}" for j in range(m)])
        for eta_row, y_row in zip(sample.eta, sample.y):
            w.writerow([_fmt(v) for v in eta_row] + [int(v) for v in y_row])


def read_sample_csv(path: str | os.PathLike) -> MonteCarloSample:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        eta_cols = [i for i, h in enumerate(header) if h.startswith("eta_")]
        y_cols = [i for i, h in enumerate(header) if h.startswith("y_")]
        rows = list(reader)
    eta = np.array([[float(r[i]) for i in eta_cols] for r in rows]).reshape(len(rows), len(eta_cols))
    y = np.array([[int(r[i]) for i in y_cols] for r in rows], dtype=np.int8).reshape(len(rows), len(y_cols))
    return MonteCarloSample(eta, y)
