"""Test-length sweep over simulated item banks.

For every test length ``m`` and replication index the sweep draws an item
bank, simulates ``n_mc`` examinees, scores them by EAP and evaluates the
nine-coefficient battery plus the RRMSE/RAE benchmarks, once per latent-score
condition. Both conditions share the same draws.
"""

from __future__ import annotations

import csv
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .assoc import BATTERY, DEFAULT_MI_K, ReliabilityEstimate, ScoreSet, table1_battery
from .bench import BenchmarkResult, benchmarks
from .errors import ConfigError, EstimationError, SweepError
from .model import (
    LatentSpec,
    QuadratureGrid,
    draw_item_bank,
    eap_scores,
    percentile_ranks,
    sample_latents,
    simulate_responses,
)
from .smoother import SmootherConfig

CONDITIONS = ("raw", "percentile")
TRANSFORMS = ("raw", "percentile", "both")
BENCHMARKS = ("RRMSE", "RAE")
METRICS = tuple(BATTERY) + BENCHMARKS
DEFAULT_M_GRID = tuple(range(6, 121, 6))

# stream identifiers for per-purpose seeds
ITEMS, LATENTS, RESPONSES, ESTIMATORS = range(4)


def stream_seed(master_seed: int, m: int, rep_index: int, purpose: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(master_seed), int(m), int(rep_index), int(purpose)])


@dataclass(frozen=True)
class ExperimentConfig:
    m_grid: tuple[int, ...] = DEFAULT_M_GRID
    n_mc: int = 1000
    replications: int = 50
    latent_transform: str = "both"
    master_seed: int = 20240601
    smoother: SmootherConfig = field(default_factory=SmootherConfig)
    mi_k: int = DEFAULT_MI_K

    def __post_init__(self):
        grid = self.m_grid
        if isinstance(grid, (int, np.integer)):
            grid = (grid,)
        try:
            grid = tuple(grid)
        except TypeError:
            raise ConfigError("m_grid", "must be a list of even integers") from None
        if not grid:
            raise ConfigError("m_grid", "must not be empty")
        for m in grid:
            if isinstance(m, bool) or not isinstance(m, (int, np.integer)) or m < 2 or m % 2:
                raise ConfigError("m_grid", f"test lengths must be even integers >= 2, got {m!r}")
        object.__setattr__(self, "m_grid", tuple(int(m) for m in grid))
        _check_int("n_mc", self.n_mc, 100)
        _check_int("replications", self.replications, 1)
        _check_int("mi_k", self.mi_k, 2)
        _check_int("master_seed", self.master_seed, 0)
        if self.mi_k >= self.n_mc:
            raise ConfigError("mi_k", "must be smaller than n_mc")
        if self.latent_transform not in TRANSFORMS:
            raise ConfigError("latent_transform", f"must be one of {TRANSFORMS}")
        if not isinstance(self.smoother, SmootherConfig):
            raise ConfigError("smoother", "must be a SmootherConfig")

    @property
    def conditions(self) -> tuple[str, ...]:
        return CONDITIONS if self.latent_transform == "both" else (self.latent_transform,)

    def to_dict(self) -> dict:
        return {
            "m_grid": list(self.m_grid),
            "n_mc": self.n_mc,
            "replications": self.replications,
            "latent_transform": self.latent_transform,
            "master_seed": self.master_seed,
            "smoother": self.smoother.to_dict(),
            "mi_k": self.mi_k,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("<root>", "configuration must be a JSON object")
        data = dict(data)
        aliases = {}
        for short, full in (("m", "m_grid"), ("n", "n_mc")):
            if short in data:
                if full in data:
                    raise ConfigError(short, f"give either {short} or {full}, not both")
                value = data.pop(short)
                data[full] = [value] if short == "m" else value
                aliases[full] = short
        known = {f for f in cls.__dataclass_fields__}
        for key in data:
            if key not in known:
                raise ConfigError(key, "unknown configuration field")
        smoother = data.get("smoother")
        if smoother is not None:
            if not isinstance(smoother, dict):
                raise ConfigError("smoother", "must be an object")
            unknown = set(smoother) - set(SmootherConfig.__dataclass_fields__)
            if unknown:
                raise ConfigError(f"smoother.{sorted(unknown)[0]}", "unknown configuration field")
            try:
                data["smoother"] = SmootherConfig(**smoother)
            except (TypeError, ValueError) as exc:
                raise ConfigError("smoother", str(exc)) from None
        try:
            return cls(**data)
        except ConfigError as exc:
            if exc.field in aliases:
                raise ConfigError(aliases[exc.field], str(exc).split(": ", 1)[1]) from None
            raise


def _check_int(name: str, value, minimum: int) -> None:
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        raise ConfigError(name, f"must be an integer, got {value!r}")
    if value < minimum:
        raise ConfigError(name, f"must be >= {minimum}, got {value}")


@dataclass(frozen=True)
class ReplicationResult:
    m: int
    rep_index: int
    seed: tuple[int, int, int]
    condition: str
    estimates: tuple[ReliabilityEstimate, ...]
    benchmark: BenchmarkResult
    wall_time: float = field(default=0.0, compare=False)

    def __post_init__(self):
        names = tuple(e.name for e in self.estimates)
        if names != tuple(BATTERY):
            raise ValueError(f"estimates must be exactly {tuple(BATTERY)}, got {names}")

    def metric(self, name: str) -> float:
        if name == "RRMSE":
            return self.benchmark.rrmse
        if name == "RAE":
            return self.benchmark.rae
        return next(e.value for e in self.estimates if e.name == name)


def simulate_replication(m: int, rep_index: int, config: ExperimentConfig):
    """Latent draws and EAP scores for one replication."""
    spec = LatentSpec.default()
    seed = (config.master_seed, m, rep_index)
    bank = draw_item_bank(m, stream_seed(*seed, ITEMS))
    eta = sample_latents(config.n_mc, spec, stream_seed(*seed, LATENTS))
    y = simulate_responses(eta, bank, stream_seed(*seed, RESPONSES))
    eap = eap_scores(y, bank, spec, _default_grid())
    return eta, eap


_GRID_CACHE: dict = {}


def _default_grid() -> QuadratureGrid:
    if "grid" not in _GRID_CACHE:
        _GRID_CACHE["grid"] = QuadratureGrid.build(LatentSpec.default())
    return _GRID_CACHE["grid"]


def _estimator_seed(config: ExperimentConfig, m: int, rep_index: int) -> int:
    return int(stream_seed(config.master_seed, m, rep_index, ESTIMATORS).generate_state(1)[0])


def score_set(eap: np.ndarray, eta: np.ndarray, condition: str) -> ScoreSet:
    latent = percentile_ranks(eta) if condition == "percentile" else eta
    return ScoreSet(eap, latent, condition)


def _replicate(m: int, rep_index: int, config: ExperimentConfig, conditions: Iterable[str]):
    t0 = time.perf_counter()
    eta, eap = simulate_replication(m, rep_index, config)
    bench = benchmarks(eap, eta, target_corr=LatentSpec.default().correlation[0, 1])
    est_seed = _estimator_seed(config, m, rep_index)
    out = []
    for condition in conditions:
        t1 = time.perf_counter()
        try:
            estimates = table1_battery(
                score_set(eap, eta, condition), config.smoother, config.mi_k, seed=est_seed
            )
        except EstimationError as exc:
            raise EstimationError(
                f"m={m} rep={rep_index} condition={condition}: {exc}",
                coefficient=exc.coefficient,
                m=m,
                rep_index=rep_index,
            ) from exc
        elapsed = time.perf_counter() - t1 + (t1 - t0) / len(conditions)
        out.append(
            ReplicationResult(
                m, rep_index, (config.master_seed, m, rep_index), condition,
                tuple(estimates), bench, elapsed,
            )
        )
    return out


def run_replication(
    m: int, rep_index: int, config: ExperimentConfig, condition: str | None = None
) -> ReplicationResult:
    """One replication under one latent-score condition.

    ``condition`` defaults to the first condition requested by ``config``.
    The result depends only on ``(config, m, rep_index, condition)``.
    """
    if isinstance(m, bool) or m < 2 or m % 2:
        raise ValueError(f"m must be an even integer >= 2, got {m}")
    condition = condition or config.conditions[0]
    if condition not in CONDITIONS:
        raise ValueError(f"unknown condition {condition!r}")
    return _replicate(m, rep_index, config, (condition,))[0]


@dataclass(frozen=True)
class AggregateRow:
    m: int
    condition: str
    metric: str
    mean: float
    sd: float | None
    count: int


@dataclass
class AggregateTable:
    rows: list[AggregateRow]
    failures: list[dict] = field(default_factory=list)

    def get(self, m: int, condition: str, metric: str) -> AggregateRow:
        for row in self.rows:
            if row.m == m and row.condition == condition and row.metric == metric:
                return row
        raise KeyError((m, condition, metric))

    def mean(self, m: int, condition: str, metric: str) -> float:
        return self.get(m, condition, metric).mean

    def series(self, condition: str, metric: str) -> tuple[list[int], list[float]]:
        rows = sorted(
            (r for r in self.rows if r.condition == condition and r.metric == metric),
            key=lambda r: r.m,
        )
        return [r.m for r in rows], [r.mean for r in rows]

    @property
    def m_values(self) -> list[int]:
        return sorted({r.m for r in self.rows})

    @property
    def conditions(self) -> list[str]:
        return [c for c in CONDITIONS if any(r.condition == c for r in self.rows)]

    @property
    def metrics(self) -> list[str]:
        present = {r.metric for r in self.rows}
        return [m for m in METRICS if m in present]

    def to_csv(self, path: str | os.PathLike) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(AGGREGATE_COLUMNS)
            for r in self.rows:
                sd = "" if r.sd is None else format(r.sd, ".17g")
                w.writerow([r.m, r.condition, r.metric, format(r.mean, ".17g"), sd, r.count])

    @classmethod
    def from_csv(cls, path: str | os.PathLike) -> "AggregateTable":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            missing = [c for c in AGGREGATE_COLUMNS if c not in (reader.fieldnames or ())]
            if missing:
                raise ValueError(f"aggregate CSV is missing columns: {', '.join(missing)}")
            rows = [
                AggregateRow(
                    int(r["m"]), r["condition"], r["metric"], float(r["mean"]),
                    float(r["sd"]) if r["sd"] else None, int(r["count"]),
                )
                for r in reader
            ]
        return cls(rows)


AGGREGATE_COLUMNS = ("m", "condition", "metric", "mean", "sd", "count")


def aggregate(results: Iterable[ReplicationResult], config: ExperimentConfig,
              failures: list[dict] | None = None) -> AggregateTable:
    """Per-(m, condition, metric) mean and SD over replications.

    Results are reduced in ``(m, condition, rep_index)`` order regardless of
    the order they arrive in.
    """
    cells: dict = {}
    for res in results:
        cells.setdefault((res.m, res.condition), {})[res.rep_index] = res
    rows = []
    empty = []
    for condition in config.conditions:
        for m in config.m_grid:
            reps = cells.get((m, condition), {})
            if not reps:
                empty.append((m, condition))
                continue
            ordered = [reps[k] for k in sorted(reps)]
            for metric in METRICS:
                vals = np.array([r.metric(metric) for r in ordered])
                sd = float(np.std(vals, ddof=1)) if vals.size > 1 else None
                rows.append(AggregateRow(m, condition, metric, float(vals.mean()), sd, vals.size))
    table = AggregateTable(rows, sorted(failures or [], key=lambda f: (f["m"], f["rep_index"])))
    if empty:
        cells_txt = ", ".join(f"m={m}/{c}" for m, c in empty)
        raise SweepError(f"no successful replications for {cells_txt}", table)
    return table


def _work(args):
    m, rep, config = args
    try:
        return m, rep, _replicate(m, rep, config, config.conditions), None
    except (EstimationError, ValueError, ArithmeticError) as exc:
        return m, rep, [], f"{type(exc).__name__}: {exc}"


def run_sweep(
    config: ExperimentConfig,
    workers: int = 1,
    progress: Callable[[str], None] | None = None,
) -> AggregateTable:
    """Run every (m, replication) unit and aggregate.

    A failing replication is recorded in ``AggregateTable.failures`` and the
    sweep carries on; :class:`SweepError` is raised only when some cell ends
    up with no successful replication.
    """
    units = [(m, rep, config) for m in config.m_grid for rep in range(config.replications)]
    results: list[ReplicationResult] = []
    failures: list[dict] = []
    total = len(units)

    def handle(done, item):
        m, rep, res, err = item
        results.extend(res)
        if err is not None:
            failures.append({"m": m, "rep_index": rep, "error": err})
        if progress is not None:
            status = "failed: " + err if err else "ok"
            progress(f"[{done}/{total}] m={m} rep={rep} {status}")

    if workers <= 1:
        for done, unit in enumerate(units, 1):
            handle(done, _work(unit))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for done, item in enumerate(pool.map(_work, units, chunksize=1), 1):
                handle(done, item)
    return aggregate(results, config, failures)

