"""Command-line interface.

    genrel simulate   --config CFG --out DIR
    genrel estimate   (--config CFG | --scores CSV) --out DIR
    genrel experiment --config CFG --out DIR [--workers N]
    genrel figure     AGGREGATE.csv OUTPUT.svg

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 estimation
error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .assoc import ScoreSet, table1_battery
from .errors import ComputationError, ConfigError, DegenerateInputError, EstimationError, SweepError
from .experiment import (
    CONDITIONS,
    ITEMS,
    LATENTS,
    RESPONSES,
    TRANSFORMS,
    AggregateTable,
    ExperimentConfig,
    _estimator_seed,
    run_sweep,
    score_set,
    simulate_replication,
    stream_seed,
)
from .figure import write_svg
from .model import (
    LatentSpec,
    MonteCarloSample,
    draw_item_bank,
    percentile_ranks,
    sample_latents,
    simulate_responses,
    write_item_bank_csv,
    write_sample_csv,
)

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_ESTIMATION = 0, 2, 3, 4
BATTERY_COLUMNS = ("name", "raw", "clamped", "direction", "condition")


class _Fail(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def _err(msg: str) -> None:
    print(f"genrel: {msg}", file=sys.stderr)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    """Read a JSON config, or the ``config`` block of a run manifest."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise _Fail(EXIT_IO, f"cannot read config {path}: {exc.strerror or exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise _Fail(EXIT_CONFIG, f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if isinstance(data, dict) and "config" in data and "tool" in data:
        data = data["config"]
    if isinstance(data, dict):
        data = {**data, **{k: v for k, v in (overrides or {}).items() if v is not None}}
    try:
        return ExperimentConfig.from_dict(data)
    except ConfigError as exc:
        raise _Fail(EXIT_CONFIG, f"{path}: field {exc}") from None
    except TypeError as exc:
        raise _Fail(EXIT_CONFIG, f"{path}: {exc}") from None


def _outdir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise _Fail(EXIT_IO, f"cannot create output directory {out}: {exc.strerror or exc}") from None
    return out


def _write_manifest(out: Path, command: str, config: dict, seed, started: str, outputs: dict) -> None:
    manifest = {
        "tool": "genrel",
        "version": __version__,
        "command": command,
        "config": config,
        "master_seed": seed,
        "started": started,
        "finished": _now(),
        "outputs": outputs,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")


def _overrides(args) -> dict:
    return {"master_seed": args.seed, "latent_transform": args.transform}


# --- commands ----------------------------------------------------------------

def cmd_simulate(args) -> int:
    started = _now()
    if not args.config:
        raise _Fail(EXIT_CONFIG, "simulate needs --config")
    config = load_config(args.config, _overrides(args))
    out = _outdir(args.out)
    spec = LatentSpec.default()
    outputs = {}
    for m in config.m_grid:
        seed = (config.master_seed, m, 0)
        bank = draw_item_bank(m, stream_seed(*seed, ITEMS))
        eta = sample_latents(config.n_mc, spec, stream_seed(*seed, LATENTS))
        y = simulate_responses(eta, bank, stream_seed(*seed, RESPONSES))
        items_path, sample_path = out / f"items_m{m}.csv", out / f"sample_m{m}.csv"
        write_item_bank_csv(bank, items_path)
        write_sample_csv(MonteCarloSample(eta, y), sample_path)
        outputs[f"m{m}"] = {"items": items_path.name, "sample": sample_path.name}
    _write_manifest(out, "simulate", config.to_dict(), config.master_seed, started, outputs)
    return EXIT_OK


def read_scores_csv(path) -> np.ndarray:
    """Observed and latent score columns ``s_*`` and ``xi_*``."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            rows = list(reader)
    except OSError as exc:
        raise _Fail(EXIT_IO, f"cannot read scores {path}: {exc.strerror or exc}") from None
    if not header:
        raise _Fail(EXIT_CONFIG, f"{path}: empty scores file")
    s_cols = [i for i, h in enumerate(header) if h.startswith("s_")]
    xi_cols = [i for i, h in enumerate(header) if h.startswith("xi_")]
    if not s_cols or not xi_cols:
        raise _Fail(EXIT_CONFIG, f"{path}: scores CSV needs s_* and xi_* columns")
    try:
        data = np.array([[float(v) for v in r] for r in rows])
    except ValueError as exc:
        raise _Fail(EXIT_CONFIG, f"{path}: {exc}") from None
    return data[:, s_cols], data[:, xi_cols]


def cmd_estimate(args) -> int:
    started = _now()
    if bool(args.config) == bool(args.scores):
        raise _Fail(EXIT_CONFIG, "estimate needs exactly one of --config or --scores")
    if args.config:
        config = load_config(args.config, _overrides(args))
        m = config.m_grid[0]
        eta, eap = simulate_replication(m, 0, config)
        conditions = config.conditions
        sets = {c: score_set(eap, eta, c) for c in conditions}
        seed = _estimator_seed(config, m, 0)
        smoother, mi_k = config.smoother, config.mi_k
        echo = config.to_dict()
    else:
        observed, latent = read_scores_csv(args.scores)
        transform = args.transform or "raw"
        conditions = CONDITIONS if transform == "both" else (transform,)
        sets = {
            c: ScoreSet(observed, percentile_ranks(latent) if c == "percentile" else latent, c)
            for c in conditions
        }
        seed = args.seed or 0
        defaults = ExperimentConfig()
        smoother, mi_k = defaults.smoother, defaults.mi_k
        echo = {"scores": str(args.scores), "latent_transform": transform}
    out = _outdir(args.out)
    rows = []
    for condition in conditions:
        try:
            estimates = table1_battery(sets[condition], smoother, mi_k, seed=seed)
        except EstimationError as exc:
            raise _Fail(EXIT_ESTIMATION, f"estimation failed for {exc.coefficient}: {exc}") from None
        for e in estimates:
            rows.append([e.name, format(e.value, ".17g"), format(e.clamped, ".17g"), e.direction, condition])
    path = out / "battery.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BATTERY_COLUMNS)
        w.writerows(rows)
    _write_manifest(out, "estimate", echo, seed, started, {"battery": path.name})
    return EXIT_OK


def cmd_experiment(args) -> int:
    started = _now()
    if not args.config:
        raise _Fail(EXIT_CONFIG, "experiment needs --config")
    config = load_config(args.config, _overrides(args))
    out = _outdir(args.out)
    workers = args.workers if args.workers else (os.cpu_count() or 1)
    try:
        table = run_sweep(config, workers=workers, progress=lambda msg: print(msg, file=sys.stderr))
    except SweepError as exc:
        raise _Fail(EXIT_ESTIMATION, str(exc)) from None
    for f in table.failures:
        _err(f"replication failed: m={f['m']} rep={f['rep_index']}: {f['error']}")
    csv_path, svg_path = out / "aggregate.csv", out / "figure.svg"
    table.to_csv(csv_path)
    write_svg(table, svg_path)
    _write_manifest(
        out, "experiment", config.to_dict(), config.master_seed, started,
        {"aggregate": csv_path.name, "figure": svg_path.name, "failures": table.failures},
    )
    return EXIT_OK


def cmd_figure(args) -> int:
    try:
        table = AggregateTable.from_csv(args.aggregate)
    except OSError as exc:
        raise _Fail(EXIT_IO, f"cannot read {args.aggregate}: {exc.strerror or exc}") from None
    except (ValueError, KeyError) as exc:
        raise _Fail(EXIT_CONFIG, f"{args.aggregate}: {exc}") from None
    out = Path(args.svg)
    if out.parent and not out.parent.exists():
        _outdir(out.parent)
    write_svg(table, out)
    return EXIT_OK


# --- entry point -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration (or a run manifest)")
    common.add_argument("--seed", type=int, help="master seed; overrides the config")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--workers", type=int, help="worker processes (default: CPU count)")
    common.add_argument("--transform", choices=TRANSFORMS, help="latent-score condition(s)")

    parser = argparse.ArgumentParser(prog="genrel", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("simulate", parents=[common], help="write item-bank and sample CSVs")
    p.set_defaults(func=cmd_simulate)
    p = sub.add_parser("estimate", parents=[common], help="evaluate the nine-coefficient battery")
    p.add_argument("--scores", help="CSV with s_* (observed) and xi_* (latent) columns")
    p.set_defaults(func=cmd_estimate)
    p = sub.add_parser("experiment", parents=[common], help="run the test-length sweep")
    p.set_defaults(func=cmd_experiment)
    p = sub.add_parser("figure", help="render an aggregate CSV as SVG")
    p.add_argument("aggregate", help="aggregate CSV from `experiment`")
    p.add_argument("svg", help="output SVG path")
    p.set_defaults(func=cmd_figure)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return args.func(args)
    except _Fail as exc:
        _err(str(exc))
        return exc.code
    except ConfigError as exc:
        _err(f"field {exc}")
        return EXIT_CONFIG
    except (EstimationError, DegenerateInputError, ComputationError) as exc:
        _err(f"estimation error: {exc}")
        return EXIT_ESTIMATION
    except OSError as exc:
        _err(f"I/O error: {exc}")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
