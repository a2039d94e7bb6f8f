"""Command-line entry point: generate / calibrate / detect / evaluate.

All commands read a JSON config (every flag overrides its config key) and are
deterministic given the seed, independent of worker count. Exit codes:
0 success, 2 config error, 3 data error, 4 internal error. Log verbosity
comes from the TCM_LOG environment variable (error | info | debug).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys
from dataclasses import dataclass
from functools import partial
from pathlib import Path
from typing import Optional, Sequence

from . import evaluation, formats, synthgen
from .calibration import calibrate
from .clustering import PixelFeatureConfig
from .core import DEFAULT_EPS, detect
from .data import FootprintDataset
from .errors import ConfigError, TCMError
from .geometry import extract_chip_stack
from .util import run_tasks

log = logging.getLogger("tcm")


@dataclass
class RunConfig:
    scenes_dir: Optional[str] = None
    polygons: Optional[str] = None
    labels: Optional[str] = None
    out_dir: str = "out"
    k: Optional[int] = None
    r: Optional[float] = None
    theta: Optional[object] = None  # float or "auto"
    feature_mode: str = "spectral"
    window: int = 1
    eps: float = DEFAULT_EPS
    percentile: float = 98.0
    k_grid: Optional[list[int]] = None
    r_grid: Optional[list[float]] = None
    n_random: int = 1000
    n_bins: int = 50
    method: str = "tcm_semi"
    n_repeats: int = 50
    train_frac: float = 0.8
    seed: int = 0
    workers: int = 1
    synth: Optional[dict] = None

    def feature_config(self) -> PixelFeatureConfig:
        return PixelFeatureConfig(mode=self.feature_mode, window=self.window)


_CONFIG_KEYS = {f.name for f in dataclasses.fields(RunConfig)}


def load_config(path: Optional[str], overrides: dict) -> RunConfig:
    values: dict = {}
    if path is not None:
        cfg_path = Path(path)
        if not cfg_path.exists():
            raise ConfigError(f"config file not found: {cfg_path}")
        try:
            loaded = json.loads(cfg_path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        unknown = set(loaded) - _CONFIG_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        values.update(loaded)
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        cfg = RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    if cfg.theta is not None and cfg.theta != "auto":
        try:
            cfg.theta = float(cfg.theta)
        except (TypeError, ValueError):
            raise ConfigError(f"theta must be a number or 'auto', got {cfg.theta!r}")
    if cfg.workers < 1:
        raise ConfigError("workers must be >= 1")
    return cfg


def _require(cfg: RunConfig, *names: str) -> None:
    for name in names:
        if getattr(cfg, name) in (None, ""):
            raise ConfigError(f"config key {name!r} is required for this command")


def _require_paths(cfg: RunConfig) -> None:
    _require(cfg, "scenes_dir", "polygons")
    for name in ("scenes_dir", "polygons", "labels"):
        value = getattr(cfg, name)
        if value is not None and not Path(value).exists():
            raise ConfigError(f"{name} path does not exist: {value}")


def _require_grids(cfg: RunConfig) -> None:
    if not cfg.k_grid or not cfg.r_grid:
        raise ConfigError("calibration needs nonempty k_grid and r_grid in the config")


def _load_dataset(cfg: RunConfig) -> FootprintDataset:
    _require_paths(cfg)
    return FootprintDataset.load(cfg.scenes_dir, cfg.polygons, cfg.labels)


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_generate(cfg: RunConfig) -> int:
    fields = {f.name for f in dataclasses.fields(synthgen.SynthConfig)}
    overrides = dict(cfg.synth or {})
    unknown = set(overrides) - fields
    if unknown:
        raise ConfigError(f"unknown synth keys: {sorted(unknown)}")
    for key in ("year_weights", "size_range", "roof_base"):
        if key in overrides:
            overrides[key] = tuple(overrides[key])
    if "palette" in overrides:
        overrides["palette"] = tuple(tuple(c) for c in overrides["palette"])
    overrides.setdefault("seed", cfg.seed)
    try:
        synth_cfg = synthgen.SynthConfig(**overrides)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    dataset = synthgen.generate(synth_cfg)
    paths = dataset.save(_out_dir(cfg))
    log.info("generated %d scenes and %d footprints under %s",
             len(dataset.scenes), len(dataset.polygons), cfg.out_dir)
    for name, p in paths.items():
        log.debug("wrote %s: %s", name, p)
    return 0


def cmd_calibrate(cfg: RunConfig) -> int:
    _require_grids(cfg)
    dataset = _load_dataset(cfg)
    report = calibrate(
        dataset, cfg.k_grid, cfg.r_grid, cfg.n_random, cfg.n_bins, cfg.percentile,
        cfg.seed, cfg.feature_config(), cfg.eps, cfg.workers)
    out = _out_dir(cfg)
    formats.write_json(out / "calibration.json", formats.calibration_report_to_dict(report))

    rows = [{"k": c.k, "r": c.r, "bc": c.bc, "theta": c.theta} for c in report.cells]
    header = ["k", "r", "bc", "theta"]
    if dataset.labels:
        cache = evaluation.DivergenceCache(dataset, cfg.feature_config(), cfg.eps,
                                           cfg.seed, cfg.workers)
        rows = evaluation.grid_cell_accuracies(dataset, report, cache,
                                               cfg.feature_config(), cfg.eps,
                                               cfg.seed, cfg.workers)
        header = ["k", "r", "bc", "theta", "accuracy"]
    with open(out / "calibration_cells.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([row["k"], repr(float(row["r"])), repr(float(row["bc"])),
                             repr(float(row["theta"]))]
                            + ([repr(float(row["accuracy"]))] if "accuracy" in row else []))
    log.info("chose k=%d r=%g theta=%.6g (BC grid of %d cells)",
             report.chosen_k, report.chosen_r, report.chosen_theta, len(report.cells))
    return 0


def _resolved_params(cfg: RunConfig, dataset: FootprintDataset):
    if cfg.theta == "auto" or cfg.theta is None or cfg.k is None or cfg.r is None:
        _require_grids(cfg)
        report = calibrate(
            dataset, cfg.k_grid, cfg.r_grid, cfg.n_random, cfg.n_bins, cfg.percentile,
            cfg.seed, cfg.feature_config(), cfg.eps, cfg.workers)
        log.info("auto-calibrated to k=%d r=%g theta=%.6g",
                 report.chosen_k, report.chosen_r, report.chosen_theta)
        return report.chosen_k, report.chosen_r, report.chosen_theta
    return int(cfg.k), float(cfg.r), float(cfg.theta)


def cmd_detect(cfg: RunConfig) -> int:
    dataset = _load_dataset(cfg)
    k, r, theta = _resolved_params(cfg, dataset)
    chips = [extract_chip_stack(dataset.scenes, poly, r) for poly in dataset.polygons]
    results = run_tasks(
        partial(detect, k=k, theta=theta, feature_config=cfg.feature_config(),
                seed=cfg.seed, eps=cfg.eps),
        chips, cfg.workers)
    out = _out_dir(cfg)
    formats.write_detections_csv(out / "detections.csv", results)
    log.info("detected %d footprints with k=%d r=%g theta=%.6g", len(results), k, r, theta)
    return 0


def cmd_evaluate(cfg: RunConfig) -> int:
    if cfg.method not in evaluation.METHODS:
        raise ConfigError(f"method must be one of {evaluation.METHODS}, got {cfg.method!r}")
    dataset = _load_dataset(cfg)
    if not dataset.labels:
        raise ConfigError("evaluate needs labels (labels csv or label_year properties)")
    out = _out_dir(cfg)

    if cfg.method == "tcm_semi":
        _require_grids(cfg)
        result, report, _ = evaluation.evaluate_semi_supervised(
            dataset, cfg.k_grid, cfg.r_grid, cfg.n_random, cfg.n_bins, cfg.percentile,
            cfg.seed, cfg.feature_config(), cfg.eps, cfg.workers)
        metrics = {
            "method": cfg.method,
            "accuracy": result.accuracy,
            "mae": result.mae,
            "mae_index": result.mae_index,
            "n": result.n,
            "chosen_k": report.chosen_k,
            "chosen_r": report.chosen_r,
            "chosen_theta": report.chosen_theta,
            "seed": cfg.seed,
        }
        rows = [(0, result.accuracy, result.mae, result.mae_index, result.n)]
    else:
        _require_grids(cfg)
        summary = evaluation.repeated_splits(
            dataset, cfg.method, cfg.n_repeats, cfg.train_frac, cfg.seed,
            cfg.k_grid, cfg.r_grid, cfg.feature_config(), cfg.eps, cfg.workers)
        metrics = {
            "method": cfg.method,
            "acc_mean": summary.acc_mean,
            "acc_std": summary.acc_std,
            "mae_mean": summary.mae_mean,
            "mae_std": summary.mae_std,
            "mae_index_mean": summary.mae_index_mean,
            "n_repeats": cfg.n_repeats,
            "seed": cfg.seed,
        }
        rows = [(r.repeat, r.accuracy, r.mae, r.mae_index, r.n_test) for r in summary.records]

    formats.write_json(out / "metrics.json", metrics)
    with open(out / "repeats.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["repeat", "accuracy", "mae", "mae_index", "n_test"])
        for rep, acc, mae, mae_i, n in rows:
            writer.writerow([rep, repr(float(acc)), repr(float(mae)),
                             repr(float(mae_i)), n])
    log.info("method=%s metrics written to %s", cfg.method, out / "metrics.json")
    return 0


_COMMANDS = {
    "generate": cmd_generate,
    "calibrate": cmd_calibrate,
    "detect": cmd_detect,
    "evaluate": cmd_evaluate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tcm",
        description="Detect when footprinted structures first appear in an image time series.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in _COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--workers", type=int, help="worker threads over footprints")
        p.add_argument("--k", type=int, help="cluster count")
        p.add_argument("--r", type=float, help="buffer radius (polygon units)")
        p.add_argument("--theta", help="decision threshold, or 'auto'")
        p.add_argument("--method", help="evaluation method", choices=evaluation.METHODS)
        p.add_argument("--out", dest="out_dir", help="output directory")
    return parser


def _setup_logging() -> None:
    level = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}.get(
        os.environ.get("TCM_LOG", "info").lower(), logging.INFO)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr, force=True)


def main(argv: Optional[Sequence[str]] = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    overrides = {
        key: getattr(args, key)
        for key in ("seed", "workers", "k", "r", "theta", "method", "out_dir")
        if getattr(args, key, None) is not None
    }
    try:
        cfg = load_config(args.config, overrides)
        return _COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"error[Config]: {exc}", file=sys.stderr)
        return 2
    except TCMError as exc:
        print(f"error[{exc.code}]: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # pragma: no cover - defensive
        log.exception("internal error")
        print(f"error[Internal]: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    raise SystemExit(main())
