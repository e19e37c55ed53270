"""Grid sweeps over (beta, K, latency limit, seed) and their aggregation."""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import RunConfig
from .harness import METRICS_FIELDS, read_metrics, run_training, smoothed_returns

log = logging.getLogger(__name__)

KEY_FIELDS = ("dress", "beta", "K", "latency_limit", "seed")
LONG_FIELDS = ("run",) + KEY_FIELDS + ("episode",) + METRICS_FIELDS
SUMMARY_STATS = ("final_smoothed_return", "mean_case1_fraction", "total_return_aux")


@dataclass(frozen=True)
class GridPoint:
    dress: bool
    beta: float
    K: int
    latency_limit: float
    seed: int

    @property
    def name(self) -> str:
        if not self.dress:
            return f"base_L{self.latency_limit:g}_s{self.seed}"
        return f"dress_b{self.beta:g}_K{self.K}_L{self.latency_limit:g}_s{self.seed}"

    def key(self) -> tuple:
        return (self.dress, self.beta, self.K, self.latency_limit, self.seed)


def expand_grid(cfg: RunConfig) -> list[GridPoint]:
    """Every DRESS combination of the sweep section, plus one plain baseline
    per (latency limit, seed) when ``include_baseline`` is set."""
    sw = cfg.sweep
    points = []
    for lat in sw.latency_limits:
        for seed in sw.seeds:
            if sw.include_baseline:
                points.append(GridPoint(False, 0.0, 0, float(lat), int(seed)))
            for beta in sw.betas:
                for K in sw.Ks:
                    points.append(GridPoint(True, float(beta), int(K), float(lat), int(seed)))
    keys = [p.key() for p in points]
    if len(set(keys)) != len(keys):
        raise ValueError("sweep grid contains duplicate points; check the [sweep] lists")
    return points


def point_config(cfg: RunConfig, point: GridPoint, out_root: Path) -> RunConfig:
    changes = dict(dress_enabled=point.dress, latency_limit=point.latency_limit, seed=point.seed,
                   out_dir=str(out_root / point.name))
    if point.dress:
        changes.update(beta=point.beta, K=point.K)
    return cfg.with_(**changes)


def _run_one(cfg: RunConfig) -> str:
    run_training(cfg)
    return cfg.out_dir


def run_sweep(cfg: RunConfig, out_root: str | Path) -> list[GridPoint]:
    """Run every grid point into its own directory, then aggregate.

    Runs share nothing, so ``workers > 1`` simply fans them out to processes.
    """
    out_root = Path(out_root)
    out_root.mkdir(parents=True, exist_ok=True)
    points = expand_grid(cfg)
    configs = [point_config(cfg, p, out_root) for p in points]
    if cfg.sweep.workers > 1:
        with ProcessPoolExecutor(cfg.sweep.workers) as pool:
            for done in pool.map(_run_one, configs):
                log.info("finished %s", done)
    else:
        for c in configs:
            log.info("finished %s", _run_one(c))
    aggregate(points, out_root)
    return points


def aggregate(points: list[GridPoint], out_root: str | Path, window: int = 10) -> tuple[Path, Path]:
    """Write ``sweep_long.csv`` (one row per episode per run) and
    ``sweep_summary.csv`` (mean and median over seeds per configuration)."""
    out_root = Path(out_root)
    per_run: dict[GridPoint, dict[str, float]] = {}
    long_path = out_root / "sweep_long.csv"
    with open(long_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LONG_FIELDS)
        for p in points:
            records = read_metrics(out_root / p.name / "metrics.csv")
            for i, rec in enumerate(records):
                w.writerow([p.name, int(p.dress), repr(p.beta), p.K, repr(p.latency_limit), p.seed, i]
                           + [repr(getattr(rec, f)) if isinstance(getattr(rec, f), float) else getattr(rec, f)
                              for f in METRICS_FIELDS])
            per_run[p] = run_stats(records, window)

    groups: dict[tuple, list[dict[str, float]]] = {}
    for p, stats in per_run.items():
        groups.setdefault(p.key()[:-1], []).append(stats)
    summary_path = out_root / "sweep_summary.csv"
    with open(summary_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        header = list(KEY_FIELDS[:-1]) + ["n_seeds"]
        for s in SUMMARY_STATS:
            header += [f"{s}_mean", f"{s}_median"]
        w.writerow(header)
        for key, runs in groups.items():
            row = [int(key[0]), repr(key[1]), key[2], repr(key[3]), len(runs)]
            for s in SUMMARY_STATS:
                vals = np.array([r[s] for r in runs])
                row += [repr(float(np.mean(vals))), repr(float(np.median(vals)))]
            w.writerow(row)
    return long_path, summary_path


def run_stats(records, window: int = 10) -> dict[str, float]:
    if not records:
        return {s: float("nan") for s in SUMMARY_STATS}
    _, sm = smoothed_returns(records, window)
    return {
        "final_smoothed_return": float(sm[-1]),
        "mean_case1_fraction": float(np.mean([r.case1_fraction for r in records])),
        "total_return_aux": float(sum(r.episode_return_aux for r in records)),
    }
