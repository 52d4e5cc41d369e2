"""Replicated simulation studies comparing the two filters.

``run_filter_comparison`` measures how well each filter recovers the hidden
drug amount (MAE quantiles and their relative difference).  ``run_estimation_study``
estimates the parameters with the genetic algorithm under each filter's loss
and summarizes the estimates by quantiles and MAEP.

Replicate ``r`` draws its data from substream ``(seed, r, SIMULATION)`` in
both studies, so the two filter arms always see the same datasets.
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import IO, Callable, Iterable, Sequence

import numpy as np

from . import rng as rngs
from .dmf import DEFAULT_PARTICLES, dmf_filter
from .ekf import ekf_filter
from .errors import PkFilterError
from .ga import DEFAULT_SPACE, GaConfig, ParamSpace, run_ga
from .loss import FilterKind, LossConfig, LossFunction
from .model import (
    DEFAULT_C0,
    DEFAULT_GRID,
    DEFAULT_PARAMS,
    DEFAULT_Q0,
    PARAM_NAMES,
    PkParams,
    TimeGrid,
    simulate_trajectory,
)

logger = logging.getLogger(__name__)

COMPARISON_LEVELS = (0.05, 0.3, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95)
ESTIMATION_LEVELS = (0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95)


def mae(truth: Sequence[float], estimate: Sequence[float]) -> float:
    truth = np.asarray(truth, dtype=float)
    estimate = np.asarray(estimate, dtype=float)
    if truth.shape != estimate.shape or truth.size == 0:
        raise ValueError(f"need two equal-length non-empty series, got {truth.shape} and {estimate.shape}")
    return float(np.mean(np.abs(truth - estimate)))


def rd(mae_ekf, mae_dmf):
    """Relative difference (EKF - DMF) / DMF; works element-wise on arrays."""
    mae_dmf = np.asarray(mae_dmf, dtype=float)
    if np.any(mae_dmf == 0):
        raise ZeroDivisionError("relative difference undefined for a zero DMF error")
    out = (np.asarray(mae_ekf, dtype=float) - mae_dmf) / mae_dmf
    return float(out) if out.ndim == 0 else out


def maep(estimates: Sequence[PkParams], truth: PkParams) -> float:
    """Mean absolute coordinate error over all estimates and all six parameters."""
    if len(estimates) == 0:
        raise ValueError("maep needs at least one estimate")
    est = np.array([e.as_array() for e in estimates])
    return float(np.mean(np.abs(est - truth.as_array())))


def quantiles(values: Sequence[float], levels: Sequence[float]) -> np.ndarray:
    """Empirical quantiles, linear interpolation between order statistics."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("quantiles of an empty sample")
    if any(not 0 < a < 1 for a in levels):
        raise ValueError("quantile levels must lie in (0, 1)")
    return np.quantile(values, levels, method="linear")


@dataclass
class QuantileTable:
    levels: tuple[float, ...]
    rows: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.levels = tuple(float(a) for a in self.levels)
        if any(b <= a for a, b in zip(self.levels, self.levels[1:])):
            raise ValueError("levels must be strictly increasing")
        for name, row in self.rows.items():
            self.add(name, row)

    def add(self, name: str, row: Sequence[float]) -> None:
        row = np.asarray(row, dtype=float)
        if row.shape != (len(self.levels),):
            raise ValueError(f"row {name!r} has {row.size} entries for {len(self.levels)} levels")
        self.rows[name] = row

    def __getitem__(self, name: str) -> np.ndarray:
        return self.rows[name]

    def to_csv(self, dest: IO[str], comments: Iterable[str] = ()) -> None:
        for line in comments:
            dest.write(f"# {line}\n")
        writer = csv.writer(dest, lineterminator="\n")
        writer.writerow(["series", *(f"{a:g}" for a in self.levels)])
        for name, row in self.rows.items():
            writer.writerow([name, *(repr(float(x)) for x in row)])


@dataclass
class ExperimentConfig:
    params_true: PkParams = DEFAULT_PARAMS
    grid: TimeGrid = DEFAULT_GRID
    q0: float = DEFAULT_Q0
    c0: float = DEFAULT_C0
    replicates: int = 200
    n_particles: int = DEFAULT_PARTICLES
    seed: int = 0
    workers: int = 1
    comparison_levels: tuple[float, ...] = COMPARISON_LEVELS
    estimation_levels: tuple[float, ...] = ESTIMATION_LEVELS
    filters: tuple[FilterKind, ...] = (FilterKind.DMF, FilterKind.EKF)
    ga: GaConfig = field(default_factory=GaConfig)
    m_replicates: int = 100
    loss_particles: int = DEFAULT_PARTICLES
    space: ParamSpace = DEFAULT_SPACE

    def __post_init__(self):
        if self.replicates < 1:
            raise ValueError("replicates must be at least 1")
        self.filters = tuple(FilterKind(f) for f in self.filters)

    def describe(self) -> str:
        """Single-line JSON record of every setting, used as an output header."""
        d = asdict(self)
        d["params_true"] = self.params_true.as_dict()
        d["grid"] = list(self.grid.times)
        d["filters"] = [f.value for f in self.filters]
        d["space"] = {"lower": list(self.space.lower), "upper": list(self.space.upper)}
        d.pop("workers")
        return json.dumps(d, sort_keys=True)


def _map(fn: Callable, items: Sequence, workers: int) -> list:
    if workers <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def simulate_replicate(cfg: ExperimentConfig, r: int):
    rng = rngs.substream(cfg.seed, r, rngs.SIMULATION)
    return simulate_trajectory(cfg.params_true, cfg.grid, rng, cfg.q0, cfg.c0)


@dataclass
class ComparisonResult:
    table: QuantileTable
    mae_dmf: np.ndarray
    mae_ekf: np.ndarray
    excluded: dict[str, int]
    config: ExperimentConfig

    def to_csv(self, dest: IO[str]) -> None:
        self.table.to_csv(
            dest,
            [f"config: {self.config.describe()}", f"excluded: {json.dumps(self.excluded, sort_keys=True)}"],
        )


def _compare_one(args) -> tuple[float | None, float | None]:
    cfg, r = args
    try:
        traj = simulate_replicate(cfg, r)
    except PkFilterError as exc:
        logger.info("replicate %d: simulation failed: %s", r, exc)
        return None, None
    truth, obs = traj.q[1:], traj.observations
    p = cfg.params_true
    try:
        est = [s for s, _ in dmf_filter(obs, cfg.grid, p, rngs.substream(cfg.seed, r, rngs.DMF), cfg.q0, cfg.c0, cfg.n_particles)]
        m_dmf = mae(truth, est)
    except PkFilterError as exc:
        logger.info("replicate %d: DMF failed: %s", r, exc)
        m_dmf = None
    try:
        m_ekf = mae(truth, [s.q_filt for s in ekf_filter(obs, cfg.grid, p, cfg.q0, cfg.c0)])
    except PkFilterError as exc:
        logger.info("replicate %d: EKF failed: %s", r, exc)
        m_ekf = None
    return m_dmf, m_ekf


def run_filter_comparison(cfg: ExperimentConfig) -> ComparisonResult:
    """Table of MAE quantiles for DMF and EKF plus their relative difference.

    A replicate on which either filter fails is dropped from both arms; the
    per-arm failure counts are reported in ``excluded``.
    """
    results = _map(_compare_one, [(cfg, r) for r in range(cfg.replicates)], cfg.workers)
    failed_dmf = sum(m is None for m, _ in results)
    failed_ekf = sum(m is None for _, m in results)
    paired = [(d, e) for d, e in results if d is not None and e is not None]
    excluded = {"dmf_failed": failed_dmf, "ekf_failed": failed_ekf, "replicates_dropped": cfg.replicates - len(paired)}
    if not paired:
        raise PkFilterError("every replicate failed")
    mae_dmf = np.array([d for d, _ in paired])
    mae_ekf = np.array([e for _, e in paired])
    levels = cfg.comparison_levels
    dmf_row = quantiles(mae_dmf, levels)
    ekf_row = quantiles(mae_ekf, levels)
    table = QuantileTable(levels, {"DMF": dmf_row, "EKF": ekf_row, "RD": rd(ekf_row, dmf_row)})
    return ComparisonResult(table, mae_dmf, mae_ekf, excluded, cfg)


@dataclass
class EstimationResult:
    tables: dict[FilterKind, QuantileTable]
    estimates: dict[FilterKind, list[PkParams]]
    maep: dict[FilterKind, float]
    excluded: dict[str, int]
    config: ExperimentConfig

    def to_csv(self, dest: IO[str]) -> None:
        for line in (
            f"config: {self.config.describe()}",
            f"excluded: {json.dumps(self.excluded, sort_keys=True)}",
            f"maep: {json.dumps({k.value: v for k, v in self.maep.items()}, sort_keys=True)}",
        ):
            dest.write(f"# {line}\n")
        writer = csv.writer(dest, lineterminator="\n")
        writer.writerow(["filter", "level", *PARAM_NAMES])
        writer.writerow(["real", "", *(repr(x) for x in self.config.params_true.as_array())])
        for kind, table in self.tables.items():
            for i, level in enumerate(table.levels):
                writer.writerow([kind.value, f"{level:g}", *(repr(float(table[n][i])) for n in PARAM_NAMES)])


def estimate_replicate(cfg: ExperimentConfig, r: int, kind: FilterKind):
    """Run the GA on replicate ``r``'s data under ``kind``'s loss."""
    traj = simulate_replicate(cfg, r)
    kind_idx = list(FilterKind).index(kind)
    loss_cfg = LossConfig(cfg.m_replicates, kind, cfg.loss_particles)
    fitness = LossFunction(traj.observations, cfg.grid, loss_cfg, cfg.seed, (r, kind_idx), cfg.q0, cfg.c0)
    return run_ga(cfg.space, cfg.ga, fitness, rngs.substream(cfg.seed, r, rngs.GA, kind_idx))


def _estimate_one(args):
    cfg, r, kind = args
    try:
        return estimate_replicate(cfg, r, kind).theta_hat
    except PkFilterError as exc:
        logger.info("replicate %d (%s): GA failed: %s", r, kind.value, exc)
        return None


def run_estimation_study(cfg: ExperimentConfig) -> EstimationResult:
    jobs = [(cfg, r, kind) for kind in cfg.filters for r in range(cfg.replicates)]
    results = _map(_estimate_one, jobs, cfg.workers)
    tables, estimates, maeps, excluded = {}, {}, {}, {}
    for kind in cfg.filters:
        thetas = [theta for (_, _, k), theta in zip(jobs, results) if k is kind and theta is not None]
        excluded[f"{kind.value}_failed"] = cfg.replicates - len(thetas)
        if not thetas:
            continue
        arr = np.array([t.as_array() for t in thetas])
        tables[kind] = QuantileTable(
            cfg.estimation_levels,
            {name: quantiles(arr[:, j], cfg.estimation_levels) for j, name in enumerate(PARAM_NAMES)},
        )
        estimates[kind] = thetas
        maeps[kind] = maep(thetas, cfg.params_true)
    return EstimationResult(tables, estimates, maeps, excluded, cfg)


def write_csv(result, out: str | Path | None, stream: IO[str]) -> None:
    if out is None:
        result.to_csv(stream)
        return
    with open(Path(out), "w", newline="") as fh:
        result.to_csv(fh)
