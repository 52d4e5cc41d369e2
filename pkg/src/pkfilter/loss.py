"""Simulation-based absolute-deviation loss.

For a candidate parameter vector the chosen filter is run over the observed
concentrations.  At each time point M concentrations are simulated from the
observation equation with the previous filtered state plugged in for
Q_{k-1}, and the loss accumulates the absolute deviations of the observed
value from those draws.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import rng as rngs
from .dmf import DEFAULT_PARTICLES, dmf_filter
from .ekf import ekf_filter
from .errors import LossEvaluationError, PkFilterError
from .model import DEFAULT_C0, DEFAULT_Q0, PkParams, TimeGrid, observation_mean

logger = logging.getLogger(__name__)


class FilterKind(str, enum.Enum):
    EKF = "ekf"
    DMF = "dmf"


@dataclass(frozen=True)
class LossConfig:
    m_replicates: int = 100
    filter_kind: FilterKind = FilterKind.DMF
    n_particles: int = DEFAULT_PARTICLES

    def __post_init__(self):
        object.__setattr__(self, "filter_kind", FilterKind(self.filter_kind))
        if self.m_replicates < 1:
            raise ValueError("m_replicates must be at least 1")
        if self.n_particles < 1:
            raise ValueError("n_particles must be at least 1")


def simulate_replicates(
    q_filt_prev: float, c_prev: float, dt: float, p: PkParams, m: int, rng: np.random.Generator
) -> np.ndarray:
    """Draw ``m`` values of C_k from the observation equation given Q_{k-1} = q_filt_prev."""
    if not dt > 0:
        raise ValueError(f"time step must be positive, got {dt!r}")
    if m < 1:
        raise ValueError(f"need at least one replicate, got {m}")
    mean = observation_mean(q_filt_prev, c_prev, dt, p)
    return mean + math.sqrt(p.sigma_c2 * dt) * rng.standard_normal(m)


def rho(c_obs: float, replicates: Sequence[float]) -> float:
    replicates = np.asarray(replicates, dtype=float)
    if replicates.size == 0:
        raise ValueError("rho needs at least one replicate")
    return float(np.sum(np.abs(c_obs - replicates)))


def filtered_means(
    theta: PkParams,
    obs: Sequence[float],
    grid: TimeGrid,
    cfg: LossConfig,
    rng: np.random.Generator,
    q0: float = DEFAULT_Q0,
    c0: float = DEFAULT_C0,
) -> np.ndarray:
    """Q_{k|k}(theta) for k = 1..n under the configured filter."""
    if cfg.filter_kind is FilterKind.EKF:
        return np.array([s.q_filt for s in ekf_filter(obs, grid, theta, q0, c0)])
    return np.array([est for est, _ in dmf_filter(obs, grid, theta, rng, q0, c0, cfg.n_particles)])


def loss_L(
    theta: PkParams,
    obs: Sequence[float],
    grid: TimeGrid,
    cfg: LossConfig,
    rng: np.random.Generator,
    q0: float = DEFAULT_Q0,
    c0: float = DEFAULT_C0,
) -> float:
    """Sum over time points of rho(c_k, theta).

    Raises LossEvaluationError (carrying ``theta``) when the filter fails.
    """
    obs = np.asarray(obs, dtype=float)
    if len(obs) < 1:
        raise ValueError("need at least one observation")
    try:
        q_filt = filtered_means(theta, obs, grid, cfg, rng, q0, c0)
        q_prev = np.concatenate(([q0], q_filt[:-1]))
        c_prev = np.concatenate(([c0], obs[:-1]))
        total = 0.0
        for k, dt in enumerate(grid.steps):
            draws = simulate_replicates(q_prev[k], c_prev[k], float(dt), theta, cfg.m_replicates, rng)
            total += rho(obs[k], draws)
    except PkFilterError as exc:
        raise LossEvaluationError(theta, exc) from exc
    if not math.isfinite(total):
        raise LossEvaluationError(theta, ValueError(f"non-finite loss {total!r}"))
    return total


class LossFunction:
    """Fitness callable for the optimizer.

    Every call draws from a fresh substream keyed by ``(*key, counter)`` and
    maps filter failures to ``inf``.
    """

    def __init__(
        self,
        obs: Sequence[float],
        grid: TimeGrid,
        cfg: LossConfig,
        seed: int,
        key: Sequence[int] = (),
        q0: float = DEFAULT_Q0,
        c0: float = DEFAULT_C0,
    ):
        self.obs = np.asarray(obs, dtype=float)
        self.grid = grid
        self.cfg = cfg
        self.seed = seed
        self.key = tuple(key)
        self.q0 = q0
        self.c0 = c0
        self.evaluations = 0
        self.failures = 0

    def __call__(self, theta: PkParams) -> float:
        rng = rngs.substream(self.seed, *self.key, rngs.LOSS, self.evaluations)
        self.evaluations += 1
        try:
            return loss_L(theta, self.obs, self.grid, self.cfg, rng, self.q0, self.c0)
        except LossEvaluationError as exc:
            self.failures += 1
            logger.debug("%s", exc)
            return math.inf
