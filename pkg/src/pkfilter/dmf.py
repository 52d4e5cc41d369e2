"""Density-based Monte Carlo filter.

N paths are simulated from the state equation without any approximation and
weighted by the Gaussian density of the observed concentration given each
path's state at the previous instant.  Weights follow the pure recursion

    w_{j,k} ∝ p(c_k | c_{k-1}, Q_{j,k-1}) w_{j,k-1},    w_{j,0} = 1/N,

and are never resampled; degeneracy shows up only in :attr:`ParticleEnsemble.ess`.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Sequence

import numpy as np

from .errors import DegenerateWeightsError, DomainError, StepDomainError
from .model import DEFAULT_C0, DEFAULT_Q0, PkParams, TimeGrid, drift_q, observation_mean

logger = logging.getLogger(__name__)

DEFAULT_PARTICLES = 1000
_LOG_SQRT_2PI = 0.5 * math.log(2 * math.pi)


@dataclass
class ParticleEnsemble:
    particles: np.ndarray
    weights: np.ndarray
    prev_particles: np.ndarray

    def __post_init__(self):
        self.particles = np.asarray(self.particles, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        self.prev_particles = np.asarray(self.prev_particles, dtype=float)
        n = len(self.particles)
        if n < 1 or len(self.weights) != n or len(self.prev_particles) != n:
            raise ValueError("particles, weights and prev_particles need a common length >= 1")
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > 1e-10:
            raise ValueError("weights must be non-negative and sum to one")

    def __len__(self) -> int:
        return len(self.particles)

    @property
    def ess(self) -> float:
        """Effective sample size 1 / sum(w^2)."""
        return float(1.0 / np.sum(self.weights**2))


def init_ensemble(n_particles: int, q0: float) -> ParticleEnsemble:
    if n_particles < 1:
        raise ValueError(f"need at least one particle, got {n_particles}")
    particles = np.full(n_particles, float(q0))
    return ParticleEnsemble(particles, np.full(n_particles, 1.0 / n_particles), particles.copy())


def propagate(e: ParticleEnsemble, dt: float, p: PkParams, rng: np.random.Generator) -> ParticleEnsemble:
    """Advance every particle one Euler step of the state equation."""
    if not dt > 0:
        raise ValueError(f"time step must be positive, got {dt!r}")
    q = e.particles
    noise = rng.standard_normal(len(q)) * math.sqrt(p.sigma_q2 * dt)
    return ParticleEnsemble(q + drift_q(q, p) * dt + noise, e.weights, q)


def obs_log_density(c_k, c_prev, q_prev, dt: float, p: PkParams):
    """Log of the Gaussian density N(m_k, sigma_c^2 dt) at ``c_k``."""
    if not p.sigma_c2 > 0:
        raise DomainError("observation density needs sigma_c2 > 0")
    if not dt > 0:
        raise ValueError(f"time step must be positive, got {dt!r}")
    var = p.sigma_c2 * dt
    resid = c_k - observation_mean(q_prev, c_prev, dt, p)
    return -0.5 * resid * resid / var - 0.5 * math.log(var) - _LOG_SQRT_2PI


def obs_density(c_k, c_prev, q_prev, dt: float, p: PkParams):
    """Conditional density p(c_k | c_{k-1}, Q_{k-1}) of the concentration step."""
    return np.exp(obs_log_density(c_k, c_prev, q_prev, dt, p))


def reweight(weights: np.ndarray, log_density: np.ndarray, step: int | None = None) -> np.ndarray:
    """Multiply ``weights`` by ``exp(log_density)`` and renormalize, in log space."""
    with np.errstate(divide="ignore"):
        log_w = np.log(weights) + log_density
    top = np.max(log_w)
    if not np.isfinite(top):
        raise DegenerateWeightsError("all particle weights vanished", step=step)
    w = np.exp(log_w - top)
    return w / w.sum()


def update_weights(
    e: ParticleEnsemble, c_prev: float, c_k: float, dt: float, p: PkParams, step: int | None = None
) -> ParticleEnsemble:
    """Reweight by the observation density evaluated at the pre-propagation particles."""
    log_density = obs_log_density(c_k, c_prev, e.prev_particles, dt, p)
    return ParticleEnsemble(e.particles, reweight(e.weights, log_density, step), e.prev_particles)


def filtered_estimate(e: ParticleEnsemble) -> float:
    return float(np.dot(e.particles, e.weights))


def filtered_variance(e: ParticleEnsemble) -> float:
    mean = filtered_estimate(e)
    return float(np.dot((e.particles - mean) ** 2, e.weights))


def dmf_filter(
    obs: Sequence[float],
    grid: TimeGrid,
    p: PkParams,
    rng: np.random.Generator,
    q0: float = DEFAULT_Q0,
    c0: float = DEFAULT_C0,
    n_particles: int = DEFAULT_PARTICLES,
) -> list[tuple[float, ParticleEnsemble]]:
    """Run the filter and return ``(Q_{k|k}, ensemble)`` for k = 1..n."""
    if len(obs) != grid.n:
        raise ValueError(f"expected {grid.n} observations, got {len(obs)}")
    ensemble = init_ensemble(n_particles, q0)
    c_prev = float(c0)
    out = []
    for k, (dt, c_k) in enumerate(zip(grid.steps, obs), start=1):
        try:
            ensemble = propagate(ensemble, float(dt), p, rng)
            ensemble = update_weights(ensemble, c_prev, float(c_k), float(dt), p, step=k)
        except DomainError as exc:
            raise StepDomainError(str(exc), step=k) from exc
        if logger.isEnabledFor(logging.DEBUG):
            logger.debug("step %d: ESS %.1f of %d", k, ensemble.ess, len(ensemble))
        out.append((filtered_estimate(ensemble), ensemble))
        c_prev = float(c_k)
    return out


def write_ensembles(dest: str | Path | IO[str], ensembles: Sequence[ParticleEnsemble]) -> None:
    """Dump every step's particles as ``step,particle_index,q,weight``."""
    if isinstance(dest, (str, Path)):
        with open(dest, "w", newline="") as fh:
            write_ensembles(fh, ensembles)
        return
    writer = csv.writer(dest, lineterminator="\n")
    writer.writerow(("step", "particle_index", "q", "weight"))
    for k, e in enumerate(ensembles, start=1):
        for j, (q, w) in enumerate(zip(e.particles, e.weights)):
            writer.writerow((k, j, repr(float(q)), repr(float(w))))
