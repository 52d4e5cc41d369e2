"""Scalar extended Kalman filter for the discretized PK model.

Both the state and the observation maps are linearized at the previous
filtered mean Q_{k-1|k-1}.  The observation prediction starts from the
observed c_{k-1}, as the recursion is written for this model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, NamedTuple, Sequence

from .errors import DomainError, SingularInnovationError, StepDomainError
from .model import DEFAULT_C0, DEFAULT_Q0, PkParams, TimeGrid, drift_q, observation_mean

SINGULAR_TOL = 1e-300


class EkfState(NamedTuple):
    q_filt: float
    sigma_filt: float


@dataclass(frozen=True)
class EkfStepReport:
    """Intermediate quantities of one EKF step."""

    q_pred: float
    sigma_pred: float
    c_pred: float
    f: float
    m: float
    gain: float
    z: float
    t_lin: float


def jacobians(q_filt_prev: float, dt: float, p: PkParams) -> tuple[float, float]:
    """Return (Z, T), the observation and state sensitivities to Q_{k-1}.

    Z = V_max K_m / ((K_m + Q)^2 V) dt and T = 1 - V_max K_m / (K_m + Q)^2 dt.
    """
    denom = p.k_m + q_filt_prev
    if denom == 0:
        raise DomainError(f"K_m + q is zero at q={q_filt_prev}")
    slope = p.v_max * p.k_m / (denom * denom)
    return slope / p.v * dt, 1.0 - slope * dt


def ekf_step(
    prev: EkfState, c_prev: float, c_obs: float, dt: float, p: PkParams
) -> tuple[EkfState, EkfStepReport]:
    if not dt > 0:
        raise ValueError(f"time step must be positive, got {dt!r}")
    if prev.sigma_filt < 0:
        raise ValueError(f"prior covariance must be non-negative, got {prev.sigma_filt!r}")
    q, sigma = prev
    z, t_lin = jacobians(q, dt, p)

    q_pred = q + drift_q(q, p) * dt
    sigma_pred = t_lin * t_lin * sigma + p.sigma_q2 * dt
    c_pred = observation_mean(q, c_prev, dt, p)
    f = z * z * sigma_pred + p.sigma_c2 * dt
    if not f > SINGULAR_TOL:
        raise SingularInnovationError(f"innovation variance F={f!r} is not positive")
    m = z * sigma_pred
    gain = m / f
    # equals sigma_pred - gain^2 f; this form cannot cancel below zero
    sigma_filt = sigma_pred * (p.sigma_c2 * dt) / f
    q_filt = q_pred + gain * (c_obs - c_pred)
    if not math.isfinite(q_filt):
        raise DomainError(f"filtered mean overflowed to {q_filt!r}")

    report = EkfStepReport(q_pred, sigma_pred, c_pred, f, m, gain, z, t_lin)
    return EkfState(q_filt, sigma_filt), report


def iter_ekf(
    obs: Sequence[float],
    grid: TimeGrid,
    p: PkParams,
    q0: float = DEFAULT_Q0,
    c0: float = DEFAULT_C0,
) -> Iterator[tuple[EkfState, EkfStepReport]]:
    """Yield ``(state, report)`` for k = 1..n starting from Q_{0|0}=q0, Sigma_{0|0}=0."""
    if len(obs) != grid.n:
        raise ValueError(f"expected {grid.n} observations, got {len(obs)}")
    state = EkfState(float(q0), 0.0)
    c_prev = float(c0)
    for k, (dt, c_obs) in enumerate(zip(grid.steps, obs), start=1):
        try:
            state, report = ekf_step(state, c_prev, float(c_obs), float(dt), p)
        except SingularInnovationError as exc:
            raise SingularInnovationError(str(exc), step=k) from exc
        except DomainError as exc:
            raise StepDomainError(str(exc), step=k) from exc
        yield state, report
        c_prev = float(c_obs)


def ekf_filter(
    obs: Sequence[float],
    grid: TimeGrid,
    p: PkParams,
    q0: float = DEFAULT_Q0,
    c0: float = DEFAULT_C0,
) -> list[EkfState]:
    """Filtered states Q_{k|k}, Sigma_{k|k} for every observation."""
    return [state for state, _ in iter_ekf(obs, grid, p, q0, c0)]
