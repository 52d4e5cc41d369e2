"""One-compartment PK model with Michaelis-Menten absorption.

State ``q`` is the drug amount in the GI tract (mg), observation ``c`` the
plasma concentration (mg/l).  The SDE pair is discretized with an
Euler-Maruyama (Ito) step on the observation grid:

    Q_k = Q_{k-1} - V_max Q_{k-1} / (K_m + Q_{k-1}) dt + sigma_q dB
    C_k = C_{k-1} + [V_max Q_{k-1} / ((K_m + Q_{k-1}) V) - C_L C_{k-1} / V] dt + sigma_c dW

with dB, dW independent N(0, dt) increments.
"""

from __future__ import annotations

import csv
import math
from dataclasses import astuple, dataclass, fields, replace
from pathlib import Path
from typing import IO, Iterable, NamedTuple, Sequence

import numpy as np

from .errors import DomainError

PARAM_NAMES = ("v_max", "k_m", "v", "c_l", "sigma_q2", "sigma_c2")


@dataclass(frozen=True)
class PkParams:
    """Parameter vector (V_max, K_m, V, C_L, sigma_q^2, sigma_c^2).

    The four structural rates must be strictly positive.  The two diffusion
    variances may be zero so that noise-free limits can be simulated.
    """

    v_max: float
    k_m: float
    v: float
    c_l: float
    sigma_q2: float
    sigma_c2: float

    def __post_init__(self):
        for name in ("v_max", "k_m", "v", "c_l"):
            value = getattr(self, name)
            if not value > 0 or not math.isfinite(value):
                raise ValueError(f"{name} must be positive and finite, got {value!r}")
        for name in ("sigma_q2", "sigma_c2"):
            value = getattr(self, name)
            if not value >= 0 or not math.isfinite(value):
                raise ValueError(f"{name} must be non-negative and finite, got {value!r}")

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=float)

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "PkParams":
        if len(values) != 6:
            raise ValueError(f"expected 6 values, got {len(values)}")
        return cls(*(float(x) for x in values))

    def with_(self, **changes) -> "PkParams":
        return replace(self, **changes)

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


DEFAULT_PARAMS = PkParams(v_max=1.0, k_m=15.0, v=5.0, c_l=0.05, sigma_q2=0.0002, sigma_c2=0.00003)
DEFAULT_TIMES = (5, 10, 15, 20, 25, 30, 40, 50, 60, 90, 120, 150, 180, 230, 290, 340, 390)
DEFAULT_Q0 = 5.0
DEFAULT_C0 = 0.0


@dataclass(frozen=True)
class TimeGrid:
    """Observation instants t_1 < ... < t_n (min); the origin t_0 = 0 is implicit."""

    times: tuple[float, ...]

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        object.__setattr__(self, "times", times)
        if not times:
            raise ValueError("time grid needs at least one instant")
        if times[0] <= 0:
            raise ValueError("observation times must be positive")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("observation times must be strictly increasing")

    @property
    def n(self) -> int:
        return len(self.times)

    @property
    def with_origin(self) -> np.ndarray:
        return np.concatenate(([0.0], self.times))

    @property
    def steps(self) -> np.ndarray:
        """Step lengths t_k - t_{k-1} for k = 1..n."""
        return np.diff(self.with_origin)


DEFAULT_GRID = TimeGrid(DEFAULT_TIMES)


class NoisePair(NamedTuple):
    """Wiener increments (B_k - B_{k-1}, W_k - W_{k-1}), each with variance dt."""

    db: float
    dw: float


@dataclass
class Trajectory:
    """State and observation paths aligned with ``[0, t_1, ..., t_n]``."""

    t: np.ndarray
    q: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.q = np.asarray(self.q, dtype=float)
        self.c = np.asarray(self.c, dtype=float)
        if not (len(self.t) == len(self.q) == len(self.c)):
            raise ValueError("t, q and c must have identical lengths")

    @property
    def observations(self) -> np.ndarray:
        """c_1..c_n, i.e. the observations without the initial value."""
        return self.c[1:]

    def to_csv(self, dest: str | Path | IO[str]) -> None:
        _write_rows(dest, ("t", "q", "c"), zip(self.t, self.q, self.c))


def _write_rows(dest, header, rows: Iterable[Sequence[float]]) -> None:
    if isinstance(dest, (str, Path)):
        with open(dest, "w", newline="") as fh:
            _write_rows(fh, header, rows)
        return
    writer = csv.writer(dest, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(float(x)) for x in row])


def _check_denominator(q, p: PkParams):
    denom = p.k_m + q
    if np.any(denom <= 0):
        raise DomainError(f"K_m + q must be positive (K_m={p.k_m}, q={q})")
    return denom


def drift_q(q, p: PkParams):
    """Michaelis-Menten absorption drift -V_max q / (K_m + q) in mg/min.

    Accepts scalars or arrays.  Raises DomainError when K_m + q <= 0.
    """
    return -p.v_max * q / _check_denominator(q, p)


def drift_c(q_prev, c_prev, p: PkParams):
    """Concentration drift V_max q / ((K_m + q) V) - C_L c / V."""
    return p.v_max * q_prev / (_check_denominator(q_prev, p) * p.v) - p.c_l * c_prev / p.v


def observation_mean(q_prev, c_prev, dt: float, p: PkParams):
    """Noise-free part of the concentration step, c_{k-1} + drift_c * dt."""
    return c_prev + drift_c(q_prev, c_prev, p) * dt


def _check_dt(dt: float) -> None:
    if not dt > 0:
        raise ValueError(f"time step must be positive, got {dt!r}")


def euler_step(q_prev, c_prev, dt: float, p: PkParams, noise: NoisePair):
    """Advance (Q, C) by one Euler-Maruyama step.

    ``noise`` carries the raw Wiener increments (variance ``dt``), not
    standard normals.  Works element-wise when given arrays.
    """
    _check_dt(dt)
    q_next = q_prev + drift_q(q_prev, p) * dt + math.sqrt(p.sigma_q2) * noise.db
    c_next = observation_mean(q_prev, c_prev, dt, p) + math.sqrt(p.sigma_c2) * noise.dw
    return q_next, c_next


def draw_noise(rng: np.random.Generator, dt: float) -> NoisePair:
    db, dw = rng.standard_normal(2) * math.sqrt(dt)
    return NoisePair(float(db), float(dw))


def simulate_trajectory(
    p: PkParams,
    grid: TimeGrid,
    rng: np.random.Generator,
    q0: float = DEFAULT_Q0,
    c0: float = DEFAULT_C0,
) -> Trajectory:
    """Simulate one path on ``grid`` starting from (q0, c0).

    Negative excursions of Q are kept as is; the recursion only fails if a
    state reaches -K_m.
    """
    if q0 < 0 or c0 < 0:
        raise ValueError("initial amount and concentration must be non-negative")
    q = np.empty(grid.n + 1)
    c = np.empty(grid.n + 1)
    q[0], c[0] = q0, c0
    for k, dt in enumerate(grid.steps, start=1):
        q[k], c[k] = euler_step(q[k - 1], c[k - 1], dt, p, draw_noise(rng, dt))
    return Trajectory(grid.with_origin, q, c)


def read_observations(path: str | Path) -> tuple[TimeGrid, np.ndarray, float, np.ndarray | None]:
    """Load a ``t,c[,q]`` CSV as written by :meth:`Trajectory.to_csv`.

    A row at ``t = 0`` supplies the initial concentration; otherwise c0 = 0.
    Returns ``(grid, observations, c0, q_true)`` where ``q_true`` covers
    t_1..t_n and is None when the file has no ``q`` column.
    """
    with open(path, newline="") as fh:
        rows = [row for row in csv.DictReader(line for line in fh if not line.startswith("#"))]
    if not rows:
        raise ValueError(f"{path}: no observations")
    c0 = DEFAULT_C0
    if float(rows[0]["t"]) == 0.0:
        c0 = float(rows[0]["c"])
        rows = rows[1:]
    grid = TimeGrid(tuple(float(r["t"]) for r in rows))
    obs = np.array([float(r["c"]) for r in rows])
    q_true = None
    if rows and "q" in rows[0] and rows[0]["q"] not in (None, ""):
        q_true = np.array([float(r["q"]) for r in rows])
    return grid, obs, c0, q_true
