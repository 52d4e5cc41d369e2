"""One test per acceptance criterion; each prints a single PASS/FAIL line."""

import csv
import io
import math

import numpy as np
import pytest

from pkfilter.cli import main
from pkfilter.dmf import ParticleEnsemble, dmf_filter, filtered_estimate, obs_density
from pkfilter.ekf import iter_ekf, jacobians
from pkfilter.errors import PkFilterError
from pkfilter.ga import GaConfig, ParamSpace, crossover_pair, crossover_probs, ec_metric, run_ga
from pkfilter.harness import ExperimentConfig, maep, run_estimation_study, run_filter_comparison
from pkfilter.loss import FilterKind, rho
from pkfilter.model import (
    DEFAULT_GRID,
    DEFAULT_PARAMS,
    NoisePair,
    PkParams,
    euler_step,
    observation_mean,
    simulate_trajectory,
)

P = DEFAULT_PARAMS
SEED = 42


@pytest.fixture(scope="module")
def comparison_200():
    return run_filter_comparison(ExperimentConfig(replicates=200, n_particles=1000, seed=SEED))


def test_criterion_1_filter_separation(comparison_200, criterion):
    table = comparison_200.table
    levels = list(table.levels)
    dmf_q = dict(zip(levels, table["DMF"]))
    ekf_q = dict(zip(levels, table["EKF"]))
    desk = run_filter_comparison(ExperimentConfig(replicates=50, n_particles=1000, seed=SEED))
    checks = {
        "dmf q0.95 < ekf q0.05": dmf_q[0.95] < ekf_q[0.05],
        "desk median dmf < ekf": np.median(desk.mae_dmf) < np.median(desk.mae_ekf),
        "dmf median in [0.02, 0.08]": 0.02 <= dmf_q[0.5] <= 0.08,
        "ekf median in [0.05, 0.13]": 0.05 <= ekf_q[0.5] <= 0.13,
    }
    detail = (
        f"dmf median {dmf_q[0.5]:.4f}, ekf median {ekf_q[0.5]:.4f}, dmf q0.95 {dmf_q[0.95]:.4f}, "
        f"ekf q0.05 {ekf_q[0.05]:.4f}, excluded {comparison_200.excluded}"
    )
    criterion("1 filter separation", checks, detail)


def test_criterion_2_rd_consistency(comparison_200, criterion):
    buf = io.StringIO()
    comparison_200.to_csv(buf)
    rows = {r[0]: [float(x) for x in r[1:]] for r in csv.reader(line for line in buf.getvalue().splitlines() if not line.startswith("#"))
            if r[0] != "series"}
    dmf, ekf, rd_row = (np.array(rows[k]) for k in ("DMF", "EKF", "RD"))
    recomputed = (ekf - dmf) / dmf
    median_rd = rd_row[list(comparison_200.table.levels).index(0.5)]
    checks = {
        "recomputed RD within 1e-12": bool(np.all(np.abs(recomputed - rd_row) <= 1e-12)),
        "median RD positive": median_rd > 0,
        "median RD in 1.0 +- 0.5": abs(median_rd - 1.0) <= 0.5,
    }
    criterion("2 RD consistency", checks, f"median RD {median_rd:.4f}")


@pytest.mark.slow
def test_criterion_3_estimation_study(criterion):
    cfg = ExperimentConfig(replicates=20, seed=SEED, ga=GaConfig(max_loops=30))
    res = run_estimation_study(cfg)
    m_dmf, m_ekf = res.maep[FilterKind.DMF], res.maep[FilterKind.EKF]
    med = {n: float(res.tables[FilterKind.DMF][n][list(cfg.estimation_levels).index(0.5)]) for n in ("v_max", "k_m", "v")}
    truth = P.as_dict()
    checks = {"maep dmf <= maep ekf": m_dmf <= m_ekf}
    for name, value in med.items():
        checks[f"median {name} within 40%"] = abs(value / truth[name] - 1) <= 0.40
    detail = (
        f"MAEP dmf {m_dmf:.4f}, ekf {m_ekf:.4f}; dmf medians "
        + ", ".join(f"{k} {v:.4g}" for k, v in med.items())
        + f"; excluded {res.excluded}"
    )
    criterion("3 estimation study", checks, detail)


def _deterministic_euler(p, times, q0, c0):
    q, c, t_prev = [q0], [c0], 0.0
    for t in times:
        dt = t - t_prev
        rate = p.v_max * q[-1] / (p.k_m + q[-1])
        q.append(q[-1] - rate * dt)
        c.append(c[-1] + (rate / p.v - p.c_l * c[-1] / p.v) * dt)
        t_prev = t
    return np.array(q), np.array(c)


def test_criterion_4_property_suite(criterion):
    rng = np.random.default_rng(2024)
    checks = {}

    weights_ok, bounded_ok = True, True
    ekf_ok = True
    for seed in range(25):
        traj = simulate_trajectory(P, DEFAULT_GRID, np.random.default_rng(seed))
        for est, e in dmf_filter(traj.observations, DEFAULT_GRID, P, np.random.default_rng(1000 + seed), n_particles=500):
            weights_ok &= abs(e.weights.sum() - 1.0) <= 1e-10
            bounded_ok &= e.particles.min() - 1e-12 <= est <= e.particles.max() + 1e-12
        try:
            for state, report in iter_ekf(traj.observations, DEFAULT_GRID, P):
                ekf_ok &= 0 <= state.sigma_filt <= report.sigma_pred
        except PkFilterError:
            pass
    for _ in range(200):
        n = int(rng.integers(1, 50))
        q = rng.normal(3, 5, n)
        e = ParticleEnsemble(q, rng.dirichlet(np.ones(n)), q)
        bounded_ok &= q.min() - 1e-12 <= filtered_estimate(e) <= q.max() + 1e-12
    checks["weights sum to 1"] = weights_ok
    checks["ekf 0 <= sigma_filt <= sigma_pred"] = ekf_ok
    checks["estimate within particle range"] = bounded_ok

    target = np.array([1.0, 1.2, 0.9, 1.5, 0.8, 1.1])
    space = ParamSpace((0.5,) * 6, (2.0,) * 6)
    res = run_ga(space, GaConfig(pop_size=60, max_loops=30), lambda t: float(np.sum((t.as_array() - target) ** 2)), rng)
    best = [g.best_fitness for g in res.history]
    checks["ga best fitness non-increasing"] = all(0 <= b <= a for a, b in zip(best, best[1:]))

    inside = True
    for _ in range(2000):
        ti, tj = rng.uniform(0.5, 2.0, 6), rng.uniform(0.5, 2.0, 6)
        li, lj = sorted(rng.exponential(size=2))
        for child in crossover_pair(ti, tj, li, lj, rng.uniform(0, 4), space):
            inside &= space.contains(child)
    checks["crossover children within bounds"] = inside

    pop = rng.uniform(0.5, 2.0, (30, 6))
    checks["EC(identical) = 0"] = ec_metric(pop, pop.copy(), (0.2, 0.4, 0.5, 0.6, 0.8)) == 0.0

    quiet = P.with_(sigma_q2=0.0, sigma_c2=0.0)
    traj = simulate_trajectory(quiet, DEFAULT_GRID, np.random.default_rng(0))
    q_ref, c_ref = _deterministic_euler(quiet, DEFAULT_GRID.times, 5.0, 0.0)
    checks["zero-noise simulation matches Euler oracle"] = bool(
        np.max(np.abs(traj.q - q_ref)) <= 1e-12 and np.max(np.abs(traj.c - c_ref)) <= 1e-12
    )
    criterion("4 property suite", checks)


def test_criterion_5_hand_oracles(criterion):
    tol = 1e-10
    q, c = euler_step(5.0, 0.0, 5.0, P, NoisePair(0.0, 0.0))
    z, t = jacobians(5.0, 5.0, P)
    peak = obs_density(observation_mean(5.0, 0.0, 5.0, P), 0.0, 5.0, 5.0, P)
    space = ParamSpace((0.1,) * 6, (2.0,) * 6)
    clamped, _ = crossover_pair(np.full(6, 1.9), np.full(6, 1.0), 1.0, 1.0, 1.0, space)
    est = PkParams.from_array(P.as_array() + np.array([0.6, 0, 0, 0, 0, 0]))
    checks = {
        "euler_step (3.75, 0.25)": abs(q - 3.75) <= tol and abs(c - 0.25) <= tol,
        "jacobians (0.0375, 0.8125)": abs(z - 0.0375) <= tol and abs(t - 0.8125) <= tol,
        "obs_density peak 32.5735": abs(peak - 1 / math.sqrt(2 * math.pi * 0.00015)) <= tol
        and abs(peak - 32.5735) <= 5e-5,
        "rho 0.4": abs(rho(0.3, [0.1, 0.3, 0.5]) - 0.4) <= tol,
        "crossover_probs [1/3, 2/3]": bool(np.all(np.abs(crossover_probs([1, 2, 4]) - [1 / 3, 2 / 3]) <= tol)),
        "clamp 1.925": bool(np.all(np.abs(clamped - 1.925) <= tol)),
        "maep 0.1": abs(maep([est], P) - 0.1) <= tol,
    }
    criterion("5 hand oracles", checks, f"peak {peak:.6f}")


def test_criterion_6_determinism(tmp_path, criterion):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    main(["compare", "--seed", "42", "--out", str(a)])
    main(["compare", "--seed", "42", "--out", str(b)])
    criterion("6 determinism", {"compare --seed 42 byte-identical": a.read_bytes() == b.read_bytes()})
