import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pkfilter.ekf import EkfState, ekf_filter, ekf_step, iter_ekf, jacobians
from pkfilter.errors import DomainError, SingularInnovationError
from pkfilter.model import DEFAULT_GRID, DEFAULT_PARAMS, TimeGrid, simulate_trajectory

P = DEFAULT_PARAMS

# Frozen from an exact rational-arithmetic evaluation of the recursion
# (Fraction inputs, one literal line per equation), observations 0.26 then 0.45.
STEP1 = dict(
    q_pred=3.75,
    sigma_pred=0.001,
    c_pred=0.25,
    f=0.00015140625,
    m=3.75e-05,
    gain=0.2476780185758514,
    z=0.0375,
    t_lin=0.8125,
    q_filt=3.7524767801857584,
    sigma_filt=0.0009907120743034056,
)
STEP2 = dict(
    q_pred=2.751948470199874,
    sigma_pred=0.0016131844992400331,
    c_pred=0.44710566199717683,
    f=0.00015293516157217812,
    m=6.881102492335628e-05,
    gain=0.4499359350457857,
    z=0.04265539679793165,
    t_lin=0.7867230160103418,
    q_filt=2.753250736875513,
    sigma_filt=0.0015822239463996839,
)


def _check(report, state, expected):
    for name in ("q_pred", "sigma_pred", "c_pred", "f", "m", "gain", "z", "t_lin"):
        assert getattr(report, name) == pytest.approx(expected[name], rel=1e-12, abs=1e-15), name
    assert state.q_filt == pytest.approx(expected["q_filt"], rel=1e-12)
    assert state.sigma_filt == pytest.approx(expected["sigma_filt"], rel=1e-12)


class TestJacobians:
    def test_hand_values(self):
        z, t = jacobians(5.0, 5.0, P)
        assert z == pytest.approx(0.0375, abs=1e-10)
        assert t == pytest.approx(0.8125, abs=1e-10)

    def test_zero_step(self):
        assert jacobians(5.0, 0.0, P) == (0.0, 1.0)

    def test_saturated(self):
        z, t = jacobians(1e12, 5.0, P)
        assert z == pytest.approx(0.0, abs=1e-20)
        assert t == pytest.approx(1.0, abs=1e-20)

    def test_singular(self):
        with pytest.raises(DomainError):
            jacobians(-15.0, 5.0, P)

    def test_matches_finite_differences(self):
        # Z and T are derivatives of the one-step maps with respect to Q_{k-1}
        q, dt, h = 2.3, 7.0, 1e-6

        def state_map(x):
            return x - P.v_max * x / (P.k_m + x) * dt

        def obs_map(x):
            return 0.1 + (P.v_max * x / ((P.k_m + x) * P.v) - P.c_l * 0.1 / P.v) * dt

        z, t = jacobians(q, dt, P)
        assert t == pytest.approx((state_map(q + h) - state_map(q - h)) / (2 * h), rel=1e-7)
        assert z == pytest.approx((obs_map(q + h) - obs_map(q - h)) / (2 * h), rel=1e-7)


class TestEkfStep:
    def test_against_rational_oracle(self):
        state, report = ekf_step(EkfState(5.0, 0.0), 0.0, 0.26, 5.0, P)
        _check(report, state, STEP1)
        state, report = ekf_step(state, 0.26, 0.45, 5.0, P)
        _check(report, state, STEP2)

    def test_singular_innovation(self):
        with pytest.raises(SingularInnovationError):
            ekf_step(EkfState(5.0, 0.0), 0.0, 0.3, 5.0, P.with_(sigma_q2=0.0, sigma_c2=0.0))

    def test_zero_innovation_keeps_prediction(self):
        _, probe = ekf_step(EkfState(5.0, 0.0), 0.0, 0.0, 5.0, P)
        state, report = ekf_step(EkfState(5.0, 0.0), 0.0, probe.c_pred, 5.0, P)
        assert state.q_filt == report.q_pred

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            ekf_step(EkfState(5.0, 0.0), 0.0, 0.3, 0.0, P)
        with pytest.raises(ValueError):
            ekf_step(EkfState(5.0, -1.0), 0.0, 0.3, 5.0, P)

    def test_covariance_matches_printed_update(self):
        state, report = ekf_step(EkfState(4.0, 0.01), 0.2, 0.3, 10.0, P)
        assert state.sigma_filt == pytest.approx(report.sigma_pred - report.gain**2 * report.f, rel=1e-10)


@given(
    q=st.floats(0.0, 50.0),
    sigma=st.floats(0.0, 10.0),
    c_prev=st.floats(-1.0, 2.0),
    c_obs=st.floats(-1.0, 2.0),
    dt=st.floats(0.1, 60.0),
)
@settings(max_examples=200, deadline=None)
def test_step_invariants(q, sigma, c_prev, c_obs, dt):
    state, r = ekf_step(EkfState(q, sigma), c_prev, c_obs, dt, P)
    assert r.f > 0
    assert r.sigma_pred >= 0
    assert state.sigma_filt >= 0
    assert state.sigma_filt <= r.sigma_pred
    assert r.gain * r.f == pytest.approx(r.m, rel=1e-12, abs=1e-300)


def test_filter_invariants_along_default_runs():
    for seed in range(20):
        traj = simulate_trajectory(P, DEFAULT_GRID, np.random.default_rng(seed))
        try:
            for state, report in iter_ekf(traj.observations, DEFAULT_GRID, P):
                assert state.sigma_filt >= 0
                assert state.sigma_filt <= report.sigma_pred
                assert abs(report.gain * report.f - report.m) <= 1e-12 * max(1.0, abs(report.m))
        except DomainError:
            pass


def test_zero_innovation_fixpoint_over_a_run():
    states = []
    state, c_prev = EkfState(5.0, 0.0), 0.0
    for dt in DEFAULT_GRID.steps[:8]:
        _, probe = ekf_step(state, c_prev, 0.0, dt, P)
        state, report = ekf_step(state, c_prev, probe.c_pred, dt, P)
        assert state.q_filt == report.q_pred
        states.append(state)
        c_prev = probe.c_pred


def test_filter_single_step_equals_step():
    grid = TimeGrid((5.0,))
    (state,) = ekf_filter([0.26], grid, P)
    expected, _ = ekf_step(EkfState(5.0, 0.0), 0.0, 0.26, 5.0, P)
    assert state == expected


def test_filter_tracks_noise_free_data():
    quiet = P.with_(sigma_q2=0.0, sigma_c2=0.0)
    tiny = P.with_(sigma_q2=1e-12, sigma_c2=1e-12)
    grid = TimeGrid(DEFAULT_GRID.times[:9])  # steps <= 10 min keep the Euler map contracting
    traj = simulate_trajectory(quiet, grid, np.random.default_rng(0))
    states = ekf_filter(traj.observations, grid, tiny)
    np.testing.assert_allclose([s.q_filt for s in states], traj.q[1:], atol=1e-6)


def test_filter_reports_failing_index():
    quiet = P.with_(sigma_q2=0.0, sigma_c2=0.0)
    with pytest.raises(SingularInnovationError) as info:
        ekf_filter([0.25, 0.4], TimeGrid((5.0, 10.0)), quiet)
    assert info.value.step == 1


def test_filter_length_check():
    with pytest.raises(ValueError):
        ekf_filter([0.1, 0.2], DEFAULT_GRID, P)
