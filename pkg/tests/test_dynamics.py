import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from kgadiabatic.dynamics import (
    EnergyDriftError,
    IntegratorConfig,
    autocorrelation,
    early_decay_exponent,
    first_crossing,
    harmonic_map_solution,
    integrate,
    record_grid,
    relaxation_bound,
    step,
    tangent_determinant,
    verify_autocorr_bound,
)
from kgadiabatic.estimators import MCEstimate, batch_mean, l2_norm, std_dev
from kgadiabatic.gibbs import SamplerConfig, mcmc_samples, sample_p
from kgadiabatic.model import ModelParams, build_hamiltonian, energy
from kgadiabatic.poly import CompiledPolynomial, poisson_bracket

PARAMS = ModelParams(8, 0.05, beta=10.0)


@pytest.fixture(scope="module")
def ensemble():
    cfg = SamplerConfig(sweeps=500 + 400 * 4, burn_in=500, seed=7, n_chains=100, thin=4)
    s = mcmc_samples(PARAMS, cfg)
    # one state per chain per 100 sweeps keeps the ensemble nearly independent
    return s.q[:, ::100].reshape(-1, PARAMS.N), s.p[:, ::100].reshape(-1, PARAMS.N)


def test_discrete_closed_form_of_harmonic_map():
    params = ModelParams(2, 0.0, 1.0)
    dt = 0.05
    q, p = np.array([[0.3, 0.3]]), np.array([[-0.8, -0.8]])
    n_steps = [1, 7, 200, 1000]
    for scheme in ("verlet", "verlet4"):
        qq, pp, f = q.copy(), p.copy(), None
        done = 0
        for n in n_steps:
            while done < n:
                qq, pp, f = step(qq, pp, dt, params, scheme, quartic=False, f=f)
                done += 1
            qn, pn = harmonic_map_solution(0.3, -0.8, 1.0, dt, n, scheme)
            assert_allclose([qq[0, 0], pp[0, 0]], [qn, pn], atol=1e-8)


def test_fourth_order_scheme_tracks_exact_rotation():
    t = np.array([1.0, 5.0, 10.0])
    qn, pn = harmonic_map_solution(0.3, -0.8, 1.0, 0.01, np.round(t / 0.01), "verlet4")
    assert_allclose(qn, 0.3 * np.cos(t) - 0.8 * np.sin(t), atol=1e-5)
    assert_allclose(pn, -0.8 * np.cos(t) - 0.3 * np.sin(t), atol=1e-5)
    qn2, _ = harmonic_map_solution(0.3, -0.8, 1.0, 0.01, np.round(t / 0.01), "verlet")
    # the plain scheme is second order and visibly less accurate
    assert np.max(np.abs(qn2 - (0.3 * np.cos(t) - 0.8 * np.sin(t)))) > 1e-5


def test_long_run_energy_drift(ensemble):
    q, p = ensemble[0][:4], ensemble[1][:4]
    traj = integrate(q, p, PARAMS, IntegratorConfig(t_max=1000.0, n_times=5))
    assert traj.energy_drift < 1e-6
    assert abs(traj.times[-1] - 1000.0) <= 0.01 / PARAMS.omega


def test_time_reversal(ensemble):
    q0, p0 = ensemble[0][:3], ensemble[1][:3]
    dt = 0.01 / PARAMS.omega
    q, p, f = q0.copy(), p0.copy(), None
    for _ in range(500):
        q, p, f = step(q, p, dt, PARAMS, f=f)
    p, f = -p, None
    for _ in range(500):
        q, p, f = step(q, p, dt, PARAMS, f=f)
    assert_allclose(q, q0, atol=1e-9)
    assert_allclose(-p, p0, atol=1e-9)


def test_map_is_volume_preserving(ensemble):
    det = tangent_determinant(ensemble[0][0], ensemble[1][0], PARAMS, 0.05)
    assert det == pytest.approx(1.0, abs=1e-6)


def test_drift_guard():
    q = np.full((1, 4), 0.5)
    p = np.zeros((1, 4))
    with pytest.raises(EnergyDriftError, match="dt"):
        integrate(q, p, ModelParams(4, 0.1), IntegratorConfig(dt=0.1 / math.sqrt(1.2), t_max=5.0,
                                                              scheme="verlet", drift_tol=1e-12))


@pytest.mark.parametrize("kwargs", [dict(dt=0.5), dict(dt=0.0), dict(t_max=-1.0), dict(scheme="rk4")])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        IntegratorConfig(**kwargs).validate(PARAMS)


def test_record_grid():
    g = record_grid(10.0, 0.01, 20)
    assert g[0] == 0.0
    assert np.all(np.diff(g) > 0)
    assert_allclose(g / 0.01, np.round(g / 0.01), atol=1e-9)
    assert g[-1] == pytest.approx(10.0)


# -- autocorrelation -----------------------------------------------------------------

@pytest.fixture(scope="module")
def trajectory(ensemble):
    q, p = ensemble
    return integrate(q, p, PARAMS, IntegratorConfig(t_max=20.0, n_times=25))


def test_autocorrelation_basics(trajectory):
    H0, H1 = build_hamiltonian(PARAMS)
    h = CompiledPolynomial(H0 + H1)
    curve = autocorrelation(h, trajectory)
    assert curve.C[0] == 1.0 and curve.se[0] == 0.0
    assert np.all(curve.C > 1 - 1e-6)  # energy is conserved
    x = CompiledPolynomial(H1)
    c1 = autocorrelation(x, trajectory)
    assert np.all(np.abs(c1.C) <= 1 + 3 * c1.se + 1e-12)
    assert len(c1.rows()) == len(trajectory.times)


def test_ensemble_stays_in_equilibrium(trajectory):
    H0, _ = build_hamiltonian(PARAMS)
    h0 = CompiledPolynomial(H0)
    a = h0(trajectory.q[0], trajectory.p[0])
    b = h0(trajectory.q[-1], trajectory.p[-1])
    diff = batch_mean(b - a)
    assert abs(diff.z_score(0.0)) < 4


def test_relaxation_bound_values():
    assert relaxation_bound(0.1, 0.5) == pytest.approx(10.0)
    est = relaxation_bound(MCEstimate(0.2, 0.02, 100), 0.9)
    assert est.value == pytest.approx(math.sqrt(0.2) / 0.2)
    assert est.std_error == pytest.approx(est.value * 0.1)
    with pytest.raises(ValueError):
        relaxation_bound(0.1, 1.0)


def test_crossing_time_respects_the_bound(ensemble, trajectory):
    # X = H0 drifts only through the coupling: dH0/dt = [H0, H1]
    H0, H1 = build_hamiltonian(PARAMS)
    q, p = ensemble
    xd = CompiledPolynomial(poisson_bracket(H0, H1))(q, p)
    x = CompiledPolynomial(H0)(q, p)
    eta_v = l2_norm(xd).value / std_dev(x).value
    eta = MCEstimate(eta_v, 0.05 * eta_v, len(x))
    curve = autocorrelation(CompiledPolynomial(H0), trajectory, eta=eta_v)
    chk = verify_autocorr_bound(curve, eta)
    assert chk["passed"] and chk["checked_points"] > 3
    t_cross = first_crossing(curve, 0.9)
    if t_cross is not None:
        assert t_cross >= relaxation_bound(eta_v, 0.9)
    assert np.all(np.isfinite(curve.reference))


def test_uncoupled_harmonic_momentum_correlation():
    params = ModelParams(4, 0.0, beta=2.0)
    sd = 1 / math.sqrt(params.beta)
    rng = np.random.default_rng(4)
    q = rng.normal(0, sd, size=(4000, 4))
    p = sample_p(params, 4000, 5)
    times = tuple(np.arange(0, 301, 30) * 0.01)
    traj = integrate(q, p, params, IntegratorConfig(t_max=3.0, times=times), quartic=False)
    curve = autocorrelation(lambda qq, pp: pp[:, 0], traj)
    assert np.all(np.abs(curve.C - np.cos(curve.times)) < 4 * curve.se + 1e-3)


def test_short_time_decay_is_quadratic(ensemble):
    q, p = ensemble
    times = tuple(np.round(np.geomspace(0.01, 0.1, 8) / 0.002) * 0.002)
    traj = integrate(q, p, PARAMS, IntegratorConfig(dt=0.002, t_max=0.1, times=(0.0,) + times))
    H0, _ = build_hamiltonian(PARAMS)
    curve = autocorrelation(CompiledPolynomial(H0), traj)
    slope, se = early_decay_exponent(curve, 0.1)
    assert abs(slope - 2.0) < 0.2
