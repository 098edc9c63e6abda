import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import fsolve

from bgkuq.errors import DegenerateStateError, NewtonConvergenceError
from bgkuq.maxwellian import (
    MaxwellParams,
    Moments,
    NewtonSettings,
    continuous_maxwellian_pair,
    eval_maxwellian_pair,
    moments_from_state,
    newton_discrete_maxwellian,
    newton_discrete_maxwellian_fast,
    solve_discrete_maxwellian,
)
from bgkuq.quadrature import build_gauss_legendre
from conftest import romberg


def _scaled_residual(grid, params, rho, m, e):
    mphi, mpsi = eval_maxwellian_pair(grid, params)
    mm = moments_from_state(grid, mphi, mpsi)
    scale = np.maximum.reduce(
        [np.ones_like(np.atleast_1d(rho) * 1.0), np.atleast_1d(rho),
         np.abs(np.atleast_1d(m)), np.atleast_1d(e)])
    return np.max(np.abs(np.stack(
        [np.atleast_1d(mm.rho - rho), np.atleast_1d(mm.m - m),
         np.atleast_1d(mm.e - e)])) / scale)


def test_moments_standard_maxwellian(grid40):
    phi, psi = continuous_maxwellian_pair(grid40, 1.0, 0.0, 1.0)
    mom = moments_from_state(grid40, phi, psi)
    # truncated integrals agree with the Romberg oracle to quadrature accuracy
    f = lambda x: np.exp(-x**2 / 2) / np.sqrt(2 * np.pi)
    rho_osc = romberg(f, -5.0, 5.0)
    e_osc = romberg(lambda x: (0.5 * x**2 + 1.0) * f(x), -5.0, 5.0)
    assert abs(mom.rho - rho_osc) < 1e-12
    assert abs(mom.e - e_osc) < 1e-12
    # and with the untruncated values to truncation accuracy
    assert abs(mom.rho - 1.0) < 1e-5
    assert abs(mom.m) < 1e-13
    assert abs(mom.e - 1.5) < 1e-5


def test_moments_even_phi_zero_momentum(grid40):
    phi = np.exp(-np.abs(grid40.nodes))
    mom = moments_from_state(grid40, phi, phi)
    assert abs(mom.m) < 1e-13


def test_moments_zero_state_degenerate(grid40):
    with pytest.raises(DegenerateStateError):
        moments_from_state(grid40, np.zeros(40), np.zeros(40))


def test_newton_symmetric_target(grid40):
    tgt = Moments(rho=np.float64(1.0), m=np.float64(0.0), e=np.float64(1.5))
    p = solve_discrete_maxwellian(grid40, tgt)
    assert abs(p.alpha2) < 1e-12
    assert abs(p.alpha1 - np.log(1.0 / np.sqrt(2 * np.pi))) < 1e-4
    assert abs(p.alpha3 + 0.5) < 1e-4
    assert _scaled_residual(grid40, p, 1.0, 0.0, 1.5) < 1e-12


def test_newton_matches_independent_fsolve_oracle():
    # high-resolution independent solve: 200 nodes, R = 10, scipy fsolve
    fine = build_gauss_legendre(200, 10.0)

    def eqs(a):
        m = np.exp(a[0] + a[1] * fine.nodes + a[2] * fine.nodes**2)
        rho = m @ fine.weights
        mom = (m * fine.nodes) @ fine.weights
        e = 0.5 * ((m * fine.nodes**2) @ fine.weights) - rho / (2 * a[2])
        return [rho - 1.0, mom - 0.0, e - 1.5]

    a_ref = fsolve(eqs, [np.log(1 / np.sqrt(2 * np.pi)), 0.0, -0.5],
                   full_output=False, xtol=1e-13)
    grid = build_gauss_legendre(40, 5.0)
    p = solve_discrete_maxwellian(
        grid, Moments(rho=np.float64(1.0), m=np.float64(0.0), e=np.float64(1.5)))
    # both sit within truncation distance of the continuous parameters
    assert abs(float(p.alpha1) - a_ref[0]) < 1e-4
    assert abs(float(p.alpha3) - a_ref[2]) < 1e-4


def test_newton_amplitude_scaling(grid40):
    base = Moments(rho=np.float64(1.0), m=np.float64(0.0), e=np.float64(1.5))
    p0 = solve_discrete_maxwellian(grid40, base)
    c = 3.7
    p1 = solve_discrete_maxwellian(
        grid40, Moments(rho=np.float64(c), m=np.float64(0.0), e=np.float64(1.5 * c)))
    assert abs(float(p1.alpha1) - float(p0.alpha1) - np.log(c)) < 1e-10
    assert abs(float(p1.alpha2) - float(p0.alpha2)) < 1e-10
    assert abs(float(p1.alpha3) - float(p0.alpha3)) < 1e-10


def test_newton_shifted_velocity(grid40):
    # target of a continuous Maxwellian with U = 0.2: m = 0.2, E = 0.02 + 1.5
    tgt = Moments(rho=np.float64(1.0), m=np.float64(0.2), e=np.float64(1.52))
    p = solve_discrete_maxwellian(grid40, tgt)
    mean_velocity = float(p.alpha2) / (-2.0 * float(p.alpha3))
    assert abs(mean_velocity - 0.2) < 1e-4


def test_eval_pair_point_values(grid40):
    p = MaxwellParams(alpha1=np.float64(0.0), alpha2=np.float64(0.0),
                      alpha3=np.float64(-0.5))
    mphi, mpsi = eval_maxwellian_pair(grid40, p)
    k0 = np.argmin(np.abs(grid40.nodes))
    # nodes straddle 0 for even Nv; evaluate the formula at the nearest node
    v = grid40.nodes[k0]
    assert abs(mphi[k0] - np.exp(-0.5 * v * v)) < 1e-15
    assert abs(mpsi[k0] - mphi[k0]) < 1e-15
    assert np.all(mphi > 0) and np.all(mpsi > 0)


def test_eval_pair_requires_negative_alpha3(grid40):
    with pytest.raises(ValueError):
        eval_maxwellian_pair(grid40, MaxwellParams(
            alpha1=np.float64(0.0), alpha2=np.float64(0.0), alpha3=np.float64(0.1)))


def test_roundtrip_mofrom_newton(grid40):
    tgt = Moments(rho=np.float64(1.0), m=np.float64(0.0), e=np.float64(1.5))
    p = solve_discrete_maxwellian(grid40, tgt)
    mphi, mpsi = eval_maxwellian_pair(grid40, p)
    mom = moments_from_state(grid40, mphi, mpsi)
    assert abs(mom.rho - 1.0) < 1e-12
    assert abs(mom.m) < 1e-12
    assert abs(mom.e - 1.5) < 1e-12


def test_continuous_pair_values(grid40):
    phi, psi = continuous_maxwellian_pair(grid40, 1.0, 0.0, 1.0)
    k0 = np.argmin(np.abs(grid40.nodes))
    v = grid40.nodes[k0]
    assert abs(phi[k0] - np.exp(-v * v / 2) / np.sqrt(2 * np.pi)) < 1e-15
    assert np.allclose(psi / phi, 1.0, atol=1e-13)

    phi2, psi2 = continuous_maxwellian_pair(grid40, 0.125, 0.0, 0.25)
    expected = 0.125 / np.sqrt(2 * np.pi * 0.25) * np.exp(-v * v / 0.5)
    assert abs(phi2[k0] - expected) < 1e-15
    assert abs(0.125 / np.sqrt(0.5 * np.pi) - 0.0997356) < 1e-6
    assert np.allclose(psi2 / phi2, 0.25, atol=1e-13)


def test_continuous_pair_invalid():
    g = build_gauss_legendre(8, 5.0)
    with pytest.raises(ValueError):
        continuous_maxwellian_pair(g, -1.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        continuous_maxwellian_pair(g, 1.0, 0.0, 0.0)


def test_randomized_targets_batch(grid40):
    rng = np.random.default_rng(42)
    n = 300
    rho = rng.uniform(0.1, 2.0, n)
    u = rng.uniform(-1.0, 1.0, n)
    temp = rng.uniform(0.2, 2.0, n)
    e = 0.5 * rho * u**2 + 1.5 * rho * temp
    tgt = Moments(rho=rho, m=rho * u, e=e)
    params, iters, ok, _ = newton_discrete_maxwellian(grid40, tgt)
    assert ok.all()
    assert np.all(params.alpha3 < 0)
    assert _scaled_residual(grid40, params, rho, rho * u, e) < 1e-12
    # m = 0 targets keep alpha2 = 0 by symmetry
    tgt0 = Moments(rho=rho, m=np.zeros(n), e=1.5 * rho * temp)
    p0, _, ok0, _ = newton_discrete_maxwellian(grid40, tgt0)
    assert ok0.all()
    assert np.max(np.abs(p0.alpha2)) < 1e-12


def test_fast_newton_matches_numpy(grid40):
    pytest.importorskip("numba")
    rng = np.random.default_rng(3)
    n = 64
    rho = rng.uniform(0.1, 2.0, n)
    u = rng.uniform(-1.0, 1.0, n)
    temp = rng.uniform(0.2, 2.0, n)
    tgt = Moments(rho=rho, m=rho * u, e=0.5 * rho * u**2 + 1.5 * rho * temp)
    p_np, _, ok_np, _ = newton_discrete_maxwellian(grid40, tgt)
    p_nb, _, ok_nb, mphi = newton_discrete_maxwellian_fast(grid40, tgt)
    assert ok_np.all() and ok_nb.all()
    for a, b in ((p_np.alpha1, p_nb.alpha1), (p_np.alpha2, p_nb.alpha2),
                 (p_np.alpha3, p_nb.alpha3)):
        assert np.max(np.abs(a - b)) < 1e-9
    ref_phi, _ = eval_maxwellian_pair(grid40, p_nb)
    assert np.max(np.abs(mphi - ref_phi)) < 1e-13


def test_newton_invalid_targets(grid40):
    with pytest.raises(ValueError):
        solve_discrete_maxwellian(
            grid40, Moments(rho=np.float64(-1.0), m=np.float64(0.0), e=np.float64(1.0)))
    with pytest.raises(ValueError):
        # E too small: T <= 0
        solve_discrete_maxwellian(
            grid40, Moments(rho=np.float64(1.0), m=np.float64(2.0), e=np.float64(1.0)))


def test_newton_failure_raises(grid40):
    # an absurdly cold state underflows every node value: no progress possible
    tgt = Moments(rho=np.float64(1.0), m=np.float64(0.0), e=np.float64(1.5e-12))
    with pytest.raises(NewtonConvergenceError):
        solve_discrete_maxwellian(grid40, tgt,
                                  settings=NewtonSettings(max_iter=5))


@settings(max_examples=40, deadline=None)
@given(rho=st.floats(0.1, 2.0), u=st.floats(-1.0, 1.0), temp=st.floats(0.2, 2.0))
def test_newton_property_moment_matching(rho, u, temp):
    grid = build_gauss_legendre(40, 5.0)
    e = 0.5 * rho * u**2 + 1.5 * rho * temp
    tgt = Moments(rho=np.float64(rho), m=np.float64(rho * u), e=np.float64(e))
    p = solve_discrete_maxwellian(grid, tgt)
    assert float(p.alpha3) < 0
    assert _scaled_residual(grid, p, rho, rho * u, e) < 1e-12
