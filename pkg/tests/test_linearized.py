from fractions import Fraction
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from mems_quench.basis import eval_series
from mems_quench.errors import FitIllConditioned
from mems_quench.linearized import (
    EigenFunction,
    Family,
    NonTerminating,
    PhasePoint,
    eigen_polynomial,
    eigen_residual,
    equilibrium,
    fit_frequency,
    fit_node_constants,
    fit_origin_constants,
    fit_outer_constants,
    inner_expansion_residual,
    lyapunov,
    lyapunov_values,
    matching_constants,
    outer_energy,
    outer_F,
    outer_relation,
    outer_small_u,
    phase_initial_point,
    phase_plane_integrate,
    phase_rhs,
    predict_spectrum,
    recurrence_factor,
    solve_linearized_vl,
    vl_residual,
    vl_series,
    vl_slope_at_zero,
)
from mems_quench.similarity import constants


@pytest.fixture(scope="module")
def phase3():
    return phase_plane_integrate(constants(3))


# ---------------------------------------------------------------- phase plane


def radial_profile(n, r_end):
    """Oracle: V'' + (n-1)/r V' = 1/V^2, V(0) = 1, integrated in r directly."""
    r0 = 1e-4
    V0, dV0 = 1 + r0**2 / (2 * n), r0 / n

    def f(r, y):
        return [y[1], 1 / y[0] ** 2 - (n - 1) / r * y[1]]

    sol = solve_ivp(f, (r0, r_end), [V0, dV0], method="DOP853", rtol=1e-13, atol=1e-15)
    return sol.y[0, -1], sol.y[1, -1]


@pytest.mark.parametrize("n", [2, 3, 5])
def test_phase_plane_matches_radial_oracle(n):
    c = constants(n)
    traj = phase_plane_integrate(c, s_range=(-8.0, 2.0))
    V, dV = radial_profile(n, np.exp(2.0))
    r = np.exp(2.0)
    assert traj.end.Z0 == pytest.approx(r ** (-2 / 3) * V, rel=1e-8)
    assert traj.end.dZ0 == pytest.approx(r ** (1 / 3) * dV - 2 / 3 * r ** (-2 / 3) * V, rel=1e-7)


@pytest.mark.parametrize("n", [2, 3, 4, 7])
def test_phase_plane_ends_at_equilibrium(n):
    c = constants(n)
    end = phase_plane_integrate(c).end
    assert abs(end.Z0 - c.a) < 1e-6 and abs(end.dZ0) < 1e-6


def test_equilibrium():
    for n in (2, 3, 8, 12):
        c = constants(n)
        assert equilibrium(c) == pytest.approx(c.a, rel=1e-13)
        assert phase_rhs(c)(0.0, [c.a, 0.0]) == pytest.approx([0.0, 0.0], abs=1e-13)
    # (2/3)(n - 4/3) Z^3 = 1 is strictly increasing in Z: the root is the only one
    z = np.linspace(0.01, 10, 1000)
    assert np.all(np.diff(2 / 3 * (3 - 4 / 3) * z**3 - 1) > 0)


def test_lyapunov_value_at_equilibrium():
    c = constants(3)
    assert lyapunov(PhasePoint(0.0, c.a, 0.0), c) == pytest.approx(1.5536163, abs=1e-7)
    with pytest.raises(ValueError):
        lyapunov(PhasePoint(0.0, -1.0, 0.0), c)


def test_lyapunov_decreases_from_origin(phase3):
    L = lyapunov_values(phase3, constants(3))
    assert np.max(np.diff(L)) <= 1e-12 * np.max(np.abs(L))
    assert L[-1] == pytest.approx(lyapunov(PhasePoint(0.0, constants(3).a, 0.0), constants(3)), rel=1e-10)


@settings(max_examples=25)
@given(n=st.integers(2, 9), Z0=st.floats(0.3, 4.0), dZ0=st.floats(-2.0, 2.0))
def test_lyapunov_descent_property(n, Z0, dZ0):
    c = constants(n)
    traj = phase_plane_integrate(c, start=PhasePoint(0.0, Z0, dZ0), s_range=(0.0, 8.0))
    L = lyapunov_values(traj, c)
    assert np.max(np.diff(L)) <= 1e-10 * np.max(np.abs(L))
    # dL/ds = -(n - 2/3) Z'^2, integrated with the trapezoid rule
    loss = -np.trapezoid((n - 2 / 3) * traj.dZ**2, traj.s)
    assert L[-1] - L[0] == pytest.approx(loss, rel=1e-3, abs=1e-6)


def test_initial_point_series_improves_asymptote():
    c = constants(3)
    bare = phase_initial_point(c, -8.0, terms=0)
    full = phase_initial_point(c, -8.0, terms=4)
    assert full.Z0 == pytest.approx(bare.Z0, rel=1e-6)
    with pytest.raises(ValueError):
        phase_plane_integrate(c, s_range=(-2.0, 10.0))


@pytest.mark.parametrize("n,spiral", [(7, True), (8, False)])
def test_spiral_node_transition(n, spiral):
    c = constants(n)
    traj = phase_plane_integrate(c, s_range=(-8.0, 60.0))
    tail = traj.dense(np.linspace(0, 10, 4000))[0] - c.a
    tail = tail[np.abs(tail) > 1e-11]
    changes = np.count_nonzero(np.diff(np.sign(tail)))
    if spiral:
        assert changes >= 2
        with pytest.raises(FitIllConditioned):
            fit_node_constants(traj, c)
    else:
        assert changes <= 1
        with pytest.raises(FitIllConditioned):
            fit_origin_constants(traj, c)
        A3, A4 = fit_node_constants(traj, c)
        assert np.isfinite(A3) and np.isfinite(A4)


def fake_tail(c, A1, A2):
    def dense(s):
        env = np.exp((1 / 3 - c.n / 2) * s)
        return np.array([c.a + A1 * env * np.cos(c.b * s + A2), np.zeros_like(s)])

    return SimpleNamespace(dense=dense)


@given(A1=st.floats(0.05, 5.0), A2=st.floats(-3.0, 3.0))
def test_origin_constant_fit_recovers_synthetic(A1, A2):
    c = constants(3)
    fit = fit_origin_constants(fake_tail(c, A1, A2), c, window=(10.0, 20.0))
    assert fit[0] == pytest.approx(A1, rel=1e-9)
    assert np.cos(fit[1] - A2) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("n", [2, 3])
def test_origin_constants_window_stable(n):
    c = constants(n)
    traj = phase_plane_integrate(c)
    lo = 4.0 / (n / 2 - 1 / 3)
    shift = np.pi / c.b
    A = fit_origin_constants(traj, c, window=(lo, lo + 3 * shift))
    B = fit_origin_constants(traj, c, window=(lo + shift, lo + 4 * shift))
    assert B[0] == pytest.approx(A[0], rel=0.02)
    assert abs(np.sin(B[1] - A[1])) < 0.02


@pytest.mark.parametrize("n", [2, 3])
def test_free_frequency_fit_gives_b(n):
    c = constants(n)
    traj = phase_plane_integrate(c)
    s = np.linspace(8.0, 20.0, 600)
    y = traj.dense(s)[0] - c.a
    w, _, _ = fit_frequency(s, y, 1 / 3 - n / 2, 1.1 * c.b)
    assert w == pytest.approx(c.b, rel=0.01)


def test_matching_constants_values():
    mc = matching_constants(constants(2)).as_dict()
    ref = {"A1": 0.47293, "A2": 2.02243, "B1": 2.81583, "B2": 0.95098}
    for key, value in ref.items():
        assert mc[key] == pytest.approx(value, abs=1e-4)


# ---------------------------------------------------------------- linear solution about a eta^(2/3)


@pytest.mark.parametrize("n", [2, 3, 5])
def test_vl_series(n):
    coeffs = vl_series(n)
    v, dv, d2v = eval_series(coeffs, 0.0)
    assert v == 1.0 and dv == pytest.approx(vl_slope_at_zero(n), rel=1e-14)
    for s in (-0.2, -0.5, 0.2):
        v, dv, d2v = eval_series(coeffs, s)
        assert abs(vl_residual(n, s, v, dv, d2v)) < 1e-10


@pytest.mark.parametrize("n", [2, 3])
def test_vl_integration_continues_series(n):
    lin = solve_linearized_vl(constants(n))
    v_series = eval_series(lin.series, -0.9)[0]
    assert lin.dense(-0.9)[0] == pytest.approx(v_series, rel=1e-9)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_vl_envelope_exponent(n):
    lin = solve_linearized_vl(constants(n))
    s = np.linspace(-40.0, -15.0, 20000)
    v = np.abs(lin.dense(s)[0])
    peaks = np.flatnonzero((v[1:-1] > v[:-2]) & (v[1:-1] > v[2:])) + 1
    slope = np.polyfit(s[peaks], np.log(v[peaks]), 1)[0]
    assert slope == pytest.approx(1 - n / 2, abs=0.02 * max(1.0, n / 2 - 1))


def test_vl_rejects_node_regime_and_offset_anchor():
    with pytest.raises(FitIllConditioned):
        solve_linearized_vl(constants(8))
    with pytest.raises(ValueError):
        solve_linearized_vl(constants(3), s_range=(-40.0, -1.0))


# ---------------------------------------------------------------- spectrum prediction


@given(st.integers(2, 7))
def test_predicted_ratio(n):
    c = constants(n)
    mc = matching_constants(c) if n == 2 else SimpleNamespace(A2=0.3, B2=1.1, b=c.b)
    vals = predict_spectrum(mc, range(4))
    ratios = np.array(vals[1:]) / np.array(vals[:-1])
    assert np.allclose(ratios, np.exp(-4 * np.pi / (3 * c.b)), rtol=1e-12)


def test_prediction_rejects_node():
    with pytest.raises(ValueError):
        predict_spectrum(SimpleNamespace(A2=0.0, B2=0.0, b=0.0), range(2))


@pytest.mark.slow
@pytest.mark.parametrize("n", [2, 3])
def test_half_step_prediction_matches_roots(spectra, n):
    mc = matching_constants(constants(n))
    pred = np.array(predict_spectrum(mc, range(-2, 12), phase_step=np.pi))
    for c_j in spectra[n].c_values:
        if c_j < 0.1:
            assert np.min(np.abs(pred / c_j - 1)) < 0.04


# ---------------------------------------------------------------- eigenmodes


@pytest.mark.parametrize("n", range(2, 9))
@pytest.mark.parametrize("k", range(6))
def test_eigen_termination_exact(n, k):
    for lam, family in ((Fraction(2 * k - 1), Family.MINUS), (Fraction(6 * k + 2, 3), Family.PLUS)):
        ef = eigen_polynomial(lam, n)
        assert isinstance(ef, EigenFunction)
        assert ef.k == k and ef.family is family
        assert recurrence_factor(k, lam) == 0
        assert all(isinstance(c, Fraction) for c in ef.coeffs)
        eta = np.linspace(0.05, 2.0, 30)
        scale = max(1.0, max(abs(float(c)) for c in ef.coeffs)) * (1 + 4.0 ** k)
        assert np.max(np.abs(eigen_residual(ef, n, eta))) < 1e-10 * scale * (2 * k + n) ** 2


def test_eigen_special_values():
    ef = eigen_polynomial(1, 3)
    assert ef.coeffs == [1, Fraction(1, 9)]  # proportional to eta^2 + 3n
    ef = eigen_polynomial(Fraction(2, 3), 3)
    assert ef.coeffs == [1] and ef.family is Family.PLUS
    ef = eigen_polynomial(-1, 3)
    assert ef.coeffs == [1] and ef.family is Family.MINUS and ef.note
    assert ef.as_dict()["family"] == "minus"


def test_eigen_nonterminating():
    res = eigen_polynomial(0.5, 3, k_max=4000)
    assert isinstance(res, NonTerminating)
    assert res.ratio_limit == pytest.approx(1.0, abs=2e-3)
    assert res.as_dict()["terminates"] is False


def test_inner_expansion_residual_decays():
    taus = np.array([2.0, 4.0, 6.0, 8.0, 10.0])
    eta = np.linspace(0.05, 0.95, 40)
    res = [np.max(np.abs(inner_expansion_residual(0.7, -0.4, 3, t, eta))) for t in taus]
    rate = -np.polyfit(taus, np.log(res), 1)[0]
    assert rate >= 4 / 3 - 0.05


# ---------------------------------------------------------------- outer ODE


def falling_trajectory(u0=1.0, du0=-2.0):
    def f(t, y):
        return [y[1], -1 / y[0] ** 2]

    def hit(t, y):
        return y[0] - 1e-3

    hit.terminal = True
    return solve_ivp(f, (0, 10), [u0, du0], method="DOP853", rtol=1e-13, atol=1e-15, events=hit, dense_output=True)


def test_outer_relation_along_trajectory():
    sol = falling_trajectory()
    t = np.linspace(0, sol.t[-1], 50)
    u, du = sol.sol(t)
    A, B = fit_outer_constants(t[5], u[5], t[40], u[40], T_max=0.0)
    assert B == pytest.approx(2 * outer_energy(u[0], du[0]), rel=1e-9)
    assert np.max(np.abs(outer_relation(u, t, 0.0, A, B))) < 1e-8
    with pytest.raises(ValueError):
        outer_relation(u, t, 0.0, A, -1.0)


@given(st.floats(0.1, 5.0))
def test_outer_small_u_expansion(B):
    u = np.geomspace(1e-5, 1e-3, 10) / B
    err = np.abs(outer_small_u(u, B) - outer_F(u, B))
    assert np.all(err <= 0.05 * B**2 * u**3.5 + 1e-15 * np.sqrt(u) / B)
