"""Inner-region analysis: phase plane, matching constants, eigenmodes and the outer ODE.

For small c the profile near the origin follows V0(r) with v = c V0(eta / c^(3/2)),
where V0'' + (n-1)/r V0' = 1/V0^2.  In Z = r^(-2/3) V0, s = ln r this is the
autonomous system

    Z'' + (n - 2/3) Z' + (2/3)(n - 4/3) Z = 1/Z^2

whose only equilibrium is (a, 0).  The matching of its tail with the
linearisation about a eta^(2/3) fixes the spacing of the smooth profiles.
"""

from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq, least_squares

from .basis import eval_series, series_solution
from .errors import FitIllConditioned
from .similarity import C_STAR, Regime, _inverse_square

S_START = -8.0
PHASE_TOL = 1e-12
VL_SERIES_TERMS = 40
VL_SERIES_STEP = 0.5


@dataclass(frozen=True)
class PhasePoint:
    s_bar: float
    Z0: float
    dZ0: float


@dataclass(frozen=True)
class PhaseTrajectory:
    s: np.ndarray
    Z: np.ndarray
    dZ: np.ndarray
    dense: object = field(default=None, repr=False, compare=False)

    @property
    def points(self):
        return [PhasePoint(float(a), float(b), float(c)) for a, b, c in zip(self.s, self.Z, self.dZ)]

    @property
    def end(self):
        return PhasePoint(float(self.s[-1]), float(self.Z[-1]), float(self.dZ[-1]))


@dataclass(frozen=True)
class MatchingConstants:
    A1: float
    A2: float
    B1: float
    B2: float
    b: float

    def as_dict(self):
        return {"A1": self.A1, "A2": self.A2, "B1": self.B1, "B2": self.B2, "b": self.b}


class Family(str, Enum):
    MINUS = "minus"
    PLUS = "plus"


@dataclass(frozen=True)
class EigenFunction:
    lam: object
    family: Family
    k: int
    coeffs: list
    note: str = ""

    def __call__(self, eta):
        eta = np.asarray(eta, dtype=float)
        return sum(float(c) * eta ** (2 * i) for i, c in enumerate(self.coeffs))

    def as_dict(self):
        return {
            "lambda": float(self.lam),
            "family": self.family.value,
            "k": self.k,
            "coeffs": [float(c) for c in self.coeffs],
            "note": self.note,
        }


@dataclass(frozen=True)
class NonTerminating:
    lam: object
    coeffs: list
    ratio_limit: float

    def as_dict(self):
        return {"lambda": float(self.lam), "terminates": False, "ratio_limit": self.ratio_limit}


def _reduce_phase(phi):
    """Map to (-pi, pi]."""
    r = np.remainder(phi + np.pi, 2 * np.pi) - np.pi
    return float(np.pi if r == -np.pi else r)


# ---------------------------------------------------------------- phase plane


def lyapunov(p, consts):
    """L = Z'^2 / 2 + (n - 4/3) Z^2 / 3 + 1/Z; non-increasing along trajectories."""
    if p.Z0 <= 0:
        raise ValueError("Z0 must be positive")
    return 0.5 * p.dZ0**2 + (consts.n - 4.0 / 3.0) * p.Z0**2 / 3.0 + 1.0 / p.Z0


def lyapunov_values(traj, consts):
    return 0.5 * traj.dZ**2 + (consts.n - 4.0 / 3.0) * traj.Z**2 / 3.0 + 1.0 / traj.Z


def phase_rhs(consts):
    n = consts.n

    def f(s, y):
        Z, dZ = y
        return [dZ, 1.0 / Z**2 - (n - 2.0 / 3.0) * dZ - 2.0 / 3.0 * (n - 4.0 / 3.0) * Z]

    return f


def origin_profile_coefficients(n, terms=4):
    """Coefficients of V0 = sum a_k r^(2k), V0(0) = 1, solving V0'' + (n-1)/r V0' = 1/V0^2."""
    a = np.zeros(terms + 1)
    a[0] = 1.0
    for k in range(terms):
        w_k = _inverse_square(a[: k + 1])[k]
        a[k + 1] = w_k / ((2 * k + 2) * (2 * k + n))
    return a


def phase_initial_point(consts, s_start=S_START, terms=4):
    """(Z, Z') at s_start from the small-r series of V0; terms=0 gives the bare asymptote."""
    a = origin_profile_coefficients(consts.n, max(terms, 0))
    r2 = np.exp(2 * s_start)
    k = np.arange(len(a))
    V = float(np.sum(a * r2**k))
    rdV = float(np.sum(2 * k * a * r2**k))  # r dV/dr
    scale = np.exp(-2.0 * s_start / 3.0)
    return PhasePoint(s_start, scale * V, scale * (rdV - 2.0 / 3.0 * V))


def phase_plane_integrate(consts, s_range=(S_START, 40.0), start=None, ic_terms=4, tol=PHASE_TOL):
    """Integrate the autonomous system from the origin asymptote (or ``start``)."""
    s0, s1 = s_range
    if start is None:
        if s0 > -5:
            raise ValueError("origin initial data need s_start <= -5")
        start = phase_initial_point(consts, s0, ic_terms)
    sol = solve_ivp(
        phase_rhs(consts),
        (start.s_bar, s1),
        [start.Z0, start.dZ0],
        method="RK45",
        rtol=tol,
        atol=tol * 1e-3,
        dense_output=True,
    )
    if sol.status != 0:
        raise RuntimeError(sol.message)
    return PhaseTrajectory(s=sol.t, Z=sol.y[0], dZ=sol.y[1], dense=sol.sol)


def equilibrium(consts):
    """Bisection for the positive root of (2/3)(n - 4/3) Z = 1/Z^2."""
    k = 2.0 / 3.0 * (consts.n - 4.0 / 3.0)
    return brentq(lambda z: k * z**3 - 1.0, 1e-6, 1e6, xtol=1e-15, rtol=1e-15)


def _tail_window(consts, envelope_hi=1e-4, periods=1.5):
    rate = consts.n / 2.0 - 1.0 / 3.0
    s_lo = np.log(1.0 / envelope_hi) / rate
    if consts.b > 0:
        length = periods * 2 * np.pi / consts.b
    else:
        length = 6.0 / rate
    return s_lo, s_lo + length


def fit_origin_constants(traj, consts, window=None, points=400):
    """Fit Z - a = A1 e^((1/3 - n/2) s) cos(b s + A2) over a tail window."""
    if consts.regime is not Regime.SPIRAL:
        raise FitIllConditioned("node regime: use fit_node_constants for the two-exponent form")
    lo, hi = window if window is not None else _tail_window(consts)
    s = np.linspace(lo, hi, points)
    Z = traj.dense(s)[0]
    env = np.exp((1.0 / 3.0 - consts.n / 2.0) * s)
    design = np.column_stack([env * np.cos(consts.b * s), env * np.sin(consts.b * s)])
    (p, q), *_ = np.linalg.lstsq(design, Z - consts.a, rcond=None)
    # p cos + q sin = A1 cos(b s + A2) with A1 cos A2 = p, A1 sin A2 = -q
    return float(np.hypot(p, q)), _reduce_phase(np.arctan2(-q, p))


def fit_node_constants(traj, consts, window=None, points=400):
    """Fit Z - a = A3 e^((b + 1/3 - n/2) s) + A4 e^((-b + 1/3 - n/2) s) (n >= 8)."""
    if consts.regime is not Regime.NODE:
        raise FitIllConditioned("spiral regime: use fit_origin_constants")
    lo, hi = window if window is not None else _tail_window(consts)
    s = np.linspace(lo, hi, points)
    Z = traj.dense(s)[0]
    base = 1.0 / 3.0 - consts.n / 2.0
    design = np.column_stack([np.exp((base + consts.b) * s), np.exp((base - consts.b) * s)])
    (A3, A4), *_ = np.linalg.lstsq(design, Z - consts.a, rcond=None)
    return float(A3), float(A4)


def fit_frequency(s, y, rate, guess_b):
    """Unconstrained fit y = e^(rate s) A cos(omega s + phi); returns (omega, A, phi)."""
    env = np.exp(rate * s)
    scale = np.max(np.abs(y / env))

    def resid(p):
        w, amp, ph = p
        return (env * amp * np.cos(w * s + ph) - y) / (env * scale)

    design = np.column_stack([np.cos(guess_b * s), np.sin(guess_b * s)])
    (p, q), *_ = np.linalg.lstsq(design * env[:, None], y, rcond=None)
    res = least_squares(resid, [guess_b, np.hypot(p, q), np.arctan2(-q, p)], xtol=1e-14, ftol=1e-14)
    w, amp, ph = res.x
    if amp < 0:
        amp, ph = -amp, ph + np.pi
    return float(w), float(amp), _reduce_phase(ph)


# ---------------------------------------------------------------- linearisation about a eta^(2/3)


@dataclass(frozen=True)
class LinearSolution:
    s: np.ndarray
    v: np.ndarray
    dv: np.ndarray
    B1: float
    B2: float
    series: np.ndarray = field(repr=False)
    series_step: float = VL_SERIES_STEP
    dense: object = field(default=None, repr=False, compare=False)


def vl_slope_at_zero(n):
    """dv/ds at s = 0 of the solution regular at the light cone, v(0) = 1."""
    return -(4.0 * n / 3.0 - 14.0 / 9.0) / (n - 5.0 / 3.0)


def vl_series(n, terms=VL_SERIES_TERMS):
    """Taylor coefficients in s of the regular solution with v(0) = 1."""
    j = np.arange(terms + 1)
    from math import factorial

    e = np.array([2.0**k / factorial(k) for k in j])  # e^(2s)
    A = -e.copy()
    A[0] = 0.0
    B = e / 3.0
    B[0] += n - 2.0
    C = 2.0 / 9.0 * e
    C[0] += 4.0 / 3.0 * (n - 4.0 / 3.0)
    return series_solution(A, B, C, 1.0, None, terms)


def vl_rhs(n):
    k = 4.0 / 3.0 * (n - 4.0 / 3.0)

    def f(s, y):
        v, dv = y
        e = np.exp(2 * s)
        return [dv, -(((n - 2.0) + e / 3.0) * dv + (k + 2.0 / 9.0 * e) * v) / (1.0 - e)]

    return f


def vl_residual(n, s, v, dv, d2v):
    e = np.exp(2 * s)
    return (1 - e) * d2v + ((n - 2) + e / 3) * dv + (4.0 / 3.0 * (n - 4.0 / 3.0) + 2.0 / 9.0 * e) * v


def solve_linearized_vl(consts, s_range=(-40.0, 0.0), fit_window=(-40.0, -20.0), tol=PHASE_TOL):
    """Solution of the linearisation about a eta^(2/3), regular at s = 0, and its (B1, B2).

    The fit is of v e^((n/2 - 1) s) = B1 cos(b s + B2) over ``fit_window``.
    """
    if consts.regime is not Regime.SPIRAL:
        raise FitIllConditioned("node regime: no oscillatory tail to fit")
    n = consts.n
    s_lo, s_hi = s_range
    if s_hi != 0.0:
        raise ValueError("the linear solution is anchored at s = 0")
    coeffs = vl_series(n)
    h = -VL_SERIES_STEP
    v0, dv0, _ = eval_series(coeffs, h)
    sol = solve_ivp(vl_rhs(n), (h, s_lo), [v0, dv0], method="RK45", rtol=tol, atol=tol * 1e-6, dense_output=True)
    if sol.status != 0:
        raise RuntimeError(sol.message)
    s = sol.t[::-1]
    v = sol.y[0][::-1]
    dv = sol.y[1][::-1]
    lo, hi = fit_window
    ss = np.linspace(lo, hi, 800)
    vv = sol.sol(ss)[0] * np.exp((n / 2.0 - 1.0) * ss)
    design = np.column_stack([np.cos(consts.b * ss), np.sin(consts.b * ss)])
    (p, q), *_ = np.linalg.lstsq(design, vv, rcond=None)
    B1, B2 = float(np.hypot(p, q)), _reduce_phase(np.arctan2(-q, p))
    return LinearSolution(s=s, v=v, dv=dv, B1=B1, B2=B2, series=coeffs, series_step=VL_SERIES_STEP, dense=sol.sol)


def matching_constants(consts, phase=None, linear=None):
    """(A1, A2) from the phase plane and (B1, B2) from the linear solution."""
    if phase is None:
        phase = phase_plane_integrate(consts)
    if linear is None:
        linear = solve_linearized_vl(consts)
    A1, A2 = fit_origin_constants(phase, consts)
    return MatchingConstants(A1=A1, A2=A2, B1=linear.B1, B2=linear.B2, b=consts.b)


def predict_spectrum(mc, k_range, phase_step=2 * np.pi):
    """c_k = exp(-(2/(3b)) (B2 - A2 + phase_step k)).

    The default step of 2 pi keeps the sign of the linear amplitude fixed;
    phase_step = pi admits both signs.
    """
    if mc.b <= 0:
        raise ValueError("b must be positive")
    return [float(np.exp(-(2.0 / (3.0 * mc.b)) * (mc.B2 - mc.A2 + phase_step * k))) for k in k_range]


# ---------------------------------------------------------------- eigenmodes of the inner problem


def recurrence_factor(k, lam):
    """Numerator factor of a_{k+1} / a_k; exact for Fraction input."""
    third = Fraction(1, 3) if isinstance(lam, (Fraction, int)) else 1.0 / 3.0
    return 2 * k * (2 * k - 1) - 4 * k * (lam - third) - (2 * third - lam * third - lam * lam)


def eigen_polynomial(lam, n, k_max=60):
    """Even series solution of the inner eigenproblem with a0 = 1.

    Returns an EigenFunction when the series terminates (lambda = 2k - 1 or
    2k + 2/3) and NonTerminating otherwise.  Fraction input for lambda and
    integer n keep the arithmetic exact.
    """
    exact = isinstance(lam, (Fraction, int)) and float(n).is_integer()
    one = Fraction(1) if exact else 1.0
    n_ = Fraction(int(n)) if exact else float(n)
    coeffs = [one]
    for k in range(k_max):
        num = recurrence_factor(k, lam)
        if num == 0 or (not exact and abs(num) < 1e-12 * max(1.0, abs(k * k))):
            family, note = _classify(lam, k)
            return EigenFunction(lam=lam, family=family, k=k, coeffs=coeffs, note=note)
        coeffs.append(coeffs[-1] * num / ((2 * k + 2) * (2 * k + n_)))
    ratios = [float(coeffs[i + 1] / coeffs[i]) for i in range(len(coeffs) - 1) if coeffs[i] != 0]
    return NonTerminating(lam=lam, coeffs=coeffs, ratio_limit=ratios[-1] if ratios else float("nan"))


def _classify(lam, k):
    lam_f = float(lam)
    if abs(lam_f - (2 * k - 1)) < 1e-12:
        note = "shift of the quench time" if k == 0 else ""
        return Family.MINUS, note
    return Family.PLUS, ""


def eigen_residual(ef, n, eta):
    """Left-hand side of the inner eigenproblem for the polynomial ``ef``."""
    eta = np.asarray(eta, dtype=float)
    lam = float(ef.lam)
    coeffs = np.zeros(2 * len(ef.coeffs) - 1)
    coeffs[::2] = [float(c) for c in ef.coeffs]
    poly = np.polynomial.Polynomial(coeffs)
    phi, dphi, d2phi = poly(eta), poly.deriv(1)(eta), poly.deriv(2)(eta)
    return (
        (1 - eta**2) * d2phi
        + (2 * (lam - 1.0 / 3.0) * eta + (n - 1) / eta) * dphi
        + (2.0 / 3.0 - lam / 3.0 - lam**2) * phi
    )


def inner_expansion(a_coef, b_coef, n, tau, eta):
    """v ~ c* + b e^(-2 tau/3) + a e^(-tau) (eta^2 + 3n)."""
    eta = np.asarray(eta, dtype=float)
    return C_STAR + b_coef * np.exp(-2.0 * tau / 3.0) + a_coef * np.exp(-tau) * (eta**2 + 3 * n)


def similarity_pde_residual(v, v_tau, v_tautau, v_eta, v_etaeta, v_etatau, eta, n):
    """Residual of the time-dependent similarity equation in (eta, tau)."""
    lhs = v_tautau + 2 * eta * v_etatau - v_tau / 3.0
    rhs = (1 - eta**2) * v_etaeta + ((n - 1) / eta - 2 * eta / 3) * v_eta + 2 * v / 9 - 1 / v**2
    return lhs - rhs


def inner_expansion_residual(a_coef, b_coef, n, tau, eta):
    """similarity_pde_residual of inner_expansion with exact derivatives."""
    eta = np.asarray(eta, dtype=float)
    e1, e2 = a_coef * np.exp(-tau), b_coef * np.exp(-2.0 * tau / 3.0)
    v = inner_expansion(a_coef, b_coef, n, tau, eta)
    poly = eta**2 + 3 * n
    return similarity_pde_residual(
        v,
        v_tau=-2.0 / 3.0 * e2 - e1 * poly,
        v_tautau=4.0 / 9.0 * e2 + e1 * poly,
        v_eta=2 * e1 * eta,
        v_etaeta=2 * e1,
        v_etatau=-2 * e1 * eta,
        eta=eta,
        n=n,
    )


# ---------------------------------------------------------------- outer ODE u'' = -1/u^2


def outer_F(u, B):
    """Time to quench from height u on the energy level u'^2/2 - 1/u = B/2."""
    u = np.asarray(u, dtype=float)
    return np.sqrt(u) / B * np.sqrt(2 + B * u) - 2 * B**-1.5 * np.arcsinh(np.sqrt(B * u / 2))


def outer_relation(u, t, T_max, A, B):
    """(T_max - t + A) minus the closed-form quench time from height u."""
    if B <= 0:
        raise ValueError("B must be positive")
    return (T_max - t + A) - outer_F(u, B)


def outer_small_u(u, B):
    """Two-term expansion of outer_F for B u -> 0."""
    return np.sqrt(2.0) / 3.0 * u**1.5 - np.sqrt(2.0) * B / 20.0 * u**2.5


def fit_outer_constants(t1, u1, t2, u2, T_max):
    """(A, B) so the closed form passes through two states of a falling trajectory."""

    def gap(B):
        return outer_F(u1, B) - outer_F(u2, B) - (t2 - t1)

    lo, hi = 1e-8, 1.0
    while gap(lo) * gap(hi) > 0 and hi < 1e8:
        hi *= 4.0
    B = brentq(gap, lo, hi, xtol=1e-15, rtol=1e-15)
    A = float(outer_F(u1, B)) - (T_max - t1)
    return A, B


def outer_energy(u, du):
    return 0.5 * du**2 - 1.0 / u
