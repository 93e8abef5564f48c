"""Adaptive integration of the profile equation and continuation across eta = 1."""

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicHermiteSpline
from scipy.optimize import least_squares

from .errors import FitFailure, QuenchedAt, SingularEvaluation, StiffnessFailure
from .similarity import (
    FROBENIUS_RADIUS,
    SINGULAR_TOL,
    OdeState,
    frobenius_expansion,
    frobenius_step,
    regular_derivative_at_one,
    source,
)

V_FLOOR = 1e-6
DEFAULT_TOL = 1e-10


@dataclass(frozen=True)
class Trajectory:
    """Samples of (eta, v, v') with a dense interpolant over their range."""

    eta: np.ndarray
    v: np.ndarray
    dv: np.ndarray
    tol: float
    dense: object = field(default=None, repr=False, compare=False)

    @classmethod
    def from_samples(cls, eta, v, dv, tol=0.0):
        """Trajectory through given samples, densified by cubic Hermite interpolation."""
        eta, v, dv = (np.asarray(x, dtype=float) for x in (eta, v, dv))
        if np.any(np.diff(eta) <= 0):
            raise ValueError("eta samples must be strictly increasing")
        spline = CubicHermiteSpline(eta, v, dv)
        deriv = spline.derivative()
        return cls(eta=eta, v=v, dv=dv, tol=tol, dense=lambda x: np.vstack([spline(x), deriv(x)]))

    @property
    def samples(self):
        return [OdeState(float(e), float(v), float(d)) for e, v, d in zip(self.eta, self.v, self.dv)]

    @property
    def start(self):
        return OdeState(float(self.eta[0]), float(self.v[0]), float(self.dv[0]))

    @property
    def end(self):
        return OdeState(float(self.eta[-1]), float(self.v[-1]), float(self.dv[-1]))

    def __call__(self, eta):
        """Interpolated (v, v') at ``eta`` inside the covered range."""
        eta = np.asarray(eta, dtype=float)
        lo, hi = self.eta[0], self.eta[-1]
        if np.any(eta < lo - 1e-12 * abs(lo)) or np.any(eta > hi + 1e-12 * abs(hi)):
            raise ValueError(f"eta outside trajectory range [{lo}, {hi}]")
        y = self.dense(eta)
        return y[0], y[1]

    def concat(self, other):
        """Join two trajectories covering disjoint, increasing ranges."""
        if other.eta[0] <= self.eta[-1]:
            raise ValueError("trajectories overlap or are out of order")
        pieces = [self, other]
        split = float(self.eta[-1])

        def dense(eta):
            eta = np.atleast_1d(eta)
            out = np.empty((2, eta.size))
            left = eta <= split
            if left.any():
                out[:, left] = pieces[0].dense(eta[left])
            if (~left).any():
                out[:, ~left] = pieces[1].dense(eta[~left])
            return out

        return Trajectory(
            eta=np.concatenate([self.eta, other.eta]),
            v=np.concatenate([self.v, other.v]),
            dv=np.concatenate([self.dv, other.dv]),
            tol=max(self.tol, other.tol),
            dense=_GapAwareDense(dense, split, float(other.eta[0]), self, other),
        )


class _GapAwareDense:
    """Dense output of a concatenated trajectory; the gap is bridged by the
    Hermite cubic through the neighbouring endpoint states."""

    def __init__(self, inner, split, resume, left, right):
        self.inner = inner
        self.split = split
        self.resume = resume
        self.left_end = left.end
        self.right_start = right.start

    def __call__(self, eta):
        eta = np.atleast_1d(np.asarray(eta, dtype=float))
        out = np.empty((2, eta.size))
        gap = (eta > self.split) & (eta < self.resume)
        rest = ~gap
        if rest.any():
            out[:, rest] = self.inner(eta[rest])
        if gap.any():
            out[:, gap] = _hermite(self.left_end, self.right_start, eta[gap])
        return out


def _hermite(a, b, eta):
    h = b.eta - a.eta
    t = (eta - a.eta) / h
    h00 = 2 * t**3 - 3 * t**2 + 1
    h10 = t**3 - 2 * t**2 + t
    h01 = -2 * t**3 + 3 * t**2
    h11 = t**3 - t**2
    v = h00 * a.v + h10 * h * a.dv + h01 * b.v + h11 * h * b.dv
    dh00 = (6 * t**2 - 6 * t) / h
    dh10 = 3 * t**2 - 4 * t + 1
    dh01 = (-6 * t**2 + 6 * t) / h
    dh11 = 3 * t**2 - 2 * t
    dv = dh00 * a.v + dh10 * a.dv + dh01 * b.v + dh11 * b.dv
    return np.vstack([v, dv])


def profile_system(n):
    """First-order form of the profile equation for solve_ivp."""

    def f(eta, y):
        v, dv = y
        return [dv, -(((n - 1) / eta - 2.0 * eta / 3.0) * dv + source(v)) / (1.0 - eta * eta)]

    return f


def integrate_system(f, t0, y0, t1, tol=DEFAULT_TOL, **kwargs):
    """The integrator used throughout (Dormand-Prince 5(4), dense output) on any system."""
    sol = solve_ivp(f, (t0, t1), y0, method="RK45", rtol=tol, atol=tol * 1e-2, dense_output=True, **kwargs)
    if sol.status == -1:
        raise StiffnessFailure(sol.message)
    return sol


def integrate(start, eta_end, consts, tol=DEFAULT_TOL, v_floor=V_FLOOR, raise_on_quench=True, max_step=np.inf):
    """Integrate the profile equation from ``start`` to ``eta_end`` (> start.eta).

    Dormand-Prince 5(4) with dense output.  If v drops to ``v_floor`` the
    integration stops there and :class:`QuenchedAt` is raised carrying the
    partial trajectory (or the truncated trajectory is returned when
    ``raise_on_quench`` is false).
    """
    a, b = start.eta, eta_end
    if not b > a:
        raise ValueError(f"eta_end = {b!r} must exceed start eta = {a!r}")
    for s in (0.0, 1.0):
        if abs(a - s) < SINGULAR_TOL or (a < s < b) or abs(b - s) < SINGULAR_TOL:
            raise SingularEvaluation(f"interval [{a}, {b}] touches the singular point eta = {s}")
    if start.v <= v_floor:
        raise QuenchedAt(a)

    def hit_floor(eta, y):
        return y[0] - v_floor

    hit_floor.terminal = True
    hit_floor.direction = -1

    sol = integrate_system(profile_system(consts.n), a, [start.v, start.dv], b, tol, events=hit_floor, max_step=max_step)
    traj = Trajectory(eta=sol.t, v=sol.y[0], dv=sol.y[1], tol=tol, dense=sol.sol)
    if sol.status == 1:
        eta_q = float(sol.t_events[0][0])
        if raise_on_quench:
            raise QuenchedAt(eta_q, traj)
    return traj


# ---------------------------------------------------------------- light cone


def fit_frobenius(traj, consts, side="left", window=None, radius=FROBENIUS_RADIUS):
    """Least-squares fit of the light-cone expansion to trajectory samples.

    Returns ``(expansion, rms)`` where ``rms`` is the root-mean-square misfit
    of v relative to v(1).  The default window is [10 r, r] in |eta - 1|,
    r = ``radius``, sampled at 40 points from the dense output.
    """
    lo, hi = window if window is not None else (radius, 10 * radius)
    sgn = -1.0 if side == "left" else 1.0
    x = np.geomspace(lo, hi, 40)
    eta = 1.0 + sgn * x
    v_data, dv_data = traj(eta)
    v_edge, dv_edge = (float(np.squeeze(y)) for y in traj(1.0 + sgn * lo))
    # initial guess from the regular part only
    v1_guess = float(v_edge - sgn * lo * dv_edge)
    if v1_guess <= 0:
        v1_guess = float(v_edge)
    scale = max(abs(v1_guess), 1e-12)

    def resid(p):
        v1, ca = p
        if v1 <= 0:
            return np.full(2 * x.size, 1e6)
        exp = frobenius_expansion(v1, ca, consts, side=side)
        v, dv = exp.evaluate(eta)
        # weight the slope residual by x so both components carry the same units
        return np.concatenate([(v - v_data) / scale, x * (dv - dv_data) / scale])

    res = least_squares(resid, x0=[v1_guess, 0.0], xtol=1e-15, ftol=1e-15, gtol=1e-15, method="lm")
    v1, ca = res.x
    exp = frobenius_expansion(v1, ca, consts, side=side)
    v, _ = exp.evaluate(eta)
    rms = float(np.sqrt(np.mean(((v - v_data) / scale) ** 2)))
    return exp, rms


def cross_one(left, beta_sing, consts, radius=FROBENIUS_RADIUS, fit_tol=1e-7, step=None):
    """Continue a trajectory ending just below eta = 1 to eta = 1 + step (default radius).

    The analytic part is shared by both sides; the coefficient of
    (eta - 1)^(n/2 + 1/6) on the right is the free parameter ``beta_sing``
    (zero gives the smooth continuation).
    """
    if left.eta[-1] < 1.0 - radius * (1 + 1e-9):
        raise FitFailure(f"left trajectory ends at {left.eta[-1]}, needs to reach 1 - {radius}")
    exp_left, rms = fit_frobenius(left, consts, "left", radius=radius)
    if rms > fit_tol:
        raise FitFailure(f"left light-cone fit residual {rms:.3e} exceeds {fit_tol:.1e}")
    right = frobenius_expansion(exp_left.v1, beta_sing, consts, side="right")
    return frobenius_step(right, radius if step is None else step, radius=radius)


def right_expansion(v1, beta_sing, consts):
    return frobenius_expansion(v1, beta_sing, consts, side="right")


def smooth_state_at_one(v1, consts):
    """The (eta, v, v') triple of the regular branch exactly at eta = 1."""
    return OdeState(1.0, v1, regular_derivative_at_one(v1, consts))
