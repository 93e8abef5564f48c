"""Radial finite-element solver for u_tt = u_rr + (n-1)/r u_r - 1/u^2 on the unit ball.

Piecewise-linear elements on the graded mesh r_j = (j/N)^2 with the polar
weight r^(n-1); implicit Euler for the first-order system u_t = w,
M w_t = -K u - M f(u), f(u) = 1/u^2.  Eliminating w leaves one tridiagonal
Newton system per step.
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.linalg import solve_banded
from scipy.optimize import least_squares

from .errors import NewtonDivergence, NoQuench, WindowTooNarrow
from .similarity import C_STAR

KAPPA = 0.002
DT_MAX = 5e-4
U_STOP = 1e-4
NEWTON_TOL = 1e-10
NEWTON_MAX_ITER = 30
MAX_HALVINGS = 10
T_BUDGET = 10.0
SNAPSHOTS_PER_DECADE = 4
SLOPE_R_MAX = 0.3
SUPPORTED_DIMENSIONS = (2, 3, 4, 5)

_GAUSS_X, _GAUSS_W = np.polynomial.legendre.leggauss(6)


class Boundary(str, Enum):
    NEUMANN = "neumann"
    DIRICHLET = "dirichlet"


@dataclass(frozen=True)
class RadialMesh:
    N: int
    nodes: np.ndarray
    n: int

    @property
    def h(self):
        return np.diff(self.nodes)


@dataclass(frozen=True)
class Operators:
    """Tridiagonal operators in LAPACK banded layout (row 0 super, 1 diag, 2 sub)."""

    mass: np.ndarray
    stiffness: np.ndarray
    lumped: np.ndarray

    def apply(self, band, x):
        y = band[1] * x
        y[:-1] += band[0, 1:] * x[1:]
        y[1:] += band[2, :-1] * x[:-1]
        return y

    def dense(self, band):
        return np.diag(band[1]) + np.diag(band[0, 1:], 1) + np.diag(band[2, :-1], -1)


@dataclass
class PdeState:
    t: float
    u: np.ndarray
    w: np.ndarray
    dt: float


@dataclass(frozen=True)
class Snapshot:
    t: float
    u: np.ndarray


@dataclass
class QuenchReport:
    n: int
    N: int
    epsilon: float
    a: float
    boundary: str
    T_max: float
    T_free: float
    free_fit: dict
    quench_radius: float
    r: np.ndarray = field(repr=False)
    snapshots: list = field(repr=False)
    rescaled: list = field(repr=False)
    slope_fit: tuple
    V0_limit: float
    history: np.ndarray = field(repr=False)
    steps: int = 0

    def as_dict(self):
        return {
            "n": self.n,
            "N": self.N,
            "epsilon": self.epsilon,
            "a": self.a,
            "boundary": self.boundary,
            "T_max": self.T_max,
            "T_free": self.T_free,
            "free_fit": self.free_fit,
            "quench_radius": self.quench_radius,
            "alpha": self.slope_fit[0],
            "C": self.slope_fit[1],
            "V0_limit": self.V0_limit,
            "steps": self.steps,
            "snapshot_index": [{"index": i, "t": s.t} for i, s in enumerate(self.snapshots)],
        }


# ---------------------------------------------------------------- mesh and operators


def build_mesh(N, n):
    if N < 8:
        raise ValueError(f"need N >= 8 cells, got {N}")
    if n < 2:
        raise ValueError(f"dimension n must be >= 2, got {n}")
    j = np.arange(N + 1)
    return RadialMesh(N=N, nodes=(j / N) ** 2, n=n)


def assemble(mesh):
    """Weighted mass and stiffness for hat functions, weight r^(n-1), by 6-point Gauss."""
    r = mesh.nodes
    lo, hi = r[:-1], r[1:]
    h = hi - lo
    # quadrature points on each cell, shape (cells, q)
    x = 0.5 * (lo[:, None] + hi[:, None]) + 0.5 * h[:, None] * _GAUSS_X[None, :]
    wq = 0.5 * h[:, None] * _GAUSS_W[None, :] * x ** (mesh.n - 1)
    phi_l = (hi[:, None] - x) / h[:, None]
    phi_r = (x - lo[:, None]) / h[:, None]
    m_ll = np.sum(wq * phi_l * phi_l, axis=1)
    m_lr = np.sum(wq * phi_l * phi_r, axis=1)
    m_rr = np.sum(wq * phi_r * phi_r, axis=1)
    k_cell = np.sum(wq, axis=1) / h**2

    size = mesh.N + 1
    mass = np.zeros((3, size))
    stiff = np.zeros((3, size))
    mass[1, :-1] += m_ll
    mass[1, 1:] += m_rr
    mass[0, 1:] = m_lr
    mass[2, :-1] = m_lr
    stiff[1, :-1] += k_cell
    stiff[1, 1:] += k_cell
    stiff[0, 1:] = -k_cell
    stiff[2, :-1] = -k_cell
    lumped = mass[1].copy()
    lumped[:-1] += mass[0, 1:]
    lumped[1:] += mass[2, :-1]
    return Operators(mass=mass, stiffness=stiff, lumped=lumped)


def initial_condition(mesh, epsilon, a):
    """u = epsilon + a sin^2(pi r / 2), u_t = 0."""
    if epsilon <= 0 or a < 0:
        raise ValueError("need epsilon > 0 and a >= 0")
    u = epsilon + a * np.sin(np.pi * mesh.nodes / 2) ** 2
    return PdeState(t=0.0, u=u, w=np.zeros_like(u), dt=0.0)


def uniform_condition(mesh, T):
    """The spatially uniform exact solution c* (T - t)^(2/3) at t = 0."""
    u = np.full(mesh.N + 1, C_STAR * T ** (2.0 / 3.0))
    w = np.full(mesh.N + 1, -2.0 / 3.0 * C_STAR * T ** (-1.0 / 3.0))
    return PdeState(t=0.0, u=u, w=w, dt=0.0)


def next_dt(u, kappa=KAPPA, dt_max=DT_MAX):
    return min(dt_max, kappa * float(np.min(u)) ** 1.5)


# ---------------------------------------------------------------- time stepping


def _source(u, source):
    if source is None:
        return 1.0 / u**2, -2.0 / u**3
    f = np.asarray(source(u), dtype=float)
    return f, np.zeros_like(u)


def step(state, mesh, ops, dt=None, boundary=Boundary.NEUMANN, source=None, boundary_value=None):
    """One implicit Euler step; dt is halved (up to 10 times) if Newton fails.

    ``source`` replaces 1/u^2 by a frozen function of u (its Jacobian is
    ignored), which is how the linear-regime checks switch the nonlinearity off.
    The Dirichlet value defaults to the current boundary value.
    """
    boundary = Boundary(boundary)
    dt = state.dt if dt is None else dt
    for _ in range(MAX_HALVINGS + 1):
        try:
            u = _newton(state, ops, dt, boundary, source, boundary_value)
        except NewtonDivergence:
            dt /= 2.0
            continue
        w = (u - state.u) / dt
        return PdeState(t=state.t + dt, u=u, w=w, dt=dt)
    raise NewtonDivergence(f"Newton failed after {MAX_HALVINGS} halvings (dt = {dt:.3e}, t = {state.t:.9g})")


def _newton(state, ops, dt, boundary, source, boundary_value):
    M, K = ops.mass, ops.stiffness
    rhs0 = ops.apply(M, state.u + dt * state.w)
    u = state.u + dt * state.w
    if np.any(u <= 0):
        u = state.u.copy()
    if boundary is Boundary.DIRICHLET:
        u[-1] = state.u[-1] if boundary_value is None else boundary_value
    dt2 = dt * dt
    scale = float(np.max(np.abs(rhs0))) + 1e-300
    for _ in range(NEWTON_MAX_ITER):
        f, df = _source(u, source)
        F = ops.apply(M, u) + dt2 * ops.apply(K, u) + dt2 * ops.apply(M, f) - rhs0
        J = M + dt2 * K
        J = J.copy()
        # M diag(df): column j scaled by df_j
        J[1] += dt2 * M[1] * df
        J[0, 1:] += dt2 * M[0, 1:] * df[1:]
        J[2, :-1] += dt2 * M[2, :-1] * df[:-1]
        if boundary is Boundary.DIRICHLET:
            # row N becomes du_N = 0; its sub-diagonal entry (N, N-1) sits at J[2, N-1]
            F[-1] = 0.0
            J[1, -1] = 1.0
            J[2, -2] = 0.0
        du = solve_banded((1, 1), J, -F)
        u_new = u + du
        if not np.all(np.isfinite(u_new)) or np.any(u_new <= 0):
            raise NewtonDivergence("iterate lost positivity")
        u = u_new
        if np.max(np.abs(F)) <= NEWTON_TOL * scale and np.max(np.abs(du)) <= NEWTON_TOL * np.max(np.abs(u)):
            return u
        if np.max(np.abs(du)) <= 1e-14 * np.max(np.abs(u)):
            return u
    raise NewtonDivergence("no convergence")


# ---------------------------------------------------------------- runs


def evolve(state, mesh, ops, u_stop=U_STOP, kappa=KAPPA, dt_max=DT_MAX, t_budget=T_BUDGET,
           boundary=Boundary.NEUMANN, snapshot_levels=None, max_steps=1_000_000):
    """Step until min u <= u_stop.

    Returns the final state, the (t, min u, argmin r) history and snapshots
    taken whenever min u crosses one of ``snapshot_levels`` (decreasing).
    """
    history = [(state.t, float(np.min(state.u)), float(mesh.nodes[np.argmin(state.u)]))]
    snaps = []
    levels = list(snapshot_levels) if snapshot_levels is not None else []
    steps = 0
    while float(np.min(state.u)) > u_stop:
        if state.t > t_budget or steps >= max_steps:
            raise NoQuench(f"no quench by t = {state.t:.6g} (min u = {np.min(state.u):.3e})")
        dt = next_dt(state.u, kappa, dt_max)
        state = step(state, mesh, ops, dt=dt, boundary=boundary)
        steps += 1
        m = float(np.min(state.u))
        history.append((state.t, m, float(mesh.nodes[np.argmin(state.u)])))
        while levels and m <= levels[0]:
            levels.pop(0)
            snaps.append(Snapshot(state.t, state.u.copy()))
    if not snaps or snaps[-1].t != state.t:
        snaps.append(Snapshot(state.t, state.u.copy()))
    return state, np.array(history), snaps, steps


def estimate_T(history, u_window):
    """T from min u = c* (T - t)^(2/3) with c* fixed, over u_window = (lo, hi)."""
    t, m = history[:, 0], history[:, 1]
    sel = (m >= u_window[0]) & (m <= u_window[1])
    if sel.sum() < 3:
        raise WindowTooNarrow(f"only {sel.sum()} samples with min u in {u_window}")
    t, m = t[sel], m[sel]
    guess = float(np.mean(t + (m / C_STAR) ** 1.5))

    def resid(p):
        return (C_STAR * np.maximum(p[0] - t, 1e-300) ** (2.0 / 3.0) - m) / m

    res = least_squares(resid, [guess], xtol=1e-15, ftol=1e-15, gtol=1e-15)
    return float(res.x[0])


def estimate_T_free(history, u_window):
    """Free fit min u = C (T - t)^p; diagnostic only."""
    t, m = history[:, 0], history[:, 1]
    sel = (m >= u_window[0]) & (m <= u_window[1])
    if sel.sum() < 5:
        raise WindowTooNarrow(f"only {sel.sum()} samples with min u in {u_window}")
    t, m = t[sel], m[sel]
    T0 = float(np.mean(t + (m / C_STAR) ** 1.5))
    span = float(t[-1] - t[0])

    def resid(p):
        C, p_exp, T = p
        return (C * np.maximum(T - t, 1e-300) ** p_exp - m) / m

    res = least_squares(resid, [C_STAR, 2.0 / 3.0, T0], x_scale=[1.0, 1.0, span + 1e-12], xtol=1e-15, ftol=1e-15)
    C, p_exp, T = res.x
    return {"C": float(C), "exponent": float(p_exp), "T": float(T)}


def rescale_profile(snapshot, T_max, r):
    """(xi, V) with xi = r / (T - t)^(1/2) and V = u / (T - t)^(2/3)."""
    tau = T_max - snapshot.t
    if tau <= 0:
        raise ValueError("snapshot is not before T_max")
    return r / np.sqrt(tau), snapshot.u / tau ** (2.0 / 3.0)


def slope_window(r, u, u_stop, r_max=SLOPE_R_MAX):
    """r between u = 10 u_stop and u = 1e3 u_stop, clipped to r <= r_max."""
    i0 = int(np.argmin(u))
    beyond = np.arange(len(u)) >= i0
    inside = beyond & (u >= 10 * u_stop) & (u <= 1e3 * u_stop) & (r <= r_max) & (r > 0)
    return inside


def fit_power_law(r, u, mask=None, min_points=10):
    """Regression log u = log C + alpha log r; returns (alpha, C)."""
    r, u = np.asarray(r, dtype=float), np.asarray(u, dtype=float)
    if mask is not None:
        r, u = r[mask], u[mask]
    if r.size < min_points:
        raise WindowTooNarrow(f"{r.size} nodes in the slope window, need {min_points}")
    alpha, logC = np.polyfit(np.log(r), np.log(u), 1)
    return float(alpha), float(np.exp(logC))


def fit_profile(report, u_stop=U_STOP):
    final = report.snapshots[-1]
    if np.min(final.u) > 10 * u_stop:
        raise ValueError("final snapshot has not reached 10 u_stop")
    return fit_power_law(report.r, final.u, slope_window(report.r, final.u, u_stop))


def collapse_distances(report, xi_max=5.0, points=200):
    """Sup-distance between successive rescaled profiles on xi in [0, xi_max]."""
    xi = np.linspace(0.0, xi_max, points)
    prof = []
    for x, V in report.rescaled:
        if x[-1] < xi_max:
            continue
        prof.append(np.interp(xi, x, V))
    return [float(np.max(np.abs(b - a))) for a, b in zip(prof[:-1], prof[1:])]


def run(n, N, epsilon=1e-2, a=1.0, u_stop=U_STOP, kappa=KAPPA, dt_max=DT_MAX, boundary=Boundary.NEUMANN,
        t_budget=T_BUDGET, fit_window=None):
    """Quench run from u = epsilon + a sin^2(pi r/2), u_t = 0."""
    if n not in SUPPORTED_DIMENSIONS:
        raise ValueError(
            f"n = {n} not supported: radial runs are limited to n in {SUPPORTED_DIMENSIONS}; "
            "the r^(n-1) weight makes the Newton systems too ill-conditioned beyond that"
        )
    boundary = Boundary(boundary)
    mesh = build_mesh(N, n)
    ops = assemble(mesh)
    state = initial_condition(mesh, epsilon, a)
    u0 = float(np.min(state.u))
    decades = np.log10(u0 / u_stop)
    count = int(np.floor(decades * SNAPSHOTS_PER_DECADE))
    levels = u0 * 10.0 ** (-np.arange(1, count + 1) / SNAPSHOTS_PER_DECADE)
    state, history, snaps, steps = evolve(
        state, mesh, ops, u_stop=u_stop, kappa=kappa, dt_max=dt_max, t_budget=t_budget,
        boundary=boundary, snapshot_levels=levels,
    )
    window = fit_window if fit_window is not None else (u_stop, 10 * u_stop)
    T_max = estimate_T(history, window)
    try:
        free = estimate_T_free(history, window)
    except WindowTooNarrow:
        free = {"C": float("nan"), "exponent": float("nan"), "T": float("nan")}
    r = mesh.nodes
    rescaled = [rescale_profile(s, T_max, r) for s in snaps]
    last = snaps[-1]
    report = QuenchReport(
        n=n,
        N=N,
        epsilon=epsilon,
        a=a,
        boundary=boundary.value,
        T_max=T_max,
        T_free=free["T"],
        free_fit=free,
        quench_radius=float(r[np.argmin(last.u)]),
        r=r,
        snapshots=snaps,
        rescaled=rescaled,
        slope_fit=(float("nan"), float("nan")),
        V0_limit=float(rescaled[-1][1][np.argmin(last.u)]),
        history=history,
        steps=steps,
    )
    report.slope_fit = fit_profile(report, u_stop)
    return report
