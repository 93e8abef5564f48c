"""Shooting for smooth global self-similar profiles.

A shot fixes v(0) = c, integrates to just below the light cone, reads off the
coefficient of (1 - eta)^(n/2 + 1/6) and continues smoothly (zero singular
coefficient on the right) out to large eta.  Smooth global profiles are the
zeros of the left singular coefficient as a function of c.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple, Optional

import numpy as np

from .errors import AmbiguousBranch, FitIllConditioned, NoRootsInRange, QuenchedAt, WindowTooNarrow
from .integrators import DEFAULT_TOL, Trajectory, fit_frobenius, integrate
from .similarity import (
    FROBENIUS_RADIUS,
    eta_series_radius,
    frobenius_expansion,
    frobenius_step,
    series_at_origin,
    source,
)

ETA_MAX = 1e3
FARFIELD_WINDOW = (1e2, 1e3)
SCAN_POINTS_PER_PERIOD = 8
ROOT_REL_WIDTH = 1e-8
FIT_RESIDUAL_MAX = 1e-7


class ShotStatus(str, Enum):
    QUENCHED_BEFORE_ONE = "QuenchedBeforeOne"
    REACHED_ONE = "ReachedOne"
    SURVIVED = "SurvivedToEtaMax"


class FarField(NamedTuple):
    alpha0: float
    b_coeff: float
    branch: str


@dataclass(frozen=True)
class ShotOutcome:
    c: float
    status: ShotStatus
    left_singular_coeff: float
    crossings: int
    farfield: Optional[FarField] = None
    eta_quench: Optional[float] = None
    fit_residual: float = float("nan")
    trajectory: Optional[Trajectory] = field(default=None, repr=False, compare=False)

    def as_dict(self):
        return {
            "c": self.c,
            "status": self.status.value,
            "left_singular_coeff": self.left_singular_coeff,
            "crossings": self.crossings,
            "farfield": None if self.farfield is None else list(self.farfield),
            "eta_quench": self.eta_quench,
            "fit_residual": self.fit_residual,
        }


@dataclass(frozen=True)
class SpectrumResult:
    n: float
    c_values: list
    b_values: list
    ratios: list
    predicted_ratio: float
    eta_max: float = ETA_MAX
    tol: float = DEFAULT_TOL
    farfield_exponents: list = field(default_factory=list)
    survived: list = field(default_factory=list)
    root_residuals: list = field(default_factory=list)
    scan: list = field(default_factory=list, repr=False)

    def as_dict(self):
        return {
            "n": self.n,
            "c_values": list(self.c_values),
            "b_values": list(self.b_values),
            "ratios": list(self.ratios),
            "predicted_ratio": self.predicted_ratio,
            "eta_max": self.eta_max,
            "tol": self.tol,
            "farfield_exponents": list(self.farfield_exponents),
            "survived": list(self.survived),
            "root_residuals": list(self.root_residuals),
        }


# ---------------------------------------------------------------- shooting


def inner_trajectory(c, consts, tol=DEFAULT_TOL, radius=FROBENIUS_RADIUS):
    """Trajectory from the origin series up to eta = 1 - radius."""
    start = series_at_origin(c, eta_series_radius(c), consts)
    return integrate(start, 1.0 - radius, consts, tol=tol)


def singular_coefficient(traj, consts, radius=FROBENIUS_RADIUS, return_residual=False):
    """Coefficient of (1 - eta)^(n/2 + 1/6) fitted on [1 - 10 radius, 1 - radius]."""
    lo, hi = 1.0 - 10 * radius, 1.0 - radius
    inside = (traj.eta >= lo) & (traj.eta <= hi * (1 + 1e-12))
    if traj.eta[0] > lo or traj.eta[-1] < hi * (1 - 1e-12):
        raise WindowTooNarrow(f"trajectory [{traj.eta[0]}, {traj.eta[-1]}] does not cover [{lo}, {hi}]")
    if inside.sum() < 20 and traj.dense is None:
        raise WindowTooNarrow(f"only {inside.sum()} samples in [{lo}, {hi}]")
    exp, rms = fit_frobenius(traj, consts, "left", radius=radius)
    if rms > FIT_RESIDUAL_MAX:
        raise FitIllConditioned(f"light-cone fit residual {rms:.3e} exceeds {FIT_RESIDUAL_MAX:.1e}")
    if return_residual:
        return exp.singular_coeff, rms
    return exp.singular_coeff


def count_crossings(traj, consts, eta_hi=1.0):
    """Sign changes of v - a eta^(2/3) over the samples with eta < eta_hi."""
    m = traj.eta < eta_hi
    d = traj.v[m] - consts.a * traj.eta[m] ** (2.0 / 3.0)
    s = np.sign(d[d != 0])
    return int(np.count_nonzero(s[1:] != s[:-1]))


def shoot(c, consts, eta_max=ETA_MAX, tol=DEFAULT_TOL, beta_sing=0.0, radius=FROBENIUS_RADIUS, window=FARFIELD_WINDOW):
    """Shoot from v(0) = c through the light cone to ``eta_max``."""
    if c <= 0:
        raise ValueError(f"c must be positive, got {c!r}")
    if eta_max <= 1:
        raise ValueError(f"eta_max must exceed 1, got {eta_max!r}")
    try:
        left = inner_trajectory(c, consts, tol=tol, radius=radius)
    except QuenchedAt as q:
        crossings = 0 if q.trajectory is None else count_crossings(q.trajectory, consts)
        return ShotOutcome(
            c=c,
            status=ShotStatus.QUENCHED_BEFORE_ONE,
            left_singular_coeff=float("nan"),
            crossings=crossings,
            eta_quench=q.eta,
            trajectory=q.trajectory,
        )
    exp_left, rms = fit_frobenius(left, consts, "left", radius=radius)
    if rms > FIT_RESIDUAL_MAX:
        raise FitIllConditioned(f"light-cone fit residual {rms:.3e} exceeds {FIT_RESIDUAL_MAX:.1e}")
    right_exp = frobenius_expansion(exp_left.v1, beta_sing, consts, side="right")
    state = frobenius_step(right_exp, radius, radius=radius)
    crossings = count_crossings(left, consts)
    right = integrate(state, eta_max, consts, tol=tol, raise_on_quench=False)
    traj = left.concat(right)
    common = dict(
        c=c, left_singular_coeff=exp_left.singular_coeff, crossings=crossings, fit_residual=rms, trajectory=traj
    )
    if right.eta[-1] < eta_max * (1 - 1e-12):
        return ShotOutcome(status=ShotStatus.REACHED_ONE, eta_quench=float(right.eta[-1]), **common)
    ff = None
    lo, hi = window
    if hi <= eta_max * (1 + 1e-12) and lo >= 10:
        try:
            ff = farfield_fit(traj, window)
        except AmbiguousBranch:
            ff = None
    return ShotOutcome(status=ShotStatus.SURVIVED, farfield=ff, **common)


def farfield_fit(traj, window=FARFIELD_WINDOW, points=200):
    """Log-log regression of v on eta over ``window``; classifies the branch."""
    lo, hi = window
    if lo < 10:
        raise ValueError(f"far-field window must start at eta >= 10, got {lo}")
    if lo < traj.eta[0] or hi > traj.eta[-1] * (1 + 1e-12):
        raise WindowTooNarrow(f"window {window} outside trajectory range [{traj.eta[0]}, {traj.eta[-1]}]")
    eta = np.geomspace(lo, min(hi, traj.eta[-1]), points)
    v, _ = traj(eta)
    if np.any(v <= 0):
        raise AmbiguousBranch("nonpositive values in far-field window")
    slope, intercept = np.polyfit(np.log(eta), np.log(v), 1)
    slope = float(slope)
    if abs(slope) < 0.05:
        branch = "constant"
    elif abs(slope - 2.0 / 3.0) < 0.1:
        branch = "growth"
    else:
        raise AmbiguousBranch(f"far-field exponent {slope:.4f} matches neither 0 nor 2/3")
    return FarField(slope, float(np.exp(intercept)), branch)


# ---------------------------------------------------------------- spectrum


def _indicator(args):
    c, consts, tol = args
    try:
        left = inner_trajectory(c, consts, tol=tol)
    except QuenchedAt:
        return float("nan")
    return singular_coefficient(left, consts)


def _refine(args):
    lo, hi, f_lo, f_hi, consts, tol = args
    return bisect_root(lambda c: _indicator((c, consts, tol)), lo, hi, f_lo, f_hi)


def scan_grid(consts, c_min, c_max, per_period=SCAN_POINTS_PER_PERIOD):
    """Log-spaced shooting parameters, ``per_period`` points per 4 pi / (3 b) in ln c."""
    period = 4.0 * np.pi / (3.0 * consts.b) if consts.b > 0 else 1.0
    count = max(int(np.ceil(per_period * np.log(c_max / c_min) / period)) + 1, 2)
    return np.geomspace(c_min, c_max, count)


def bisect_root(indicator, lo, hi, f_lo, f_hi, rel_width=ROOT_REL_WIDTH, history=None):
    """Geometric bisection of a sign change of ``indicator`` on [lo, hi]."""
    if not np.sign(f_lo) * np.sign(f_hi) < 0:
        raise ValueError("bracket endpoints must have opposite signs")
    while (hi - lo) / lo > rel_width:
        if history is not None:
            history.append((lo, hi, f_lo, f_hi))
        mid = np.sqrt(lo * hi)
        f_mid = indicator(mid)
        if f_mid == 0:
            return mid, f_mid
        if np.sign(f_mid) == np.sign(f_lo):
            lo, f_lo = mid, f_mid
        else:
            hi, f_hi = mid, f_mid
    if history is not None:
        history.append((lo, hi, f_lo, f_hi))
    mid = np.sqrt(lo * hi)
    return mid, indicator(mid)


def find_spectrum(consts, c_min, c_max, max_roots=None, tol=DEFAULT_TOL, eta_max=ETA_MAX, workers=1):
    """Locate the smooth global profiles with c_min < c < c_max.

    Roots are sign changes of the left singular coefficient on a log grid,
    refined by geometric bisection.  Each root is then shot through the light
    cone to ``eta_max`` and its far-field coefficient recorded.
    """
    if not 0 < c_min < c_max < consts.c_star:
        raise ValueError(f"need 0 < c_min < c_max < c* = {consts.c_star}, got {c_min}, {c_max}")
    grid = scan_grid(consts, c_min, c_max)
    jobs = [(float(c), consts, tol) for c in grid]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            values = list(pool.map(_indicator, jobs))
    else:
        values = [_indicator(j) for j in jobs]
    values = np.array(values)

    brackets = []
    for i in range(len(grid) - 1):
        f0, f1 = values[i], values[i + 1]
        if np.isfinite(f0) and np.isfinite(f1) and np.sign(f0) * np.sign(f1) < 0:
            brackets.append(i)
    if not brackets:
        raise NoRootsInRange(
            f"no sign change of the light-cone singular coefficient for c in [{c_min}, {c_max}] (n = {consts.n})"
        )
    # largest c first so that c_values decrease
    brackets = brackets[::-1]
    if max_roots is not None:
        brackets = brackets[:max_roots]

    jobs = [(grid[i], grid[i + 1], values[i], values[i + 1], consts, tol) for i in brackets]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            refined = list(pool.map(_refine, jobs))
    else:
        refined = [_refine(j) for j in jobs]
    roots, residuals = [], []
    for (lo, hi, f_lo, f_hi, _, _), (root, f_root) in zip(jobs, refined):
        roots.append(float(root))
        residuals.append(float(abs(f_root) / max(abs(f_lo), abs(f_hi))))

    b_values, exponents, survived = [], [], []
    for c in roots:
        out = shoot(c, consts, eta_max=eta_max, tol=tol)
        ok = out.status is ShotStatus.SURVIVED and out.farfield is not None
        survived.append(ok)
        b_values.append(out.farfield.b_coeff if ok else float("nan"))
        exponents.append(out.farfield.alpha0 if ok else float("nan"))

    ratios = [roots[j + 1] / roots[j] for j in range(len(roots) - 1)]
    return SpectrumResult(
        n=consts.n,
        c_values=roots,
        b_values=b_values,
        ratios=ratios,
        predicted_ratio=float(np.exp(-4.0 * np.pi / (3.0 * consts.b))),
        eta_max=eta_max,
        tol=tol,
        farfield_exponents=exponents,
        survived=survived,
        root_residuals=residuals,
        scan=list(zip(grid.tolist(), values.tolist())),
    )


# ---------------------------------------------------------------- monotonicity


@dataclass(frozen=True)
class CriticalPoint:
    eta: float
    v: float
    kind: str  # "max" or "min"
    case: str  # which of (a)-(d) applies
    allowed: bool


@dataclass(frozen=True)
class MonotonicityReport:
    monotone: bool
    min_dv: float
    critical_points: list

    @property
    def ok(self):
        return self.monotone and all(p.allowed for p in self.critical_points)


def _forbidden_kind(v, eta, c_star):
    """The extremum type excluded by the sign of v'' at a critical point.

    At v' = 0 the equation gives (1 - eta^2) v'' = 1/v^2 - 2v/9, whose sign
    is fixed by v versus c* and eta versus 1.
    """
    below = v < c_star
    inside = eta < 1.0
    if below and inside:
        return "max", "a"
    if below and not inside:
        return "min", "b"
    if not below and inside:
        return "min", "c"
    return "max", "d"


def monotonicity_check(traj, consts=None, tol=1e-8):
    """Check v' >= -tol and classify interior critical points against (a)-(d)."""
    from .similarity import C_STAR

    c_star = C_STAR if consts is None else consts.c_star
    dv = traj.dv
    min_dv = float(dv.min())
    points = []
    sign = np.sign(dv)
    for i in np.nonzero(sign[1:] * sign[:-1] < 0)[0]:
        e0, e1 = traj.eta[i], traj.eta[i + 1]
        t = dv[i] / (dv[i] - dv[i + 1])
        eta = float(e0 + t * (e1 - e0))
        v = float(traj.v[i] + t * (traj.v[i + 1] - traj.v[i]))
        kind = "max" if dv[i] > 0 else "min"
        # curvature predicted by the equation must agree with the observed extremum
        curvature = -source(v) / (1.0 - eta * eta) if abs(eta - 1.0) > 1e-12 else 0.0
        predicted = "min" if curvature > 0 else "max"
        forbidden, case = _forbidden_kind(v, eta, c_star)
        points.append(CriticalPoint(eta, v, kind, case, allowed=(kind != forbidden and kind == predicted)))
    return MonotonicityReport(monotone=min_dv >= -tol, min_dv=min_dv, critical_points=points)
