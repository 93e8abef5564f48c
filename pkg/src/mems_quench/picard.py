"""Local solutions near the singular points as fixed points of an integral map.

Writing v = c* + Q z with Q a solution of the linearisation about c*, the
profile equation becomes (mu z')' = Q eta^(n-1) |1 - eta^2|^(1-alpha) f(w) / (1 - eta^2)
with mu = Q^2 eta^(n-1) |1 - eta^2|^(1-alpha), alpha = n/2 + 1/6 and

    f(w) = 1/(c* + w)^2 - 1/c*^2 + 2 w / c*^3,   w = Q z.

Integrating twice gives z = Gamma(z).  Near eta = 1 we work in x = |eta - 1|;
the inner integral then behaves like x^(1 - alpha) and is taken as a
Hadamard finite part, which turns the free constant of the outer integral
into the coefficient of the x^alpha branch.  Zero constant on the right of
eta = 1 is the smooth continuation.
"""

from dataclasses import dataclass, field

import numpy as np

from .basis import BasisKind, basis_Q
from .errors import BallViolation, NoContraction
from .integrators import Trajectory
from .similarity import C_STAR

EPSILON0 = 0.1
DELTA_START = 1e-2
DELTA_MIN = 1e-6
CONTRACTION_MAX = 0.5


@dataclass(frozen=True)
class PicardProblem:
    eta0: float
    z0: float
    z0_star: float
    beta: float
    basis: BasisKind
    sigma1: float
    sigma2: float
    delta_max: float = DELTA_START

    def __post_init__(self):
        basis = BasisKind(self.basis)
        object.__setattr__(self, "basis", basis)
        if not (self.eta0 == 0.0 or 1.0 - EPSILON0 < self.eta0 <= 1.0):
            raise ValueError(f"eta0 must be 0 or lie in (1 - {EPSILON0}, 1], got {self.eta0}")
        if self.eta0 == 0.0 and basis is not BasisKind.PBAR:
            raise ValueError("eta0 = 0 needs the basis regular at the origin (Pbar)")
        if self.eta0 > 0.0 and basis is not BasisKind.P:
            raise ValueError("eta0 near 1 needs the basis regular at the light cone (P)")
        if self.eta0 == 0.0 and self.z0_star != 0.0:
            raise ValueError("at eta0 = 0 the slope datum must vanish")
        if not 0 < self.sigma1 < self.sigma2:
            raise ValueError(f"need 0 < sigma1 < sigma2, got {self.sigma1}, {self.sigma2}")
        if not self.delta_max > 0:
            raise ValueError("delta_max must be positive")

    @classmethod
    def from_state(cls, eta0, v, dv, n, beta=0.0, delta_max=DELTA_START):
        """Problem data from v(eta0) = v, v'(eta0) = dv (dv ignored at eta0 = 1)."""
        if v <= 0:
            raise ValueError(f"v must be positive, got {v}")
        basis = BasisKind.PBAR if eta0 == 0.0 else BasisKind.P
        q, dq = basis_Q(basis, n, eta0)
        z0 = (v - C_STAR) / q
        z0_star = 0.0 if eta0 in (0.0, 1.0) else dv / q - (v - C_STAR) * dq / q**2
        return cls(eta0, z0, z0_star, beta, basis, v / 4.0, 4.0 * v, delta_max)

    @classmethod
    def at_origin(cls, c, n, delta_max=DELTA_START):
        return cls.from_state(0.0, c, 0.0, n, delta_max=delta_max)

    @classmethod
    def at_one(cls, v1, n, beta=0.0, delta_max=DELTA_START):
        return cls.from_state(1.0, v1, 0.0, n, beta=beta, delta_max=delta_max)


@dataclass(frozen=True)
class PicardSolution:
    eta: np.ndarray
    z: np.ndarray
    dz: np.ndarray
    v: np.ndarray
    dv: np.ndarray
    delta: float
    iterations: int
    contraction: float
    problem: PicardProblem = field(repr=False)

    def to_trajectory(self):
        """v as a Trajectory (eta increasing)."""
        order = np.argsort(self.eta)
        return Trajectory.from_samples(self.eta[order], self.v[order], self.dv[order])


def nonlinearity(w):
    """f(w): the part of the source beyond its linearisation about c*."""
    return 1.0 / (C_STAR + w) ** 2 - 1.0 / C_STAR**2 + 2.0 * w / C_STAR**3


def _cell_integrals(t, y, gamma):
    """Exact integrals of t^gamma times the piecewise-linear interpolant of y over each cell."""
    t0, t1 = t[:-1], t[1:]
    h = t1 - t0
    m0 = (t1 ** (gamma + 1) - t0 ** (gamma + 1)) / (gamma + 1)
    m1 = (t1 ** (gamma + 2) - t0 ** (gamma + 2)) / (gamma + 2)
    slope = (y[1:] - y[:-1]) / h
    return y[:-1] * m0 + slope * (m1 - t0 * m0)


def _cumulative(cells):
    return np.concatenate([[0.0], np.cumsum(cells)])


def _trapezoid_cumulative(t, y):
    return _cumulative(0.5 * (y[1:] + y[:-1]) * np.diff(t))


def _grid(lo, hi, nodes, grading):
    return lo + (hi - lo) * np.linspace(0.0, 1.0, nodes) ** grading


class _Map:
    """The integral map Gamma on a fixed grid."""

    def __init__(self, p, consts, delta, nodes, grading):
        self.p = p
        n = consts.n
        self.n = n
        self.alpha = consts.sing_exponent
        if p.eta0 == 0.0:
            self.mode = "origin"
            self.t = _grid(0.0, delta, nodes, grading)
            self.eta = self.t
        elif p.eta0 == 1.0:
            self.mode = "right"
            self.s = 1.0
            self.t = _grid(0.0, delta, nodes, grading)
            self.eta = 1.0 + self.t
        else:
            self.mode = "left"
            self.s = -1.0
            eps = 1.0 - p.eta0
            lo = eps - delta
            if lo <= 1e-9 * eps:
                self.t = _grid(0.0, eps, nodes, grading)
            else:
                self.t = np.linspace(lo, eps, nodes)
            self.eta = 1.0 - self.t
        self.Q, self.dQ = basis_Q(p.basis, n, self.eta)
        a = self.alpha
        if self.mode == "origin":
            self.g_weight = self.Q * (1.0 - self.eta**2) ** (-a)
            self.k_hat = (1.0 - self.eta**2) ** (a - 1.0) / self.Q**2
        else:
            s, x = self.s, self.t
            self.g_weight = -self.Q * self.eta ** (n - 1) * (2.0 + s * x) ** (-a)
            self.k_hat = (2.0 + s * x) ** (a - 1.0) / (self.Q**2 * self.eta ** (n - 1))
            if self.mode == "left":
                eta0 = p.eta0
                q0, _ = basis_Q(p.basis, n, eta0)
                mu0 = q0**2 * eta0 ** (n - 1) * abs(1.0 - eta0**2) ** (1.0 - a)
                self.alpha1 = mu0 * p.z0_star

    def __call__(self, z):
        w = self.Q * z
        f = nonlinearity(w)
        if self.mode == "origin":
            return self._origin(f)
        return self._cone(f)

    def _origin(self, f):
        t, n = self.t, self.n
        g = self.g_weight * f
        M = _cumulative(_cell_integrals(t, g, n - 1.0))
        H = np.zeros_like(t)
        H[1:] = M[1:] / t[1:] ** (n - 1)
        dz = self.k_hat * H
        z = self.p.z0 + _trapezoid_cumulative(t, dz)
        return z, dz

    def _cone(self, f):
        x, a, s = self.t, self.alpha, self.s
        g = self.g_weight * f
        G = np.empty_like(x)
        H = np.empty_like(x)
        if x[0] == 0.0:
            # finite part of the divergent first cell
            lin_a = g[0]
            lin_b = (g[1] - g[0]) / x[1]
            G[0] = 0.0
            G[1] = lin_a * x[1] ** (1 - a) / (1 - a) + lin_b * x[1] ** (2 - a) / (2 - a)
            G[2:] = G[1] + np.cumsum(_cell_integrals(x[1:], g[1:], -a))[:]
            H[0] = lin_a / (1 - a)
            H[1:] = x[1:] ** (a - 1) * G[1:]
        else:
            G[:] = _cumulative(_cell_integrals(x, g, -a))
            H[:] = x ** (a - 1) * G
        if self.mode == "right":
            const = self.p.beta
            ref = 0
        else:
            const = self.alpha1 - G[-1]
            ref = len(x) - 1
        # dz/dx = s k_hat (const x^(alpha-1) + H)
        part_c = _cumulative(_cell_integrals(x, self.k_hat, a - 1.0)) * const if const != 0.0 else 0.0
        part_h = _trapezoid_cumulative(x, self.k_hat * H)
        integral = s * (part_c + part_h)
        z = self.p.z0 + integral - integral[ref]
        dz_dx = s * self.k_hat * (const * x ** (a - 1.0) + H)
        return z, s * dz_dx


def picard_solve(p, consts, nodes=2001, grading=2.0, tol=1e-14, max_iter=200):
    """Fixed point of the integral map on [eta0, eta0 + delta] (clipped at 1 from the left).

    delta starts at ``p.delta_max`` and is halved on BallViolation or when
    successive differences fail to shrink by at least 1/2, down to 1e-6.
    """
    delta = p.delta_max
    last = None
    while delta >= DELTA_MIN * (1 - 1e-12):
        try:
            return _iterate(p, consts, delta, nodes, grading, tol, max_iter)
        except (BallViolation, NoContraction) as err:
            last = err
            delta /= 2.0
    if isinstance(last, BallViolation):
        raise last
    raise NoContraction(f"no contraction down to delta = {DELTA_MIN}: {last}")


def _iterate(p, consts, delta, nodes, grading, tol, max_iter):
    gamma = _Map(p, consts, delta, nodes, grading)
    z = np.full_like(gamma.t, p.z0)
    prev_diff = None
    worst = 0.0
    for it in range(1, max_iter + 1):
        z_new, dz = gamma(z)
        v = C_STAR + gamma.Q * z_new
        if np.any(v < p.sigma1) or np.any(v > p.sigma2) or not np.all(np.isfinite(v)):
            raise BallViolation(f"iterate left [{p.sigma1:.6g}, {p.sigma2:.6g}] at delta = {delta:.3g}")
        diff = float(np.max(np.abs(z_new - z)))
        scale = max(1.0, float(np.max(np.abs(z_new))))
        z = z_new
        if diff <= tol * scale:
            dv = gamma.dQ * z + gamma.Q * dz
            return PicardSolution(
                eta=gamma.eta.copy(),
                z=z,
                dz=dz,
                v=v,
                dv=dv,
                delta=delta,
                iterations=it,
                contraction=worst,
                problem=p,
            )
        if prev_diff is not None and prev_diff > 1e3 * tol * scale:
            ratio = diff / prev_diff
            worst = max(worst, ratio)
            if ratio > CONTRACTION_MAX:
                raise NoContraction(f"contraction ratio {ratio:.3f} at delta = {delta:.3g}")
        prev_diff = diff
    raise NoContraction(f"no convergence in {max_iter} iterations at delta = {delta:.3g}")
