"""Self-similar profile equation and its local expansions.

With u(r, t) = (T - t)^(2/3) v(eta), eta = r / (T - t), radial solutions of
u_tt = Laplacian(u) - 1/u^2 reduce to

    (1 - eta^2) v'' + ((n - 1)/eta - 2 eta/3) v' + 2 v/9 - 1/v^2 = 0.

The equation has regular singular points at eta = 0 (where the shooting
datum v(0) = c, v'(0) = 0 is imposed) and at the light cone eta = 1, where
the general solution splits into an analytic part and a branch carrying
|eta - 1|^(n/2 + 1/6).
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.signal import convolve2d

from .errors import FitFailure, NonpositiveV, QuenchError, SingularEvaluation

C_STAR = 4.5 ** (1.0 / 3.0)

FROBENIUS_RADIUS = 1e-2
SINGULAR_TOL = 1e-12


class Regime(str, Enum):
    SPIRAL = "spiral"
    NODE = "node"


@dataclass(frozen=True)
class SimilarityConstants:
    n: float
    c_star: float
    a: float
    delta: float
    b: float
    lambda_plus: complex
    lambda_minus: complex
    sing_exponent: float
    regime: Regime

    def as_dict(self):
        return {
            "n": self.n,
            "c_star": self.c_star,
            "a": self.a,
            "delta": self.delta,
            "b": self.b,
            "lambda_plus": [self.lambda_plus.real, self.lambda_plus.imag],
            "lambda_minus": [self.lambda_minus.real, self.lambda_minus.imag],
            "sing_exponent": self.sing_exponent,
            "regime": self.regime.value,
        }


def constants(n):
    """All dimension-dependent constants of the similarity problem."""
    if n < 2:
        raise ValueError(f"dimension n must be >= 2, got {n}")
    delta = (n / 2 - 7.0 / 3.0) ** 2 - 8.0 / 3.0
    root = np.sqrt(complex(delta))
    return SimilarityConstants(
        n=n,
        c_star=C_STAR,
        a=(2.0 / 3.0 * (n - 4.0 / 3.0)) ** (-1.0 / 3.0),
        delta=delta,
        b=float(np.sqrt(abs(delta))),
        lambda_plus=1.0 / 3.0 - n / 2 - root,
        lambda_minus=1.0 / 3.0 - n / 2 + root,
        sing_exponent=n / 2 + 1.0 / 6.0,
        regime=Regime.SPIRAL if delta < 0 else Regime.NODE,
    )


@dataclass(frozen=True)
class OdeState:
    eta: float
    v: float
    dv: float


def source(v):
    """Zeroth-order part 2v/9 - 1/v^2 of the profile equation."""
    return 2.0 * v / 9.0 - 1.0 / v**2


def rhs(state, consts):
    """Return (v', v'') at ``state``."""
    eta, v, dv = state.eta, state.v, state.dv
    if abs(eta) < SINGULAR_TOL or abs(eta - 1.0) < SINGULAR_TOL:
        raise SingularEvaluation(f"rhs evaluated at singular point eta = {eta!r}")
    if v <= 0:
        raise NonpositiveV(f"v = {v!r} at eta = {eta!r}")
    n = consts.n
    d2v = -(((n - 1) / eta - 2.0 * eta / 3.0) * dv + source(v)) / (1.0 - eta**2)
    return dv, d2v


def residual(eta, v, dv, d2v, n):
    """Left-hand side of the profile equation; vectorised."""
    return (1 - eta**2) * d2v + ((n - 1) / eta - 2 * eta / 3) * dv + source(v)


# ---------------------------------------------------------------- origin


def eta_series_radius(c):
    return min(1e-3, c**1.5 / 10.0)


def origin_coefficients(c, n, terms=6):
    """Coefficients a_k of v = sum a_k eta^(2k) for v(0) = c, v'(0) = 0."""
    if c <= 0:
        raise NonpositiveV(f"shooting parameter c must be positive, got {c!r}")
    a = np.zeros(terms + 1)
    a[0] = c
    for k in range(terms):
        w_k = _inverse_square(a[: k + 1])[k]
        lin = 2 * k * (2 * k - 1) + 4.0 * k / 3.0 - 2.0 / 9.0
        a[k + 1] = (lin * a[k] + w_k) / ((2 * k + 2) * (2 * k + n))
    return a


def series_at_origin(c, eta, consts, terms=6):
    """State at small ``eta`` on the solution with v(0) = c, v'(0) = 0."""
    if c <= 0:
        raise NonpositiveV(f"shooting parameter c must be positive, got {c!r}")
    if not 0 < eta <= eta_series_radius(c) * (1 + 1e-12):
        raise ValueError(f"eta = {eta!r} outside (0, {eta_series_radius(c)!r}]")
    a = origin_coefficients(c, consts.n, terms)
    x = eta * eta
    powers = x ** np.arange(terms + 1)
    v = float(np.dot(a, powers))
    k = np.arange(1, terms + 1)
    dv = float(np.dot(2 * k * a[1:], powers[:-1])) * eta
    return OdeState(eta, v, dv)


def _inverse_square(a):
    """Power-series coefficients of 1/v^2 given those of v (a[0] != 0)."""
    m = len(a)
    inv = np.zeros(m)
    inv[0] = 1.0 / a[0]
    for k in range(1, m):
        inv[k] = -np.dot(a[1 : k + 1], inv[k - 1 :: -1][:k]) / a[0]
    return np.convolve(inv, inv)[:m]


# ---------------------------------------------------------------- light cone


def regular_derivative_at_one(v1, consts):
    """v'(1) forced by boundedness of v'' at the light cone."""
    if v1 <= 0:
        raise NonpositiveV(f"v(1) must be positive, got {v1!r}")
    return (1.0 / v1**2 - 2.0 * v1 / 9.0) / (consts.n - 5.0 / 3.0)


@dataclass(frozen=True)
class FrobeniusExpansion:
    """Local solution sum_{j,k} table[j, k] |h|^(j*alpha) h^k with h = eta - 1.

    Row 0 is the analytic part (Taylor coefficients about eta = 1); row j >= 1
    collects the terms generated by the j-th power of the singular branch.
    ``table[1, 0]`` is the coefficient of |eta - 1|^alpha.
    """

    side: str
    exponent: float
    table: np.ndarray = field(repr=False)

    @property
    def regular_coeffs(self):
        return self.table[0]

    @property
    def singular_coeff(self):
        return float(self.table[1, 0])

    @property
    def v1(self):
        return float(self.table[0, 0])

    @property
    def sign(self):
        return -1.0 if self.side == "left" else 1.0

    def evaluate(self, eta):
        """Return (v, v') at the points ``eta`` (on this expansion's side)."""
        h = np.asarray(eta, dtype=float) - 1.0
        x = np.abs(h)
        J, K = self.table.shape
        v = np.zeros_like(h)
        dv = np.zeros_like(h)
        for j in range(J):
            xj = x ** (j * self.exponent)
            for k in range(K):
                c = self.table[j, k]
                if c == 0.0:
                    continue
                e = j * self.exponent + k
                v = v + c * xj * h**k
                if e != 0:
                    dv = dv + c * e * xj * h**k / h
        return v, dv


def frobenius_expansion(v1, singular_coeff, consts, side="left", regular_terms=12, singular_orders=4):
    """Build the two-parameter local solution at eta = 1 on one side."""
    if side not in ("left", "right"):
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    if v1 <= 0:
        raise NonpositiveV(f"v(1) must be positive, got {v1!r}")
    if regular_terms < 2:
        raise ValueError("need at least 3 regular coefficients")
    n = consts.n
    alpha = consts.sing_exponent
    J, K = singular_orders + 1, regular_terms + 1
    C = np.zeros((J, K))
    C[0, 0] = v1
    if J > 1:
        C[1, 0] = singular_coeff

    def indicial(e):
        return 2.0 * e * (alpha - e)

    def b_coef(e):
        return -3.0 * e * (e - 1.0) - 4.0 * e / 3.0

    def d_coef(e):
        return -e * (e - 1.0) - 2.0 * e / 3.0

    # Pass m fixes column m + 1; G at lattice point (j, m) only involves
    # coefficients (j', m') with j' <= j and m' <= m, all fixed by earlier passes.
    for m in range(-1, K - 1):
        G = _series_source(C)
        for j in range(J):
            if m == -1 and j <= 1:
                continue
            rest = 0.0
            if m >= 0:
                rest += b_coef(j * alpha + m) * C[j, m] + G[j, m]
            if m >= 1:
                rest += d_coef(j * alpha + m - 1) * C[j, m - 1] + G[j, m - 1]
            e_new = j * alpha + m + 1
            den = indicial(e_new)
            if abs(den) < 1e-12:
                raise QuenchError(f"resonant exponent {e_new} in light-cone expansion (n = {n})")
            C[j, m + 1] = -rest / den
    return FrobeniusExpansion(side=side, exponent=alpha, table=C)


def frobenius_step(expansion, delta_eta, radius=FROBENIUS_RADIUS):
    """State at eta = 1 -/+ delta_eta from a light-cone expansion."""
    if not 0 < delta_eta <= radius * (1 + 1e-12):
        raise FitFailure(f"delta_eta = {delta_eta!r} outside (0, {radius!r}]")
    eta = 1.0 + expansion.sign * delta_eta
    v, dv = expansion.evaluate(eta)
    return OdeState(eta, float(v), float(dv))


def _mul2(A, B):
    J, K = A.shape
    return convolve2d(A, B)[:J, :K]


def _series_source(C):
    """Lattice coefficients of 2v/9 - 1/v^2."""
    J, K = C.shape
    v0 = C[0, 0]
    eps = C / v0
    eps[0, 0] = 0.0
    # 1/v^2 = v0^-2 sum (m+1)(-eps)^m; eps is nilpotent on the truncated lattice
    inv_sq = np.zeros((J, K))
    inv_sq[0, 0] = 1.0
    power = np.zeros((J, K))
    power[0, 0] = 1.0
    for m in range(1, J + K):
        power = _mul2(power, -eps)
        if not power.any():
            break
        inv_sq += (m + 1) * power
    return 2.0 / 9.0 * C - inv_sq / v0**2
