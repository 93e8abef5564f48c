"""Solutions of the linearisation about the constant profile.

    (1 - eta^2) Q'' + ((n - 1)/eta - 2 eta/3) Q' + (2/3) Q = 0

Pbar is the solution regular at eta = 0 with Pbar(0) = 1, summed as the
Gauss series 2F1(-1/2, 1/3; n/2; eta^2).  P is the solution regular at
eta = 1 with P(1) = 1; it is built from its Taylor series at 1 and then
continued by re-expanding about successive centres, each step staying within
REACH times the distance to the nearest singular point.
"""

from enum import Enum

import numpy as np

from .errors import SeriesDivergence

TAYLOR_TERMS = 48
REACH = 0.3
GAUSS_TAIL = 1e-16
GAUSS_MAX_TERMS = 200_000


class BasisKind(str, Enum):
    P = "P"
    PBAR = "Pbar"


def basis_Q(kind, n, eta):
    """Return (Q, dQ) for ``kind`` in {"P", "Pbar"} at ``eta`` (scalar or array)."""
    q, dq, _ = basis_derivatives(kind, n, eta)
    return q, dq


def basis_derivatives(kind, n, eta):
    """Return (Q, Q', Q'') evaluated from the series representations."""
    kind = BasisKind(kind)
    scalar = np.ndim(eta) == 0
    eta = np.atleast_1d(np.asarray(eta, dtype=float))
    if kind is BasisKind.PBAR:
        out = pbar(n, eta)
    else:
        out = _p_values(n, eta)
    if scalar:
        return tuple(float(o[0]) for o in out)
    return out


def basis_residual(n, eta, q, dq, d2q):
    """Left-hand side of the linearised equation; vectorised."""
    return (1 - eta**2) * d2q + ((n - 1) / eta - 2 * eta / 3) * dq + 2.0 / 3.0 * q


def second_derivative(n, eta, q, dq):
    """Q'' from the equation (eta not in {0, 1})."""
    return -(((n - 1) / eta - 2 * eta / 3) * dq + 2.0 / 3.0 * q) / (1 - eta**2)


def p_closed_form_n3(eta):
    """P for n = 3: (eta^2 + 3) / (4 eta) and its derivative."""
    eta = np.asarray(eta, dtype=float)
    return (eta**2 + 3) / (4 * eta), 0.25 * (1 - 3 / eta**2)


def p_derivative_at_one(n):
    return -(2.0 / 3.0) / (n - 5.0 / 3.0)


# ---------------------------------------------------------------- Pbar


def pbar(n, eta):
    """Gauss series for 2F1(-1/2, 1/3; n/2; eta^2) with its first two eta-derivatives."""
    eta = np.atleast_1d(np.asarray(eta, dtype=float))
    if np.any(np.abs(eta) >= 1):
        raise SeriesDivergence("Pbar series needs |eta| < 1")
    a, b, c = -0.5, 1.0 / 3.0, n / 2.0
    x = eta**2
    xmax = float(x.max()) if x.size else 0.0
    f, fx, fxx = np.ones_like(x), np.zeros_like(x), np.zeros_like(x)
    coef = 1.0
    xk2 = np.ones_like(x)  # x^(k-2) once k >= 2
    for k in range(1, GAUSS_MAX_TERMS):
        coef *= (a + k - 1) * (b + k - 1) / ((c + k - 1) * k)
        if k == 1:
            f += coef * x
            fx += coef
            continue
        f += coef * xk2 * x * x
        fx += k * coef * xk2 * x
        fxx += k * (k - 1) * coef * xk2
        # remaining terms of the second-derivative series are bounded geometrically
        if abs(coef) * k * k * xmax ** (k - 2) / (1.0 - xmax) < GAUSS_TAIL:
            break
        xk2 = xk2 * x
    return f, 2 * eta * fx, 2 * fx + 4 * x * fxx


# ---------------------------------------------------------------- P


def _equation_polys(n, c):
    """Coefficients in h = eta - c of eta (1 - eta^2), (n - 1) - 2 eta^2 / 3 and 2 eta / 3."""
    A = np.array([c * (1 - c * c), 1 - 3 * c * c, -3 * c, -1.0])
    B = np.array([(n - 1) - 2 * c * c / 3, -4 * c / 3, -2.0 / 3.0])
    C = np.array([2 * c / 3, 2.0 / 3.0])
    return A, B, C


def taylor_coefficients(n, c, q0, dq0, terms=TAYLOR_TERMS):
    """Taylor coefficients about eta = c of the solution with Q(c) = q0.

    At an ordinary point ``dq0`` is Q'(c).  At c = 1 the solution regular
    there is fixed by ``q0`` alone and ``dq0`` is ignored.
    """
    A, B, C = _equation_polys(n, c)
    return series_solution(A, B, C, q0, dq0, terms)


def series_solution(A, B, C, q0, dq0, terms):
    """Power series of a solution of A(h) y'' + B(h) y' + C(h) y = 0 about h = 0.

    A, B, C are coefficient arrays in h.  If A(0) = 0 the origin is a regular
    singular point and the regular solution with y(0) = q0 is returned.
    """
    p = np.zeros(terms + 1)
    p[0] = q0
    singular = abs(A[0]) < 1e-14
    if not singular:
        p[1] = dq0
    # balance of h^m; the unknown is p[m+1] if singular and p[m+2] otherwise
    for m in range(terms if singular else terms - 1):
        rest = 0.0
        for j in range(min(len(A), m + 3)):
            k = m - j + 2
            if k <= terms and j != (1 if singular else 0):
                rest += A[j] * k * (k - 1) * p[k]
        for j in range(min(len(B), m + 2)):
            k = m - j + 1
            if k <= terms and not (singular and j == 0):
                rest += B[j] * k * p[k]
        for j in range(min(len(C), m + 1)):
            rest += C[j] * p[m - j]
        if singular:
            den = (m + 1) * (A[1] * m + B[0])
            if abs(den) < 1e-14:
                raise SeriesDivergence("resonant Taylor recurrence at a regular singular point")
            p[m + 1] = -rest / den
        else:
            p[m + 2] = -rest / (A[0] * (m + 2) * (m + 1))
    return p


def eval_series(p, h):
    """Value and first two derivatives of the power series ``p`` at ``h``."""
    k = np.arange(len(p))
    P = np.polynomial.polynomial
    return P.polyval(h, p), P.polyval(h, (k * p)[1:]), P.polyval(h, (k * (k - 1) * p)[2:])


def _reach(c):
    """Hop length from centre c: a fixed fraction of the distance to the nearest singular point."""
    if c == 1.0:
        return REACH
    return REACH * min(abs(c), abs(c - 1.0), abs(c + 1.0))


def _p_values(n, eta):
    if np.any(eta <= 0):
        raise ValueError("P needs eta > 0")
    q, dq, d2q = (np.empty_like(eta) for _ in range(3))
    todo = np.ones(eta.shape, dtype=bool)
    for direction in (-1.0, 1.0):
        c = 1.0
        p = taylor_coefficients(n, 1.0, 1.0, None)
        while True:
            r = _reach(c)
            here = todo & (np.abs(eta - c) <= r)
            if here.any():
                q[here], dq[here], d2q[here] = eval_series(p, eta[here] - c)
                todo &= ~here
            side = todo & ((eta - c) * direction > 0)
            if not side.any():
                break
            target = c + direction * r
            v, dv, _ = eval_series(p, target - c)
            c = target
            p = taylor_coefficients(n, c, v, dv)
    return q, dq, d2q
