"""Self-contained Bessel and Hankel functions of orders 0 and 1.

Power series below x = 12, Hankel asymptotic expansions above, tuned so the
two regimes overlap with better than 1e-10 accuracy relative to the
sqrt(2/(pi x)) envelope. Only positive real arguments are supported (plus
x = 0 for J).
"""

from __future__ import annotations

import numpy as np

# Euler-Mascheroni constant to 20 digits; shared with the resolvent expansion
# scalars, which must use the identical value.
EULER_GAMMA = 0.57721566490153286061

_CUTOFF = 12.0
_N_SERIES = 36
_N_ASYM = 12  # terms kept in each of P and Q


class SpecialFunctionDomainError(ValueError):
    pass


def _harmonic(k: int) -> float:
    return sum(1.0 / i for i in range(1, k + 1))


def _series_tables():
    ks = np.arange(_N_SERIES)
    fact = np.cumprod(np.concatenate([[1.0], np.arange(1, _N_SERIES + 1, dtype=float)]))
    fk, fk1 = fact[:-1], fact[1:]  # k! and (k+1)!
    h = np.array([_harmonic(int(k)) for k in ks])
    h1 = np.array([_harmonic(int(k) + 1) for k in ks])
    sgn = (-1.0) ** ks
    c_j0 = sgn / fk**2
    c_j1 = sgn / (fk * fk1)
    c_y0 = -sgn * h / fk**2  # (-1)^{k+1} H_k / (k!)^2
    c_y1 = sgn * (h + h1) / (fk * fk1)
    return c_j0, c_j1, c_y0, c_y1


_C_J0, _C_J1, _C_Y0, _C_Y1 = _series_tables()


def _asym_tables():
    # a_k(n) = a_{k-1}(n) * (4 n^2 - (2k-1)^2) / (8 k); P uses even k, Q odd k.
    tables = {}
    for order in (0, 1):
        mu = 4.0 * order * order
        a = [1.0]
        for k in range(1, 2 * _N_ASYM):
            a.append(a[-1] * (mu - (2 * k - 1) ** 2) / (8.0 * k))
        a = np.array(a)
        p = np.array([(-1.0) ** k * a[2 * k] for k in range(_N_ASYM)])
        q = np.array([(-1.0) ** k * a[2 * k + 1] for k in range(_N_ASYM)])
        tables[order] = (p, q)
    return tables


_ASYM = _asym_tables()


def _poly_eval(coeffs, u):
    out = np.zeros_like(u)
    for c in coeffs[::-1]:
        out = out * u + c
    return out


def _series_pair(order: int, x, need_y: bool):
    q = 0.25 * x * x
    if order == 0:
        j = _poly_eval(_C_J0, q)
        if not need_y:
            return j, None
        y = (2.0 / np.pi) * ((np.log(0.5 * x) + EULER_GAMMA) * j + _poly_eval(_C_Y0, q))
        return j, y
    j = 0.5 * x * _poly_eval(_C_J1, q)
    if not need_y:
        return j, None
    y = (2.0 / np.pi) * ((np.log(0.5 * x) + EULER_GAMMA) * j - 1.0 / x - 0.25 * x * _poly_eval(_C_Y1, q))
    return j, y


def _asym_pair(order: int, x):
    p = _poly_eval(_ASYM[order][0], 1.0 / (x * x))
    q = _poly_eval(_ASYM[order][1], 1.0 / (x * x)) / x
    chi = x - (2 * order + 1) * np.pi / 4.0
    amp = np.sqrt(2.0 / (np.pi * x))
    c, s = np.cos(chi), np.sin(chi)
    return amp * (p * c - q * s), amp * (p * s + q * c)


def _eval_pair(order: int, x, need_y: bool = True):
    """(J_order, Y_order) on a nonnegative array, series/asymptotic split at the cutoff."""
    x = np.asarray(x, dtype=float)
    j = np.empty_like(x)
    y = np.empty_like(x) if need_y else None
    lo = x <= _CUTOFF
    if np.any(lo):
        js, ys = _series_pair(order, x[lo], need_y)
        j[lo] = js
        if need_y:
            y[lo] = ys
    if np.any(~lo):
        ja, ya = _asym_pair(order, x[~lo])
        j[~lo] = ja
        if need_y:
            y[~lo] = ya
    return j, y


def _check_domain(x, allow_zero: bool):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or (not allow_zero and np.any(x == 0)):
        kind = "x >= 0" if allow_zero else "x > 0"
        raise SpecialFunctionDomainError(f"argument out of domain ({kind} required)")
    return x


def bessel_j0(x):
    x = _check_domain(x, allow_zero=True)
    return _eval_pair(0, x, need_y=False)[0] if x.ndim else float(_eval_pair(0, x[None], need_y=False)[0][0])


def bessel_j1(x):
    x = _check_domain(x, allow_zero=True)
    return _eval_pair(1, x, need_y=False)[0] if x.ndim else float(_eval_pair(1, x[None], need_y=False)[0][0])


def bessel_y0(x):
    x = _check_domain(x, allow_zero=False)
    return _eval_pair(0, x)[1] if x.ndim else float(_eval_pair(0, x[None])[1][0])


def bessel_y1(x):
    x = _check_domain(x, allow_zero=False)
    return _eval_pair(1, x)[1] if x.ndim else float(_eval_pair(1, x[None])[1][0])


_DISPATCH = {
    ("J", 0): bessel_j0,
    ("J", 1): bessel_j1,
    ("Y", 0): bessel_y0,
    ("Y", 1): bessel_y1,
}


def bessel(kind: str, order: int, x):
    """J or Y of order 0 or 1 at positive real x (x = 0 allowed for J)."""
    try:
        fn = _DISPATCH[(kind, order)]
    except KeyError:
        raise SpecialFunctionDomainError(f"unsupported kind/order ({kind}, {order})") from None
    return fn(x)


def hankel1(order: int, x):
    """First Hankel function H^(1)_order = J + iY at positive real x."""
    x = _check_domain(x, allow_zero=False)
    if x.ndim:
        j, y = _eval_pair(order, x)
        return j + 1.0j * y
    j, y = _eval_pair(order, x[None])
    return complex(j[0] + 1.0j * y[0])


def resolvent_envelope(y, derivative: int = 0):
    """Outgoing-kernel envelope w(y) = (i/4) H^(1)_0(y) e^{-iy} and its first two derivatives.

    These are the profiles whose j-th derivative decays like (1+y)^(-1/2-j).
    """
    y = np.asarray(y, dtype=float)
    scalar = y.ndim == 0
    ya = y[None] if scalar else y
    h0 = hankel1(0, ya)
    h1 = hankel1(1, ya)
    phase = np.exp(-1.0j * ya)
    if derivative == 0:
        out = 0.25j * h0 * phase
    elif derivative == 1:
        out = 0.25j * (-h1 - 1.0j * h0) * phase
    elif derivative == 2:
        out = 0.25j * (-2.0 * h0 + h1 / ya + 2.0j * h1) * phase
    else:
        raise SpecialFunctionDomainError("envelope derivatives implemented for orders 0, 1, 2 only")
    return complex(out[0]) if scalar else out
