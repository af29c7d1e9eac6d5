"""Small least-squares helpers for log-log exponent fits."""

from __future__ import annotations

import numpy as np


class InsufficientSpanError(ValueError):
    pass


def loglog_slope(x, y):
    """Least-squares slope of log y vs log x; returns (slope, intercept, ci95).

    ci95 is 1.96 times the standard error of the slope estimate.
    """
    lx = np.log(np.asarray(x, dtype=float))
    ly = np.log(np.asarray(y, dtype=float))
    if lx.size < 3:
        raise InsufficientSpanError("need at least 3 points for a slope fit")
    A = np.stack([lx, np.ones_like(lx)], axis=1)
    coef, res, _, _ = np.linalg.lstsq(A, ly, rcond=None)
    slope, intercept = coef
    dof = max(lx.size - 2, 1)
    sigma2 = (res[0] / dof) if res.size else 0.0
    sxx = np.sum((lx - lx.mean()) ** 2)
    ci95 = 1.96 * np.sqrt(sigma2 / sxx) if sxx > 0 else np.inf
    return float(slope), float(intercept), float(ci95)


def bootstrap_slope(x, y, n_boot: int = 200, seed: int = 0):
    """Slope of log y vs log x with a bootstrap confidence width (resampled residuals)."""
    lx = np.log(np.asarray(x, dtype=float))
    ly = np.log(np.asarray(y, dtype=float))
    slope, intercept, _ = loglog_slope(x, y)
    resid = ly - (slope * lx + intercept)
    rng = np.random.default_rng(seed)
    slopes = np.empty(n_boot)
    A = np.stack([lx, np.ones_like(lx)], axis=1)
    for b in range(n_boot):
        yb = slope * lx + intercept + rng.choice(resid, size=resid.size, replace=True)
        slopes[b] = np.linalg.lstsq(A, yb, rcond=None)[0][0]
    lo, hi = np.percentile(slopes, [2.5, 97.5])
    return float(slope), float(max(hi - slope, slope - lo)), float(np.sqrt(np.mean(resid**2)))
