"""Closed-form free resolvent kernels and their threshold expansions.

The spectral parameter is z > 0 with energy lam = sqrt(m^2 + z^2) just above
the threshold m; the +/- sign selects the boundary value from above/below the
essential spectrum. The minus kernel at real z is the complex conjugate of the
plus kernel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ALPHA1, ALPHA2, BETA, ID2, M11, M22
from .fitting import loglog_slope
from .specfun import EULER_GAMMA, bessel_j0, bessel_j1, bessel_y0, bessel_y1

SCALAR_KERNELS = ("G0", "G1", "G2")
MATRIX_KERNELS = ("mG0", "mG1", "mG2")


class SingularKernelError(ValueError):
    """Raised when a kernel with a diagonal singularity is evaluated at zero separation."""


class InsufficientSamplesError(ValueError):
    pass


@dataclass(frozen=True)
class ResolventSample:
    """Spectral point z > 0 on the +/- side of the threshold, for mass m."""

    z: float
    sign: int
    mass: float

    def __post_init__(self):
        if self.z <= 0:
            raise ValueError(f"z must be positive, got {self.z}")
        if self.sign not in (+1, -1):
            raise ValueError(f"sign must be +1 or -1, got {self.sign}")
        if self.mass <= 0:
            raise ValueError(f"mass must be positive, got {self.mass}")

    @property
    def lam(self) -> float:
        return float(np.sqrt(self.mass**2 + self.z**2))


def g_scalar(z, sign: int):
    """g^{+/-}(z) = -(log(z/2) + gamma)/(2 pi) +/- i/4."""
    return -(np.log(z / 2.0) + EULER_GAMMA) / (2.0 * np.pi) + sign * 0.25j


def g1_scalar(z, sign: int):
    """g1^{+/-}(z) = -(z^2/4) g^{+/-}(z) - z^2/(8 pi)."""
    return -(z**2 / 4.0) * g_scalar(z, sign) - z**2 / (8.0 * np.pi)


@dataclass(frozen=True)
class ExpansionScalars:
    z: float
    g_plus: complex
    g_minus: complex
    g1_plus: complex
    g1_minus: complex

    @classmethod
    def at(cls, z: float) -> "ExpansionScalars":
        return cls(z, g_scalar(z, +1), g_scalar(z, -1), g1_scalar(z, +1), g1_scalar(z, -1))


def log_minus(y):
    """log^-(y) = -log(y) on 0 < y < 1, zero elsewhere."""
    y = np.asarray(y, dtype=float)
    out = np.zeros_like(y)
    inside = (y > 0) & (y < 1)
    out[inside] = -np.log(y[inside])
    return out if out.ndim else float(out)


def _hankel_outgoing(order: int, x):
    j = bessel_j0(x) if order == 0 else bessel_j1(x)
    y = bessel_y0(x) if order == 0 else bessel_y1(x)
    return j + 1.0j * y


def schro_kernel(sample: ResolventSample, r):
    """Schrodinger free-resolvent kernel +/-(i/4) H0^{(+/-)}(z r) at separation r > 0."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise SingularKernelError("kernel has a log singularity at zero separation")
    h = _hankel_outgoing(0, sample.z * r)
    val = 0.25j * h
    return val if sample.sign > 0 else np.conj(val)


def schro_kernel_dr(sample: ResolventSample, r):
    """Radial derivative of the Schrodinger kernel; uses H0' = -H1."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise SingularKernelError("kernel derivative singular at zero separation")
    h1 = _hankel_outgoing(1, sample.z * r)
    val = -0.25j * sample.z * h1
    return val if sample.sign > 0 else np.conj(val)


def _alpha_dot(dx, dy):
    return ALPHA1 * np.asarray(dx)[..., None, None] + ALPHA2 * np.asarray(dy)[..., None, None]


def dirac_kernel(sample: ResolventSample, dx, dy, diagonal_log=None):
    """Free Dirac resolvent kernel (m beta + lam) R0 - i (alpha . d/|d|) dR0/dr, shape (..., 2, 2).

    Zero-separation cells are admitted only when diagonal_log (the cell average
    of log r) is supplied: the log part of the kernel is averaged and the odd
    gradient part vanishes by antisymmetry.
    """
    dx = np.asarray(dx, dtype=float)
    dy = np.asarray(dy, dtype=float)
    r = np.hypot(dx, dy)
    on_diag = r == 0
    if np.any(on_diag) and diagonal_log is None:
        raise SingularKernelError("zero separation needs a diagonal cell average")
    rs = np.where(on_diag, 1.0, r)
    s = schro_kernel(sample, rs)
    ds = schro_kernel_dr(sample, rs)
    if np.any(on_diag):
        s_diag = g_scalar(sample.z, sample.sign) - diagonal_log / (2.0 * np.pi)
        s = np.where(on_diag, s_diag, s)
        ds = np.where(on_diag, 0.0, ds)
    smooth = (sample.mass * BETA + sample.lam * ID2) * np.asarray(s)[..., None, None]
    with np.errstate(invalid="ignore", divide="ignore"):
        unit = np.where(on_diag, 0.0, 1.0 / rs)
    grad = -1.0j * _alpha_dot(dx * unit, dy * unit) * np.asarray(ds)[..., None, None]
    return smooth + grad


def _log_r(dx, dy, diagonal_log):
    r2 = np.asarray(dx, dtype=float) ** 2 + np.asarray(dy, dtype=float) ** 2
    on_diag = r2 == 0
    if np.any(on_diag):
        if diagonal_log is None:
            raise SingularKernelError("zero separation needs a diagonal cell average")
        return np.where(on_diag, diagonal_log, 0.5 * np.log(np.where(on_diag, 1.0, r2))), on_diag
    return 0.5 * np.log(r2), on_diag


def kernel_eval(selector: str, dx, dy, mass: float, diagonal_log=None):
    """Evaluate one of the expansion kernels as a (..., 2, 2) matrix field.

    Scalar kernels (G0, G1, G2) are embedded as multiples of the identity.
    The removable singularities of G1/G2 use the convention 0 * log 0 = 0; the
    log singularity of G0/mG0/mG2 uses the supplied diagonal cell average; the
    odd gradient parts vanish on the diagonal by antisymmetry.
    """
    dx = np.asarray(dx, dtype=float)
    dy = np.asarray(dy, dtype=float)
    r2 = dx**2 + dy**2
    if selector == "G1":
        return r2[..., None, None] * ID2
    if selector == "G2":
        logr_safe = 0.5 * np.log(np.where(r2 == 0, 1.0, r2))
        return (r2 * logr_safe / (8.0 * np.pi))[..., None, None] * ID2
    if selector == "G0":
        logr, _ = _log_r(dx, dy, diagonal_log)
        return (-logr / (2.0 * np.pi))[..., None, None] * ID2
    if selector == "mG0":
        logr, on_diag = _log_r(dx, dy, diagonal_log)
        with np.errstate(invalid="ignore", divide="ignore"):
            inv = np.where(on_diag, 0.0, 1.0 / np.where(on_diag, 1.0, r2))
        grad = (0.5j / np.pi) * _alpha_dot(dx * inv, dy * inv)
        return grad + 2.0 * mass * (-logr / (2.0 * np.pi))[..., None, None] * M11
    if selector == "mG1":
        grad = -2.0j * _alpha_dot(dx, dy)
        return grad + 2.0 * mass * r2[..., None, None] * M11 - (2.0 / mass) * np.ones_like(r2)[..., None, None] * (M11 + M22)
    if selector == "mG2":
        logr, on_diag = _log_r(dx, dy, diagonal_log)
        logr_safe = np.where(on_diag, 0.0, logr)
        grad = (-1.0j / (8.0 * np.pi)) * (2.0 * logr_safe + np.where(on_diag, 0.0, 1.0))[..., None, None] * _alpha_dot(dx, dy)
        out = grad + 2.0 * mass * (r2 * logr_safe / (8.0 * np.pi))[..., None, None] * M11
        out = out + ((-logr / (2.0 * np.pi)) / (2.0 * mass))[..., None, None] * ID2
        return out - np.ones_like(r2)[..., None, None] * (M11 + M22) / (4.0 * np.pi * mass)
    if selector in ("M11", "M22"):
        const = M11 if selector == "M11" else M22
        return np.ones_like(r2)[..., None, None] * const
    raise ValueError(f"unknown kernel selector {selector!r}")


def leading_kernel(sample: ResolventSample, dx, dy, diagonal_log=None):
    """Leading threshold behavior 2 m g^{+/-}(z) M11 + mG0(x, y)."""
    g = g_scalar(sample.z, sample.sign)
    lead = 2.0 * sample.mass * g * np.ones(np.broadcast(np.asarray(dx), np.asarray(dy)).shape)[..., None, None] * M11
    return lead + kernel_eval("mG0", dx, dy, sample.mass, diagonal_log)


@dataclass
class ExpansionAuditReport:
    family: str
    exponent: float
    fitted_exponent: float
    fit_ci95: float
    sup_ratio: float
    median_ratio: float
    sample_count: int
    separation_for_fit: float

    def to_dict(self):
        return {
            "family": self.family,
            "k": self.exponent,
            "fitted_exponent": self.fitted_exponent,
            "fit_ci95": self.fit_ci95,
            "sup_ratio": self.sup_ratio,
            "median_ratio": self.median_ratio,
            "sample_count": self.sample_count,
            "separation_for_fit": self.separation_for_fit,
        }


def _error_term(family: str, z: float, sign: int, mass: float, dx, dy):
    sample = ResolventSample(z, sign, mass)
    err = dirac_kernel(sample, dx, dy) - leading_kernel(sample, dx, dy)
    if family == "E1":
        err = err - g1_scalar(z, sign) * kernel_eval("mG1", dx, dy, mass)
        err = err - z**2 * kernel_eval("mG2", dx, dy, mass)
    return err


def expansion_error_audit(family: str, exponent: float, z_samples, separations, mass: float, sign: int = +1) -> ExpansionAuditReport:
    """Audit the threshold error terms: sup of |E| / (z^k (|d|^k + log^-|d|)) and the z-exponent fit.

    The exponent fit is taken at the separation closest to 1 (direction fixed);
    the normalized sup runs over the whole (z, separation) sample grid.
    """
    if family not in ("E0", "E1"):
        raise ValueError(f"unknown error family {family!r}")
    z_samples = np.sort(np.asarray(z_samples, dtype=float))
    separations = np.asarray(separations, dtype=float)
    if z_samples.size < 10:
        raise InsufficientSamplesError(f"need at least 10 z-points, got {z_samples.size}")
    direction = np.array([0.6, 0.8])
    ratios = []
    for z in z_samples:
        err = _error_term(family, z, sign, mass, separations * direction[0], separations * direction[1])
        mag = np.linalg.norm(err, axis=(-2, -1))
        weight = z**exponent * (separations**exponent + log_minus(separations))
        ratios.append(mag / weight)
    ratios = np.array(ratios)
    i_fit = int(np.argmin(np.abs(separations - 1.0)))
    sep = separations[i_fit]
    mags = []
    for z in z_samples:
        err = _error_term(family, z, sign, mass, sep * direction[0], sep * direction[1])
        mags.append(np.linalg.norm(err))
    slope, _, ci95 = loglog_slope(z_samples, mags)
    return ExpansionAuditReport(
        family=family,
        exponent=exponent,
        fitted_exponent=slope,
        fit_ci95=ci95,
        sup_ratio=float(ratios.max()),
        median_ratio=float(np.median(ratios)),
        sample_count=int(ratios.size),
        separation_for_fit=float(sep),
    )
