"""Oscillatory-integral audits of the stationary-phase bounds and decay-rate measurement.

The model integrals are int_0^infty e^{-it phi(z)} a(z) dz with phase
phi(z) = sqrt(z^2 + m^2) -/+ z r / t and amplitudes from the envelope class
z chi(z) chitilde(z r) (1 + z r)^{-1/2}, where chi is a low or dyadic cutoff
and chitilde switches on at z r ~ 1. The decay lab evolves localized data and
fits the time exponent of the sup norm.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Grid2D, SpinorField
from .fitting import InsufficientSpanError, bootstrap_slope, loglog_slope
from .propagator import (
    CutoffSpec,
    DenseSpectral,
    check_window,
    free_cutoff_apply,
    free_evolve,
    smoothstep,
    smoothstep_prime,
)

GL_ORDER = 16
MIN_FIT_POINTS = 8
MIN_FIT_RATIO = 4.0  # fits need the times to span at least this factor


class NonConvergenceError(RuntimeError):
    pass


class EnvelopeViolationError(ValueError):
    pass


@dataclass(frozen=True)
class OscillatoryIntegralSpec:
    """Amplitude/phase data for one model integral."""

    mass: float
    r: float
    phase_sign: int = +1          # +1: stationary point possible; -1: none on [0, inf)
    j: int = 0                    # 0: low cutoff, >= 1: dyadic shell
    z_pass: float = 1.0
    z_stop: float = 2.0
    tail_on: float = 0.5          # chitilde rises on [tail_on, 2 tail_on]

    def cutoff(self) -> CutoffSpec:
        if self.j >= 1:
            return CutoffSpec("dyadic", self.j, self.z_pass, self.z_stop)
        return CutoffSpec("low", 0, self.z_pass, self.z_stop)

    def support(self):
        if self.j >= 1:
            return 2.0 ** (self.j - 1) * self.z_pass, 2.0**self.j * self.z_stop
        return 0.0, self.z_stop

    def chi(self, z):
        return self.cutoff().weight(z)

    def chitilde(self, y):
        return smoothstep(1.0 - np.asarray(y, dtype=float) / self.tail_on)

    def amplitude(self, z):
        z = np.asarray(z, dtype=float)
        return z * self.chi(z) * self.chitilde(z * self.r) / np.sqrt(1.0 + z * self.r)

    def amplitude_prime(self, z):
        """Analytic z-derivative of the amplitude (for the far-field bound terms)."""
        z = np.asarray(z, dtype=float)
        chi = self.chi(z)
        ct = self.chitilde(z * self.r)
        root = np.sqrt(1.0 + z * self.r)
        dchi = self._chi_prime(z)
        dct = -smoothstep_prime(1.0 - z * self.r / self.tail_on) * (self.r / self.tail_on)
        out = chi * ct / root
        out += z * dchi * ct / root
        out += z * chi * dct / root
        out += z * chi * ct * (-0.5 * self.r) / root**3
        return out

    def _chi_prime(self, z):
        c = self.cutoff()
        scale = 1.0 / (c.z_stop - c.z_pass)

        def dphi(y):
            return -smoothstep_prime((np.asarray(y) - c.z_pass) * scale) * scale

        if self.j >= 1:
            return dphi(z / 2.0**self.j) / 2.0**self.j - dphi(z / 2.0 ** (self.j - 1)) / 2.0 ** (self.j - 1)
        return dphi(z)

    def phase(self, z, t):
        return np.sqrt(np.asarray(z, dtype=float) ** 2 + self.mass**2) - self.phase_sign * z * self.r / t

    def stationary_point(self, t: float):
        """Critical point of the phase on [0, inf), or None."""
        if self.phase_sign < 0 or t <= self.r:
            return None
        return self.mass * self.r / np.sqrt(t * t - self.r * self.r)


def envelope_class_check(spec: OscillatoryIntegralSpec, n_grid: int = 2000):
    """Verify |a| and |a'| obey their class bounds pointwise on the support.

    The class is |a| <= C z (1 + z r)^{-1/2} and |a'| <= C' (1 + z r)^{-1/2};
    returns the fitted constants (C, C') and raises if either is infinite.
    """
    z_lo, z_hi = spec.support()
    z = np.linspace(max(z_lo, 1e-9), z_hi, n_grid)
    root = np.sqrt(1.0 + z * spec.r)
    a = np.abs(spec.amplitude(z))
    da = np.abs(spec.amplitude_prime(z))
    ca = float(np.max(a * root / z))
    cda = float(np.max(da * root))
    if not (np.isfinite(ca) and np.isfinite(cda)):
        raise EnvelopeViolationError("amplitude fails its envelope class")
    return ca, cda


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(GL_ORDER)


def _panel_integral(fn, z_lo: float, z_hi: float, n_panels: int) -> complex:
    edges = np.linspace(z_lo, z_hi, n_panels + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    zs = mid[:, None] + half[:, None] * _GL_NODES[None, :]
    vals = fn(zs.reshape(-1)).reshape(zs.shape)
    return complex(np.sum(vals * _GL_WEIGHTS[None, :] * half[:, None]))


def eval_oscillatory(spec: OscillatoryIntegralSpec, t: float, tol: float = 1e-9, max_refine: int = 6):
    """Adaptive Gauss-Legendre evaluation of the model integral; returns (value, error estimate).

    Panels resolve the oscillation t phi(z): at least ~40 nodes per period at
    the largest local phase speed, then dyadic refinement until the change
    drops below tol.
    """
    if t == 0:
        raise ValueError("t must be nonzero")
    z_lo, z_hi = spec.support()
    if z_hi <= z_lo:
        return 0.0 + 0.0j, 0.0
    speed = abs(t) * (1.0 + spec.r / abs(t))  # |t phi'| <= t + r
    n_osc = speed * (z_hi - z_lo) / (2.0 * np.pi)
    n_panels = max(8, int(np.ceil(40.0 * max(n_osc, 1.0) / GL_ORDER)))

    def fn(z):
        return np.exp(-1.0j * t * spec.phase(z, t)) * spec.amplitude(z)

    prev = _panel_integral(fn, z_lo, z_hi, n_panels)
    err = np.inf
    for _ in range(max_refine):
        n_panels *= 2
        cur = _panel_integral(fn, z_lo, z_hi, n_panels)
        new_err = abs(cur - prev)
        prev = cur
        if new_err <= tol:
            return prev, new_err
        if new_err > 0.5 * err and new_err > tol:
            break
        err = new_err
    if err > tol and new_err > tol:
        raise NonConvergenceError(f"refinement stalled at {new_err:.2e} > {tol:.1e}")
    return prev, new_err


# ---------------------------------------------------------------------------
# stationary-phase bound audits


@dataclass
class TwoRegionAuditReport:
    max_ratio: float
    ratios: list


def two_region_bound_audit(mass: float, t_values, r_values, spec_kwargs=None) -> TwoRegionAuditReport:
    """Check |I(t)| against the near-critical-point mass plus t^{-1}-weighted far field.

    The right-hand side integrates |a| over |z - z0| < t^{-1/2} plus
    t^{-1} (|a| / |z-z0|^2 + |a'| / |z-z0|) over the complement.
    """
    spec_kwargs = spec_kwargs or {}
    ratios = []
    for r in r_values:
        spec = OscillatoryIntegralSpec(mass=mass, r=r, phase_sign=+1, **spec_kwargs)
        z_lo, z_hi = spec.support()
        for t in t_values:
            z0 = spec.stationary_point(t)
            if z0 is None:
                continue
            lhs = abs(eval_oscillatory(spec, t)[0])
            cut = t**-0.5
            zs = np.linspace(max(z_lo, 1e-9), z_hi, 20001)
            dz = zs[1] - zs[0]
            a = np.abs(spec.amplitude(zs))
            da = np.abs(spec.amplitude_prime(zs))
            near = np.abs(zs - z0) < cut
            rhs = np.sum(a[near]) * dz
            far = ~near
            rhs += (np.sum(a[far] / (zs[far] - z0) ** 2) + np.sum(da[far] / np.abs(zs[far] - z0))) * dz / t
            if rhs > 0:
                ratios.append((float(t), float(r), float(lhs / rhs)))
    if not ratios:
        raise ValueError("no (t, r) pair placed the critical point inside the support")
    return TwoRegionAuditReport(max(x[2] for x in ratios), ratios)


@dataclass
class UniformDecayAuditReport:
    sup_weighted: float
    refinement_change: float
    values: list


def uniform_decay_audit(mass: float, t_values, r_values, phase_sign: int = +1, spec_kwargs=None) -> UniformDecayAuditReport:
    """sup over (t, r) of <t> |I(t)|, with a quadrature-refinement stability estimate."""
    spec_kwargs = spec_kwargs or {}
    values = []
    worst_change = 0.0
    for r in r_values:
        spec = OscillatoryIntegralSpec(mass=mass, r=r, phase_sign=phase_sign, **spec_kwargs)
        for t in t_values:
            val, err = eval_oscillatory(spec, t, tol=1e-10)
            weighted = np.hypot(1.0, t) * abs(val)
            values.append((float(t), float(r), float(weighted)))
            worst_change = max(worst_change, np.hypot(1.0, t) * err)
    return UniformDecayAuditReport(max(v[2] for v in values), worst_change, values)


@dataclass
class DyadicAuditReport:
    slope_large_t: float
    slope_intermediate: float
    sup_small_t_ratio: float
    detail: dict = field(default_factory=dict)


def dyadic_bound_audit(mass: float, j_values=(1, 2, 3, 4, 5), r: float = 3.0, t_large=(200.0, 1000.0, 5000.0), t_mid=None) -> DyadicAuditReport:
    """Branch scalings of the dyadic bound min(2^{2j}, 2^{3j/2} t^{-1/2}, 2^{2j} t^{-1}).

    Fits the log2 slope in j of sup_t t |I| (expect ~2) and of t^{1/2} |I| at
    intermediate times (expect ~1.5), and checks the small-t branch
    |I| <= C 2^{2j} with a j-stable constant.
    """
    j_values = list(j_values)
    sup_t_weighted = []
    mid_weighted = []
    small_ratio = []
    for j in j_values:
        spec = OscillatoryIntegralSpec(mass=mass, r=r, phase_sign=+1, j=j)
        # large t: the stationary point sits at z0 ~ r/t, far below the shell;
        # the t^{-1} branch dominates
        vals = [np.hypot(1.0, t) * abs(eval_oscillatory(spec, t, tol=1e-10)[0]) for t in t_large]
        sup_t_weighted.append(max(vals))
        # intermediate window scales with the shell: t ~ r 2^j keeps z0 in the shell
        tm = t_mid(j) if t_mid else [r * 2.0**j * u for u in (1.0, 1.4, 2.0)]
        vals_mid = [np.sqrt(t) * abs(eval_oscillatory(spec, t, tol=1e-10)[0]) for t in tm]
        mid_weighted.append(max(vals_mid))
        small = abs(eval_oscillatory(spec, 0.05, tol=1e-10)[0])
        small_ratio.append(small / 4.0**j)
    slope_large = np.polyfit(j_values, np.log2(sup_t_weighted), 1)[0]
    slope_mid = np.polyfit(j_values, np.log2(mid_weighted), 1)[0]
    return DyadicAuditReport(
        float(slope_large),
        float(slope_mid),
        float(max(small_ratio) / max(min(small_ratio), 1e-300)),
        {"sup_t_weighted": sup_t_weighted, "mid_weighted": mid_weighted, "small_ratio": small_ratio},
    )


# ---------------------------------------------------------------------------
# decay measurement


@dataclass
class DecayCurve:
    times: np.ndarray
    norms: np.ndarray
    alpha: float
    conf: float
    fit_rms: float
    reference_rate: float | None = None
    alpha_power_log: float | None = None
    log_exponent: float | None = None
    power_log_wins: bool = False
    detail: dict = field(default_factory=dict)

    def to_rows(self):
        return list(zip(self.times.tolist(), self.norms.tolist()))


def fit_decay_exponent(times, norms, n_boot: int = 200, seed: int = 0):
    """Least-squares log-log slope with a bootstrap confidence width."""
    times = np.asarray(times, dtype=float)
    norms = np.asarray(norms, dtype=float)
    if times.size < MIN_FIT_POINTS:
        raise InsufficientSpanError(f"need >= {MIN_FIT_POINTS} samples, got {times.size}")
    if times.max() / times.min() < MIN_FIT_RATIO:
        raise InsufficientSpanError(f"times must span at least a factor {MIN_FIT_RATIO}")
    return bootstrap_slope(times, norms, n_boot=n_boot, seed=seed)


def _power_log_fit(times, norms):
    """Fit log n = c + alpha log t + beta log(log t); returns (alpha, beta, rms)."""
    lt = np.log(times)
    llt = np.log(np.log(times))
    ln = np.log(norms)
    A = np.stack([lt, llt, np.ones_like(lt)], axis=1)
    coef, res, _, _ = np.linalg.lstsq(A, ln, rcond=None)
    rms = float(np.sqrt(res[0] / lt.size)) if res.size else 0.0
    return float(coef[0]), float(coef[1]), rms


def make_data(grid: Grid2D, family: str, width: float = 1.0) -> SpinorField:
    """Localized initial data, normalized in the L1-like proxy norm.

    "bump": first-component Gaussian; "dipole": mean-zero atom-like profile
    (per-component mean zero); "delta": one-hot impulse (flat spectrum).
    """
    vals = np.zeros((2, grid.n, grid.n), dtype=complex)
    if family == "bump":
        vals[0] = np.exp(-(grid.X**2 + grid.Y**2) / width**2)
    elif family == "dipole":
        vals[0] = grid.X * np.exp(-(grid.X**2 + grid.Y**2) / width**2)
    elif family == "delta":
        vals[0, grid.n // 2, grid.n // 2] = 1.0
    else:
        raise ValueError(f"unknown data family {family!r}")
    f = SpinorField(grid, vals)
    return f * (1.0 / f.l1_norm())


def data_radius(family: str, width: float = 1.0) -> float:
    return 0.5 if family == "delta" else 4.0 * width


def measure_decay(
    source,
    data: SpinorField,
    times,
    cutoff: CutoffSpec | None = None,
    mass: float | None = None,
    pac_exclusion: float | None = None,
    weight_power: float | None = None,
    support_radius: float = 4.0,
    fit: bool = True,
    reference_rate: float | None = None,
) -> DecayCurve:
    """Sup-norm decay of the evolved, spectrally localized data.

    source: "free" (with mass given) or a DenseSpectral oracle. The run is
    refused when the largest time leaves the wrap-around validity window.
    """
    times = np.asarray(sorted(times), dtype=float)
    grid = data.grid
    check_window(grid, support_radius, float(times.max()))
    if source == "free":
        if mass is None:
            raise ValueError("free evolution needs the mass")
        prepared = free_cutoff_apply(data, cutoff) if cutoff is not None else data
        norms = np.array([free_evolve(prepared, t, mass).sup_norm() for t in times])
    elif isinstance(source, DenseSpectral):
        coef = source.coefficients(data)
        if pac_exclusion is not None:
            coef = coef * source.p_ac_weights(pac_exclusion)
        if cutoff is not None:
            coef = coef * source.cutoff_weights(cutoff)
        if weight_power is not None:
            coef = coef * source.resolvent_weight(weight_power)
        norms = np.array(
            [source.synthesize(np.exp(-1.0j * source.energies * t) * coef).sup_norm() for t in times]
        )
    else:
        raise TypeError("source must be 'free' or a DenseSpectral instance")
    if not fit:
        return DecayCurve(times, norms, np.nan, np.nan, np.nan, reference_rate)
    alpha, conf, rms = fit_decay_exponent(times, norms)
    apl, beta, rms_pl = _power_log_fit(times, norms)
    return DecayCurve(
        times,
        norms,
        alpha,
        conf,
        rms,
        reference_rate,
        alpha_power_log=apl,
        log_exponent=beta,
        power_log_wins=bool(rms_pl < 0.9 * rms),
    )
