"""Time evolution e^{-itH}: exact free multiplier, Strang splitting, dense spectral oracle.

The free propagator acts per Fourier mode as
exp(-it(alpha.xi + m beta)) = cos(t lam) Id - i sin(t lam)/lam (alpha.xi + m beta),
lam = sqrt(|xi|^2 + m^2), and is exactly unitary. The dense oracle
diagonalizes H = D_m + V on grids with 2 n^2 <= 8192 and realizes the
spectral projections (absolutely continuous part, smooth cutoffs, weights)
in its eigenbasis.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .core import ALPHA1, ALPHA2, BETA, Grid2D, MatrixPotential, SpinorField

DENSE_SIZE_CAP = 8192
DEFAULT_GAP_EXCLUSION = 0.02


class CutoffSupportError(ValueError):
    pass


class MemoryCapError(RuntimeError):
    pass


class WindowExceededError(ValueError):
    pass


def smoothstep(u):
    """C-infinity step built from exp(-1/u): 1 at u <= 0, 0 at u >= 1."""
    u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)

    def bump(v):
        out = np.zeros_like(v)
        pos = v > 0
        out[pos] = np.exp(-1.0 / v[pos])
        return out

    a = bump(1.0 - u)
    b = bump(u)
    return a / (a + b)


def smoothstep_prime(u):
    """Derivative of smoothstep (analytic, for amplitude-envelope checks)."""
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    inside = (u > 0) & (u < 1)
    ui = u[inside]
    a = np.exp(-1.0 / (1.0 - ui))
    b = np.exp(-1.0 / ui)
    # s = a/(a+b), a' = -a/(1-u)^2, b' = b/u^2
    out[inside] = -a * b * ((1.0 - ui) ** -2 + ui**-2) / (a + b) ** 2
    return out


@dataclass(frozen=True)
class CutoffSpec:
    """Smooth spectral cutoff in the edge variable z = sqrt(E^2 - m^2).

    kind "low": passes z <= z_pass, vanishes beyond z_stop. kind "dyadic"
    with index j >= 1: the telescoped shell Phi(z/2^j) - Phi(z/2^{j-1}),
    supported in [2^{j-1} z_pass, 2^j z_stop]; with the defaults the family
    chi_0 + sum_j chi_j telescopes exactly to Phi(z/2^J).
    """

    kind: str = "low"
    j: int = 0
    z_pass: float = 1.0
    z_stop: float = 2.0

    def __post_init__(self):
        if self.kind not in ("low", "dyadic"):
            raise CutoffSupportError(f"unknown cutoff kind {self.kind!r}")
        if self.kind == "dyadic" and self.j < 1:
            raise CutoffSupportError("dyadic cutoff needs j >= 1")
        if not (0 < self.z_pass < self.z_stop):
            raise CutoffSupportError("need 0 < z_pass < z_stop")

    def _phi(self, z):
        return 1.0 - smoothstep((np.asarray(z, dtype=float) - self.z_pass) / (self.z_stop - self.z_pass))

    def weight(self, z):
        z = np.asarray(z, dtype=float)
        if self.kind == "low":
            return self._phi(z)
        return self._phi(z / 2.0**self.j) - self._phi(z / 2.0 ** (self.j - 1))

    def support_max(self) -> float:
        return self.z_stop * (2.0**self.j if self.kind == "dyadic" else 1.0)

    def validate_for(self, grid: Grid2D):
        if self.kind == "dyadic" and 2.0**self.j > grid.nyquist:
            raise CutoffSupportError(
                f"dyadic shell 2^{self.j} = {2.0**self.j} exceeds the Nyquist frequency {grid.nyquist:.3f}"
            )
        if self.kind == "low" and self.z_pass > grid.nyquist:
            raise CutoffSupportError("low-energy cutoff passband exceeds the Nyquist frequency")


def partition_defect(z, j_max: int, z_pass: float = 1.0, z_stop: float = 2.0):
    """|chi_0 + sum_{j<=J} chi_j - 1| on the sampled z (valid where z <= 2^J z_pass)."""
    total = CutoffSpec("low", 0, z_pass, z_stop).weight(z)
    for j in range(1, j_max + 1):
        total = total + CutoffSpec("dyadic", j, z_pass, z_stop).weight(z)
    return np.abs(total - 1.0)


def edge_variable(energies, mass: float):
    """z = sqrt(E^2 - m^2) on the essential spectrum, zero inside the gap."""
    e = np.asarray(energies, dtype=float)
    return np.sqrt(np.maximum(e * e - mass * mass, 0.0))


# ---------------------------------------------------------------------------
# free propagator


def _free_phases(grid: Grid2D, mass: float, t: float):
    lam = np.sqrt(grid.KABS**2 + mass**2)
    return np.cos(lam * t), np.sin(lam * t) / lam


def free_evolve(f: SpinorField, t: float, mass: float) -> SpinorField:
    """Exactly unitary free evolution via the Fourier multiplier."""
    g = f.grid
    c, s = _free_phases(g, mass, t)
    fh = f.fourier()
    out0 = c * fh[0] - 1.0j * s * (mass * fh[0] + (g.KX - 1.0j * g.KY) * fh[1])
    out1 = c * fh[1] - 1.0j * s * ((g.KX + 1.0j * g.KY) * fh[0] - mass * fh[1])
    out = np.fft.ifft2(np.stack([out0, out1]), axes=(-2, -1))
    return SpinorField(g, out)


def free_cutoff_apply(f: SpinorField, cutoff: CutoffSpec) -> SpinorField:
    """chi(D_m) for the free operator: multiply by chi(|xi|) on both branches."""
    cutoff.validate_for(f.grid)
    w = cutoff.weight(f.grid.KABS)
    out = np.fft.ifft2(w[None] * f.fourier(), axes=(-2, -1))
    return SpinorField(f.grid, out)


# ---------------------------------------------------------------------------
# Strang splitting


@dataclass
class EvolutionPlan:
    grid: Grid2D
    mass: float
    dt: float
    t_final: float
    potential: MatrixPotential | None = None
    method: str = "strang"

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        steps = self.t_final / self.dt
        if abs(steps - round(steps)) > 1e-9:
            raise ValueError("t_final must be an integer number of steps")
        if self.method == "free" and self.potential is not None:
            raise ValueError("free multiplier method takes no potential")
        if self.potential is not None and not self.potential.grid.same_as(self.grid):
            raise ValueError("potential lives on a different grid")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))


def hermitian2_exp(V: np.ndarray, tau: float) -> np.ndarray:
    """Pointwise exact exp(-i tau V) for a field of Hermitian 2x2 matrices."""
    tr_half = 0.5 * (V[..., 0, 0] + V[..., 1, 1]).real
    dev = V.copy()
    dev[..., 0, 0] -= tr_half
    dev[..., 1, 1] -= tr_half
    omega = np.sqrt(np.abs(dev[..., 0, 1]) ** 2 + dev[..., 0, 0].real ** 2)
    c = np.cos(tau * omega)
    safe = np.where(omega == 0, 1.0, omega)
    s = np.where(omega == 0, tau, np.sin(tau * omega) / safe)
    out = np.zeros_like(V)
    out[..., 0, 0] = c
    out[..., 1, 1] = c
    out -= 1.0j * s[..., None, None] * dev
    return np.exp(-1.0j * tau * tr_half)[..., None, None] * out


def evolve_perturbed(f: SpinorField, plan: EvolutionPlan, store_every: int | None = None):
    """Strang split-step trajectory: half potential kicks around full free steps.

    Returns [(t, field), ...] including t = 0; with store_every = None only
    the initial and final states are kept.
    """
    g = plan.grid
    traj = [(0.0, f.copy())]
    cur = f.values.copy()
    if plan.potential is None or not np.any(plan.potential.values):
        half = None
    else:
        half = hermitian2_exp(plan.potential.values, 0.5 * plan.dt)
    c, s = _free_phases(g, plan.mass, plan.dt)
    m = plan.mass

    def kick(vals):
        if half is None:
            return vals
        return np.einsum("xyab,bxy->axy", half, vals)

    for step in range(1, plan.n_steps + 1):
        cur = kick(cur)
        fh = np.fft.fft2(cur, axes=(-2, -1))
        out0 = c * fh[0] - 1.0j * s * (m * fh[0] + (g.KX - 1.0j * g.KY) * fh[1])
        out1 = c * fh[1] - 1.0j * s * ((g.KX + 1.0j * g.KY) * fh[0] - m * fh[1])
        cur = np.fft.ifft2(np.stack([out0, out1]), axes=(-2, -1))
        cur = kick(cur)
        if (store_every and step % store_every == 0) or step == plan.n_steps:
            traj.append((step * plan.dt, SpinorField(g, cur.copy())))
    return traj


# ---------------------------------------------------------------------------
# dense spectral oracle


class DenseSpectral:
    """Dense Hermitian eigendecomposition of H = D_m + V on a small grid."""

    def __init__(self, grid: Grid2D, mass: float, potential: MatrixPotential | None = None):
        dim = 2 * grid.n**2
        if dim > DENSE_SIZE_CAP:
            raise MemoryCapError(f"dense oracle capped at 2 n^2 <= {DENSE_SIZE_CAP}, requested {dim}")
        self.grid = grid
        self.mass = mass
        self.potential = potential
        n = grid.n
        fwd = np.fft.fft(np.eye(n), axis=0)
        inv = np.fft.ifft(np.eye(n), axis=0)
        d1 = inv @ (1.0j * grid.k[:, None] * fwd)
        eye = np.eye(n)
        dx = np.kron(d1, eye)
        dy = np.kron(eye, d1)
        n2 = n * n
        H = -1.0j * (np.kron(ALPHA1, dx) + np.kron(ALPHA2, dy)) + mass * np.kron(BETA, np.eye(n2))
        if potential is not None:
            idx = np.arange(n2)
            for a in range(2):
                for b in range(2):
                    H[a * n2 + idx, b * n2 + idx] += potential.values[..., a, b].reshape(-1)
        H = 0.5 * (H + H.conj().T)
        self.energies, self.modes = np.linalg.eigh(H)

    def _flatten(self, f: SpinorField) -> np.ndarray:
        return f.values.reshape(2 * self.grid.n**2)

    def _unflatten(self, vec: np.ndarray) -> SpinorField:
        return SpinorField(self.grid, vec.reshape(2, self.grid.n, self.grid.n))

    def coefficients(self, f: SpinorField) -> np.ndarray:
        return self.modes.conj().T @ self._flatten(f)

    def synthesize(self, coef: np.ndarray) -> SpinorField:
        return self._unflatten(self.modes @ coef)

    def evolve(self, f: SpinorField, t: float, weights: np.ndarray | None = None) -> SpinorField:
        coef = self.coefficients(f)
        if weights is not None:
            coef = coef * weights
        return self.synthesize(np.exp(-1.0j * self.energies * t) * coef)

    def p_ac_weights(self, gap_exclusion: float = DEFAULT_GAP_EXCLUSION) -> np.ndarray:
        """Indicator of |E| >= m + gap_exclusion, the discrete shadow of the ac projection."""
        return (np.abs(self.energies) >= self.mass + gap_exclusion).astype(float)

    def cutoff_weights(self, cutoff: CutoffSpec) -> np.ndarray:
        cutoff.validate_for(self.grid)
        return cutoff.weight(edge_variable(self.energies, self.mass))

    def resolvent_weight(self, power: float) -> np.ndarray:
        """<H>^{-power} as spectral multipliers."""
        return (1.0 + self.energies**2) ** (-power / 2.0)

    def gap_eigenvalues(self, margin: float = 1e-6) -> np.ndarray:
        inside = np.abs(self.energies) < self.mass - margin
        return self.energies[inside]

    def near_threshold_eigenvalues(self, band: float) -> np.ndarray:
        close = np.abs(np.abs(self.energies) - self.mass) < band
        return self.energies[close]

    def energy_expectation(self, f: SpinorField) -> float:
        coef = self.coefficients(f)
        return float(np.sum(self.energies * np.abs(coef) ** 2) / np.sum(np.abs(coef) ** 2))


def spectral_localize(f: SpinorField, cutoff: CutoffSpec, source) -> SpinorField:
    """Apply chi(H): source is "free" for the multiplier route or a DenseSpectral oracle."""
    if source == "free":
        return free_cutoff_apply(f, cutoff)
    if isinstance(source, DenseSpectral):
        coef = source.coefficients(f) * source.cutoff_weights(cutoff)
        return source.synthesize(coef)
    raise TypeError("source must be 'free' or a DenseSpectral instance")


# ---------------------------------------------------------------------------
# propagation-window guard and snapshots


def validity_window(grid: Grid2D, data_radius: float, margin: float = 2.0) -> float:
    """Largest time before a unit-speed front from the data can wrap around."""
    return grid.extent / 2.0 - data_radius - margin


def check_window(grid: Grid2D, data_radius: float, t_max: float):
    window = validity_window(grid, data_radius)
    if t_max > window:
        raise WindowExceededError(
            f"t_max = {t_max} exceeds the wrap-around validity window {window:.2f} "
            f"(extent {grid.extent}, data radius {data_radius})"
        )


def write_snapshots(traj, out_dir: str, mass: float, extra: dict | None = None) -> str:
    """Binary field planes plus a JSON manifest describing the run."""
    os.makedirs(out_dir, exist_ok=True)
    grid = traj[0][1].grid
    files = []
    for i, (t, fld) in enumerate(traj):
        name = f"field_{i:05d}.bin"
        with open(os.path.join(out_dir, name), "wb") as fh:
            fh.write(np.ascontiguousarray(fld.values).tobytes())
        files.append({"file": name, "t": t})
    manifest = {
        "grid_n": grid.n,
        "grid_extent": grid.extent,
        "mass": mass,
        "dtype": "complex128",
        "shape": [2, grid.n, grid.n],
        "snapshots": files,
    }
    if extra:
        manifest.update(extra)
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=1)
    return path
