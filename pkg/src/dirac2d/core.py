"""Dirac algebra, periodic grids, spinor fields and matrix potentials in 2D.

Natural units throughout: hbar = c = 1, mass m > 0 in energy units.
"""

from __future__ import annotations

import numpy as np

# Concrete 2D representation: beta = diag(1,-1), alpha_1, alpha_2 off-diagonal.
BETA = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
ALPHA1 = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
ALPHA2 = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
ID2 = np.eye(2, dtype=complex)

# Constant matrices used by the resolvent expansion and the sandwich operators.
M11 = np.array([[1.0, 0.0], [0.0, 0.0]], dtype=complex)
M22 = np.array([[0.0, 0.0], [0.0, 1.0]], dtype=complex)
# Componentwise projectors (a,b) -> (a,0) and (0,b); same matrices, used as
# pointwise multipliers rather than constant integral kernels.
I1 = M11
I2 = M22

_ALPHAS = (BETA, ALPHA1, ALPHA2)


class GridError(ValueError):
    pass


def anticommutation_defect() -> float:
    """Max deviation of a_j a_k + a_k a_j from 2 delta_jk over all 9 index pairs."""
    worst = 0.0
    for j, aj in enumerate(_ALPHAS):
        for k, ak in enumerate(_ALPHAS):
            target = 2.0 * ID2 if j == k else np.zeros((2, 2))
            worst = max(worst, np.abs(aj @ ak + ak @ aj - target).max())
    return worst


def dirac_multiplier(xi1, xi2, mass):
    """Hermitian symbol alpha.xi + m beta of the free operator, shape (..., 2, 2)."""
    xi1 = np.asarray(xi1, dtype=float)
    xi2 = np.asarray(xi2, dtype=float)
    out = np.zeros(np.broadcast(xi1, xi2).shape + (2, 2), dtype=complex)
    out[..., 0, 0] = mass
    out[..., 1, 1] = -mass
    out[..., 0, 1] = xi1 - 1.0j * xi2
    out[..., 1, 0] = xi1 + 1.0j * xi2
    return out


def multiplier_eigenvalues(xi1, xi2, mass):
    """Exact symbol eigenvalues +/- sqrt(|xi|^2 + m^2)."""
    lam = np.sqrt(np.asarray(xi1) ** 2 + np.asarray(xi2) ** 2 + mass**2)
    return -lam, lam


def factorization_identity_check(lam: float, xi, mass: float) -> float:
    """Residual of (symbol - lam)(symbol + lam) = (|xi|^2 + m^2 - lam^2) Id at one frequency."""
    a = dirac_multiplier(xi[0], xi[1], mass)
    lhs = (a - lam * ID2) @ (a + lam * ID2)
    rhs = (xi[0] ** 2 + xi[1] ** 2 + mass**2 - lam**2) * ID2
    return float(np.abs(lhs - rhs).max())


class Grid2D:
    """Periodic square grid on [-L/2, L/2)^2 with its exact FFT dual frequencies.

    n must be even (powers of two are fastest); spacing h = L/n. Domain
    truncation is controlled by the caller: choose L >= 4 * T_max + data
    support for an evolution up to time T_max (group speeds are below 1).
    """

    def __init__(self, n: int, extent: float):
        if n < 4 or n % 2 != 0:
            raise GridError(f"n must be an even integer >= 4, got {n}")
        if extent <= 0:
            raise GridError(f"extent must be positive, got {extent}")
        self.n = int(n)
        self.extent = float(extent)
        self.h = self.extent / self.n
        self.xs = (np.arange(self.n) - self.n // 2) * self.h
        self.k = 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.h)
        self.X, self.Y = np.meshgrid(self.xs, self.xs, indexing="ij")
        self.KX, self.KY = np.meshgrid(self.k, self.k, indexing="ij")
        self.KABS = np.hypot(self.KX, self.KY)

    @property
    def nyquist(self) -> float:
        """Largest resolved |frequency| per axis, pi/h."""
        return np.pi / self.h

    @property
    def radius(self):
        return np.hypot(self.X, self.Y)

    def same_as(self, other: "Grid2D") -> bool:
        return self.n == other.n and self.extent == other.extent

    def __repr__(self):
        return f"Grid2D(n={self.n}, extent={self.extent})"


class SpinorField:
    """C^2-valued field sampled on a Grid2D, stored as two complex planes (2, n, n)."""

    def __init__(self, grid: Grid2D, values: np.ndarray):
        values = np.asarray(values, dtype=complex)
        if values.shape != (2, grid.n, grid.n):
            raise ValueError(f"expected shape (2, {grid.n}, {grid.n}), got {values.shape}")
        self.grid = grid
        self.values = values

    @classmethod
    def zero(cls, grid: Grid2D) -> "SpinorField":
        return cls(grid, np.zeros((2, grid.n, grid.n), dtype=complex))

    @classmethod
    def plane_wave(cls, grid: Grid2D, mode, spinor=(1.0, 0.0)) -> "SpinorField":
        """e^{i x.xi} spinor with xi = (2 pi / L) * mode on the dual lattice (exactly periodic)."""
        xi1 = 2.0 * np.pi * mode[0] / grid.extent
        xi2 = 2.0 * np.pi * mode[1] / grid.extent
        phase = np.exp(1.0j * (xi1 * grid.X + xi2 * grid.Y))
        vals = np.stack([spinor[0] * phase, spinor[1] * phase])
        return cls(grid, vals)

    @classmethod
    def gaussian(cls, grid: Grid2D, width: float, center=(0.0, 0.0), spinor=(1.0, 0.0)) -> "SpinorField":
        env = np.exp(-((grid.X - center[0]) ** 2 + (grid.Y - center[1]) ** 2) / width**2)
        vals = np.stack([spinor[0] * env, spinor[1] * env]).astype(complex)
        return cls(grid, vals)

    @classmethod
    def random(cls, grid: Grid2D, rng) -> "SpinorField":
        vals = rng.normal(size=(2, grid.n, grid.n)) + 1.0j * rng.normal(size=(2, grid.n, grid.n))
        return cls(grid, vals)

    def copy(self) -> "SpinorField":
        return SpinorField(self.grid, self.values.copy())

    def fourier(self) -> np.ndarray:
        return np.fft.fft2(self.values, axes=(-2, -1))

    def l2_norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2)) * self.grid.h)

    def fourier_l2_norm(self) -> float:
        """Same L2 norm computed on the Fourier side (Parseval)."""
        fh = self.fourier()
        return float(np.sqrt(np.sum(np.abs(fh) ** 2)) * self.grid.h / self.grid.n)

    def sup_norm(self) -> float:
        return float(np.max(np.hypot(np.abs(self.values[0]), np.abs(self.values[1]))))

    def l1_norm(self) -> float:
        return float(np.sum(np.abs(self.values)) * self.grid.h**2)

    def inner(self, other: "SpinorField") -> complex:
        """L2 pairing <self, other> = integral other^dagger self."""
        return complex(np.sum(np.conj(other.values) * self.values) * self.grid.h**2)

    def __add__(self, other):
        return SpinorField(self.grid, self.values + other.values)

    def __sub__(self, other):
        return SpinorField(self.grid, self.values - other.values)

    def __mul__(self, scalar):
        return SpinorField(self.grid, self.values * scalar)

    __rmul__ = __mul__


def dirac_apply(f: SpinorField, mass: float) -> SpinorField:
    """Apply the free operator -i alpha.grad + m beta via its Fourier multiplier."""
    g = f.grid
    fh = f.fourier()
    out0 = mass * fh[0] + (g.KX - 1.0j * g.KY) * fh[1]
    out1 = (g.KX + 1.0j * g.KY) * fh[0] - mass * fh[1]
    out = np.fft.ifft2(np.stack([out0, out1]), axes=(-2, -1))
    return SpinorField(g, out)


def klein_gordon_apply(f: SpinorField, mass: float) -> SpinorField:
    """Apply (-Laplacian + m^2), the square of the free Dirac operator."""
    g = f.grid
    mult = g.KABS**2 + mass**2
    out = np.fft.ifft2(mult[None] * f.fourier(), axes=(-2, -1))
    return SpinorField(g, out)


class PotentialError(ValueError):
    pass


class MatrixPotential:
    """Pointwise 2x2 Hermitian potential on a grid with declared decay |V_ij| <= C <x>^-gamma."""

    HERMITICITY_TOL = 1e-14

    def __init__(self, grid: Grid2D, values: np.ndarray, decay_rate: float, decay_constant: float | None = None):
        values = np.asarray(values, dtype=complex)
        if values.shape != (grid.n, grid.n, 2, 2):
            raise PotentialError(f"expected shape ({grid.n}, {grid.n}, 2, 2), got {values.shape}")
        defect = np.abs(values - np.conj(np.swapaxes(values, -1, -2))).max()
        if defect > self.HERMITICITY_TOL:
            raise PotentialError(f"potential not Hermitian: entrywise defect {defect:.3e}")
        self.grid = grid
        self.values = values
        self.decay_rate = float(decay_rate)
        weight = (1.0 + grid.X**2 + grid.Y**2) ** (self.decay_rate / 2.0)
        envelope = np.abs(values).max(axis=(-1, -2)) * weight
        inferred = float(envelope.max())
        if decay_constant is None:
            decay_constant = inferred
        elif inferred > decay_constant * (1.0 + 1e-12):
            raise PotentialError(
                f"declared decay bound violated: need C >= {inferred:.6g}, declared {decay_constant:.6g}"
            )
        self.decay_constant = float(decay_constant)

    def hermiticity_defect(self) -> float:
        return float(np.abs(self.values - np.conj(np.swapaxes(self.values, -1, -2))).max())

    def is_zero(self) -> bool:
        return not np.any(self.values)

    def scaled(self, s: float) -> "MatrixPotential":
        return MatrixPotential(self.grid, s * self.values, self.decay_rate, abs(s) * self.decay_constant)

    def sup_entry(self) -> float:
        return float(np.abs(self.values).max())
