"""Pointwise spectral factorization V = v* U v and Nystrom discretization.

Integral operators are discretized on the effective support of v with the
quadrature weight folded symmetrically: a kernel K becomes the block matrix
[h K(x_i, x_j) h], so matrix products and inner products match operator
composition and L2 pairings. Vectors hold h-scaled samples, interleaved as
index 2*i + component.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .core import Grid2D, MatrixPotential, SpinorField
from .resolvent import ResolventSample, dirac_kernel, g_scalar, kernel_eval

EPS_V_FACTOR = 1e-8


class EmptySupportError(ValueError):
    pass


def log_cell_average(h: float) -> float:
    """Exact mean of log|u| over the h-by-h square centered at the origin."""
    return float(np.log(h) - 0.5 * np.log(2.0) - 1.5 + np.pi / 4.0)


@dataclass
class PotentialFactorization:
    """v = diag(eta) B and U = diag(sign lambda) with V = v* U v, restricted to supp v."""

    grid: Grid2D
    nodes: np.ndarray        # (M, 2) coordinates of effective nodes
    index: np.ndarray        # (M, 2) integer grid indices
    v: np.ndarray            # (M, 2, 2)
    u_sign: np.ndarray       # (M, 2) entries +/- 1
    eps_v: float
    potential: MatrixPotential

    @property
    def node_count(self) -> int:
        return self.nodes.shape[0]

    @property
    def dim(self) -> int:
        return 2 * self.node_count

    def v_adj(self) -> np.ndarray:
        return np.conj(np.swapaxes(self.v, -1, -2))

    def u_matrix(self) -> np.ndarray:
        """Block-diagonal U as a dense (2M, 2M) matrix."""
        out = np.zeros((self.dim, self.dim), dtype=complex)
        idx = np.arange(self.node_count)
        out[2 * idx, 2 * idx] = self.u_sign[:, 0]
        out[2 * idx + 1, 2 * idx + 1] = self.u_sign[:, 1]
        return out

    def reconstruction_defect(self) -> float:
        """Max entrywise |v* U v - V| over the effective nodes."""
        u = np.zeros((self.node_count, 2, 2), dtype=complex)
        u[:, 0, 0] = self.u_sign[:, 0]
        u[:, 1, 1] = self.u_sign[:, 1]
        rebuilt = self.v_adj() @ u @ self.v
        ref = self.potential.values[self.index[:, 0], self.index[:, 1]]
        return float(np.abs(rebuilt - ref).max())

    def first_column_vector(self) -> np.ndarray:
        """Discretized v (1,0)^T = (a, c)^T as a support vector (h-scaled samples)."""
        out = np.empty(self.dim, dtype=complex)
        out[0::2] = self.grid.h * self.v[:, 0, 0]
        out[1::2] = self.grid.h * self.v[:, 1, 0]
        return out

    def potential_hash(self) -> str:
        payload = np.ascontiguousarray(self.potential.values).tobytes()
        meta = f"{self.grid.n}:{self.grid.extent}".encode()
        return hashlib.sha256(meta + payload).hexdigest()[:16]


def factorize(V: MatrixPotential, eps_v_factor: float = EPS_V_FACTOR) -> PotentialFactorization:
    """Pointwise 2x2 eigendecomposition: eta_j = |lambda_j|^{1/2}, U = diag(sign lambda_j).

    Zero eigenvalues get eta = 0 and sign +1. Nodes where every entry of v is
    below eps_v_factor * max|v| are pruned.
    """
    vals = V.values
    w, B = np.linalg.eigh(vals)          # vals = B diag(w) B^H, columns are eigenvectors
    eta = np.sqrt(np.abs(w))
    sgn = np.where(w >= 0, 1.0, -1.0)
    sgn[w == 0] = 1.0
    v_full = eta[..., :, None] * np.conj(np.swapaxes(B, -1, -2))   # diag(eta) B^H-as-B convention
    vmax_per_node = np.abs(v_full).max(axis=(-1, -2))
    vmax = vmax_per_node.max()
    if vmax == 0:
        raise EmptySupportError("zero potential: factorization has empty support")
    eff = vmax_per_node > eps_v_factor * vmax
    if not np.any(eff):
        raise EmptySupportError("effective support empty after pruning")
    ii, jj = np.nonzero(eff)
    nodes = np.stack([V.grid.xs[ii], V.grid.xs[jj]], axis=1)
    return PotentialFactorization(
        grid=V.grid,
        nodes=nodes,
        index=np.stack([ii, jj], axis=1),
        v=v_full[ii, jj],
        u_sign=sgn[ii, jj],
        eps_v=eps_v_factor * vmax,
        potential=V,
    )


@dataclass
class DiscretizedOperator:
    """Dense matrix realization of a sandwiched kernel operator on the support nodes."""

    matrix: np.ndarray
    fact: PotentialFactorization
    label: str
    z: float | None = None
    sign: int | None = None

    def hs_norm(self) -> float:
        return float(np.linalg.norm(self.matrix))

    def hermiticity_defect(self) -> float:
        nrm = np.linalg.norm(self.matrix)
        if nrm == 0:
            return 0.0
        return float(np.linalg.norm(self.matrix - self.matrix.conj().T) / nrm)

    def export(self, path_base: str):
        """Flat binary (complex128, C order) plus a JSON header alongside."""
        mat = np.ascontiguousarray(self.matrix, dtype=complex)
        with open(path_base + ".bin", "wb") as fh:
            fh.write(mat.tobytes())
        header = {
            "label": self.label,
            "shape": list(mat.shape),
            "dtype": "complex128",
            "order": "C",
            "z": self.z,
            "sign": self.sign,
            "grid_n": self.fact.grid.n,
            "grid_extent": self.fact.grid.extent,
            "node_count": self.fact.node_count,
            "potential_hash": self.fact.potential_hash(),
        }
        with open(path_base + ".json", "w") as fh:
            json.dump(header, fh, indent=1)
        return path_base + ".bin", path_base + ".json"


def _sandwich(blocks: np.ndarray, fact: PotentialFactorization) -> np.ndarray:
    """Fold h v(x_i) K_ij v*(x_j) h into a dense (2M, 2M) matrix."""
    h = fact.grid.h
    left = h * fact.v                    # (M, 2, 2)
    right = h * fact.v_adj()
    mixed = np.einsum("iab,ijbc,jcd->iajd", left, blocks, right, optimize=True)
    return np.ascontiguousarray(mixed).reshape(fact.dim, fact.dim)


def _displacements(fact: PotentialFactorization):
    x = fact.nodes[:, 0]
    y = fact.nodes[:, 1]
    return x[:, None] - x[None, :], y[:, None] - y[None, :]


def assemble(kernel, fact: PotentialFactorization, mass: float | None = None, label: str | None = None) -> DiscretizedOperator:
    """Discretize v K v* for a named expansion kernel, a ResolventSample, or a callable K(xi, xj).

    Callables receive the two (M, 2) node arrays and must return (M, M, 2, 2).
    """
    if fact.node_count == 0:
        raise EmptySupportError("no effective nodes")
    dx, dy = _displacements(fact)
    diag_avg = log_cell_average(fact.grid.h)
    if isinstance(kernel, ResolventSample):
        blocks = dirac_kernel(kernel, dx, dy, diagonal_log=diag_avg)
        op = DiscretizedOperator(_sandwich(blocks, fact), fact, label or "dirac_resolvent", z=kernel.z, sign=kernel.sign)
        return op
    if callable(kernel):
        blocks = kernel(fact.nodes, fact.nodes)
        return DiscretizedOperator(_sandwich(blocks, fact), fact, label or "custom")
    if mass is None:
        raise ValueError("mass required for named kernels")
    blocks = kernel_eval(kernel, dx, dy, mass, diagonal_log=diag_avg)
    return DiscretizedOperator(_sandwich(blocks, fact), fact, label or kernel)


def projection_P(fact: PotentialFactorization):
    """Rank-one projection onto v (1,0)^T; returns (p_vector, unit_vector, P_matrix)."""
    p = fact.first_column_vector()
    norm = np.linalg.norm(p)
    if norm == 0:
        raise EmptySupportError("v (1,0)^T vanishes identically; projection undefined")
    phat = p / norm
    return p, phat, np.outer(phat, phat.conj())


def build_T(fact: PotentialFactorization, mass: float) -> DiscretizedOperator:
    """T = U + v mG0 v*, the threshold operator whose kernel encodes the obstructions."""
    op = assemble("mG0", fact, mass, label="T")
    op.matrix = fact.u_matrix() + op.matrix
    return op


@dataclass
class BirmanSchwingerOperator:
    """M^{+/-}(z) = U + v R0(lam) v* together with its threshold decomposition."""

    sample: ResolventSample
    M: DiscretizedOperator
    T: DiscretizedOperator
    p_vector: np.ndarray
    p_unit: np.ndarray
    P: np.ndarray
    g_value: complex          # gbb^{+/-}(z) = 2 m ||(a,c)||^2 g^{+/-}(z)
    M0: np.ndarray            # M - gbb P - T

    @property
    def Q(self) -> np.ndarray:
        return np.eye(self.M.matrix.shape[0]) - self.P


MAX_BUILD_Z = 0.5


def build_M(sample: ResolventSample, fact: PotentialFactorization) -> BirmanSchwingerOperator:
    """Assemble M^{+/-}(z) and expose M = gbb P + T + M0."""
    if sample.z > MAX_BUILD_Z:
        raise ValueError(f"threshold assembly expects z <= {MAX_BUILD_Z}, got {sample.z}")
    Mop = assemble(sample, fact, label="M")
    Mop.matrix = fact.u_matrix() + Mop.matrix
    T = build_T(fact, sample.mass)
    p, phat, P = projection_P(fact)
    ac_norm_sq = float(np.vdot(p, p).real)
    g_val = 2.0 * sample.mass * ac_norm_sq * g_scalar(sample.z, sample.sign)
    M0 = Mop.matrix - g_val * P - T.matrix
    return BirmanSchwingerOperator(sample, Mop, T, p, phat, P, g_val, M0)


@dataclass
class ScalarSymbols:
    """gbb^{+/-}(z) and h^{+/-}(z) = gbb + trace(PTP - PTQD0QTP)."""

    mass: float
    ac_norm_sq: float
    trace_term: complex

    def g_value(self, z: float, sign: int) -> complex:
        return 2.0 * self.mass * self.ac_norm_sq * g_scalar(z, sign)

    def h_value(self, z: float, sign: int) -> complex:
        return self.g_value(z, sign) + self.trace_term

    def branch_jump(self) -> complex:
        """h^+(z) - h^-(z), independent of z."""
        return 2.0 * self.mass * self.ac_norm_sq * 0.5j


def scalar_symbols(fact: PotentialFactorization, mass: float, T: np.ndarray, phat: np.ndarray, QD0Q: np.ndarray) -> ScalarSymbols:
    p = fact.first_column_vector()
    ac_norm_sq = float(np.vdot(p, p).real)
    tp = T @ phat
    trace_term = complex(np.vdot(phat, tp) - np.vdot(tp, QD0Q @ tp))
    return ScalarSymbols(mass, ac_norm_sq, trace_term)


def support_vector_from_field(f: SpinorField, fact: PotentialFactorization) -> np.ndarray:
    """Restrict a full-grid field to the support nodes as an h-scaled vector."""
    ii, jj = fact.index[:, 0], fact.index[:, 1]
    out = np.empty(fact.dim, dtype=complex)
    out[0::2] = fact.grid.h * f.values[0, ii, jj]
    out[1::2] = fact.grid.h * f.values[1, ii, jj]
    return out


def function_samples(vec: np.ndarray, fact: PotentialFactorization) -> np.ndarray:
    """Support vector -> (M, 2) function samples (divide out the h scaling)."""
    return np.stack([vec[0::2], vec[1::2]], axis=1) / fact.grid.h
