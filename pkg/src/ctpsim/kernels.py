"""Discretized closed-time-path Green-function algebra.

Builds the contour propagator matrix from a two-point function, performs the
rotation into (retarded, advanced, symmetric) components, and assembles the
fluctuation and memory kernels that drive the classical dynamics.  All kernels
are dense real matrices on a uniform time grid; the only complex bookkeeping
lives in :class:`ContourMatrix`.

Convention: the retarded kernel is stored as the *real* response function
(the explicit i of the commutator is absorbed), because the equation of
motion and the noise weights it feeds are manifestly real.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import TimeGrid
from .squeeze import SqueezeParams

RETARDED = "retarded"
ADVANCED = "advanced"
SYMMETRIC = "symmetric"
_KINDS = (RETARDED, ADVANCED, SYMMETRIC)

#: relative tolerance for structural (symmetry) validation
_STRUCT_RTOL = 1e-12


@dataclass(frozen=True)
class KernelMatrix:
    """Dense two-time kernel K(t_i, t_j) on a grid, tagged by causal structure.

    retarded kernels vanish strictly above the diagonal, advanced ones below,
    symmetric ones equal their transpose.  values are frozen read-only so a
    kernel can be shared across parallel ensemble workers.
    """

    grid: TimeGrid
    values: np.ndarray
    kind: str

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        vals = np.array(self.values, dtype=float, copy=True)
        n = self.grid.n_points
        if vals.shape != (n, n):
            raise ValueError(f"kernel values must be ({n}, {n}), got {vals.shape}")
        if self.kind == RETARDED:
            if np.any(vals[np.triu_indices(n, k=1)] != 0.0):
                raise ValueError("retarded kernel must vanish above the diagonal")
        elif self.kind == ADVANCED:
            if np.any(vals[np.tril_indices(n, k=-1)] != 0.0):
                raise ValueError("advanced kernel must vanish below the diagonal")
        else:
            scale = max(1.0, float(np.max(np.abs(vals))) if vals.size else 1.0)
            if np.max(np.abs(vals - vals.T)) > _STRUCT_RTOL * scale:
                raise ValueError("symmetric kernel deviates from its transpose")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def n(self) -> int:
        return self.grid.n_points

    def describe(self) -> str:
        """Short stable descriptor of the kernel, for reproducibility records."""
        digest = hashlib.sha1(self.values.tobytes()).hexdigest()[:12]
        return f"{self.kind}[n={self.n},dt={self.grid.dt!r},sha1={digest}]"


@dataclass(frozen=True)
class ContourMatrix:
    """The four contour-ordered blocks of the propagator matrix.

    g_plus[i, j] = <x(t_j) x(t_i)>, g_minus[i, j] = <x(t_i) x(t_j)>, g_f and
    g_fbar are the time- and anti-time-ordered combinations.  The blocks obey
    g_f + g_fbar = g_plus + g_minus identically (ordering identity).
    """

    grid: TimeGrid
    g_f: np.ndarray
    g_plus: np.ndarray
    g_minus: np.ndarray
    g_fbar: np.ndarray

    def __post_init__(self):
        n = self.grid.n_points
        for name in ("g_f", "g_plus", "g_minus", "g_fbar"):
            block = np.array(getattr(self, name), dtype=complex, copy=True)
            if block.shape != (n, n):
                raise ValueError(f"{name} must be ({n}, {n}), got {block.shape}")
            block.setflags(write=False)
            object.__setattr__(self, name, block)
        scale = max(1.0, float(np.max(np.abs(self.g_plus))))
        ident = self.g_f + self.g_fbar - self.g_plus - self.g_minus
        if np.max(np.abs(ident)) > 1e-10 * scale:
            raise ValueError("ordering identity g_f + g_fbar = g_plus + g_minus violated")
        if np.max(np.abs(self.g_plus - self.g_minus.T)) > 1e-10 * scale:
            raise ValueError("g_plus and g_minus are not transposes of each other")


@dataclass(frozen=True)
class DeSitterParams:
    """Hubble rate, comoving wavenumber and coupling of one inflationary mode."""

    hubble: float
    k: float
    coupling: float
    background: float  # field amplitude phi_0

    def __post_init__(self):
        if self.hubble <= 0:
            raise ValueError("hubble rate must be positive")
        if self.k <= 0:
            raise ValueError("wavenumber k must be positive")
        if self.coupling < 0:
            raise ValueError("coupling must be >= 0")


def _lower_mask(n: int) -> np.ndarray:
    return np.tril(np.ones((n, n), dtype=bool))


def build_retarded(params: SqueezeParams, grid: TimeGrid) -> KernelMatrix:
    """Retarded response of the unstable mode: (hbar/m w) sinh(w (t - t')) for t >= t'.

    Vanishing diagonal, strictly lower-triangular support; linear in t - t'
    for small separations (milder IR behavior than the symmetric kernel).
    """
    t = grid.times()
    pref = params.hbar / (params.mass * params.omega)
    diff = params.omega * (t[:, None] - t[None, :])
    vals = np.where(_lower_mask(grid.n_points), pref * np.sinh(diff), 0.0)
    return KernelMatrix(grid, vals, RETARDED)


def build_hadamard(params: SqueezeParams, grid: TimeGrid) -> KernelMatrix:
    """Symmetric (anticommutator) kernel of the squeezed mode.

    (hbar/m w)(cosh(w(t+t')) - cos(2 phi) sinh(w(t+t'))).  By the addition
    identities this is a sum of two outer products, hence positive
    semidefinite with numerical rank <= 2 on any grid.
    """
    t = grid.times()
    pref = params.hbar / (params.mass * params.omega)
    s = params.omega * (t[:, None] + t[None, :])
    vals = pref * (np.cosh(s) - math.cos(2.0 * params.phi) * np.sinh(s))
    return KernelMatrix(grid, vals, SYMMETRIC)


def build_contour_matrix(mode_two_point: Callable, grid: TimeGrid) -> ContourMatrix:
    """Assemble the contour blocks from a two-point function <x(t) x(t')>.

    The callable may be scalar or vectorized; it is evaluated on the full
    (t_i, t_j) product grid.  Time ordering places the later argument left,
    anti-time ordering the earlier one.
    """
    t = grid.times()
    f = np.vectorize(mode_two_point, otypes=[complex])
    ti, tj = np.meshgrid(t, t, indexing="ij")
    f_ij = f(ti, tj)       # <x(t_i) x(t_j)>
    f_ji = f_ij.T          # <x(t_j) x(t_i)>, same evaluations transposed
    later_i = ti >= tj
    g_minus = f_ij
    g_plus = f_ji
    g_f = np.where(later_i, f_ij, f_ji)
    g_fbar = np.where(later_i, f_ji, f_ij)
    return ContourMatrix(grid, g_f=g_f, g_plus=g_plus, g_minus=g_minus, g_fbar=g_fbar)


def keldysh_rotate(cm: ContourMatrix) -> tuple[KernelMatrix, KernelMatrix, KernelMatrix, float]:
    """Rotate contour blocks into (G_R, G_A, G_C) plus the vanishing-block residual.

    G_R[i, j] = theta(t_i - t_j) * (coefficient of i in the commutator
    expectation), G_A is its exact transpose, G_C the anticommutator.  The
    residual is the max-norm of the rotated block that must cancel by the
    ordering identity; it is an exact algebraic zero for any valid input.
    """
    n = cm.grid.n_points
    comm = cm.g_plus - cm.g_minus          # 2i Im <x(t_j) x(t_i)>
    retarded_vals = np.where(_lower_mask(n), comm.imag, 0.0)
    g_r = KernelMatrix(cm.grid, retarded_vals, RETARDED)
    g_a = KernelMatrix(cm.grid, retarded_vals.T, ADVANCED)
    g_c = KernelMatrix(cm.grid, (cm.g_plus + cm.g_minus).real, SYMMETRIC)
    zero_block = 0.25 * (cm.g_f + cm.g_fbar - cm.g_plus - cm.g_minus)
    residual = float(np.max(np.abs(zero_block)))
    return g_r, g_a, g_c, residual


def elementwise_power(kernel: KernelMatrix, p: int) -> KernelMatrix:
    """Entrywise p-th power of a symmetric kernel (Hadamard product power).

    These powers arise from propagator products at coincident time pairs in
    loop terms, not from operator composition; symmetry and (by the Schur
    product theorem) positive semidefiniteness survive.
    """
    if kernel.kind != SYMMETRIC:
        raise ValueError("elementwise power requires a symmetric kernel")
    if int(p) != p or p < 1:
        raise ValueError("power must be an integer >= 1")
    return KernelMatrix(kernel.grid, kernel.values ** int(p), SYMMETRIC)


def fluctuation_kernel(coupling: float, g_c: KernelMatrix) -> KernelMatrix:
    """Combined noise kernel lambda^2 (G_C + G_C^2 + G_C^3), powers entrywise.

    All loop orders interfere, so there is a single random field with this
    one covariance rather than separate noises per term.
    """
    if g_c.kind != SYMMETRIC:
        raise ValueError("fluctuation kernel requires a symmetric input")
    v = g_c.values
    vals = coupling**2 * (v + v**2 + v**3)
    return KernelMatrix(g_c.grid, vals, SYMMETRIC)


def memory_kernel(coupling: float, g_r: KernelMatrix, g_c: KernelMatrix) -> KernelMatrix:
    """Retarded memory kernel 2 G_R(t,t') (1 + lambda^2 G_C(t,t')^2).

    Entrywise composition; the retarded support of G_R carries over since the
    correction factor only multiplies it.
    """
    if g_r.kind != RETARDED:
        raise ValueError("memory kernel requires a retarded G_R")
    if g_c.kind != SYMMETRIC:
        raise ValueError("memory kernel requires a symmetric G_C")
    if g_r.grid != g_c.grid:
        raise ValueError("G_R and G_C live on different grids")
    vals = 2.0 * g_r.values * (1.0 + coupling**2 * g_c.values**2)
    return KernelMatrix(g_r.grid, vals, RETARDED)


def desitter_hadamard(dp: DeSitterParams, eta: float, eta_prime: float) -> float:
    """Fluctuation kernel of one de Sitter mode at conformal times (eta, eta').

    (H^2/k^3) ((1 + k^2 eta eta') cos(k eta) + k eta sin(k eta)), implemented
    exactly as printed (eta enters the trig arguments, eta' only the product).
    The superhorizon limit eta, eta' -> 0^- is H^2/k^3.
    """
    k = dp.k
    x = k * eta
    return (dp.hubble**2 / k**3) * ((1.0 + k * k * eta * eta_prime) * math.cos(x)
                                    + x * math.sin(x))


def psd_project(kernel: KernelMatrix, tol: float) -> tuple[KernelMatrix, int]:
    """Clip eigenvalues below tol * lambda_max to zero; returns the clip count.

    A PSD input passes through unchanged with zero clips.  This is the
    prerequisite for factorizing a Gaussian weight over a kernel that is
    singular (the rank-2 hadamard kernel) or carries small negative rounding
    noise.
    """
    if kernel.kind != SYMMETRIC:
        raise ValueError("psd projection requires a symmetric kernel")
    w, vecs = np.linalg.eigh(kernel.values)
    w_max = float(w[-1])
    cutoff = tol * max(w_max, 0.0)
    below = w < cutoff
    n_clipped = int(np.count_nonzero(below))
    if n_clipped == 0:
        return kernel, 0
    w_clipped = np.where(below, 0.0, w)
    rebuilt = (vecs * w_clipped) @ vecs.T
    rebuilt = 0.5 * (rebuilt + rebuilt.T)
    return KernelMatrix(kernel.grid, rebuilt, SYMMETRIC), n_clipped
