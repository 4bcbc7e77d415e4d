"""Gaussian noise on a time grid: white, and colored with prescribed covariance.

The colored sampler factorizes a (projected) positive-semidefinite kernel by
symmetric eigendecomposition, which stays robust on the rank-deficient
kernels this library produces; plain triangular factorization would fail
there.  :func:`hs_moment_check` is the operational statement of the noise
factorization: averaging exp(i xi . v) over the ensemble must reproduce
exp(-v^T K v / 2).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import NumericalError, TimeGrid, derive_seed
from .kernels import SYMMETRIC, KernelMatrix

DEFAULT_CLIP_TOL = 1e-10


@dataclass(frozen=True)
class NoiseEnsemble:
    """Seeded realizations of a Gaussian process; rows are realizations.

    Regeneration from (seed, covariance_ref, grid) is bit-exact: realization i
    is drawn from its own generator seeded with derive_seed(seed, i), so the
    ensemble is independent of worker scheduling.
    """

    grid: TimeGrid
    realizations: np.ndarray
    seed: int
    covariance_ref: str

    def __post_init__(self):
        arr = np.array(self.realizations, dtype=float, copy=True)
        if arr.ndim != 2 or arr.shape[1] != self.grid.n_points:
            raise ValueError(
                f"realizations must be (M, {self.grid.n_points}), got {arr.shape}"
            )
        arr.setflags(write=False)
        object.__setattr__(self, "realizations", arr)

    @property
    def n_realizations(self) -> int:
        return self.realizations.shape[0]


def sample_white(sigma2: float, grid: TimeGrid, seed: int, n_realizations: int) -> NoiseEnsemble:
    """Delta-correlated noise: i.i.d. Gaussians with per-sample variance sigma2/dt.

    The 1/dt restores <xi(t) xi(t')> = sigma2 delta(t - t') under trapezoidal
    quadrature on the grid.
    """
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    if n_realizations < 1:
        raise ValueError("n_realizations must be >= 1")
    n = grid.n_points
    std = np.sqrt(sigma2 / grid.dt)
    rows = np.empty((n_realizations, n))
    for i in range(n_realizations):
        rng = np.random.default_rng(derive_seed(seed, i))
        rows[i] = std * rng.standard_normal(n)
    return NoiseEnsemble(grid, rows, seed, covariance_ref=f"white[sigma2={sigma2!r}]")


def _factor(kernel: KernelMatrix, clip_tol: float) -> np.ndarray:
    """Factor L with L L^T = kernel after clipping, shape (n, rank)."""
    if kernel.kind != SYMMETRIC:
        raise ValueError("colored sampling requires a symmetric kernel")
    w, vecs = np.linalg.eigh(kernel.values)
    w_max = max(float(w[-1]), 0.0)
    if float(w[0]) < -clip_tol * w_max:
        raise NumericalError(
            f"kernel has negative eigenvalue {w[0]:.3e} beyond clip tolerance "
            f"{clip_tol:.1e} * lambda_max ({w_max:.3e})"
        )
    keep = w > clip_tol * w_max
    return vecs[:, keep] * np.sqrt(w[keep])


def sample_colored(kernel: KernelMatrix, seed: int, n_realizations: int,
                   clip_tol: float = DEFAULT_CLIP_TOL) -> NoiseEnsemble:
    """Gaussian process with covariance equal to the given symmetric kernel.

    Realization i is L z_i with z_i standard normal in the kept eigenspace;
    the ensemble covariance converges to the kernel at the 1/sqrt(M) rate.
    Indefiniteness beyond clip_tol is an error, not a silent repair.
    """
    if n_realizations < 1:
        raise ValueError("n_realizations must be >= 1")
    factor = _factor(kernel, clip_tol)
    rank = factor.shape[1]
    rows = np.empty((n_realizations, kernel.n))
    for i in range(n_realizations):
        rng = np.random.default_rng(derive_seed(seed, i))
        rows[i] = factor @ rng.standard_normal(rank)
    return NoiseEnsemble(kernel.grid, rows, seed, covariance_ref=kernel.describe())


def hs_moment_check(kernel: KernelMatrix, v: np.ndarray, n_realizations: int,
                    seed: int, clip_tol: float = DEFAULT_CLIP_TOL) -> tuple[complex, float]:
    """Monte Carlo characteristic function of the noise against its Gaussian value.

    Returns (mean of exp(i xi . v) over the ensemble, exp(-v^T K v / 2)).
    Agreement within the Monte Carlo tolerance validates that taking the noise
    covariance equal to the fluctuation kernel reproduces the imaginary
    quadratic term the noise was factored out of.
    """
    v = np.asarray(v, dtype=float)
    if v.shape != (kernel.n,):
        raise ValueError(f"v must have shape ({kernel.n},), got {v.shape}")
    ens = sample_colored(kernel, seed, n_realizations, clip_tol)
    mc = complex(np.mean(np.exp(1j * (ens.realizations @ v))))
    analytic = float(np.exp(-0.5 * v @ kernel.values @ v))
    return mc, analytic
