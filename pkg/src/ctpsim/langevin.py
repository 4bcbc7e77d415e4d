"""Trajectory integrators and ensemble statistics.

Three dynamical equations are integrated on fixed uniform grids:

* white-noise Langevin  xdd = -gamma xd - V'(x) + xi(t)
* memory-kernel form    Xdd = w^2 X - int_0^t M(t,s) X(s) ds - xi(t)
* overdamped mode       phid = -a (phi - amp * xi(t)),  a = lambda phi0^2 / (6 H)

The stepping scheme is fixed: semi-implicit Euler with the damping folded in
implicitly, v' = (v + dt f)/(1 + gamma dt), x' = x + dt v'.  It is symplectic
in the frictionless limit and stable for stiff friction.  The overdamped
equation uses an exponential-integrator step that is exact for linear decay.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .core import DivergenceError, TimeGrid, derive_seed
from .kernels import RETARDED, DeSitterParams, KernelMatrix

#: abort a realization once |x| exceeds this many natural units
DIVERGENCE_GUARD = 1e12


@dataclass(frozen=True)
class Trajectory:
    """One integrated path on a grid: positions and velocities."""

    grid: TimeGrid
    x: np.ndarray
    xdot: np.ndarray

    def __post_init__(self):
        n = self.grid.n_points
        for name in ("x", "xdot"):
            arr = np.array(getattr(self, name), dtype=float, copy=True)
            if arr.shape != (n,):
                raise ValueError(f"{name} must have shape ({n},), got {arr.shape}")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


@dataclass(frozen=True)
class PotentialSpec:
    """Force law V'(x) = c1 x + c3 x^3 in one of three named shapes.

    quadratic:  V = w0^2 x^2 / 2          (c1 = w0^2)
    inverted:   V = -w^2 x^2 / 2          (c1 = -w^2)
    double_well: V = m2 x^2 / 2 + lam x^4 / 4!   (c1 = m2, c3 = lam/6, lam > 0)

    vprime is written as x (c1 + c3 x^2) so negating x negates the force
    exactly in floating point.
    """

    kind: str
    c1: float
    c3: float = 0.0

    @classmethod
    def quadratic(cls, omega0: float) -> "PotentialSpec":
        return cls("quadratic", omega0**2, 0.0)

    @classmethod
    def inverted(cls, omega: float) -> "PotentialSpec":
        return cls("inverted", -(omega**2), 0.0)

    @classmethod
    def double_well(cls, m2: float, lam: float) -> "PotentialSpec":
        if lam <= 0:
            raise ValueError("double_well requires a positive quartic coupling")
        return cls("double_well", m2, lam / 6.0)

    def vprime(self, x):
        return x * (self.c1 + self.c3 * x * x)

    def v(self, x):
        x2 = x * x
        return 0.5 * self.c1 * x2 + 0.25 * self.c3 * x2 * x2


@dataclass(frozen=True)
class EnsembleStats:
    """Pointwise ensemble moments plus final-value diagnostics.

    paths (M, n) is retained only on request; it is what trajectory-level
    diagnostics such as the recursion probability need.
    """

    grid: TimeGrid
    mean: np.ndarray
    variance: np.ndarray
    final_histogram: tuple[np.ndarray, np.ndarray]
    per_run_finals: np.ndarray
    paths: np.ndarray | None = None

    @property
    def n_realizations(self) -> int:
        return self.per_run_finals.shape[0]


@dataclass(frozen=True)
class SpectrumEstimate:
    """Per-mode variances and the fitted log-log power-law slope."""

    k: np.ndarray
    variances: np.ndarray
    slope: float
    slope_stderr: float
    intercept: float


def _check_noise(grid: TimeGrid, xi: np.ndarray) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (grid.n_points,):
        raise ValueError(
            f"noise realization must match the grid: expected ({grid.n_points},), "
            f"got {xi.shape}"
        )
    return xi


def integrate_white(pot: PotentialSpec, gamma: float, grid: TimeGrid,
                    xi: np.ndarray, x0: float, v0: float) -> Trajectory:
    """Integrate xdd = -gamma xd - V'(x) + xi with the semi-implicit scheme.

    v_{i+1} = (v_i + dt (-V'(x_i) + xi_i)) / (1 + gamma dt),
    x_{i+1} = x_i + dt v_{i+1}.
    """
    xi = _check_noise(grid, xi)
    n = grid.n_points
    dt = grid.dt
    c1, c3 = pot.c1, pot.c3
    denom = 1.0 + gamma * dt
    drive = xi.tolist()
    xs = [0.0] * n
    vs = [0.0] * n
    x = float(x0)
    v = float(v0)
    xs[0] = x
    vs[0] = v
    for i in range(n - 1):
        f = -(x * (c1 + c3 * x * x)) + drive[i]
        v = (v + dt * f) / denom
        x = x + dt * v
        if not abs(x) <= DIVERGENCE_GUARD:
            raise DivergenceError(
                f"trajectory diverged at step {i + 1} (t = {grid.t_start + (i + 1) * dt:g}):"
                f" |x| exceeded {DIVERGENCE_GUARD:g}", step=i + 1)
        xs[i + 1] = x
        vs[i + 1] = v
    return Trajectory(grid, np.array(xs), np.array(vs))


def integrate_memory(omega: float, mem_kernel: KernelMatrix, xi: np.ndarray,
                     x0: float, v0: float) -> Trajectory:
    """Integrate Xdd = w^2 X - sum_{j<=i} w_j M(t_i,t_j) X(t_j) - xi(t_i).

    The memory sum uses trapezoidal weights over the history prefix; the
    stepping is the same semi-implicit scheme with zero friction, so with a
    vanishing kernel this reproduces the white integrator on the inverted
    potential (with the noise sign flipped, as the equation is written with
    -xi on the right-hand side).
    """
    if mem_kernel.kind != RETARDED:
        raise ValueError("memory kernel must be retarded")
    grid = mem_kernel.grid
    xi = _check_noise(grid, xi)
    n = grid.n_points
    dt = grid.dt
    om2 = omega * omega
    rows = mem_kernel.values
    xs = np.zeros(n)
    vs = np.zeros(n)
    xs[0] = float(x0)
    vs[0] = float(v0)
    for i in range(n - 1):
        if i == 0:
            mem = 0.0
        else:
            seg = rows[i, : i + 1] * xs[: i + 1]
            mem = dt * (seg.sum() - 0.5 * seg[0] - 0.5 * seg[i])
        a = om2 * xs[i] - mem - xi[i]
        vs[i + 1] = vs[i] + dt * a
        x_new = xs[i] + dt * vs[i + 1]
        if not abs(x_new) <= DIVERGENCE_GUARD:
            raise DivergenceError(
                f"memory trajectory diverged at step {i + 1}: |x| exceeded "
                f"{DIVERGENCE_GUARD:g}", step=i + 1)
        xs[i + 1] = x_new
    return Trajectory(grid, xs, vs)


def relaxation_rate(dp: DeSitterParams) -> float:
    """Overdamped relaxation rate a = lambda phi0^2 / (6 H)."""
    return dp.coupling * dp.background**2 / (6.0 * dp.hubble)


def integrate_overdamped_mode(dp: DeSitterParams, noise_amp: float, grid: TimeGrid,
                              xi: np.ndarray, phi_init: float) -> Trajectory:
    """First-order mode equation phid = -a (phi - amp xi) by exponential stepping.

    phi_{i+1} = q phi_i + (1 - q) amp xi_i with q = exp(-a dt): exact for
    linear decay and for piecewise-constant drive.  xdot holds the right-hand
    side evaluated on the grid.
    """
    a = relaxation_rate(dp)
    if a <= 0:
        raise ValueError("non-positive relaxation rate: lambda phi0^2 must be > 0")
    xi = _check_noise(grid, xi)
    n = grid.n_points
    q = np.exp(-a * grid.dt)
    phi = np.empty(n)
    phi[0] = float(phi_init)
    drive = noise_amp * xi
    for i in range(n - 1):
        phi[i + 1] = q * phi[i] + (1.0 - q) * drive[i]
    rhs = -a * (phi - drive)
    return Trajectory(grid, phi, rhs)


def _sorted_reduce_mean(values: np.ndarray) -> np.ndarray:
    # canonical (sorted) summation order: permutation-invariant reductions
    return np.sort(values, axis=0).sum(axis=0) / values.shape[0]


def aggregate_paths(grid: TimeGrid, paths: np.ndarray, keep_paths: bool = False,
                    histogram_bins: int = 32) -> EnsembleStats:
    """Pointwise mean/variance and final-value histogram of an (M, n) path array.

    Reductions run in sorted order so the statistics are invariant under any
    reordering of the realizations.
    """
    paths = np.asarray(paths, dtype=float)
    if paths.ndim != 2 or paths.shape[1] != grid.n_points:
        raise ValueError(f"paths must be (M, {grid.n_points}), got {paths.shape}")
    mean = _sorted_reduce_mean(paths)
    dev = paths - mean
    variance = _sorted_reduce_mean(dev * dev)
    finals = paths[:, -1].copy()
    counts, edges = np.histogram(finals, bins=histogram_bins)
    return EnsembleStats(grid=grid, mean=mean, variance=variance,
                         final_histogram=(counts, edges), per_run_finals=finals,
                         paths=paths.copy() if keep_paths else None)


def ensemble_run(run_one: Callable[[int], Trajectory], master_seed: int,
                 n_realizations: int, keep_paths: bool = False,
                 n_threads: int = 1) -> EnsembleStats:
    """Run M independent trajectories with seeds derive_seed(master, i).

    run_one maps a derived seed to a Trajectory.  Results depend only on
    master_seed, never on scheduling; integrator failures are re-raised with
    the offending realization index attached.
    """
    if n_realizations < 1:
        raise ValueError("n_realizations must be >= 1")

    def run_indexed(i: int) -> Trajectory:
        try:
            return run_one(derive_seed(master_seed, i))
        except DivergenceError as err:
            raise DivergenceError(
                f"realization {i}: {err}", step=err.step, realization=i
            ) from err

    first = run_indexed(0)
    paths = np.empty((n_realizations, first.grid.n_points))
    paths[0] = first.x
    remaining = range(1, n_realizations)
    if n_threads > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            for i, traj in zip(remaining, pool.map(run_indexed, remaining)):
                paths[i] = traj.x
    else:
        for i in remaining:
            paths[i] = run_indexed(i).x
    return aggregate_paths(first.grid, paths, keep_paths=keep_paths)


def estimate_spectrum(per_k_variances: Iterable[tuple[float, float]] | Sequence) -> SpectrumEstimate:
    """Least-squares power-law fit of mode variances against wavenumber.

    Fits log(variance) vs log(k); requires at least 4 distinct k spanning at
    least one decade.  Returns the slope, its standard error and the
    intercept; an exact power law comes back with the exact exponent.
    """
    pairs = np.asarray(list(per_k_variances), dtype=float)
    if pairs.ndim != 2 or pairs.shape[1] != 2:
        raise ValueError("expected a sequence of (k, variance) pairs")
    order = np.argsort(pairs[:, 0])
    k = pairs[order, 0]
    var = pairs[order, 1]
    if np.any(k <= 0) or np.any(var <= 0):
        raise ValueError("k values and variances must be positive")
    if np.unique(k).size < 4:
        raise ValueError("insufficient k range: need >= 4 distinct k values")
    if k[-1] / k[0] < 10.0:
        raise ValueError("insufficient k range: need k_max / k_min >= 10")
    x = np.log(k)
    y = np.log(var)
    design = np.vstack([x, np.ones_like(x)]).T
    coef, _, _, _ = np.linalg.lstsq(design, y, rcond=None)
    slope, intercept = float(coef[0]), float(coef[1])
    resid = y - design @ coef
    m = x.size
    sxx = float(np.sum((x - x.mean()) ** 2))
    stderr = float(np.sqrt(np.sum(resid**2) / (m - 2) / sxx)) if m > 2 else 0.0
    return SpectrumEstimate(k=k, variances=var, slope=slope,
                            slope_stderr=stderr, intercept=intercept)
