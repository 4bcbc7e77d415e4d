import math

import numpy as np
import pytest

from ctpsim.core import DivergenceError, make_grid
from ctpsim.kernels import (RETARDED, DeSitterParams, KernelMatrix,
                            build_hadamard, build_retarded, memory_kernel)
from ctpsim.langevin import (PotentialSpec, Trajectory, aggregate_paths,
                             ensemble_run, estimate_spectrum,
                             integrate_memory, integrate_overdamped_mode,
                             integrate_white, relaxation_rate)
from ctpsim.squeeze import SqueezeParams

from oracles import collocation_memory_oracle

UNIT = SqueezeParams()


def white_realization(grid, seed, sigma2=1.0):
    rng = np.random.default_rng(seed)
    return math.sqrt(sigma2 / grid.dt) * rng.standard_normal(grid.n_points)


def zero(grid):
    return np.zeros(grid.n_points)


class TestPotentialSpec:
    def test_force_shapes(self):
        quad = PotentialSpec.quadratic(2.0)
        assert quad.vprime(1.5) == 4.0 * 1.5
        inv = PotentialSpec.inverted(2.0)
        assert inv.vprime(1.5) == -4.0 * 1.5
        dw = PotentialSpec.double_well(-1.0, 0.6)
        assert math.isclose(dw.vprime(2.0), -2.0 + 0.1 * 8.0, rel_tol=1e-15)

    def test_double_well_needs_positive_coupling(self):
        with pytest.raises(ValueError, match="positive"):
            PotentialSpec.double_well(-1.0, 0.0)

    def test_double_well_minimum(self):
        dw = PotentialSpec.double_well(-1.0, 0.6)
        x_min = math.sqrt(10.0)
        assert abs(dw.vprime(x_min)) < 1e-14


class TestIntegrateWhite:
    def test_harmonic_tracking_first_order(self):
        # 10 periods; error against cos t shrinks linearly in dt
        t_end = 20.0 * math.pi
        errs = []
        for n in (62_833, 125_665):
            grid = make_grid(0.0, t_end, n)
            traj = integrate_white(PotentialSpec.quadratic(1.0), 0.0, grid,
                                   zero(grid), 1.0, 0.0)
            errs.append(np.max(np.abs(traj.x - np.cos(grid.times()))))
        assert errs[0] < 0.2
        assert 1.7 < errs[0] / errs[1] < 2.3

    def test_harmonic_energy_drift_bounded(self):
        grid = make_grid(0.0, 20.0 * math.pi, 62_833)
        traj = integrate_white(PotentialSpec.quadratic(1.0), 0.0, grid,
                               zero(grid), 1.0, 0.0)
        energy = 0.5 * traj.xdot**2 + 0.5 * traj.x**2
        assert np.max(np.abs(energy - energy[0])) < 0.01 * energy[0]

    def test_inverted_tracks_cosh(self):
        errs = []
        for n in (2001, 4001):
            grid = make_grid(0.0, 2.0, n)
            traj = integrate_white(PotentialSpec.inverted(1.0), 0.0, grid,
                                   zero(grid), 1.0, 0.0)
            errs.append(np.max(np.abs(traj.x - np.cosh(grid.times()))))
        assert errs[0] < 0.05
        assert 1.7 < errs[0] / errs[1] < 2.3

    def test_linear_superposition(self):
        grid = make_grid(0.0, 5.0, 501)
        pot = PotentialSpec.quadratic(1.0)
        xi1 = white_realization(grid, 1)
        xi2 = white_realization(grid, 2)
        t1 = integrate_white(pot, 0.3, grid, xi1, 1.0, 0.0)
        t2 = integrate_white(pot, 0.3, grid, xi2, 0.0, 1.0)
        a, b = 0.6, -1.7
        combo = integrate_white(pot, 0.3, grid, a * xi1 + b * xi2, a, b)
        assert np.max(np.abs(combo.x - (a * t1.x + b * t2.x))) < 1e-10

    @pytest.mark.parametrize("pot", [PotentialSpec.quadratic(1.2),
                                     PotentialSpec.inverted(0.7),
                                     PotentialSpec.double_well(-1.0, 0.6)])
    def test_parity_is_exact(self, pot):
        grid = make_grid(0.0, 3.0, 301)
        xi = white_realization(grid, 3)
        plus = integrate_white(pot, 0.4, grid, xi, 0.8, -0.2)
        minus = integrate_white(pot, 0.4, grid, -xi, -0.8, 0.2)
        assert np.array_equal(minus.x, -plus.x)
        assert np.array_equal(minus.xdot, -plus.xdot)

    def test_grid_mismatch_rejected(self):
        grid = make_grid(0.0, 1.0, 11)
        with pytest.raises(ValueError, match="match the grid"):
            integrate_white(PotentialSpec.quadratic(1.0), 0.0, grid,
                            np.zeros(10), 0.0, 0.0)

    def test_divergence_guard(self):
        grid = make_grid(0.0, 40.0, 401)
        with pytest.raises(DivergenceError) as info:
            integrate_white(PotentialSpec.inverted(2.0), 0.0, grid,
                            zero(grid), 1.0, 0.0)
        assert info.value.step is not None


class TestIntegrateMemory:
    def test_free_limit_tracks_cosh(self):
        errs = []
        for n in (2001, 4001):
            grid = make_grid(0.0, 2.0, n)
            kernel = KernelMatrix(grid, np.zeros((n, n)), RETARDED)
            traj = integrate_memory(1.0, kernel, zero(grid), 1.0, 0.0)
            errs.append(np.max(np.abs(traj.x - np.cosh(grid.times()))))
        assert errs[0] < 0.05
        assert 1.7 < errs[0] / errs[1] < 2.3

    def test_unstable_fixed_point_preserved(self):
        grid = make_grid(0.0, 2.0, 101)
        kernel = KernelMatrix(grid, np.zeros((101, 101)), RETARDED)
        traj = integrate_memory(1.0, kernel, zero(grid), 0.0, 0.0)
        assert np.array_equal(traj.x, np.zeros(101))

    def test_zero_kernel_matches_white_integrator_bitwise(self):
        # shared stepping scheme: the two equations differ only in noise sign
        grid = make_grid(0.0, 2.0, 201)
        kernel = KernelMatrix(grid, np.zeros((201, 201)), RETARDED)
        xi = white_realization(grid, 17)
        mem = integrate_memory(1.3, kernel, xi, 0.5, -0.25)
        white = integrate_white(PotentialSpec.inverted(1.3), 0.0, grid, -xi,
                                0.5, -0.25)
        assert np.array_equal(mem.x, white.x)
        assert np.array_equal(mem.xdot, white.xdot)

    def test_dense_collocation_oracle(self):
        grid = make_grid(0.0, 1.0, 32)
        kernel = memory_kernel(1.0, build_retarded(UNIT, grid),
                               build_hadamard(UNIT, grid))
        traj = integrate_memory(1.0, kernel, zero(grid), 1.0, 0.0)
        reference = collocation_memory_oracle(1.0, kernel.values, grid, 1.0, 0.0)
        rel = np.max(np.abs(traj.x - reference)) / np.max(np.abs(reference))
        assert rel < 1e-3

    def test_constant_kernel_against_ode_oracle(self):
        # M(t, t') = c makes the equation local in (x, v, s = int x):
        # xd = v, vd = w^2 x - c s, sd = x; solved independently by scipy
        from scipy.integrate import solve_ivp
        c, omega = 2.0, 1.0

        def rhs(_t, y):
            return [y[1], omega**2 * y[0] - c * y[2], y[0]]

        sol = solve_ivp(rhs, (0.0, 2.0), [1.0, 0.0, 0.0], rtol=1e-11,
                        atol=1e-12, dense_output=True)
        errs = []
        for n in (1001, 2001):
            grid = make_grid(0.0, 2.0, n)
            kernel = KernelMatrix(grid, np.full((n, n), c) * np.tri(n), RETARDED)
            traj = integrate_memory(omega, kernel, zero(grid), 1.0, 0.0)
            errs.append(np.max(np.abs(traj.x - sol.sol(grid.times())[0])))
        assert errs[0] < 0.02
        assert 1.7 < errs[0] / errs[1] < 2.3

    def test_requires_retarded_kernel(self):
        grid = make_grid(0.0, 1.0, 8)
        sym = build_hadamard(UNIT, grid)
        with pytest.raises(ValueError, match="retarded"):
            integrate_memory(1.0, sym, zero(grid), 0.0, 0.0)


class TestOverdampedMode:
    DP = DeSitterParams(hubble=1.0, k=1.0, coupling=6.0, background=1.0)

    def test_relaxation_rate(self):
        assert relaxation_rate(self.DP) == 1.0

    def test_pure_decay_is_exact(self):
        grid = make_grid(0.0, 5.0, 2001)
        traj = integrate_overdamped_mode(self.DP, 1.0, grid, zero(grid), 1.0)
        expected = np.exp(-grid.times())
        assert np.max(np.abs(traj.x - expected)) < 1e-6

    def test_zero_stays_zero(self):
        grid = make_grid(0.0, 5.0, 101)
        traj = integrate_overdamped_mode(self.DP, 1.0, grid, zero(grid), 0.0)
        assert np.array_equal(traj.x, np.zeros(101))

    def test_stationary_variance(self):
        # OU stationary value a s^2 / 2 for drive amplitude s = 1
        grid = make_grid(0.0, 40.0, 4001)
        m = 500
        tail = grid.n_points // 4
        acc = 0.0
        for i in range(m):
            xi = white_realization(grid, 1000 + i)
            traj = integrate_overdamped_mode(self.DP, 1.0, grid, xi, 0.0)
            acc += float(np.mean(traj.x[-tail:] ** 2))
        est = acc / m
        assert abs(est - 0.5) / 0.5 < 0.05

    def test_rejects_nonpositive_rate(self):
        dp = DeSitterParams(hubble=1.0, k=1.0, coupling=0.0, background=1.0)
        grid = make_grid(0.0, 1.0, 11)
        with pytest.raises(ValueError, match="relaxation"):
            integrate_overdamped_mode(dp, 1.0, grid, zero(grid), 1.0)


class TestEnsemble:
    @staticmethod
    def _runner(grid, pot, gamma=0.5, sigma2=1.0, x0=0.0, v0=0.0):
        def run_one(seed):
            xi = white_realization(grid, seed, sigma2)
            return integrate_white(pot, gamma, grid, xi, x0, v0)
        return run_one

    def test_single_realization(self):
        grid = make_grid(0.0, 2.0, 51)
        stats = ensemble_run(self._runner(grid, PotentialSpec.quadratic(1.0)),
                             master_seed=9, n_realizations=1)
        assert np.all(stats.variance == 0.0)
        assert stats.per_run_finals.shape == (1,)

    def test_determinism(self):
        grid = make_grid(0.0, 2.0, 51)
        runner = self._runner(grid, PotentialSpec.quadratic(1.0))
        a = ensemble_run(runner, master_seed=9, n_realizations=16, keep_paths=True)
        b = ensemble_run(runner, master_seed=9, n_realizations=16, keep_paths=True)
        assert np.array_equal(a.paths, b.paths)
        assert np.array_equal(a.mean, b.mean)
        assert np.array_equal(a.final_histogram[0], b.final_histogram[0])

    def test_threaded_matches_serial(self):
        grid = make_grid(0.0, 2.0, 51)
        runner = self._runner(grid, PotentialSpec.quadratic(1.0))
        serial = ensemble_run(runner, master_seed=9, n_realizations=16, keep_paths=True)
        threaded = ensemble_run(runner, master_seed=9, n_realizations=16,
                                keep_paths=True, n_threads=4)
        assert np.array_equal(serial.paths, threaded.paths)

    def test_double_well_ensemble_mean_symmetric(self):
        grid = make_grid(0.0, 10.0, 501)
        m = 200
        stats = ensemble_run(
            self._runner(grid, PotentialSpec.double_well(-1.0, 0.6)),
            master_seed=31, n_realizations=m)
        se = np.sqrt(stats.variance / m)
        z = np.abs(stats.mean[1:]) / np.where(se[1:] > 0, se[1:], np.inf)
        assert np.max(z) < 5.0

    def test_reordering_invariance(self):
        rng = np.random.default_rng(8)
        grid = make_grid(0.0, 1.0, 21)
        paths = rng.standard_normal((40, 21))
        perm = rng.permutation(40)
        a = aggregate_paths(grid, paths)
        b = aggregate_paths(grid, paths[perm])
        assert np.array_equal(a.mean, b.mean)
        assert np.array_equal(a.variance, b.variance)

    def test_divergence_annotated_with_realization(self):
        grid = make_grid(0.0, 40.0, 401)

        def run_one(seed):
            return integrate_white(PotentialSpec.inverted(2.0), 0.0, grid,
                                   zero(grid), 1.0, 0.0)

        with pytest.raises(DivergenceError) as info:
            ensemble_run(run_one, master_seed=1, n_realizations=4)
        assert info.value.realization == 0
        assert "realization 0" in str(info.value)


class TestEstimateSpectrum:
    def test_exact_power_law(self):
        k = np.geomspace(0.1, 10.0, 12)
        est = estimate_spectrum(list(zip(k, k**-3.0)))
        assert abs(est.slope + 3.0) < 1e-10
        assert est.slope_stderr < 1e-10

    def test_flat_input(self):
        k = np.geomspace(0.1, 10.0, 8)
        est = estimate_spectrum(list(zip(k, np.ones(8))))
        assert abs(est.slope) < 1e-12

    def test_k_values_sorted_increasing(self):
        pairs = [(10.0, 1e-3), (0.1, 1e3), (1.0, 1.0), (5.0, 8e-3)]
        est = estimate_spectrum(pairs)
        assert np.all(np.diff(est.k) > 0)

    def test_insufficient_range_rejected(self):
        k = np.geomspace(1.0, 5.0, 8)
        with pytest.raises(ValueError, match="insufficient k range"):
            estimate_spectrum(list(zip(k, k**-3.0)))
        k = np.array([1.0, 2.0, 30.0])
        with pytest.raises(ValueError, match="insufficient k range"):
            estimate_spectrum(list(zip(k, k**-3.0)))


class TestTrajectoryType:
    def test_shape_validation(self):
        grid = make_grid(0.0, 1.0, 5)
        with pytest.raises(ValueError):
            Trajectory(grid, np.zeros(4), np.zeros(5))
