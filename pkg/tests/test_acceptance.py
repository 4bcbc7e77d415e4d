"""Acceptance gate: every criterion at its stated tolerance, one line each.

Run with `pytest tests/test_acceptance.py -v -s` to see the PASS lines and
per-criterion wall times.
"""

import json
import math
import time

import numpy as np

from ctpsim.core import derive_seed, make_grid
from ctpsim.kernels import (SYMMETRIC, DeSitterParams, KernelMatrix,
                            build_contour_matrix, build_hadamard,
                            build_retarded, desitter_hadamard,
                            fluctuation_kernel, keldysh_rotate, memory_kernel)
from ctpsim.langevin import (PotentialSpec, integrate_memory,
                             integrate_white, relaxation_rate)
from ctpsim.noise import hs_moment_check, sample_colored
from ctpsim.scenarios import (BECConfig, KUIPER_CRIT_1PCT, SSBConfig,
                              run_bec, run_inflation, run_ssb)
from ctpsim.squeeze import (SqueezeParams, bogolubov_coefficients,
                            mode_two_point, particle_number,
                            quadrature_variances)

from oracles import (collocation_memory_oracle, rotated_variance_oracle,
                     stationary_moments_oracle)

UNIT = SqueezeParams()


def _passed(num: int, detail: str, started: float) -> None:
    print(f"PASS criterion {num}: {detail} [{time.perf_counter() - started:.1f}s]")


def test_criterion_01_squeezing_scaling():
    started = time.perf_counter()
    params = SqueezeParams(mass=2.0, omega=1.3, hbar=0.7)
    worst = 0.0
    for wt in (0.5, 1.0, 2.0):
        t = wt / params.omega
        v_s, v_a = quadrature_variances(params, t)
        o_s, o_a = rotated_variance_oracle(params, t)
        rel = abs((v_a / v_s) / (o_a / o_s) - 1.0)
        worst = max(worst, rel)
        assert rel < 1e-8
        assert math.isclose(v_a / v_s, math.exp(4.0 * wt), rel_tol=1e-8)
    _passed(1, f"variance ratio tracks exp(4wt), max rel dev {worst:.2e}", started)


def test_criterion_02_particle_number():
    started = time.perf_counter()
    params = SqueezeParams(omega=1.3)
    for t in np.linspace(0.0, 3.0 / params.omega, 100):
        n = particle_number(params, float(t))
        direct = math.sinh(params.omega * float(t)) ** 2
        assert abs(n - direct) <= 1e-12 * max(1.0, direct)
        v = bogolubov_coefficients(params, float(t)).v
        assert abs(n - abs(v) ** 2) <= 1e-12 * max(1.0, n)
    _passed(2, "N(t) = sinh^2(wt) on a 100-point grid with |v|^2 cross-check",
            started)


def test_criterion_03_ctp_structure():
    started = time.perf_counter()

    def stable(t, tp):
        return 0.5 * np.exp(-1j * (t - tp))

    worst = 0.0
    for n in (16, 64):
        grid = make_grid(0.0, 1.0, n)
        for source in (stable, mode_two_point(UNIT)):
            g_r, g_a, _, residual = keldysh_rotate(build_contour_matrix(source, grid))
            worst = max(worst, residual)
            assert residual < 1e-12
            assert np.array_equal(g_a.values, g_r.values.T)
    _passed(3, f"Keldysh zero block < 1e-12 (worst {worst:.2e}), G_A = G_R^T",
            started)


def test_criterion_04_noise_factorization():
    started = time.perf_counter()
    m = 100_000
    bound = 5.0 / math.sqrt(m)
    grid = make_grid(0.0, 1.0, 16)
    hadamard = build_hadamard(UNIT, grid)
    cases = {
        "identity": KernelMatrix(grid, np.eye(16), SYMMETRIC),
        "hadamard": hadamard,
        "fluctuation": fluctuation_kernel(0.5, hadamard),
    }
    worst = 0.0
    for idx, (name, kernel) in enumerate(cases.items()):
        if name == "identity":
            v = np.zeros(16)
            v[0] = 1.0
        else:
            v = np.linspace(0.3, -0.4, 16)
            v /= math.sqrt(float(v @ kernel.values @ v))
        mc, analytic = hs_moment_check(kernel, v, m, seed=derive_seed(2024, idx))
        err = abs(mc - analytic)
        worst = max(worst, err)
        assert err < bound, f"{name}: {err} >= {bound}"
    _passed(4, f"E[exp(i xi.v)] matches exp(-v K v / 2) within 5/sqrt(M) "
               f"(worst {worst:.2e})", started)


def test_criterion_05_colored_covariance():
    started = time.perf_counter()
    m = 20_000
    grid = make_grid(0.0, 1.0, 16)
    kernel = build_hadamard(UNIT, grid)
    ens = sample_colored(kernel, seed=77, n_realizations=m)
    k = kernel.values
    sample_cov = ens.realizations.T @ ens.realizations / m
    se = np.sqrt((np.outer(np.diag(k), np.diag(k)) + k**2) / m)
    worst_z = float(np.max(np.abs(sample_cov - k) / se))
    assert worst_z < 5.0
    w, vecs = np.linalg.eigh(k)
    basis = vecs[:, -2:]
    resid = ens.realizations - ens.realizations @ basis @ basis.T
    worst_resid = float(np.max(np.linalg.norm(resid, axis=1)
                               / np.linalg.norm(ens.realizations, axis=1)))
    assert worst_resid < 1e-8
    _passed(5, f"entrywise covariance within 5 SE (worst z {worst_z:.2f}), "
               f"rank-2 residual {worst_resid:.1e}", started)


def test_criterion_06_fluctuation_dissipation():
    started = time.perf_counter()
    omega0, gamma, sigma2 = 1.0, 0.5, 1.0
    t_end, m = 200.0, 200
    grid = make_grid(0.0, t_end, 20_001)
    pot = PotentialSpec.quadratic(omega0)
    burn = int(20.0 / grid.dt)
    std = math.sqrt(sigma2 / grid.dt)
    acc_x2 = 0.0
    acc_v2 = 0.0
    for i in range(m):
        rng = np.random.default_rng(derive_seed(606, i))
        xi = std * rng.standard_normal(grid.n_points)
        traj = integrate_white(pot, gamma, grid, xi, 0.0, 0.0)
        acc_x2 += float(np.mean(traj.x[burn:] ** 2))
        acc_v2 += float(np.mean(traj.xdot[burn:] ** 2))
    est_x2 = acc_x2 / m
    est_v2 = acc_v2 / m
    target_x2, target_v2 = stationary_moments_oracle(omega0, gamma, sigma2)
    dev_x = abs(est_x2 - target_x2) / target_x2
    dev_v = abs(est_v2 - target_v2) / target_v2
    assert dev_x < 0.03
    assert dev_v < 0.03
    _passed(6, f"<x^2> dev {dev_x:.3f}, <v^2> dev {dev_v:.3f} vs Lyapunov oracle "
               f"({target_x2:.3f}, {target_v2:.3f})", started)


def test_criterion_07_memory_integrator():
    started = time.perf_counter()
    grid = make_grid(0.0, 1.0, 32)
    kernel = memory_kernel(1.0, build_retarded(UNIT, grid),
                           build_hadamard(UNIT, grid))
    traj = integrate_memory(1.0, kernel, np.zeros(32), 1.0, 0.0)
    reference = collocation_memory_oracle(1.0, kernel.values, grid, 1.0, 0.0)
    rel = float(np.max(np.abs(traj.x - reference)) / np.max(np.abs(reference)))
    assert rel < 1e-3

    errs = []
    for n in (2001, 4001):
        g = make_grid(0.0, 2.0, n)
        zero_kernel = KernelMatrix(g, np.zeros((n, n)), "retarded")
        free = integrate_memory(1.0, zero_kernel, np.zeros(n), 1.0, 0.0)
        errs.append(float(np.max(np.abs(free.x - np.cosh(g.times())))))
    ratio = errs[0] / errs[1]
    assert errs[0] < 0.05
    assert 1.7 < ratio < 2.3
    _passed(7, f"collocation dev {rel:.1e}, cosh err {errs[0]:.3f}, "
               f"dt-halving ratio {ratio:.2f}", started)


def _acceptance_ssb_config():
    return SSBConfig(m2=-1.0, lam=0.6, grid=make_grid(0.0, 30.0, 1501),
                     n_realizations=400, master_seed=808)


def test_criterion_08_ssb():
    started = time.perf_counter()
    rep = run_ssb(_acceptance_ssb_config())
    target = math.sqrt(10.0)
    assert abs(rep.fraction_plus - 0.5) <= 0.075
    assert rep.fraction_unsettled == 0.0
    assert abs(rep.mean_abs_final - target) / target < 0.05
    assert rep.mean_max_z < 5.0
    assert rep.recursion < 0.05
    _passed(8, f"basin fraction {rep.fraction_plus:.3f}, |x_f| "
               f"{rep.mean_abs_final:.3f} vs {target:.3f}, recursion "
               f"{rep.recursion:.3f}, mean z {rep.mean_max_z:.2f}", started)


def test_criterion_09_bec():
    started = time.perf_counter()
    cfg = BECConfig(m2=-1.0, lam=0.6, grid=make_grid(0.0, 30.0, 1501),
                    n_realizations=500, master_seed=909)
    rep = run_bec(cfg)
    target = cfg.minimum_radius
    assert rep.kuiper_scaled < KUIPER_CRIT_1PCT
    assert abs(rep.mean_modulus - target) / target < 0.05
    assert rep.odlro_fraction >= 0.9
    _passed(9, f"Kuiper {rep.kuiper_scaled:.3f} < {KUIPER_CRIT_1PCT}, modulus "
               f"{rep.mean_modulus:.3f} vs {target:.3f}, ODLRO band "
               f"{rep.odlro_fraction:.2f}", started)


def test_criterion_10_inflation_spectrum():
    started = time.perf_counter()
    ks = 0.5 * 10.0 ** (1.5 * np.arange(10) / 9.0)
    modes = [DeSitterParams(hubble=1.0, k=float(k), coupling=6.0,
                            background=1.0) for k in ks]
    for dp in modes:
        limit = desitter_hadamard(dp, 0.0, 0.0)
        assert abs(limit - dp.hubble**2 / dp.k**3) <= 1e-12 * limit
    grid = make_grid(0.0, 30.0, 3001)
    est = run_inflation(modes, grid, n_realizations=100, master_seed=1010)
    assert abs(est.slope + 3.0) < 0.1
    _passed(10, f"fitted slope {est.slope:.3f} (+/- {est.slope_stderr:.3f}), "
                f"superhorizon limit exact", started)


def test_criterion_11_reproducibility():
    started = time.perf_counter()
    cfg = SSBConfig(m2=-1.0, lam=0.6, grid=make_grid(0.0, 30.0, 1201),
                    n_realizations=50, master_seed=111)
    rep_a = run_ssb(cfg)
    rep_b = run_ssb(cfg)
    assert json.dumps(rep_a.to_dict()).encode() == json.dumps(rep_b.to_dict()).encode()
    assert np.array_equal(rep_a.stats.per_run_finals, rep_b.stats.per_run_finals)
    assert np.array_equal(rep_a.stats.mean, rep_b.stats.mean)
    kernel = build_hadamard(UNIT, make_grid(0.0, 1.0, 16))
    ens_a = sample_colored(kernel, seed=5, n_realizations=100)
    ens_b = sample_colored(kernel, seed=5, n_realizations=100)
    assert ens_a.realizations.tobytes() == ens_b.realizations.tobytes()
    _passed(11, "re-runs with one master_seed are byte-identical", started)
