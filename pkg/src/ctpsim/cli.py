"""Command-line front end: config ingestion, dispatch and bit-stable exports.

One JSON document configures every subcommand; each subcommand reads its own
section plus the shared reproducibility keys (master_seed, n_realizations,
threads).  The schema is strict: unknown keys and duplicate keys are fatal,
so a misspelled physical parameter can never fall back to a default silently.
All outputs are written atomically (temp file + rename) and every run leaves
a manifest sufficient to reproduce it bit-exactly.

Exit codes: 0 success, 1 config error, 2 numerical failure, 3 verification
suite failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .core import NumericalError, TimeGrid, derive_seed, make_grid
from .kernels import (DeSitterParams, KernelMatrix, build_contour_matrix,
                      build_hadamard, build_retarded, fluctuation_kernel,
                      keldysh_rotate, memory_kernel)
from .langevin import PotentialSpec, ensemble_run, integrate_white
from .noise import hs_moment_check, sample_colored, sample_white
from .scenarios import BECConfig, SSBConfig, run_bec, run_inflation, run_ssb
from .squeeze import (SqueezeParams, bogolubov_coefficients, mode_two_point,
                      particle_number, quadrature_variances)

SUBCOMMANDS = ("squeeze", "kernels", "noise", "langevin", "ssb", "bec",
               "inflation", "verify")


class ConfigError(ValueError):
    """Configuration file missing, malformed, or violating the schema."""


# ---------------------------------------------------------------------------
# schema

_POSITIVE = (lambda v: v > 0, "must be positive")
_NONNEG = (lambda v: v >= 0, "must be >= 0")
_NEGATIVE = (lambda v: v < 0, "must be negative")
_GE1 = (lambda v: v >= 1, "must be >= 1")
_GE2 = (lambda v: v >= 2, "must be >= 2")
_FRACTION = (lambda v: 0 < v < 1, "must be strictly between 0 and 1")


def _choice(*options):
    return (lambda v: v in options, "must be one of " + ", ".join(map(repr, options)))


def _grid_keys(t_end: float, n_points: int) -> dict:
    return {
        "t_start": (float, 0.0, None),
        "t_end": (float, t_end, None),
        "n_points": (int, n_points, _GE2),
    }


_SQUEEZE_MODE_KEYS = {
    "mass": (float, 1.0, _POSITIVE),
    "omega": (float, 1.0, _POSITIVE),
    "phi": (float, -math.pi / 4.0, None),
    "hbar": (float, 1.0, _POSITIVE),
}

_SECTION_SCHEMAS: dict[str, dict] = {
    "squeeze": {**_SQUEEZE_MODE_KEYS, **_grid_keys(2.0, 201)},
    "kernels": {
        "kind": (str, "retarded", _choice("retarded", "hadamard", "fluctuation", "memory")),
        "coupling": (float, 0.5, _NONNEG),
        **_SQUEEZE_MODE_KEYS,
        **_grid_keys(1.0, 64),
    },
    "noise": {
        "kind": (str, "white", _choice("white", "hadamard", "fluctuation")),
        "sigma2": (float, 1.0, _POSITIVE),
        "coupling": (float, 0.5, _NONNEG),
        "clip_tol": (float, 1e-10, _POSITIVE),
        **_SQUEEZE_MODE_KEYS,
        **_grid_keys(1.0, 33),
    },
    "langevin": {
        "potential": (str, "quadratic", _choice("quadratic", "inverted", "double_well")),
        "omega0": (float, 1.0, _POSITIVE),
        "omega": (float, 1.0, _POSITIVE),
        "m2": (float, -1.0, None),
        "lambda": (float, 0.6, _POSITIVE),
        "gamma": (float, 0.5, _NONNEG),
        "sigma2": (float, 1.0, _POSITIVE),
        "x0": (float, 0.0, None),
        "v0": (float, 0.0, None),
        **_grid_keys(200.0, 20001),
    },
    "ssb": {
        "m2": (float, -1.0, _NEGATIVE),
        "lambda": (float, 0.6, _POSITIVE),
        "noise_kernel": (str, "hadamard", _choice("hadamard", "fluctuation")),
        "coupling": (float, 0.5, _NONNEG),
        "noise_amplitude": (float, 0.3, _NONNEG),
        "friction": (float, 1.0, _NONNEG),
        "gate": (bool, True, None),
        "gate_threshold": (float, None, _POSITIVE),
        "mass": (float, 1.0, _POSITIVE),
        "hbar": (float, 1.0, _POSITIVE),
        "clip_tol": (float, 1e-10, _POSITIVE),
        "return_radius": (float, 0.1, _POSITIVE),
        **_grid_keys(30.0, 1501),
    },
    "inflation": {
        "hubble": (float, 1.0, _POSITIVE),
        "lambda": (float, 6.0, _POSITIVE),
        "phi0": (float, 1.0, _POSITIVE),
        "k_min": (float, 0.5, _POSITIVE),
        "decades": (float, 1.5, _POSITIVE),
        "n_modes": (int, 10, _GE2),
        "tail_fraction": (float, 0.5, _FRACTION),
        **_grid_keys(30.0, 3001),
    },
    "verify": {
        "hs_realizations": (int, 20000, _GE1),
    },
}
_SECTION_SCHEMAS["bec"] = dict(_SECTION_SCHEMAS["ssb"])

_TOP_SCHEMA = {
    "master_seed": (int, 0, (lambda v: 0 <= v < 2**64, "must fit in an unsigned 64-bit integer")),
    "n_realizations": (int, 100, _GE1),
    "threads": (int, 1, _GE1),
}


def _coerce(where: str, key: str, want, value):
    if want is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}{key} must be a boolean")
        return value
    if want is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}{key} must be an integer")
        return value
    if want is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}{key} must be a number")
        return float(value)
    if want is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}{key} must be a string")
        return value
    raise AssertionError(f"unhandled schema type {want}")  # pragma: no cover


def _validate_mapping(where: str, data: dict, schema: dict) -> dict:
    out = {}
    for key, value in data.items():
        if key not in schema:
            raise ConfigError(f"unknown key {where}{key!r}")
        want, _default, constraint = schema[key]
        value = _coerce(where, key, want, value)
        if constraint is not None and not constraint[0](value):
            raise ConfigError(f"{where}{key} {constraint[1]}")
        out[key] = value
    for key, (want, default, _constraint) in schema.items():
        out.setdefault(key, default)
    return out


def _no_duplicates(pairs):
    seen = {}
    for key, value in pairs:
        if key in seen:
            raise ConfigError(f"duplicate key {key!r}")
        seen[key] = value
    return seen


def load_config(path: str | os.PathLike | None, section: str) -> dict:
    """Parse and validate the config document for one subcommand.

    Returns the fully-populated configuration: top-level reproducibility keys
    plus the requested section with every default applied.  Any key outside
    the schema is fatal.
    """
    if section not in _SECTION_SCHEMAS:
        raise ConfigError(f"unknown section {section!r}")
    if path is None:
        raw: dict = {}
    else:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        try:
            raw = json.loads(p.read_text(), object_pairs_hook=_no_duplicates)
        except json.JSONDecodeError as err:
            raise ConfigError(
                f"config parse error in {p} at line {err.lineno}, column {err.colno}: {err.msg}"
            ) from err
        if not isinstance(raw, dict):
            raise ConfigError("config document must be a JSON object")

    top_raw = {}
    sections_raw = {}
    for key, value in raw.items():
        if key in _TOP_SCHEMA:
            top_raw[key] = value
        elif key in _SECTION_SCHEMAS:
            if not isinstance(value, dict):
                raise ConfigError(f"section {key!r} must be an object")
            sections_raw[key] = value
        else:
            raise ConfigError(f"unknown key {key!r}")

    cfg = _validate_mapping("", top_raw, _TOP_SCHEMA)
    cfg[section] = _validate_mapping(f"{section}.", sections_raw.get(section, {}),
                                     _SECTION_SCHEMAS[section])
    return cfg


def _grid_from(sec: dict) -> TimeGrid:
    try:
        return make_grid(sec["t_start"], sec["t_end"], sec["n_points"])
    except ValueError as err:
        raise ConfigError(f"invalid grid: {err}") from err


# ---------------------------------------------------------------------------
# bit-stable output helpers

def _fmt(value) -> str:
    if isinstance(value, (bool, int, np.integer)):
        return str(int(value))
    return repr(float(value))


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    tmp.write_text(text)
    os.replace(tmp, path)


def _write_csv(path: Path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    _atomic_write(path, "\n".join(lines) + "\n")


def _write_json(path: Path, obj) -> None:
    _atomic_write(path, json.dumps(obj, indent=2) + "\n")


def _write_matrix(path: Path, kernel: KernelMatrix) -> None:
    # header row: n and dt, then n rows of n values
    lines = [f"{kernel.n} {kernel.grid.dt!r}"]
    lines.extend(" ".join(repr(float(v)) for v in row) for row in kernel.values)
    _atomic_write(path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# subcommand implementations (each returns a list of files written)

def _squeeze_mode_params(sec: dict) -> SqueezeParams:
    return SqueezeParams(mass=sec["mass"], omega=sec["omega"], phi=sec["phi"],
                         hbar=sec["hbar"])


def _cmd_squeeze(cfg: dict, out: Path) -> list[str]:
    sec = cfg["squeeze"]
    grid = _grid_from(sec)
    params = _squeeze_mode_params(sec)
    rows = []
    for t in grid.times():
        var_s, var_a = quadrature_variances(params, float(t))
        rows.append((t, particle_number(params, float(t)), var_s, var_a))
    _write_csv(out / "squeeze.csv", ["t", "particle_number", "var_squeezed",
                                     "var_antisqueezed"], rows)
    return ["squeeze.csv"]


def _build_kernel(sec: dict, grid: TimeGrid) -> KernelMatrix:
    params = _squeeze_mode_params(sec)
    kind = sec["kind"]
    if kind == "retarded":
        return build_retarded(params, grid)
    if kind == "hadamard":
        return build_hadamard(params, grid)
    if kind == "fluctuation":
        return fluctuation_kernel(sec["coupling"], build_hadamard(params, grid))
    return memory_kernel(sec["coupling"], build_retarded(params, grid),
                         build_hadamard(params, grid))


def _cmd_kernels(cfg: dict, out: Path) -> list[str]:
    sec = cfg["kernels"]
    grid = _grid_from(sec)
    kernel = _build_kernel(sec, grid)
    _write_matrix(out / "kernel.txt", kernel)
    return ["kernel.txt"]


def _cmd_noise(cfg: dict, out: Path) -> list[str]:
    sec = cfg["noise"]
    grid = _grid_from(sec)
    m = cfg["n_realizations"]
    seed = cfg["master_seed"]
    if sec["kind"] == "white":
        ens = sample_white(sec["sigma2"], grid, seed, m)
    else:
        kernel_sec = dict(sec, kind=sec["kind"])
        kernel = _build_kernel(kernel_sec, grid)
        ens = sample_colored(kernel, seed, m, sec["clip_tol"])
    _write_csv(out / "noise.csv",
               [f"xi_{i}" for i in range(grid.n_points)], ens.realizations)
    summary = {
        "n_realizations": m,
        "n_points": grid.n_points,
        "dt": grid.dt,
        "seed": seed,
        "covariance_ref": ens.covariance_ref,
        "max_abs_mean": float(np.max(np.abs(ens.realizations.mean(axis=0)))),
        "mean_sample_variance": float(ens.realizations.var(axis=0).mean()),
    }
    _write_json(out / "summary.json", summary)
    return ["noise.csv", "summary.json"]


def _langevin_potential(sec: dict) -> PotentialSpec:
    kind = sec["potential"]
    if kind == "quadratic":
        return PotentialSpec.quadratic(sec["omega0"])
    if kind == "inverted":
        return PotentialSpec.inverted(sec["omega"])
    if sec["m2"] >= 0:
        raise ConfigError("langevin.m2 must be negative for the double_well potential")
    return PotentialSpec.double_well(sec["m2"], sec["lambda"])


def _cmd_langevin(cfg: dict, out: Path) -> list[str]:
    sec = cfg["langevin"]
    grid = _grid_from(sec)
    pot = _langevin_potential(sec)
    std = math.sqrt(sec["sigma2"] / grid.dt)
    n = grid.n_points

    def run_one(seed: int):
        xi = std * np.random.default_rng(seed).standard_normal(n)
        return integrate_white(pot, sec["gamma"], grid, xi, sec["x0"], sec["v0"])

    stats = ensemble_run(run_one, cfg["master_seed"], cfg["n_realizations"],
                         n_threads=cfg["threads"])
    _write_csv(out / "ensemble.csv", ["t", "mean", "variance"],
               zip(grid.times(), stats.mean, stats.variance))
    traj0 = run_one(derive_seed(cfg["master_seed"], 0))
    _write_csv(out / "trajectory0.csv", ["t", "x", "xdot"],
               zip(grid.times(), traj0.x, traj0.xdot))
    tail = slice((grid.n_points * 3) // 4, None)
    summary = {
        "potential": sec["potential"],
        "gamma": sec["gamma"],
        "sigma2": sec["sigma2"],
        "tail_mean_x_sq": float(np.mean(stats.variance[tail] + stats.mean[tail] ** 2)),
    }
    _write_json(out / "summary.json", summary)
    return ["ensemble.csv", "trajectory0.csv", "summary.json"]


def _scenario_config(cls, cfg: dict, section: str):
    sec = cfg[section]
    grid = _grid_from(sec)
    try:
        return cls(m2=sec["m2"], lam=sec["lambda"], grid=grid,
                   n_realizations=cfg["n_realizations"],
                   master_seed=cfg["master_seed"],
                   noise_kernel=sec["noise_kernel"], coupling=sec["coupling"],
                   noise_amplitude=sec["noise_amplitude"],
                   friction=sec["friction"], gate=sec["gate"],
                   gate_threshold=sec["gate_threshold"],
                   mass=sec["mass"], hbar=sec["hbar"],
                   clip_tol=sec["clip_tol"], return_radius=sec["return_radius"])
    except ValueError as err:
        raise ConfigError(f"{section}: {err}") from err


def _cmd_ssb(cfg: dict, out: Path) -> list[str]:
    report = run_ssb(_scenario_config(SSBConfig, cfg, "ssb"))
    _write_json(out / "report.json", report.to_dict())
    grid = report.config.grid
    _write_csv(out / "mean_trajectory.csv", ["t", "mean", "variance"],
               zip(grid.times(), report.stats.mean, report.stats.variance))
    _write_csv(out / "finals.csv", ["x_final"],
               ((v,) for v in report.stats.per_run_finals))
    return ["report.json", "mean_trajectory.csv", "finals.csv"]


def _cmd_bec(cfg: dict, out: Path) -> list[str]:
    report = run_bec(_scenario_config(BECConfig, cfg, "bec"))
    _write_json(out / "report.json", report.to_dict())
    _write_csv(out / "finals.csv", ["modulus", "phase"],
               zip(report.final_modulus, report.final_phase))
    return ["report.json", "finals.csv"]


def _cmd_inflation(cfg: dict, out: Path) -> list[str]:
    sec = cfg["inflation"]
    grid = _grid_from(sec)
    n_modes = sec["n_modes"]
    ks = [sec["k_min"] * 10.0 ** (sec["decades"] * j / (n_modes - 1))
          for j in range(n_modes)]
    modes = [DeSitterParams(hubble=sec["hubble"], k=k, coupling=sec["lambda"],
                            background=sec["phi0"]) for k in ks]
    est = run_inflation(modes, grid, cfg["n_realizations"], cfg["master_seed"],
                        sec["tail_fraction"])
    _write_csv(out / "spectrum.csv", ["k", "variance"], zip(est.k, est.variances))
    report = {
        "scenario": "inflation",
        "master_seed": cfg["master_seed"],
        "n_realizations": cfg["n_realizations"],
        "n_modes": n_modes,
        "decades": sec["decades"],
        "slope": est.slope,
        "slope_stderr": est.slope_stderr,
        "intercept": est.intercept,
    }
    _write_json(out / "report.json", report)
    return ["spectrum.csv", "report.json"]


def _verify_checks(cfg: dict) -> list[dict]:
    checks = []

    # Bogolubov normalization over a (wt, phi) grid
    worst = 0.0
    for wt in np.linspace(0.0, 3.0, 10):
        for phi in np.linspace(-math.pi, math.pi, 10):
            params = SqueezeParams(omega=1.0, phi=float(phi))
            worst = max(worst, abs(
                bogolubov_coefficients(params, float(wt)).normalization_defect))
    checks.append({"name": "bogolubov_normalization", "value": worst,
                   "bound": 1e-12, "passed": bool(worst < 1e-12)})

    # Keldysh rotation zero block, stable and inverted oscillators
    grid = make_grid(0.0, 1.0, 16)
    stable = build_contour_matrix(lambda t, tp: 0.5 * np.exp(-1j * (t - tp)), grid)
    params = SqueezeParams()
    inverted = build_contour_matrix(mode_two_point(params), grid)
    worst_res = 0.0
    worst_transpose = 0.0
    worst_cross = 0.0
    for cm in (stable, inverted):
        g_r, g_a, g_c, residual = keldysh_rotate(cm)
        worst_res = max(worst_res, residual)
        worst_transpose = max(worst_transpose,
                              float(np.max(np.abs(g_a.values - g_r.values.T))))
    g_r, _g_a, g_c, _ = keldysh_rotate(inverted)
    worst_cross = max(
        float(np.max(np.abs(g_r.values - build_retarded(params, grid).values))),
        float(np.max(np.abs(g_c.values - build_hadamard(params, grid).values))))
    checks.append({"name": "keldysh_zero_block", "value": worst_res,
                   "bound": 1e-12, "passed": bool(worst_res < 1e-12)})
    checks.append({"name": "keldysh_advanced_transpose", "value": worst_transpose,
                   "bound": 0.0, "passed": bool(worst_transpose == 0.0)})
    checks.append({"name": "keldysh_kernel_cross_check", "value": worst_cross,
                   "bound": 1e-10, "passed": bool(worst_cross < 1e-10)})

    # Hubbard-Stratonovich moment identity on the hadamard kernel
    m_hs = cfg["verify"]["hs_realizations"]
    grid_hs = make_grid(0.0, 1.0, 8)
    kernel = build_hadamard(SqueezeParams(), grid_hs)
    v = np.linspace(0.2, -0.3, 8)
    v *= 1.0 / math.sqrt(float(v @ kernel.values @ v))
    mc, analytic = hs_moment_check(kernel, v, m_hs,
                                   derive_seed(cfg["master_seed"], 97))
    err = abs(mc - analytic)
    bound = 5.0 / math.sqrt(m_hs)
    checks.append({"name": "hs_moment_identity", "value": err,
                   "bound": bound, "passed": bool(err < bound)})
    return checks


def _cmd_verify(cfg: dict, out: Path) -> list[str]:
    checks = _verify_checks(cfg)
    for check in checks:
        status = "PASS" if check["passed"] else "FAIL"
        print(f"{status} {check['name']}: value {check['value']:.3e}, "
              f"bound {check['bound']:.3e}")
    _write_json(out / "verify.json", {"checks": checks,
                                      "passed": all(c["passed"] for c in checks)})
    return ["verify.json"]


_COMMANDS = {
    "squeeze": _cmd_squeeze,
    "kernels": _cmd_kernels,
    "noise": _cmd_noise,
    "langevin": _cmd_langevin,
    "ssb": _cmd_ssb,
    "bec": _cmd_bec,
    "inflation": _cmd_inflation,
    "verify": _cmd_verify,
}


# ---------------------------------------------------------------------------
# argument parsing and dispatch

class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage on stderr, exit code 1
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ctpsim",
                     description="quantum-to-classical transient simulations")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=f"run the {name} pipeline")
        p.add_argument("--config", default=None, help="path to the JSON config")
        p.add_argument("--out", default="ctpsim_out", help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="override master_seed")
        p.add_argument("--realizations", type=int, default=None,
                       help="override n_realizations")
        p.add_argument("--threads", type=int, default=None,
                       help="override ensemble concurrency degree")
    return parser


def _dispatch(args: argparse.Namespace) -> int:
    name = args.subcommand
    if args.config is None and name != "verify":
        raise ConfigError(f"subcommand {name!r} requires --config <path>")
    cfg = load_config(args.config, name)
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must fit in an unsigned 64-bit integer")
        cfg["master_seed"] = args.seed
    if args.realizations is not None:
        if args.realizations < 1:
            raise ConfigError("--realizations must be >= 1")
        cfg["n_realizations"] = args.realizations
    if args.threads is not None:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        cfg["threads"] = args.threads

    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as err:
        raise ConfigError(f"cannot create output directory {out}: {err}") from err

    started = time.perf_counter()
    outputs = _COMMANDS[name](cfg, out)
    failed_verify = False
    if name == "verify":
        report = json.loads((out / "verify.json").read_text())
        failed_verify = not report["passed"]
    manifest = {
        "command": name,
        "artifact_version": __version__,
        "master_seed": cfg["master_seed"],
        "n_realizations": cfg["n_realizations"],
        "threads": cfg["threads"],
        "config": {name: cfg[name]},
        "outputs": outputs,
        "wall_time_s": time.perf_counter() - started,
    }
    _write_json(out / "manifest.json", manifest)
    return 3 if failed_verify else 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        return _dispatch(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 1
    except ValueError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 1
    except NumericalError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return 2


def entry() -> None:  # console-script hook
    sys.exit(main())


if __name__ == "__main__":  # pragma: no cover
    entry()
