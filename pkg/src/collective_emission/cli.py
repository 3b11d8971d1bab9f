"""Command-line front end.

Subcommands
-----------
pattern   emission pattern CSV and summary JSON for one configuration
sweep     one summary row per value of a swept parameter, optional power-law fit
states    Schmidt ranks and MPS bond dimensions of a collective state
rydberg   blockade preparation trajectory
chain     equilibrium positions of an ion Coulomb chain

Exit codes: 0 success, 2 invalid configuration or arguments, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import io
from .config import ConfigError, RunConfig, defaults, load_config
from .emission import (EmissionConfig, f0_lattice, f_box, f_direct, f_thermal,
                       summarize)
from .errors import ConvergenceFailure, InvalidArgument, ResourceLimit
from .fitting import fit_power_law
from .geometry import (FluctuationModel, TrapParams, average_spacing,
                       build_chain, build_lattice, build_ring, coulomb_chain_with_spacing,
                       load_geometry, save_geometry, solve_coulomb_chain)
from .grid import AngularGrid
from .rydberg import RydbergParams, simulate_preparation
from .states import (CollectiveSpec, Term, bond_dimension_bound, build_collective_state,
                     gate_qubits, mps_from_dense, schmidt_report, spin_wave_pair_spec)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


# ---------------------------------------------------------------------------
# building blocks


def build_geometry(cfg: RunConfig):
    """Reference geometry and its nominal spacing (``None`` if irregular)."""
    kind = cfg.get("geometry", "kind")
    if kind == "file":
        geom = load_geometry(cfg.require("geometry", "path"))
        return geom, geom.spacing
    if kind == "lattice":
        dims = cfg.require("geometry", "dims")
        d0 = cfg.require("geometry", "d0")
        return build_lattice(dims, d0), d0
    n = cfg.require("geometry", "n")
    d0 = cfg.require("geometry", "d0")
    if kind == "chain":
        return build_chain(n, d0), d0
    if kind == "ring":
        return build_ring(n, d0), d0
    if kind == "coulomb":
        geom = coulomb_chain_with_spacing(n, d0) if n > 1 else build_chain(1, d0)
        return geom, d0
    # box: n atoms at mean spacing d0 fill a cube of side d0 * n^(1/3)
    side = d0 * n ** (1.0 / 3.0)
    return build_chain(n, side / n), d0


def box_side(cfg: RunConfig):
    if cfg.get("fluctuation", "box") is not None:
        return cfg.get("fluctuation", "box")
    n, d0 = cfg.require("geometry", "n"), cfg.require("geometry", "d0")
    return (d0 * n ** (1.0 / 3.0),) * 3


def build_drive(cfg: RunConfig) -> EmissionConfig:
    lam = cfg.get("drive", "wavelength")
    k = 2 * np.pi / lam
    return EmissionConfig.along(cfg.get("drive", "direction"), lam,
                                k * np.asarray(cfg.get("drive", "k0")),
                                cfg.get("drive", "n_eg"), cfg.get("drive", "gamma"))


def build_grid(cfg: RunConfig) -> AngularGrid:
    axis = cfg.get("grid", "axis") or cfg.get("drive", "direction")
    a = np.asarray(axis, float)
    return AngularGrid.gauss_legendre(cfg.get("grid", "n_theta"), cfg.get("grid", "n_phi"),
                                      tuple(a / np.linalg.norm(a)))


def compute_pattern(cfg: RunConfig, seed: int, jobs: int = 1):
    geom, d0 = build_geometry(cfg)
    drive = build_drive(cfg)
    grid = build_grid(cfg)
    kind = cfg.get("geometry", "kind")
    model = "box" if kind == "box" else cfg.get("fluctuation", "model")
    method = cfg.get("fluctuation", "method")
    regular = kind in ("lattice", "chain")
    n_samples = cfg.get("sampling", "n_samples")

    if model == "fixed":
        if regular:
            pattern = f0_lattice(drive, geom.dims, d0, grid)
        else:
            pattern = f_direct(geom, FluctuationModel.fixed(), drive, grid)
    elif model == "thermal":
        xi = cfg.get("fluctuation", "xi")
        if regular and method == "closed":
            pattern = f_thermal(drive, geom.dims, d0, xi, grid)
        else:
            pattern = f_direct(geom, FluctuationModel.thermal(xi), drive, grid, seed,
                               n_samples, jobs)
    else:
        side = box_side(cfg)
        if method == "closed":
            pattern = f_box(drive, geom.n_atoms, side, grid)
        else:
            pattern = f_direct(geom, FluctuationModel.uniform_box(side), drive, grid, seed,
                               n_samples, jobs)
    return pattern, geom, d0, drive


def pattern_row(cfg: RunConfig, seed: int, jobs: int = 1):
    pattern, geom, d0, drive = compute_pattern(cfg, seed, jobs)
    summary = summarize(pattern, drive)
    rate = pattern.grid.integrate(pattern.f_total) / (4 * np.pi)
    d_over = None if d0 is None else d0 / drive.wavelength
    return pattern, summary, rate, geom, d_over


# ---------------------------------------------------------------------------
# subcommands


def _prefix(cfg, default):
    return cfg.get("output", "prefix") or default


def _wants(fmt, kind):
    return fmt in (kind, "both")


def run_pattern(cfg: RunConfig, out: Path, seed: int, jobs: int, fmt: str):
    pattern, summary, rate, geom, d_over = pattern_row(cfg, seed, jobs)
    prefix = _prefix(cfg, "pattern")
    written = []
    if _wants(fmt, "csv"):
        written.append(io.write_pattern_csv(out / f"{prefix}.csv", pattern))
    if _wants(fmt, "json"):
        info = io.summary_dict(summary, geom.n_atoms, d_over)
        info["gamma_k0_over_gamma"] = rate
        if summary.fwhm_rad is None:
            info["note"] = "no coherent peak: pattern is flat"
        written.append(io.write_json(out / f"{prefix}_summary.json", info))
    width = "none (no peak)" if summary.fwhm_rad is None else f"{summary.fwhm_rad:.6g} rad"
    print(f"error probability  {summary.error_probability:.6g}")
    print(f"cone width (FWHM)  {width}")
    print(f"Gamma_k0 / Gamma   {rate:.6g}")
    return written


def _sweep_config(base: RunConfig, variable: str, value: float) -> RunConfig:
    cfg = base.copy()
    if variable == "N":
        kind = cfg.get("geometry", "kind")
        if kind == "lattice":
            side = int(round(value ** (1.0 / 3.0)))
            if side**3 != int(round(value)):
                raise ConfigError("sweep.values", f"N={value:g} is not a cube for a lattice")
            cfg.set("geometry", "dims", (side, side, side))
        else:
            cfg.set("geometry", "n", int(round(value)))
    elif variable == "d0_over_lambda":
        cfg.set("geometry", "d0", value * cfg.get("drive", "wavelength"))
    elif variable == "xi":
        cfg.set("fluctuation", "xi", (value,) * 3)
    return cfg


def run_sweep(cfg: RunConfig, out: Path, seed: int, jobs: int, fmt: str,
              exclude_smallest=None):
    variable = cfg.require("sweep", "variable")
    values = cfg.require("sweep", "values")
    fit = cfg.get("sweep", "fit")
    if exclude_smallest is None:
        exclude_smallest = cfg.get("sweep", "exclude_smallest")
    if fit == "powerlaw" and len(values) < 3:
        raise ConfigError("sweep.values", f"a power-law fit needs at least 3 values, got {len(values)}")
    values = sorted(values)

    if variable == "U":
        header = ["value", "double_same_species_max", "target_fidelity", "best_time"]

        def one(v):
            c = cfg.copy()
            c.set("rydberg", "u_over_omega_eff", v)
            res = rydberg_result(c)
            return [v, res.double_same_species_max, res.target_fidelity, res.best_time]
        fit_columns = {"double_same_species_max": 1}
    else:
        header = ["value", "error_probability", "fwhm_rad", "gamma_k0_over_gamma"]

        def one(v):
            _, summary, rate, _, _ = pattern_row(_sweep_config(cfg, variable, v), seed)
            return [v, summary.error_probability, summary.fwhm_rad, rate]
        fit_columns = {"error_probability": 1, "fwhm_rad": 2}

    # configs are validated up front so errors surface before any heavy work
    if variable != "U":
        for v in values:
            _sweep_config(cfg, variable, v)
    with ThreadPoolExecutor(max(1, jobs)) as pool:
        rows = list(pool.map(one, values))

    fits = {}
    if fit == "powerlaw":
        for name, col in fit_columns.items():
            ys = [r[col] for r in rows]
            if any(y is None or not y > 0 for y in ys):
                fits[name] = None
                continue
            fits[name] = fit_power_law(values, ys, exclude_smallest).to_dict()

    prefix = _prefix(cfg, "sweep")
    written = []
    if _wants(fmt, "csv"):
        written.append(io.write_rows(out / f"{prefix}.csv", header, rows))
        if fits:
            fit_rows = [[k, f["exponent"], f["exponent_stderr"], f["prefactor"],
                         float(len(f["x_used"]))] for k, f in fits.items() if f]
            written.append(io.write_rows(out / f"{prefix}_fit.csv",
                                         ["quantity", "exponent", "exponent_stderr",
                                          "prefactor", "n_points"], fit_rows))
    if _wants(fmt, "json"):
        written.append(io.write_json(out / f"{prefix}.json", {
            "variable": variable, "columns": header, "rows": rows,
            "fit": fits or None, "exclude_smallest": bool(exclude_smallest)}))
    for r in rows:
        print(",".join(io.fmt(x) for x in r))
    for name, f in fits.items():
        if f:
            print(f"fit {name}: exponent {f['exponent']:.4f} +/- {f['exponent_stderr']:.4f}")
    return written


def state_spec(cfg: RunConfig) -> CollectiveSpec:
    kind = cfg.get("states", "kind")
    k = 2 * np.pi / cfg.get("drive", "wavelength")
    k_a = tuple(k * np.asarray(cfg.get("states", "k_a")))
    k_b = tuple(k * np.asarray(cfg.get("states", "k_b")))
    if kind == "w":
        return CollectiveSpec((Term(1.0, 1, 0, k_a, k_b),))
    if kind == "spin_wave_pair":
        return spin_wave_pair_spec(k_a, k_b, cfg.get("states", "relative_phase"))
    n_a, n_b = cfg.get("states", "n_a"), cfg.get("states", "n_b")
    if n_a < 0 or n_b < 0:
        raise ConfigError("states.n_a", "excitation numbers must be >= 0")
    return CollectiveSpec((Term(1.0, n_a, n_b, k_a, k_b),))


def run_states(cfg: RunConfig, out: Path, seed: int, jobs: int, fmt: str):
    spec = state_spec(cfg)
    geom = build_chain(cfg.get("states", "n"), cfg.get("states", "d0"))
    tol = cfg.get("states", "tolerance")
    state = build_collective_state(spec, geom)
    t = spec.terms[0]
    bound = bond_dimension_bound(spec.M, t.n_a, t.n_b)
    report = schmidt_report(state, tol, bound)
    mps = mps_from_dense(state, tol)
    info = report.to_dict()
    info["raw_norm"] = state.raw_norm
    info["mps_bond_dims"] = mps.bond_dims
    info["gate_qubits"] = gate_qubits(max(report.max_rank, 1))
    prefix = _prefix(cfg, "schmidt")
    written = []
    if _wants(fmt, "json"):
        written.append(io.write_json(out / f"{prefix}.json", info))
    if _wants(fmt, "csv"):
        written.append(io.write_rows(out / f"{prefix}.csv", ["position", "rank"],
                                     [[str(c), str(r)] for c, r in report.cut_ranks]))
    print(f"max Schmidt rank {report.max_rank} (bound {bound})")
    return written


def rydberg_result(cfg: RunConfig):
    r = cfg.sections["rydberg"]
    omega_eff = r["omega1"] * r["omega2"] / r["delta"] if r["delta"] else 0.0
    k = 2 * np.pi / cfg.get("drive", "wavelength")
    params = RydbergParams(r["omega1"], r["omega2"], r["delta"],
                           r["u_over_omega_eff"] * omega_eff,
                           tuple(k * np.asarray(r["k1"])), tuple(k * np.asarray(r["k2"])))
    geom = build_chain(r["n"], r["d0"])
    t_final = r["t_final"] or 2 * np.pi / abs(omega_eff)
    dt = r["dt"] or t_final / 2000
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return simulate_preparation(params, geom, t_final, dt, model=r["model"])


def run_rydberg(cfg: RunConfig, out: Path, seed: int, jobs: int, fmt: str):
    res = rydberg_result(cfg)
    prefix = _prefix(cfg, "rydberg")
    written = []
    if _wants(fmt, "csv"):
        written.append(io.write_preparation_csv(out / f"{prefix}.csv", res))
    if _wants(fmt, "json"):
        written.append(io.write_json(out / f"{prefix}_summary.json", {
            "model": res.meta["model"], "n_atoms": res.meta["n_atoms"],
            "effective_rabi": res.effective_rabi,
            "double_same_species_max": res.double_same_species_max,
            "mixed_pair_max": res.mixed_pair_max,
            "target_fidelity": res.target_fidelity, "best_time": res.best_time,
            "best_phase": res.best_phase}))
    print(f"max double same-species population {res.double_same_species_max:.3e}")
    print(f"peak target fidelity {res.target_fidelity:.6f} at t = {res.best_time:.6g}")
    return written


def run_chain(cfg: RunConfig, out: Path, seed: int, jobs: int, fmt: str):
    n = cfg.require("geometry", "n")
    geom = solve_coulomb_chain(TrapParams(n))
    if cfg.get("geometry", "d0") is not None and n > 1:
        geom = geom.scaled(cfg.get("geometry", "d0") / average_spacing(geom))
    prefix = _prefix(cfg, "chain")
    written = []
    if _wants(fmt, "csv"):
        path = out / f"{prefix}.txt"
        save_geometry(geom, path)
        written.append(path)
    if _wants(fmt, "json"):
        written.append(io.write_json(out / f"{prefix}.json", {
            "n_ions": n, "positions": geom.positions[:, 0],
            "average_spacing": average_spacing(geom) if n > 1 else None}))
    print(" ".join(f"{x:.6f}" for x in geom.positions[:, 0]))
    return written


COMMANDS = {"pattern": run_pattern, "sweep": run_sweep, "states": run_states,
            "rydberg": run_rydberg, "chain": run_chain}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI configuration file")
    common.add_argument("--out", default=".", help="output directory (default: .)")
    common.add_argument("--seed", type=int, help="overrides sampling.seed")
    common.add_argument("--jobs", type=int, default=1, help="worker threads (default 1)")
    common.add_argument("--format", choices=("csv", "json", "both"),
                        help="overrides output.format")
    parser = argparse.ArgumentParser(prog="collective-emission", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter,
                                     parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common])
        if name == "sweep":
            g = p.add_mutually_exclusive_group()
            g.add_argument("--exclude-smallest", dest="exclude_smallest",
                           action="store_true", default=None,
                           help="drop the smallest sweep value from the fit (default)")
            g.add_argument("--include-smallest", dest="exclude_smallest",
                           action="store_false", help="fit all sweep values")
    return parser


class _ArgumentError(Exception):
    pass


def main(argv=None) -> int:
    parser = build_parser()
    parser.error = lambda msg: (_ for _ in ()).throw(_ArgumentError(msg))
    try:
        args = parser.parse_args(argv)
    except _ArgumentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config) if args.config else defaults()
        seed = args.seed if args.seed is not None else cfg.get("sampling", "seed")
        if seed < 0:
            raise ConfigError("--seed", "must be >= 0")
        if args.jobs < 1:
            raise ConfigError("--jobs", "must be >= 1")
        fmt = args.format or cfg.get("output", "format")
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        extra = {}
        if args.command == "sweep":
            extra["exclude_smallest"] = args.exclude_smallest
        written = COMMANDS[args.command](cfg, out, seed, args.jobs, fmt, **extra)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConvergenceFailure, ResourceLimit, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except InvalidArgument as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    missing = [str(p) for p in written if not Path(p).is_file() or Path(p).stat().st_size == 0]
    if missing:
        print(f"numerical failure: empty artifacts {missing}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
