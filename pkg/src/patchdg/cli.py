"""Command line drivers: experiment sweeps with CSV and JSON table output.

Each subcommand runs a desk-scale study and writes ``<out>/<name>.csv``
plus a ``<name>.json`` sidecar carrying the resolved configuration, its
hash, and the git revision.  Configs load from TOML (or JSON) files and
unknown fields are rejected so typos fail loudly.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import subprocess
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - 3.10 fallback
    import tomli as tomllib

from . import analysis
from .geometry import build_cartesian_multipatch, Warp2D
from .refops import build_ref_operators, compute_constants
from .semidiscrete import AdvectionOperator, Wave1Operator, Wave2Operator
from .splines import make_knots
from .timeint import estimate_dt, integrate, lsrk45_step
from .wadg import ExactWeightedMass, WeightAdjustedMass, grid_l2_error, \
    projection_rhs


class UsageError(Exception):
    """Invalid configuration; the message names the offending field."""


# ---------------------------------------------------------------------------
# table output

def emit_table(rows, schema, path):
    """Write rows as RFC-4180 CSV with LF endings.

    Reals are rendered with 17 significant digits so a parse-back
    reproduces them bit-exactly.  Every row must match the schema width.
    """
    schema = list(schema)
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(schema)
        for i, row in enumerate(rows):
            row = list(row)
            if len(row) != len(schema):
                raise ValueError(
                    f"row {i} has {len(row)} fields, schema has {len(schema)}")
            writer.writerow([_format_cell(c) for c in row])
    return path


def _format_cell(value):
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def read_table(path):
    """Parse a CSV written by :func:`emit_table` back into (schema, rows)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        schema = next(reader)
        return schema, [list(r) for r in reader]


# ---------------------------------------------------------------------------
# configuration

DEFAULTS = {
    "constants": {
        "families": ["uniform", "smoothed", "optimal"],
        "degrees": [2, 3, 4, 5],
        "knot_rules": ["p", "2p"],
    },
    "spectrum": {
        "kind": "advection",
        "p": 2,
        "family": "uniform",
        "tau": 0.5,
        "knot_counts": [32, 64, 96, 128],
    },
    "dispersion": {
        "p": 4,
        "K": 4,
        "family": "uniform",
        "tau": 1.0,
        "wavenumbers": [1.5 * np.pi, 2.0 * np.pi, 3.0 * np.pi, 4.0 * np.pi],
    },
    "eigstudy": {"p": 4, "K": 32, "family": "uniform"},
    "project": {
        "p": 4,
        "warp_alpha": 0.125,
        "wavenumber": 1.0,
        "knot_counts": [4, 8, 16, 32],
    },
    "convergence1d": {
        "formulations": ["first", "second"],
        "degrees": [2],
        "knot_counts": [4, 8, 16, 32],
        "family": "uniform",
        "mass": "wadg",
    },
    "convergence2d": {
        "p": 2,
        "knot_counts": [2, 4, 8],
        "layout": [2, 2],
        "warp_alpha": 0.125,
        "family": "uniform",
        "mass": "wadg",
    },
    "simulate": {
        "pde": "wave1",
        "p": 3,
        "K": 8,
        "num_patches": 2,
        "final_time": 1.0,
        "dt_factor": 0.5,
        "family": "uniform",
        "mass": "wadg",
        "sample_every": 10,
    },
    "smoke3d": {
        "p": 2,
        "K": 2,
        "num_steps": 500,
        "mass": "wadg",
    },
}


def load_config(path):
    path = Path(path)
    if path.suffix.lower() == ".json":
        with open(path) as fh:
            data = json.load(fh)
    else:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    if not isinstance(data, dict):
        raise UsageError(f"config root must be a table, got {type(data).__name__}")
    return data


def resolve_config(kind, overrides):
    """Merge file/flag overrides onto the defaults with strict field checks."""
    base = {k: (list(v) if isinstance(v, list) else v)
            for k, v in DEFAULTS[kind].items()}
    for key, value in overrides.items():
        if key not in base:
            known = ", ".join(sorted(base))
            raise UsageError(f"unknown field {kind}.{key} (known: {known})")
        base[key] = list(value) if isinstance(value, list) else value
    for key, value in base.items():
        if isinstance(value, list) and not value:
            raise UsageError(f"empty sweep list at {kind}.{key}")
    return base


def _git_revision():
    try:
        out = subprocess.run(["git", "rev-parse", "HEAD"],
                             capture_output=True, text=True, timeout=10)
        if out.returncode == 0:
            return out.stdout.strip()
    except OSError:
        pass
    return "unknown"


def write_sidecar(kind, config, out_dir, extra=None):
    payload = {
        "experiment": kind,
        "git_revision": _git_revision(),
        "config_hash": hashlib.sha256(
            json.dumps(config, sort_keys=True).encode()).hexdigest(),
        "config": config,
    }
    if extra:
        payload.update(extra)
    path = Path(out_dir) / f"{kind}.json"
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


# ---------------------------------------------------------------------------
# experiment runners; each returns (schema, rows, extra-metadata)

def _map_maybe_parallel(fn, items, workers):
    if workers and workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(it) for it in items]


def _run_constants(cfg, workers):
    jobs = []
    for family in cfg["families"]:
        for p in cfg["degrees"]:
            for rule in cfg["knot_rules"]:
                if rule == "p":
                    K = p
                elif rule == "2p":
                    K = 2 * p
                else:
                    K = int(rule)
                jobs.append((family, int(p), K))

    def one(job):
        family, p, K = job
        ops = build_ref_operators(make_knots(family, p, K))
        c = compute_constants(ops)
        return [family, p, K, c.trace_eigenvalue, c.stiffness_eigenvalue,
                c.inverse_constant / K, c.trace_constant / K]

    rows = _map_maybe_parallel(one, jobs, workers)
    schema = ["family", "p", "K", "lambda_T", "lambda_I",
              "C_T_over_K", "C_I_over_K"]
    return schema, rows, {}


def _run_spectrum(cfg, workers):
    kind = cfg["kind"]
    p, family, tau = int(cfg["p"]), cfg["family"], float(cfg["tau"])

    def one(K):
        if kind == "advection":
            rho = analysis.spectral_radius(
                analysis.advection_operator_matrix(p, K, family, tau))
        elif kind == "wave2":
            rho = float(np.sqrt(analysis.spectral_radius(
                analysis.wave2_operator_matrix(p, K, family))))
        else:
            raise UsageError(f"unknown field value spectrum.kind={kind!r}")
        return [kind, p, int(K), family, tau, rho]

    rows = _map_maybe_parallel(one, list(cfg["knot_counts"]), workers)
    ks = [r[2] for r in rows]
    radii = [r[5] for r in rows]
    if kind == "advection":
        slope = analysis.fit_slope_through_origin(ks, radii)
    else:
        slope = analysis.fit_slope(ks, radii)
    schema = ["kind", "p", "K", "family", "tau", "radius"]
    return schema, rows, {"growth_slope": slope}


def _run_dispersion(cfg, workers):
    p, K = int(cfg["p"]), int(cfg["K"])
    wavenumbers = [float(k) for k in cfg["wavenumbers"]]
    errs, slope = analysis.dispersion_slope(p, K, wavenumbers,
                                            cfg["family"], float(cfg["tau"]))
    rows = [[p, K, cfg["family"], k, e] for k, e in zip(wavenumbers, errs)]
    schema = ["p", "K", "family", "wavenumber", "dispersion_error"]
    return schema, rows, {"log_slope": float(slope)}


def _run_eigstudy(cfg, workers):
    study = analysis.laplace_eigenstudy(int(cfg["p"]), int(cfg["K"]),
                                        cfg["family"])
    rows = [[i + 1, lam, ex, rel]
            for i, (lam, ex, rel) in enumerate(
                zip(study.eigenvalues, study.exact, study.relative_errors))]
    schema = ["index", "eigenvalue", "exact", "relative_error"]
    extra = {"tail_outliers": analysis.count_tail_outliers(study)}
    return schema, rows, extra


def _run_project(cfg, workers):
    p = int(cfg["p"])
    alpha = float(cfg["warp_alpha"])
    kf = float(cfg["wavenumber"])
    f = lambda x: np.cos(0.5 * kf * np.pi * x[0]) * np.cos(0.5 * kf * np.pi * x[1])

    def one(K):
        ops = build_ref_operators(make_knots("uniform", p, K))
        grid = build_cartesian_multipatch(
            [ops, ops], [[-1.0, 1.0], [-1.0, 1.0]], (1, 1),
            warp=Warp2D(alpha))
        geo = grid.patches[0]
        b = projection_rhs(geo, f)
        exact = ExactWeightedMass.from_geometry(geo).inverse_apply(b)
        wadg = WeightAdjustedMass.from_geometry(geo).inverse_apply(b)
        err = grid_l2_error(grid, [exact], f)
        diff = grid_l2_error(grid, [wadg - exact], lambda x: 0.0)
        return [p, int(K), 2.0 / K, err, diff]

    rows = _map_maybe_parallel(one, list(cfg["knot_counts"]), workers)
    schema = ["p", "K", "h", "projection_error", "inverse_difference"]
    return schema, rows, {}


def _run_convergence1d(cfg, workers):
    rows = []
    for formulation in cfg["formulations"]:
        for p in cfg["degrees"]:
            errs = analysis.run_convergence_1d(
                formulation, int(p), knot_counts=tuple(cfg["knot_counts"]),
                family=cfg["family"], mass=cfg["mass"])
            prev = None
            for K, err in zip(cfg["knot_counts"], errs):
                rate = "" if prev is None else float(np.log2(prev / err))
                rows.append([formulation, int(p), int(K), 1.0 / K, err, rate])
                prev = err
    schema = ["formulation", "p", "K", "h", "l2_error", "rate"]
    return schema, rows, {}


def _run_convergence2d(cfg, workers):
    errs, dofs = analysis.run_convergence_2d(
        p=int(cfg["p"]), knot_counts=tuple(cfg["knot_counts"]),
        warp_alpha=float(cfg["warp_alpha"]), mass=cfg["mass"],
        layout=tuple(int(n) for n in cfg["layout"]), family=cfg["family"])
    rows = [[int(cfg["p"]), int(K), int(n), e]
            for K, n, e in zip(cfg["knot_counts"], dofs, errs)]
    schema = ["p", "K", "dofs", "l2_error"]
    return schema, rows, {}


def _simulate_operator(cfg, grid):
    pde = cfg["pde"]
    if pde == "advection":
        return AdvectionOperator(grid, [1.0] * grid.sdim, mass=cfg["mass"])
    if pde == "wave1":
        return Wave1Operator(grid, mass=cfg["mass"])
    if pde == "wave2":
        return Wave2Operator(grid, mass=cfg["mass"])
    raise UsageError(f"unknown field value simulate.pde={pde!r}")


def _run_simulate(cfg, workers):
    p, K = int(cfg["p"]), int(cfg["K"])
    ops = build_ref_operators(make_knots(cfg["family"], p, K))
    grid = build_cartesian_multipatch([ops], [[-1.0, 1.0]],
                                      (int(cfg["num_patches"]),),
                                      periodic=(True,))
    op = _simulate_operator(cfg, grid)
    consts = compute_constants(ops)
    order = 2 if cfg["pde"] == "wave2" else 1
    dt = float(cfg["dt_factor"]) * estimate_dt(grid, consts, order=order)
    ic = lambda x: np.cos(np.pi * x[0])
    if cfg["pde"] == "advection":
        y0 = op.project_initial(ic)
        energy = lambda y: op.l2_energy(op.split(y))
    else:
        y0 = op.project_initial(ic)
        energy = op.energy
    rows = [[0, 0.0, energy(y0)]]
    stride = max(1, int(cfg["sample_every"]))
    state = {"k": 0}

    def sample(t, y):
        state["k"] += 1
        if state["k"] % stride == 0:
            rows.append([state["k"], t, energy(y)])

    yT = integrate(op.rhs, y0, float(cfg["final_time"]), dt, callback=sample)
    if not np.all(np.isfinite(yT)):
        raise FloatingPointError("simulate: non-finite state at final time")
    schema = ["step", "time", "energy"]
    return schema, rows, {"dt": dt, "final_energy": energy(yT)}


def _run_smoke3d(cfg, workers):
    """Affine 2x1x1 box, first-order wave: decay, constants, finiteness."""
    p, K = int(cfg["p"]), int(cfg["K"])
    ops = build_ref_operators(make_knots("uniform", p, K))
    grid = build_cartesian_multipatch(
        [ops, ops, ops], [[0.0, 2.0], [0.0, 1.0], [0.0, 1.0]], (2, 1, 1))
    neumann = {(ax, side): ("neumann", None)
               for ax in range(3) for side in (0, 1)}
    op = Wave1Operator(grid, boundary=neumann, mass=cfg["mass"])
    consts = compute_constants(ops, dimension=3)
    dt = 0.5 * estimate_dt(grid, consts, order=1)
    ic = lambda x: (np.cos(0.5 * np.pi * x[0]) * np.cos(np.pi * x[1])
                    * np.cos(np.pi * x[2]))
    y0 = op.project_initial(ic)
    num_steps = int(cfg["num_steps"])
    rows = [[0, 0.0, op.energy(y0)]]
    y = y0
    for k in range(num_steps):
        y = lsrk45_step(op.rhs, k * dt, y, dt)
        if not np.all(np.isfinite(y)):
            raise FloatingPointError(f"smoke3d: non-finite state at step {k + 1}")
        if (k + 1) % 10 == 0:
            rows.append([k + 1, (k + 1) * dt, op.energy(y)])
    energies = [r[2] for r in rows]
    decay_ok = all(b <= a * (1.0 + 1e-12) for a, b in zip(energies, energies[1:]))
    const_state = np.zeros(op.num_dofs)
    for pid, geo in enumerate(grid.patches):
        base = op.block * op.patch_offsets[pid]
        const_state[base:base + geo.num_dofs] = 1.0
    const_residual = float(np.abs(op.rhs(0.0, const_state)).max())
    if not decay_ok:
        raise FloatingPointError("smoke3d: discrete energy increased")
    if const_residual > 1e-11:
        raise FloatingPointError(
            f"smoke3d: constant state not preserved ({const_residual:.3e})")
    schema = ["step", "time", "energy"]
    return schema, rows, {"dt": dt, "constant_residual": const_residual,
                          "energy_decay": energies[-1] / energies[0]}


RUNNERS = {
    "constants": _run_constants,
    "spectrum": _run_spectrum,
    "dispersion": _run_dispersion,
    "eigstudy": _run_eigstudy,
    "project": _run_project,
    "convergence1d": _run_convergence1d,
    "convergence2d": _run_convergence2d,
    "simulate": _run_simulate,
    "smoke3d": _run_smoke3d,
}


# ---------------------------------------------------------------------------
# entry point

def build_parser():
    parser = argparse.ArgumentParser(
        prog="patchdg",
        description="Multipatch spline DG experiment drivers.")
    parser.add_argument("--config", type=Path, default=None,
                        help="TOML (or JSON) config overriding the defaults")
    parser.add_argument("--out", type=Path, default=Path("."),
                        help="output directory for CSV/JSON tables")
    parser.add_argument("--workers", type=int, default=1,
                        help="worker threads for independent sweep entries")
    parser.add_argument("--mass", choices=["wadg", "exact"], default=None,
                        help="mass-inverse path override")
    parser.add_argument("--knots", choices=["uniform", "smoothed", "optimal"],
                        default=None, help="knot family override")
    parser.add_argument("experiment", choices=sorted(RUNNERS),
                        help="experiment to run")
    return parser


def run_experiment(kind, config, out_dir, workers=1):
    """Run one experiment and write its CSV and JSON sidecar files."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    schema, rows, extra = RUNNERS[kind](config, workers)
    csv_path = emit_table(rows, schema, out_dir / f"{kind}.csv")
    write_sidecar(kind, config, out_dir, extra)
    return csv_path


def main(argv=None):
    args = build_parser().parse_args(argv)
    kind = args.experiment
    try:
        overrides = {}
        if args.config is not None:
            overrides.update(load_config(args.config))
        if args.mass is not None and "mass" in DEFAULTS[kind]:
            overrides["mass"] = args.mass
        if args.knots is not None:
            if "family" in DEFAULTS[kind]:
                overrides["family"] = args.knots
            elif "families" in DEFAULTS[kind]:
                overrides["families"] = [args.knots]
        config = resolve_config(kind, overrides)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    try:
        run_experiment(kind, config, args.out, args.workers)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # numerical or I/O failure: nonzero status
        print(f"error[{kind}]: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
