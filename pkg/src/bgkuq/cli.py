"""Command-line interface: configuration, orchestration, tabular output.

Subcommands:

* ``run``     -- execute one experiment (deterministic solve, reference
  build, or an MC / MLMC / CV-MLMC sample farm) and write its artifacts:
  ``meta.json`` (resolved config, seed, version, counters), ``fields.csv``
  (per-cell statistics, with multiplier columns in CV modes),
  ``snapshots/*.csv`` on request, and per-replication outputs when K > 1.
* ``compare`` -- evaluate the error functionals of a run against a
  reference run and write ``errors.csv``.
* ``sweep``   -- cartesian parameter sweeps, one run directory per combo.

Outputs are byte-stable: fixed 17-significant-digit decimal formatting,
sorted JSON keys, and estimators whose reductions are independent of the
thread budget.  Exit codes: 0 ok, 2 config error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import configparser
import itertools
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._version import __version__
from .errors import BgkError, ConfigError
from .estimators import LevelPlan, QUANTITIES, plan_workload, run_plan
from .quadrature import build_gauss_legendre
from .random_inputs import SCENARIOS, boundary_for, get_scenario, initial_state
from .reference import (
    collocation_reference,
    error_overall,
    error_pointwise,
    error_relative,
    restrict,
)
from .solver import (
    DEFAULT_TABLEAU,
    SolverConfig,
    SpatialMesh,
    TABLEAUX,
    solve_to_time,
)

MODES = ("deterministic", "mc", "mlmc", "cv-quasi", "cv-optimal", "reference")
_MODE_TO_OPTIMIZER = {
    "mc": "none",
    "mlmc": "standard",
    "cv-quasi": "quasi_optimal",
    "cv-optimal": "optimal",
}
CACHE_ENV = "BGKUQ_CACHE_DIR"


def _fmt(x) -> str:
    return f"{float(x):.17g}"


@dataclass
class RunConfig:
    """Fully resolved run configuration; serialized into meta.json."""

    scenario: str = "test1_smooth"
    mode: str = "deterministic"
    seed: int = 0
    out: str = "run_out"
    threads: int = 0  # 0 -> available parallelism (never affects results)

    # solver settings
    nv: int = 40
    vmax: float = 5.0
    cfl_ratio: float = 0.1
    epsilon: float | None = None  # None -> scenario default
    imex_table: str = DEFAULT_TABLEAU
    newton_tol: float = 1e-12
    newton_max_iter: int = 50

    # plan settings
    nx: int = 40
    levels: tuple = ()
    samples: tuple = ()
    replications: int = 1
    z: float = 0.0
    t: float | None = None  # None -> scenario final time
    collocation_nodes: int = 40
    snapshot_times: tuple = ()

    def resolved_threads(self) -> int:
        return self.threads if self.threads > 0 else (os.cpu_count() or 1)


_SCHEMA = {
    "run": {"scenario": str, "mode": str, "seed": int, "out": str, "threads": int},
    "solver": {"nv": int, "vmax": float, "cfl_ratio": float, "epsilon": float,
               "imex_table": str, "newton_tol": float, "newton_max_iter": int},
    "plan": {"nx": int, "levels": "ints", "samples": "ints",
             "replications": int, "z": float, "t": float,
             "collocation_nodes": int, "snapshot_times": "floats"},
}
_KEY_TO_FIELD = {(sec, key): key for sec, keys in _SCHEMA.items() for key in keys}


def _parse_ints(text: str) -> tuple:
    return tuple(int(v) for v in text.replace(",", " ").split())


def _parse_floats(text: str) -> tuple:
    return tuple(float(v) for v in text.replace(",", " ").split())


def load_config_file(path: str) -> dict:
    """Parse the INI-style config document; unknown sections/keys rejected."""
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"config file not found: {path}")
    values = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        for key, raw in parser[section].items():
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            kind = _SCHEMA[section][key]
            try:
                if kind == "ints":
                    values[key] = _parse_ints(raw)
                elif kind == "floats":
                    values[key] = _parse_floats(raw)
                else:
                    values[key] = kind(raw)
            except ValueError as exc:
                raise ConfigError(f"bad value for {section}.{key}: {raw!r}") from exc
    return values


def build_config(args: argparse.Namespace) -> RunConfig:
    """File values first, CLI flags override."""
    values = load_config_file(args.config) if args.config else {}
    for key in ("scenario", "mode", "seed", "out", "threads", "nv", "vmax",
                "cfl_ratio", "epsilon", "imex_table", "newton_tol",
                "newton_max_iter", "nx", "replications", "z", "t",
                "collocation_nodes"):
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    if getattr(args, "levels", None) is not None:
        values["levels"] = _parse_ints(args.levels)
    if getattr(args, "samples", None) is not None:
        values["samples"] = _parse_ints(args.samples)
    if getattr(args, "snapshot_times", None) is not None:
        values["snapshot_times"] = _parse_floats(args.snapshot_times)
    try:
        cfg = RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    validate_config(cfg)
    return cfg


def validate_config(cfg: RunConfig):
    if cfg.scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {cfg.scenario!r}; "
                          f"available: {sorted(SCENARIOS)}")
    if cfg.mode not in MODES:
        raise ConfigError(f"unknown mode {cfg.mode!r}; available: {MODES}")
    if cfg.imex_table not in TABLEAUX:
        raise ConfigError(f"unknown IMEX table {cfg.imex_table!r}; "
                          f"available: {sorted(TABLEAUX)}")
    if cfg.nv < 1 or cfg.vmax <= 0:
        raise ConfigError("velocity grid needs nv >= 1 and vmax > 0")
    if not 0 < cfg.cfl_ratio <= 1:
        raise ConfigError("cfl_ratio must lie in (0, 1]")
    if cfg.epsilon is not None and cfg.epsilon <= 0:
        raise ConfigError("epsilon must be positive")
    if cfg.mode in ("mlmc", "cv-quasi", "cv-optimal"):
        if not cfg.levels or not cfg.samples:
            raise ConfigError(f"mode {cfg.mode} needs --levels and --samples")
        if len(cfg.levels) != len(cfg.samples):
            raise ConfigError("levels and samples must have equal length")
    if cfg.mode == "mc" and not cfg.samples:
        raise ConfigError("mode mc needs --samples M")
    if not -1.0 <= cfg.z <= 1.0:
        raise ConfigError("z must lie in [-1, 1]")
    if cfg.replications < 1:
        raise ConfigError("replications must be positive")


def _solver_pieces(cfg: RunConfig):
    from .maxwellian import NewtonSettings

    scenario = get_scenario(cfg.scenario)
    grid = build_gauss_legendre(cfg.nv, cfg.vmax)
    eps = scenario.epsilon if cfg.epsilon is None else cfg.epsilon
    solver = SolverConfig(
        epsilon=eps, cfl_ratio=cfg.cfl_ratio, tableau=cfg.imex_table,
        newton=NewtonSettings(tol=cfg.newton_tol, max_iter=cfg.newton_max_iter))
    return scenario, grid, solver


def _plan_for(cfg: RunConfig) -> LevelPlan:
    if cfg.mode == "mc":
        return LevelPlan(levels=((cfg.nx, cfg.samples[0]),), optimizer="none",
                         replications=cfg.replications)
    levels = tuple(zip(cfg.levels, cfg.samples))
    return LevelPlan(levels=levels, optimizer=_MODE_TO_OPTIMIZER[cfg.mode],
                     replications=cfg.replications)


# ---------------------------------------------------------------------------
# artifact writers / readers
# ---------------------------------------------------------------------------

def write_fields_csv(path: Path, x: np.ndarray, mean: np.ndarray,
                     variance: np.ndarray, lam: np.ndarray | None = None,
                     lamhat: np.ndarray | None = None):
    """columns: quantity, cell_index, x, mean, variance [, lambda_l, lambdahat_l]."""
    n_lam = 0 if lam is None else lam.shape[0]
    header = ["quantity", "cell_index", "x", "mean", "variance"]
    header += [f"lambda_{l + 1}" for l in range(n_lam)]
    header += [f"lambdahat_{l + 1}" for l in range(n_lam)]
    lines = [",".join(header)]
    for qi, q in enumerate(QUANTITIES):
        for j in range(x.size):
            row = [q, str(j), _fmt(x[j]), _fmt(mean[qi, j]), _fmt(variance[qi, j])]
            if n_lam:
                row += [_fmt(lam[l, qi, j]) for l in range(n_lam)]
                row += [_fmt(lamhat[l, qi, j]) for l in range(n_lam)]
            lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n")


def read_fields_csv(path: Path):
    """Round-trip loader for fields.csv; returns (x, mean, variance)."""
    rows = path.read_text().strip().splitlines()
    header = rows[0].split(",")
    ix = {name: i for i, name in enumerate(header)}
    data = {q: [] for q in QUANTITIES}
    xs = {q: [] for q in QUANTITIES}
    var = {q: [] for q in QUANTITIES}
    for line in rows[1:]:
        parts = line.split(",")
        q = parts[ix["quantity"]]
        xs[q].append(float(parts[ix["x"]]))
        data[q].append(float(parts[ix["mean"]]))
        var[q].append(float(parts[ix["variance"]]))
    x = np.array(xs[QUANTITIES[0]])
    mean = np.array([data[q] for q in QUANTITIES])
    variance = np.array([var[q] for q in QUANTITIES])
    return x, mean, variance


def write_snapshot_csv(path: Path, x: np.ndarray, rho, u, temp):
    lines = ["x,rho,U,T"]
    for j in range(x.size):
        lines.append(",".join([_fmt(x[j]), _fmt(rho[j]), _fmt(u[j]), _fmt(temp[j])]))
    path.write_text("\n".join(lines) + "\n")


def read_snapshot_csv(path: Path):
    """Round-trip loader for snapshot files; returns (x, rho, U, T)."""
    rows = [line.split(",") for line in path.read_text().strip().splitlines()[1:]]
    data = np.array(rows, dtype=float)
    return data[:, 0], data[:, 1], data[:, 2], data[:, 3]


def read_errors_csv(path: Path):
    """Round-trip loader for errors.csv.

    Returns {(quantity, target): (x, e_overall, e_pointwise, e_relative)}
    with e_relative None when the column was empty.
    """
    rows = path.read_text().strip().splitlines()
    out = {}
    for line in rows[1:]:
        q, target, _, x, e_over, e_point, e_rel = line.split(",")
        key = (q, target)
        slot = out.setdefault(key, ([], [], [], []))
        slot[0].append(float(x))
        slot[1].append(float(e_over))
        slot[2].append(float(e_point))
        slot[3].append(float(e_rel) if e_rel else np.nan)
    result = {}
    for key, (x, e_over, e_point, e_rel) in out.items():
        e_rel_arr = np.array(e_rel)
        result[key] = (np.array(x), np.array(e_over), np.array(e_point),
                       None if np.all(np.isnan(e_rel_arr)) else e_rel_arr)
    return result


def _write_meta(out: Path, cfg: RunConfig, scenario, extra: dict):
    meta = {
        "version": __version__,
        "command": "run",
        "config": {k: (list(v) if isinstance(v, tuple) else v)
                   for k, v in vars(cfg).items()},
        "scenario_constants": dict(scenario.constants),
        "epsilon": scenario.epsilon if cfg.epsilon is None else cfg.epsilon,
        "t_final": scenario.t_final if cfg.t is None else cfg.t,
    }
    meta.update(extra)
    (out / "meta.json").write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")


def _load_meta(path: Path) -> dict:
    meta_file = path / "meta.json"
    if not meta_file.exists():
        raise ConfigError(f"no meta.json in {path}")
    return json.loads(meta_file.read_text())


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------

def _run_deterministic(cfg: RunConfig, out: Path):
    scenario, grid, solver = _solver_pieces(cfg)
    mesh = SpatialMesh(scenario.a, scenario.b, cfg.nx)
    state = initial_state(scenario, cfg.z, mesh, grid)
    spec = boundary_for(scenario, cfg.z)
    t_final = scenario.t_final if cfg.t is None else cfg.t

    snapshots = []
    if cfg.snapshot_times:
        snap_dir = out / "snapshots"
        snap_dir.mkdir(exist_ok=True)

        def cb(st, mom):
            snapshots.append(st.t)
            write_snapshot_csv(snap_dir / f"t_{st.t:.6f}.csv",
                               mesh.centers(), mom.rho, mom.u, mom.T)
    else:
        cb = None

    result = solve_to_time(state, t_final, solver, grid, mesh, spec,
                           snapshot_times=cfg.snapshot_times or None,
                           snapshot_callback=cb)
    mom = result.moments
    mean = np.stack([mom.rho, mom.u, mom.T])
    write_fields_csv(out / "fields.csv", mesh.centers(), mean, np.zeros_like(mean))
    d = result.diagnostics
    _write_meta(out, cfg, scenario, {
        "mode_details": {"z": cfg.z, "nx": cfg.nx},
        "workload": {"total": float(cfg.nx**2)},
        "counters": {"newton_fallbacks": d.newton_fallbacks,
                     "steps": d.steps,
                     "min_phi": d.min_phi, "min_psi": d.min_psi},
        "snapshots": snapshots,
    })


def _run_reference(cfg: RunConfig, out: Path):
    scenario, grid, solver = _solver_pieces(cfg)
    cache_dir = os.environ.get(CACHE_ENV)
    ref = collocation_reference(scenario, cfg.collocation_nodes, cfg.nx,
                                t=cfg.t, grid=grid, config=solver,
                                cache_dir=cache_dir)
    mesh = SpatialMesh(scenario.a, scenario.b, cfg.nx)
    write_fields_csv(out / "fields.csv", mesh.centers(), ref.mean, ref.variance)
    _write_meta(out, cfg, scenario, {
        "mode_details": {"kind": "collocation", "nc": cfg.collocation_nodes,
                         "nx": cfg.nx},
        "workload": {"total": float(cfg.collocation_nodes * cfg.nx**2)},
        "counters": {},
    })


def _run_estimator(cfg: RunConfig, out: Path):
    scenario, grid, solver = _solver_pieces(cfg)
    plan = _plan_for(cfg)
    fields = run_plan(scenario, plan, cfg.seed, t=cfg.t, grid=grid,
                      config=solver, threads=cfg.resolved_threads())
    cv_mode = cfg.mode in ("cv-quasi", "cv-optimal")
    x = fields[0].x

    mean = np.mean([f.mean for f in fields], axis=0)
    variance = np.mean([f.variance for f in fields], axis=0)
    lam = np.mean([f.lam for f in fields], axis=0) if cv_mode else None
    lamhat = np.mean([f.lamhat for f in fields], axis=0) if cv_mode else None
    write_fields_csv(out / "fields.csv", x, mean, variance, lam, lamhat)

    if len(fields) > 1:
        for f in fields:
            rep_dir = out / "replications" / f"rep_{f.replication:03d}"
            rep_dir.mkdir(parents=True, exist_ok=True)
            write_fields_csv(rep_dir / "fields.csv", x, f.mean, f.variance,
                             f.lam if cv_mode else None,
                             f.lamhat if cv_mode else None)

    counters = {}
    for f in fields:
        for k, v in f.counters.items():
            counters[k] = counters.get(k, 0) + int(v)
    _write_meta(out, cfg, scenario, {
        "mode_details": {"optimizer": plan.optimizer,
                         "levels": [list(lv) for lv in plan.levels],
                         "replications": plan.replications},
        "workload": {"per_replication": plan_workload(plan),
                     "total": plan_workload(plan) * plan.replications},
        "counters": counters,
        "finest_nx": plan.finest_nx,
    })


def cmd_run(args) -> int:
    cfg = build_config(args)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.mode == "deterministic":
        _run_deterministic(cfg, out)
    elif cfg.mode == "reference":
        _run_reference(cfg, out)
    else:
        _run_estimator(cfg, out)
    print(f"run complete: {out}")
    return 0


# ---------------------------------------------------------------------------
# compare
# ---------------------------------------------------------------------------

def _replication_fields(run_dir: Path):
    """Stack per-replication mean/variance fields: (K, Q, Nx) each."""
    rep_root = run_dir / "replications"
    if rep_root.exists():
        means, variances = [], []
        for rep_dir in sorted(rep_root.iterdir()):
            _, mean, variance = read_fields_csv(rep_dir / "fields.csv")
            means.append(mean)
            variances.append(variance)
        return np.array(means), np.array(variances)
    _, mean, variance = read_fields_csv(run_dir / "fields.csv")
    return mean[None], variance[None]


def cmd_compare(args) -> int:
    run_dir = Path(args.run_dir)
    ref_dir = Path(args.reference_dir)
    run_meta = _load_meta(run_dir)
    ref_meta = _load_meta(ref_dir)
    if run_meta["config"]["scenario"] != ref_meta["config"]["scenario"]:
        raise ConfigError("run and reference use different scenarios")
    if run_meta["t_final"] != ref_meta["t_final"]:
        raise ConfigError("run and reference use different output times")

    x, ref_mean, ref_var = read_fields_csv(ref_dir / "fields.csv")
    means, variances = _replication_fields(run_dir)
    nx_run = means.shape[-1]
    nx_ref = ref_mean.shape[-1]
    if nx_ref % nx_run != 0:
        raise ConfigError(
            f"reference mesh ({nx_ref}) is not a refinement of the run mesh ({nx_run})")
    ref_mean_r = restrict(ref_mean, nx_run)
    ref_var_r = restrict(ref_var, nx_run)
    mesh_dx = 1.0 / nx_run
    matched = nx_ref == nx_run

    rel_mean = rel_var = None
    if args.rel_reference:
        rel_dir = Path(args.rel_reference)
        rel_meta = _load_meta(rel_dir)
        if rel_meta["config"]["scenario"] != run_meta["config"]["scenario"]:
            raise ConfigError("relative reference uses a different scenario")
        _, rel_mean, rel_var = read_fields_csv(rel_dir / "fields.csv")
        if rel_mean.shape[-1] != nx_run:
            raise ConfigError("relative reference must live on the run mesh")
    elif matched:
        rel_mean, rel_var = ref_mean_r, ref_var_r

    out_rows = ["quantity,target,cell_index,x,e_overall,e_pointwise,e_relative"]
    cells_x = (np.arange(nx_run) + 0.5) * mesh_dx
    for target, fields, ref_r, rel in (
            ("mean", means, ref_mean_r, rel_mean),
            ("variance", variances, ref_var_r, rel_var)):
        e_over = error_overall(fields, ref_r, mesh_dx)
        e_point = error_pointwise(fields, ref_r)
        e_rel = error_relative(fields, rel) if rel is not None else None
        for qi, q in enumerate(QUANTITIES):
            for j in range(nx_run):
                row = [q, target, str(j), _fmt(cells_x[j]), _fmt(e_over[qi]),
                       _fmt(e_point[qi, j]),
                       _fmt(e_rel[qi, j]) if e_rel is not None else ""]
                out_rows.append(",".join(row))
    out_path = run_dir / "errors.csv"
    out_path.write_text("\n".join(out_rows) + "\n")
    print(f"errors written: {out_path}")
    return 0


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

def cmd_sweep(args) -> int:
    axes = []
    for spec_str in args.param:
        if "=" not in spec_str:
            raise ConfigError(f"--param needs key=v1,v2,... got {spec_str!r}")
        key, _, raw = spec_str.partition("=")
        axes.append((key.strip(), [v.strip() for v in raw.split(",") if v.strip()]))
    if not axes:
        raise ConfigError("sweep needs at least one --param axis")
    base = Path(args.out or "sweep_out")
    base.mkdir(parents=True, exist_ok=True)
    count = 0
    for combo in itertools.product(*(vals for _, vals in axes)):
        label = "_".join(f"{k.split('.')[-1]}-{v}" for (k, _), v in zip(axes, combo))
        sub_args = argparse.Namespace(**vars(args))
        sub_args.out = str(base / label)
        for (key, _), val in zip(axes, combo):
            setattr(sub_args, key.split(".")[-1], _coerce_flag(key, val))
        cmd_run(sub_args)
        count += 1
    print(f"sweep complete: {count} runs under {base}")
    return 0


def _coerce_flag(key: str, val: str):
    name = key.split(".")[-1]
    for section in _SCHEMA.values():
        if name in section:
            kind = section[name]
            if kind in ("ints", "floats"):
                return val.replace(";", ",")
            return kind(val)
    raise ConfigError(f"unknown sweep parameter {key!r}")


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _add_run_flags(p):
    p.add_argument("--config", help="INI config file; flags override its values")
    p.add_argument("--scenario", choices=sorted(SCENARIOS))
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--threads", type=int,
                   help="worker threads (0 = auto); never affects results")
    p.add_argument("--nv", type=int, help="velocity nodes")
    p.add_argument("--vmax", type=float, help="velocity truncation half-width")
    p.add_argument("--cfl-ratio", dest="cfl_ratio", type=float)
    p.add_argument("--epsilon", type=float, help="override scenario Knudsen number")
    p.add_argument("--imex-table", dest="imex_table", choices=sorted(TABLEAUX))
    p.add_argument("--newton-tol", dest="newton_tol", type=float)
    p.add_argument("--newton-max-iter", dest="newton_max_iter", type=int)
    p.add_argument("--nx", type=int, help="cells (deterministic/mc/reference)")
    p.add_argument("--levels", help="comma list of level meshes, e.g. 10,20,40")
    p.add_argument("--samples", help="comma list of per-level sample counts")
    p.add_argument("--replications", type=int)
    p.add_argument("--z", type=float, help="deterministic-mode random value")
    p.add_argument("--t", type=float, help="override output time")
    p.add_argument("--collocation-nodes", dest="collocation_nodes", type=int)
    p.add_argument("--snapshot-times", dest="snapshot_times",
                   help="comma list of snapshot times")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="bgkuq",
        description="Monte Carlo / multilevel Monte Carlo statistics of the "
                    "1D BGK equation with random inputs")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one experiment")
    _add_run_flags(p_run)

    p_cmp = sub.add_parser("compare", help="error functionals vs a reference run")
    p_cmp.add_argument("run_dir")
    p_cmp.add_argument("reference_dir")
    p_cmp.add_argument("--rel-reference", dest="rel_reference",
                       help="matched-mesh reference run for the relative error")

    p_sweep = sub.add_parser("sweep", help="cartesian parameter sweep")
    _add_run_flags(p_sweep)
    p_sweep.add_argument("--param", action="append", default=[],
                         help="sweep axis key=v1,v2,... (repeatable); "
                              "list values use ';' separators")

    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "compare":
            return cmd_compare(args)
        if args.command == "sweep":
            return cmd_sweep(args)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except BgkError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
