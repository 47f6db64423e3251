"""Experiment harness: flat-file configs, solver matrices, CSV/JSON output.

A config names one problem family and lists of meshes, subdomain counts,
overlaps, beta values, and methods; run_experiment executes the full cross
product and writes four kinds of artifact into the output directory:

  results.csv     one row per combination: method,I,k,beta,outer_iters,
                  LS_total,converged
  iterations.csv  long format, one row per outer iteration:
                  method,I,k,beta,n,ls_G,ls_in,ls_min,error,residual
  curve_*.csv     per-run error/work curves: step,error,LS
  summary.json    config echo, library versions, seed, failure reasons

Reruns of the same config and seed produce byte-identical CSVs (wall
times live only in the summary).  Per-combination solver failures are
recorded in the row as converged=false with the reason kept in the
summary; they never abort sibling combinations.

compare_table checks result rows against a shipped reference table of
published counts, cell by cell, with the comparison tolerances used
throughout: outer iterations within +/-1, linear-solve totals within
+/-15%.
"""

import csv
import dataclasses
import io
import json
import platform
import time
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .coarse import CoarseSolveError
from .decomposition import build_1d_layout, build_2d_layout
from .local_solver import LocalSolveError, SolverSettings
from .newton import (direct_newton, fixed_point_solve, outer_newton,
                     reference_solution)
from .precond import PreconditionedSystem
from .problems import DiffusionProblem2D, hard_forchheimer, smooth_forchheimer

__all__ = [
    "METHODS",
    "ExperimentConfig",
    "ResultRow",
    "CompareReport",
    "parse_config",
    "config_from_dict",
    "run_experiment",
    "compare_table",
    "load_rows",
    "reference_table_names",
    "read_reference_table",
]

METHODS = ("newton", "ras-fp", "as-fp", "raspen1", "aspin1", "raspen2", "aspin2")
PROBLEMS = ("forchheimer1d", "diffusion2d")
FIELD_KINDS = ("smooth", "random")

ROW_COLUMNS = ("method", "I", "k", "beta", "outer_iters", "LS_total", "converged")
ITER_COLUMNS = ("method", "I", "k", "beta", "n", "ls_G", "ls_in", "ls_min",
                "error", "residual")


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment matrix; see parse_config for the file format."""

    problem: str = "forchheimer1d"
    meshes: tuple = ()
    cells_per_subdomain: int = 0
    subdomains: tuple = (4,)
    overlaps: tuple = (1,)
    betas: tuple = (1.0,)
    methods: tuple = ("raspen1",)
    jacobian_mode: str = "inexact"
    field: str = "smooth"
    contrast: tuple = (1e-2, 1e2)
    amplitude: float = 1.0
    omega: float = 20.0
    inner_tol: float = 1e-8
    outer_tol: float = 1e-8
    gmres_tol: float = 1e-8
    max_inner: int = 50
    max_outer: int = 50
    max_fixed_point: int = 500
    seed: int = 0
    outdir: str = "results"

    def settings(self):
        return SolverSettings(
            inner_tol=self.inner_tol, outer_tol=self.outer_tol,
            gmres_tol=self.gmres_tol, max_inner=self.max_inner,
            max_outer=self.max_outer, max_fixed_point=self.max_fixed_point,
        )


@dataclass(frozen=True, eq=False)
class ResultRow:
    """Outcome of one (method, mesh, I, k, beta) combination."""

    method: str
    mesh: int
    I: int
    k: int
    beta: float
    outer_iters: int
    LS_total: int
    converged: bool
    reason: str = ""
    wall_time: float = 0.0
    ledger: object = dataclasses.field(default=None, repr=False)


def _parse_list(value, conv):
    items = [part.strip() for part in value.split(",")]
    if any(not part for part in items):
        raise ValueError(f"empty element in list {value!r}")
    return tuple(conv(part) for part in items)


# config key -> (attribute, converter)
_CONFIG_KEYS = {
    "problem": ("problem", str),
    "mesh": ("meshes", lambda v: _parse_list(v, int)),
    "cells_per_subdomain": ("cells_per_subdomain", int),
    "subdomains": ("subdomains", lambda v: _parse_list(v, int)),
    "overlap": ("overlaps", lambda v: _parse_list(v, int)),
    "beta": ("betas", lambda v: _parse_list(v, float)),
    "methods": ("methods", lambda v: _parse_list(v, str)),
    "jacobian_mode": ("jacobian_mode", str),
    "field": ("field", str),
    "contrast": ("contrast", lambda v: _parse_list(v, float)),
    "amplitude": ("amplitude", float),
    "omega": ("omega", float),
    "inner_tol": ("inner_tol", float),
    "outer_tol": ("outer_tol", float),
    "gmres_tol": ("gmres_tol", float),
    "max_inner": ("max_inner", int),
    "max_outer": ("max_outer", int),
    "max_fixed_point": ("max_fixed_point", int),
    "seed": ("seed", int),
    "outdir": ("outdir", str),
}


def parse_config(path):
    """Read a flat key = value config file (lists comma-separated, #-comments)."""
    raw = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key in raw:
            raise ValueError(f"{path}:{lineno}: duplicate key {key!r}")
        raw[key] = value
    return config_from_dict(raw)


def config_from_dict(raw):
    """Build and validate an ExperimentConfig from string key/value pairs."""
    kwargs = {}
    for key, value in raw.items():
        if key not in _CONFIG_KEYS:
            known = ", ".join(sorted(_CONFIG_KEYS))
            raise ValueError(f"unknown config key {key!r} (known: {known})")
        attr, conv = _CONFIG_KEYS[key]
        try:
            kwargs[attr] = conv(value)
        except ValueError as exc:
            raise ValueError(f"config key {key!r}: {exc}") from exc
    if raw.get("problem") == "diffusion2d" and "beta" not in raw:
        kwargs["betas"] = (0.0,)
    config = ExperimentConfig(**kwargs)
    _validate(config)
    return config


def _validate(config):
    if config.problem not in PROBLEMS:
        raise ValueError(f"problem must be one of {PROBLEMS}, got {config.problem!r}")
    if not config.methods:
        raise ValueError("methods list is empty")
    for m in config.methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r} (known: {', '.join(METHODS)})")
    if len(set(config.methods)) != len(config.methods):
        raise ValueError("duplicate entries in methods")
    if config.jacobian_mode not in ("inexact", "exact"):
        raise ValueError("jacobian_mode must be 'inexact' or 'exact'")
    if config.field not in FIELD_KINDS:
        raise ValueError(f"field must be one of {FIELD_KINDS}")
    if config.field == "random" and config.problem != "forchheimer1d":
        raise ValueError("random fields apply to forchheimer1d only")
    if config.problem == "diffusion2d" and tuple(config.betas) != (0.0,):
        raise ValueError("beta applies to forchheimer1d only")
    if bool(config.meshes) == bool(config.cells_per_subdomain):
        raise ValueError("give exactly one of 'mesh' and 'cells_per_subdomain'")
    if config.cells_per_subdomain < 0:
        raise ValueError("cells_per_subdomain must be positive")
    for name, values in (("mesh", config.meshes),
                         ("subdomains", config.subdomains)):
        if any(v < 1 for v in values):
            raise ValueError(f"{name} entries must be positive")
    if any(k < 0 for k in config.overlaps):
        raise ValueError("overlap entries must be nonnegative")
    if len(config.contrast) != 2 or not 0 < config.contrast[0] <= config.contrast[1]:
        raise ValueError("contrast must be 'lo,hi' with 0 < lo <= hi")
    for name in ("inner_tol", "outer_tol", "gmres_tol"):
        if getattr(config, name) <= 0:
            raise ValueError(f"{name} must be positive")
    for name in ("max_inner", "max_outer", "max_fixed_point"):
        if getattr(config, name) < 1:
            raise ValueError(f"{name} must be at least 1")
    if config.seed < 0:
        raise ValueError("seed must be nonnegative")


@dataclass(frozen=True)
class _Combo:
    mesh: int
    I: int
    k: int
    beta: float
    method: str


def _combos(config):
    out = []
    for I in config.subdomains:
        meshes = ((config.cells_per_subdomain * I,) if config.cells_per_subdomain
                  else config.meshes)
        for mesh in meshes:
            for k in config.overlaps:
                for beta in config.betas:
                    for method in config.methods:
                        out.append(_Combo(mesh, I, k, beta, method))
    return out


def _build_problem(config, mesh, beta):
    if config.problem == "diffusion2d":
        return DiffusionProblem2D(mesh, mesh)
    if config.field == "random":
        return hard_forchheimer(mesh, beta=beta, seed=config.seed,
                                contrast=tuple(config.contrast),
                                amplitude=config.amplitude, omega=config.omega)
    return smooth_forchheimer(mesh, beta=beta)


def _build_layout(config, problem, mesh, I, k):
    if config.problem == "diffusion2d":
        return build_2d_layout(mesh, mesh, I, k,
                               dirichlet_value=problem.dirichlet_value)
    return build_1d_layout(mesh, I, k, dirichlet=problem.dirichlet)


def _prepare(config):
    """Fail-fast construction of every problem and layout in the matrix."""
    combos = _combos(config)
    problems, layouts = {}, {}
    for c in combos:
        pkey = (c.mesh, c.beta)
        if pkey not in problems:
            try:
                problems[pkey] = _build_problem(config, c.mesh, c.beta)
            except ValueError as exc:
                raise ValueError(f"mesh={c.mesh} beta={c.beta:g}: {exc}") from exc
        lkey = (c.mesh, c.I, c.k)
        if lkey not in layouts:
            try:
                layouts[lkey] = _build_layout(config, problems[pkey],
                                              c.mesh, c.I, c.k)
            except ValueError as exc:
                raise ValueError(
                    f"mesh={c.mesh} subdomains={c.I} overlap={c.k}: {exc}"
                ) from exc
    return combos, problems, layouts


def _off_interface_mask(problem, layout):
    """Cells whose whole flux stencil is owned by a single subdomain."""
    owner = np.empty(problem.dof_count, dtype=int)
    for idx, sub in enumerate(layout.subdomains):
        owner[sub.owned] = idx
    if isinstance(problem, DiffusionProblem2D):
        own = owner.reshape(problem.ny, problem.nx)
        mask = np.ones_like(own, dtype=bool)
        mask[:, :-1] &= own[:, :-1] == own[:, 1:]
        mask[:, 1:] &= own[:, 1:] == own[:, :-1]
        mask[:-1, :] &= own[:-1, :] == own[1:, :]
        mask[1:, :] &= own[1:, :] == own[:-1, :]
        return mask.ravel()
    mask = np.ones(problem.dof_count, dtype=bool)
    mask[:-1] &= owner[:-1] == owner[1:]
    mask[1:] &= owner[1:] == owner[:-1]
    return mask


def _first_step_residual(system, problem, layout, u0, settings):
    """Residual after one restricted Schwarz step, for external plotting.

    Away from the subdomain interfaces the glued iterate inherits the
    local solves' accuracy, so those entries must already sit at the
    inner tolerance; the interesting structure is the concentration at
    the interfaces.
    """
    u1 = system.fixed_point_step(u0)
    r = problem.residual(u1)
    mask = _off_interface_mask(problem, layout)
    if mask.any():
        worst = float(np.max(np.abs(r[mask])))
        if worst > settings.inner_tol:
            raise RuntimeError(
                f"off-interface residual {worst:.3e} exceeds the inner "
                f"tolerance after the first restricted Schwarz step"
            )
    return r


def _fmt_beta(beta):
    return f"{beta:g}"


def _tag(row):
    return (f"{row.method}_M{row.mesh}_I{row.I}_k{row.k}"
            f"_beta{_fmt_beta(row.beta)}")


def _execute(config, combo, problem, layout, u_ref, settings):
    u0 = problem.initial_state()
    t0 = time.perf_counter()
    first_residual = None
    try:
        if combo.method == "newton":
            run = direct_newton(problem, u0, settings, u_ref=u_ref)
        elif combo.method in ("ras-fp", "as-fp"):
            kind = "RASPEN1" if combo.method == "ras-fp" else "ASPIN1"
            system = PreconditionedSystem(kind, problem, layout, settings)
            if combo.method == "ras-fp":
                first_residual = _first_step_residual(system, problem, layout,
                                                      u0, settings)
            run = fixed_point_solve(system, u0, settings, u_ref=u_ref)
        else:
            kind = combo.method.upper()
            mode = config.jacobian_mode if kind.startswith("ASPIN") else "exact"
            system = PreconditionedSystem(kind, problem, layout, settings,
                                          jacobian_mode=mode)
            run = outer_newton(system, u0, settings, u_ref=u_ref)
    except (LocalSolveError, CoarseSolveError) as exc:
        row = ResultRow(combo.method, combo.mesh, combo.I, combo.k, combo.beta,
                        0, 0, False, str(exc), time.perf_counter() - t0)
        return row, first_residual
    row = ResultRow(combo.method, combo.mesh, combo.I, combo.k, combo.beta,
                    run.outer_iterations, run.ledger.LS_total, run.converged,
                    run.reason, time.perf_counter() - t0, run.ledger)
    return row, first_residual


def run_experiment(config, threads=1):
    """Execute the config's cross product and write all output files.

    Returns the list of ResultRows in matrix order.  Each combination is
    independent; with threads > 1 they run concurrently and a single
    collector writes the files afterwards, so outputs are identical to a
    serial run.
    """
    combos, problems, layouts = _prepare(config)
    settings = config.settings()
    refs = {}
    for (mesh, beta), problem in problems.items():
        try:
            refs[(mesh, beta)] = reference_solution(problem, settings)
        except LocalSolveError as exc:
            raise LocalSolveError(
                f"reference solution for mesh={mesh} beta={beta:g}: {exc}"
            ) from exc

    def job(combo):
        return _execute(config, combo,
                        problems[(combo.mesh, combo.beta)],
                        layouts[(combo.mesh, combo.I, combo.k)],
                        refs[(combo.mesh, combo.beta)], settings)

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(job, combos))
    else:
        outcomes = [job(c) for c in combos]

    outdir = Path(config.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    rows = [row for row, _ in outcomes]
    _write_results_csv(outdir / "results.csv", rows)
    _write_iterations_csv(outdir / "iterations.csv", rows)
    for row, first_residual in outcomes:
        if row.ledger is not None:
            _write_curve(outdir / f"curve_{_tag(row)}.csv", row)
        if first_residual is not None:
            _write_first_residual(
                outdir / f"first_ras_residual_{_tag(row)}.csv", first_residual)
    _write_summary(outdir / "summary.json", config, rows)
    return rows


def _write_results_csv(path, rows):
    lines = [",".join(ROW_COLUMNS)]
    for r in rows:
        lines.append(f"{r.method},{r.I},{r.k},{_fmt_beta(r.beta)},"
                     f"{r.outer_iters},{r.LS_total},"
                     f"{'true' if r.converged else 'false'}")
    path.write_text("\n".join(lines) + "\n")


def _write_iterations_csv(path, rows):
    lines = [",".join(ITER_COLUMNS)]
    for r in rows:
        if r.ledger is None:
            continue
        led = r.ledger
        for n in range(len(led)):
            lines.append(f"{r.method},{r.I},{r.k},{_fmt_beta(r.beta)},{n + 1},"
                         f"{led.ls_G[n]},{led.ls_in[n]},{led.ls_min[n]},"
                         f"{led.error[n]:.12e},{led.residual_norm[n]:.12e}")
    path.write_text("\n".join(lines) + "\n")


def _write_curve(path, row):
    lines = ["step,error,LS"]
    LS = row.ledger.LS
    for n in range(len(row.ledger)):
        lines.append(f"{n + 1},{row.ledger.error[n]:.12e},{LS[n]}")
    path.write_text("\n".join(lines) + "\n")


def _write_first_residual(path, residual):
    lines = ["index,residual"]
    for i, value in enumerate(residual):
        lines.append(f"{i},{value:.12e}")
    path.write_text("\n".join(lines) + "\n")


def _write_summary(path, config, rows):
    summary = {
        "config": dataclasses.asdict(config),
        "versions": {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "raspen": __version__,
        },
        "seed": config.seed,
        "rows": len(rows),
        "reasons": {_tag(r): r.reason for r in rows if r.reason},
        "wall_time_s": {_tag(r): round(r.wall_time, 3) for r in rows},
    }
    path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")


# ------------------------------------------------------------- comparisons

_REQUIRED_COLUMNS = ("method", "I", "k", "beta", "outer_iters", "LS_total")


def _rows_from_text(text, label):
    lines = [ln for ln in text.splitlines()
             if ln.strip() and not ln.lstrip().startswith("#")]
    reader = csv.DictReader(io.StringIO("\n".join(lines)))
    cols = reader.fieldnames or []
    missing = [c for c in _REQUIRED_COLUMNS if c not in cols]
    if missing:
        raise ValueError(
            f"{label}: schema mismatch, missing columns {', '.join(missing)}"
        )
    rows = []
    for rec in reader:
        rows.append({
            "method": rec["method"].strip(),
            "I": int(rec["I"]),
            "k": int(rec["k"]),
            "beta": float(rec["beta"]),
            "outer_iters": int(rec["outer_iters"]),
            "LS_total": int(rec["LS_total"]),
            "converged": rec.get("converged", "true").strip().lower() != "false",
        })
    return rows


def load_rows(source):
    """Read a results or reference CSV into a list of plain dicts.

    Lines starting with '#' are comments.  Required columns: method, I,
    k, beta, outer_iters, LS_total; converged is optional and defaults
    to true (reference tables list converged runs only).
    """
    return _rows_from_text(Path(source).read_text(), str(source))


@dataclass(frozen=True)
class CompareCell:
    method: str
    I: int
    k: int
    beta: float
    metric: str
    got: int
    want: int
    passed: bool

    def line(self):
        state = "PASS" if self.passed else "FAIL"
        return (f"{self.method} I={self.I} k={self.k} beta={self.beta:g} "
                f"{self.metric}: {self.got} vs {self.want} {state}")


@dataclass(frozen=True)
class CompareReport:
    """Pass/fail matrix of result rows against a reference table."""

    cells: tuple

    @property
    def all_pass(self):
        return all(c.passed for c in self.cells)

    @property
    def matched_rows(self):
        return len(self.cells) // 2

    def lines(self):
        return [c.line() for c in self.cells]


def _row_key(row):
    get = row.__getitem__ if isinstance(row, dict) else lambda k: getattr(row, k)
    return (get("method"), int(get("I")), int(get("k")), float(get("beta")))


def compare_table(rows, reference_table_file, outer_tol=1, ls_rtol=0.15):
    """Compare result rows with a reference table, cell by cell.

    Matching is on (method, I, k, beta).  outer_iters passes within
    +/- outer_tol, LS_total within a relative ls_rtol; a row that did
    not converge fails both cells.  The reference may be a path or the
    name of a shipped table.  Raises on schema mismatch or when nothing
    matches.
    """
    ref_rows = _rows_from_text(read_reference_table(reference_table_file),
                               str(reference_table_file))
    indexed = {}
    for row in rows:
        get = row.__getitem__ if isinstance(row, dict) else lambda k, r=row: getattr(r, k)
        indexed[_row_key(row)] = {
            "outer_iters": int(get("outer_iters")),
            "LS_total": int(get("LS_total")),
            "converged": bool(get("converged")),
        }
    cells = []
    for ref in ref_rows:
        key = _row_key(ref)
        got = indexed.get(key)
        if got is None:
            continue
        method, I, k, beta = key
        ok_outer = (got["converged"]
                    and abs(got["outer_iters"] - ref["outer_iters"]) <= outer_tol)
        cells.append(CompareCell(method, I, k, beta, "outer_iters",
                                 got["outer_iters"], ref["outer_iters"], ok_outer))
        ok_ls = (got["converged"]
                 and abs(got["LS_total"] - ref["LS_total"]) <= ls_rtol * ref["LS_total"])
        cells.append(CompareCell(method, I, k, beta, "LS_total",
                                 got["LS_total"], ref["LS_total"], ok_ls))
    if not cells:
        raise ValueError("no rows match the reference table "
                         "(check method/I/k/beta values)")
    return CompareReport(tuple(cells))


# -------------------------------------------------------- shipped tables

def _data_dir():
    return resources.files("raspen").joinpath("data")


def reference_table_names():
    """Names of the published reference tables shipped with the package."""
    return sorted(p.name for p in _data_dir().iterdir() if p.name.endswith(".csv"))


def read_reference_table(name):
    """Text of a shipped reference table, or of a user-supplied path."""
    path = Path(name)
    if path.exists():
        return path.read_text()
    entry = _data_dir().joinpath(name)
    if entry.is_file():
        return entry.read_text()
    names = ", ".join(reference_table_names())
    raise ValueError(f"unknown reference table {name!r} (shipped: {names})")
