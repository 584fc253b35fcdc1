"""Configuration-driven experiments, CSV output and convergence reports."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .config import ConfigError, ExperimentConfig
from .euler import PositivityError
from .geometry import (curve_nodes, generate_box_mesh, generate_quasi_uniform_mesh, load_mesh,
                       metric_convergence_study, place_nodes)
from .problems import EXACT, get_problem
from .solver import (build_discretization, diagnostic_columns, l2_error, project_initial,
                     run)
from .wadg import projection_difference_study

SNAPSHOT_VERSION = 1


def fmt(x) -> str:
    """17 significant digits for floats, plain text otherwise."""
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def read_csv(path) -> list:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------------------
# meshes and runs

def box_cells(config: ExperimentConfig, h: float) -> list:
    return [max(1, int(round((hi - lo) / h))) for lo, hi in config.mesh.extents]


def level_mesh(config: ExperimentConfig, level: int, N: int):
    """Curved degree-N mesh for one refinement level."""
    m = config.mesh
    h = m.levels[level]
    period = [(hi - lo) if m.periodic else 0.0 for lo, hi in m.extents]
    if m.source == "box":
        mesh = generate_box_mesh(m.dim, m.extents, box_cells(config, h), m.periodic)
    elif m.source == "quasi_uniform":
        mesh = generate_quasi_uniform_mesh(m.extents, h, m.periodic)
    else:
        mesh = load_mesh(cfgmod.resolve_file(config, m.files[level]), period=period)
        if mesh.dim != m.dim:
            raise ConfigError(f"mesh file '{m.files[level]}' is {mesh.dim}D, config says {m.dim}D")
    return curve_nodes(place_nodes(mesh, N), m.warp)


def problem(config: ExperimentConfig, t: float = 0.0):
    """Initial condition (or exact solution at time t) as ``f(x)``."""
    fun = get_problem(config.physics.initial_condition)
    kw = dict(config.physics.params)
    return lambda x: fun(x, t, gamma=config.physics.gamma, **kw)


@dataclass
class LevelResult:
    N: int
    h: float
    mesh_size: float
    dof: int
    steps: int
    dt: float
    time: float
    errors: np.ndarray | None
    records: list = field(repr=False, default_factory=list)
    u: np.ndarray | None = field(repr=False, default=None)


def run_level(config: ExperimentConfig, N: int, level: int, callback=None) -> LevelResult:
    """Build, initialize and integrate one (degree, level) pair."""
    from .geometry import mesh_size

    rc = config.run.solver_config(N, config.physics.gamma, config.output.interval)
    mesh = level_mesh(config, level, N)
    disc = build_discretization(mesh, config=rc)
    u0 = project_initial(disc, problem(config))
    try:
        res = run(disc, u0, rc, callback=callback)
    except PositivityError as exc:
        raise PositivityError(f"{config.name} (N={N}, level {level}): {exc}") from None
    errors = None
    if config.physics.initial_condition in EXACT:
        errors = l2_error(disc, res.u, problem(config, res.time))
    return LevelResult(N, config.mesh.levels[level], mesh_size(disc.geo), mesh.K * disc.ops.Np,
                       res.steps, res.dt, res.time, errors, res.records, res.u)


def save_snapshot(path, config: ExperimentConfig, result: LevelResult) -> Path:
    """Modal coefficients ``u[k, field, mode]`` plus run metadata (npz)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez(path, format_version=SNAPSHOT_VERSION, layout="element,field,mode",
             preset=config.name, N=result.N, dim=config.mesh.dim, h=result.h,
             time=result.time, gamma=config.physics.gamma, u=result.u)
    return path


def load_snapshot(path) -> dict:
    with np.load(path) as data:
        out = {k: data[k] for k in data.files}
    version = int(out.get("format_version", -1))
    if version != SNAPSHOT_VERSION:
        raise ValueError(f"unsupported snapshot version {version}")
    return out


# ---------------------------------------------------------------------------
# convergence tables

def rates(h, err) -> list:
    """log(e_i/e_{i+1}) / log(h_i/h_{i+1}); the first entry is None."""
    out = [None]
    for i in range(1, len(h)):
        if err[i] > 0 and err[i - 1] > 0 and h[i] != h[i - 1]:
            out.append(math.log(err[i - 1] / err[i]) / math.log(h[i - 1] / h[i]))
        else:
            out.append(None)
    return out


def field_names(dim: int) -> list:
    return ["rho", *[f"m{i + 1}" for i in range(dim)], "E"]


def convergence_header(dim: int) -> list:
    return ["preset", "N", "h", "mesh_size", "dof",
            *[f"err_{f}" for f in field_names(dim)], "err_total", "rate"]


def convergence_rows(name: str, results) -> list:
    rows = []
    by_N = {}
    for r in results:
        by_N.setdefault(r.N, []).append(r)
    for N, group in by_N.items():
        totals = [float(np.sqrt(np.sum(r.errors ** 2))) for r in group]
        rs = rates([r.h for r in group], totals)
        for r, tot, rate in zip(group, totals, rs):
            rows.append([name, N, float(r.h), float(r.mesh_size), r.dof,
                         *[float(e) for e in r.errors], tot, "" if rate is None else rate])
    return rows


def expected_order(preset: str, N: int) -> int:
    """Asymptotic rate expected for each shipped study."""
    if preset in ("geoterms3d", "projstudy2d"):
        return N + 2
    return N + 1


@dataclass
class ConvergenceTable:
    """Rates of one error column, grouped by degree.

    ``rows`` hold N, h, dof (if known), error and rate; ``flagged`` lists
    (N, h, rate) entries below the expected order minus ``tolerance``.
    """

    preset: str
    column: str
    rows: list
    flagged: list
    tolerance: float = 0.4

    def format(self) -> str:
        lines = [f"preset {self.preset}, column {self.column}",
                 f"{'N':>3} {'h':>12} {'dof':>9} {'error':>12} {'rate':>7}"]
        for r in self.rows:
            rate = "" if r["rate"] is None else f"{r['rate']:.2f}"
            lines.append(f"{r['N']:>3} {r['h']:>12.6g} {r['dof']:>9} {r['error']:>12.4e} {rate:>7}")
        for N, h, rate in self.flagged:
            lines.append(f"FLAG: N={N} rate {rate:.2f} at h={h:g} is below "
                         f"{expected_order(self.preset, N) - self.tolerance:.1f}")
        return "\n".join(lines)


def convergence_report(files, column: str | None = None, tolerance: float = 0.4
                       ) -> ConvergenceTable:
    """Recompute rates from one or more convergence or study CSV files."""
    rows = []
    for f in files:
        rows += read_csv(f)
    if not rows:
        raise ConfigError("no rows found in the given files")
    presets = sorted({r.get("preset", "") for r in rows})
    if len(presets) != 1:
        raise ConfigError(f"files mix presets {presets}; report one preset at a time")
    preset = presets[0]
    errs = [c for c in rows[0] if c.startswith("err_")]
    if column is None:
        for c in ("err_total", "err_diff", "err_curlNp1"):
            if c in errs:
                column = c
                break
        else:
            column = errs[0] if errs else None
    if column not in rows[0]:
        raise ConfigError(f"column '{column}' not present; have {errs}")
    groups = {}
    for r in rows:
        groups.setdefault(int(r["N"]), []).append(r)
    out, flagged = [], []
    for N in sorted(groups):
        g = sorted(groups[N], key=lambda r: -float(r["h"]))
        hs = [float(r["h"]) for r in g]
        es = [float(r[column]) for r in g]
        for r, h, e, rate in zip(g, hs, es, rates(hs, es)):
            dof = int(r["dof"]) if r.get("dof") else ""
            out.append({"N": N, "h": h, "dof": dof, "error": e, "rate": rate})
            if rate is not None and rate < expected_order(preset, N) - tolerance:
                flagged.append((N, h, rate))
    return ConvergenceTable(preset, column, out, flagged, tolerance)


# ---------------------------------------------------------------------------
# driver

def _outdir(config: ExperimentConfig, outdir) -> Path:
    return Path(outdir) if outdir is not None else Path(config.output.directory)


def run_experiment(config: ExperimentConfig, overrides=None, outdir=None, log=None) -> list:
    """Run a configured experiment and write its CSV files.

    Returns the list of written paths.
    """
    if isinstance(config, (str, Path)):
        config = cfgmod.load_any(str(config))
    config = cfgmod.apply_overrides(config, overrides) if overrides else config
    out = _outdir(config, outdir)
    log = log or (lambda msg: None)
    kind = config.run.kind
    name = config.name
    written = []
    if kind == "projection_study":
        for N in config.run.degrees:
            cells = [box_cells(config, h)[0] for h in config.mesh.levels]
            rows = projection_difference_study(N, cells, config.physics.initial_condition,
                                               config.mesh.warp)
            written.append(write_csv(out / f"{name}_N{N}_projection.csv",
                                     ["preset", "N", "h", "err_l2proj", "err_wadg", "err_diff"],
                                     [[name, N, r["h"], r["err_l2proj"], r["err_wadg"],
                                       r["err_diff"]] for r in rows]))
            log(f"wrote {written[-1]}")
        return written
    if kind == "geoterms_study":
        if config.mesh.dim != 3:
            raise ConfigError("geoterms_study needs a 3D mesh")
        for N in config.run.degrees:
            cells = [box_cells(config, h)[0] for h in config.mesh.levels]
            rows = metric_convergence_study(N, cells, ("curlNp1", "curlN"), config.mesh.warp)
            written.append(write_csv(out / f"{name}_N{N}_geoterms.csv",
                                     ["preset", "N", "h", "err_curlNp1", "err_curlN"],
                                     [[name, N, r["h"], r["err_curlNp1"], r["err_curlN"]]
                                      for r in rows]))
            log(f"wrote {written[-1]}")
        return written

    if kind == "convergence" and config.physics.initial_condition not in EXACT:
        raise ConfigError(f"convergence needs an exact solution; "
                          f"'{config.physics.initial_condition}' has none")
    results = []
    summary = []
    for N in config.run.degrees:
        for level in range(len(config.mesh.levels)):
            res = run_level(config, N, level)
            tag = f"{name}_N{N}_L{level}"
            written.append(write_csv(out / f"{tag}_diagnostics.csv",
                                     diagnostic_columns(config.mesh.dim),
                                     [r.as_row() for r in res.records]))
            if config.output.snapshot:
                written.append(save_snapshot(out / f"{tag}_snapshot.npz", config, res))
            tot = "" if res.errors is None else float(np.sqrt(np.sum(res.errors ** 2)))
            summary.append([name, N, float(res.h), float(res.mesh_size), res.dof, res.steps,
                            float(res.dt), float(res.time), tot])
            log(f"N={N} h={res.h:g}: {res.steps} steps" +
                ("" if tot == "" else f", L2 error {tot:.6e}"))
            results.append(res)
    written.append(write_csv(out / f"{name}_summary.csv",
                             ["preset", "N", "h", "mesh_size", "dof", "steps", "dt", "time",
                              "err_total"], summary))
    if kind == "convergence":
        written.append(write_csv(out / f"{name}_convergence.csv",
                                 convergence_header(config.mesh.dim),
                                 convergence_rows(name, results)))
    return written
