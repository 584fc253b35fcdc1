"""Command line interface: ``esdg <verb> ...``.

Exit codes: 0 success, 2 invariant violation, 3 positivity abort,
4 configuration error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import config as cfgmod
from .config import ConfigError
from .euler import PositivityError
from .experiments import convergence_report, fmt, run_experiment, write_csv
from .geometry import (GeometryError, MeshError, curve_nodes, generate_box_mesh,
                       geometric_factors, load_mesh, metric_convergence_study, place_nodes,
                       verify_geometry)
from .operators import (BUILD_TOL, OperatorError, build_reference_operators, dump_operators,
                        verify_operators)
from .wadg import MassError, TEST_FUNCTIONS, projection_difference_study

EXIT_OK = 0
EXIT_INVARIANT = 2
EXIT_POSITIVITY = 3
EXIT_CONFIG = 4

GEOMETRY_TOL = 1e-10


def _print(msg: str = "") -> None:
    print(msg, flush=True)


def cmd_run(args) -> int:
    cfg = cfgmod.load_any(args.config)
    written = run_experiment(cfg, args.set, args.out, log=None if args.quiet else _print)
    for p in written:
        if not args.quiet:
            _print(f"wrote {p}")
    return EXIT_OK


def cmd_verify_operators(args) -> int:
    worst = 0.0
    rows = []
    for dim in args.dim:
        for N in args.degree:
            ops = build_reference_operators(dim, N, check=False)
            rep = verify_operators(ops)
            rows.append([dim, N, *rep.values()])
            worst = max(worst, max(rep.values()))
            _print(f"dim={dim} N={N} " + " ".join(f"{k}={v:.2e}" for k, v in rep.items()))
    if args.out:
        write_csv(args.out, ["dim", "N", *rep.keys()], rows)
    if worst > BUILD_TOL:
        _print(f"FAIL: max residual {worst:.3e} exceeds {BUILD_TOL:g}")
        return EXIT_INVARIANT
    _print(f"OK: max residual {worst:.3e}")
    return EXIT_OK


def _parse_period(text, dim):
    if text is None:
        return None
    vals = [float(v) for v in text.split(",")]
    if len(vals) != dim:
        raise ConfigError(f"--period needs {dim} comma-separated values")
    return vals


def cmd_verify_geometry(args) -> int:
    if args.mesh:
        mesh = load_mesh(args.mesh)
        if args.period:
            mesh = load_mesh(args.mesh, period=_parse_period(args.period, mesh.dim))
    else:
        dim = args.dim
        mesh = generate_box_mesh(dim, [(-1.0, 1.0)] * dim, [args.cells] * dim,
                                 periodic=not args.nonperiodic)
    ops = build_reference_operators(mesh.dim, args.degree)
    mesh = curve_nodes(place_nodes(mesh, args.degree), args.warp)
    geo = geometric_factors(mesh, ops, args.mode, check=False)
    rep = verify_geometry(mesh, geo, ops)
    rows = zip(rep["element_id"], rep["gcl_residual"], rep["min_J"], rep["h_k"])
    header = ["element_id", "gcl_residual", "min_J", "h_k"]
    if args.out:
        write_csv(args.out, header, rows)
    else:
        sys.stdout.write(",".join(header) + "\n")
        for r in rows:
            sys.stdout.write(",".join(fmt(v) for v in r) + "\n")
    msg = (f"mode={geo.mode} max_gcl={rep['max_gcl']:.3e} "
           f"max_opposition={rep['max_opposition']:.3e} min_J={rep['min_J_global']:.3e}")
    print(msg, file=sys.stderr)
    if rep["max_gcl"] > GEOMETRY_TOL or rep["max_opposition"] > GEOMETRY_TOL:
        print("FAIL: geometric invariant violated", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


def cmd_study(args) -> int:
    cells = [2 ** (i + 1) for i in range(args.levels)]
    out = Path(args.out) if args.out else None
    for N in args.degree:
        if args.which == "projection":
            rows = projection_difference_study(N, cells, args.function, args.warp or "cos2d")
            header = ["preset", "N", "h", "err_l2proj", "err_wadg", "err_diff"]
            data = [["projstudy2d", N, r["h"], r["err_l2proj"], r["err_wadg"], r["err_diff"]]
                    for r in rows]
        else:
            rows = metric_convergence_study(N, cells, warp=args.warp or "cos3d")
            header = ["preset", "N", "h", "err_curlNp1", "err_curlN"]
            data = [["geoterms3d", N, r["h"], r["err_curlNp1"], r["err_curlN"]] for r in rows]
        if out:
            write_csv(out / f"{args.which}_N{N}.csv", header, data)
        else:
            sys.stdout.write(",".join(header) + "\n")
            for r in data:
                sys.stdout.write(",".join(fmt(v) for v in r) + "\n")
    return EXIT_OK


def cmd_report(args) -> int:
    table = convergence_report(args.files, args.column, args.tolerance)
    _print(table.format())
    return EXIT_INVARIANT if (args.strict and table.flagged) else EXIT_OK


def cmd_dump_ops(args) -> int:
    ops = build_reference_operators(args.dim, args.degree)
    for p in dump_operators(ops, args.out):
        _print(f"wrote {p}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="esdg", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="verb", required=True)

    r = sub.add_parser("run", help="run a config file or a preset by name")
    r.add_argument("config", help="TOML file or preset name")
    r.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override a config value (repeatable)")
    r.add_argument("--out", help="output directory (default: output.directory)")
    r.add_argument("--quiet", action="store_true")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("verify-operators", help="check reference operator identities")
    v.add_argument("--dim", type=int, nargs="+", default=[2, 3])
    v.add_argument("--degree", type=int, nargs="+", default=[1, 2, 3, 4])
    v.add_argument("--out", help="CSV report path")
    v.set_defaults(func=cmd_verify_operators)

    g = sub.add_parser("verify-geometry", help="per-element GCL / Jacobian report")
    g.add_argument("mesh", nargs="?", help="MSH 2.2 file (default: box mesh of [-1,1]^d)")
    g.add_argument("--degree", type=int, default=3)
    g.add_argument("--warp", default="identity")
    g.add_argument("--mode", default=None,
                   choices=["exact2d", "cross", "curlN", "curlNp1"])
    g.add_argument("--period", help="comma-separated periods for an MSH mesh")
    g.add_argument("--dim", type=int, default=3)
    g.add_argument("--cells", type=int, default=2)
    g.add_argument("--nonperiodic", action="store_true")
    g.add_argument("--out", help="CSV output path (default: stdout)")
    g.set_defaults(func=cmd_verify_geometry)

    s = sub.add_parser("study", help="projection or metric-term convergence study")
    s.add_argument("which", choices=["projection", "geoterms"])
    s.add_argument("--degree", type=int, nargs="+", default=[4])
    s.add_argument("--levels", type=int, default=4, help="meshes with 2, 4, ... cells per axis")
    s.add_argument("--function", default="smooth", choices=sorted(TEST_FUNCTIONS))
    s.add_argument("--warp", default=None)
    s.add_argument("--out", help="output directory (default: stdout)")
    s.set_defaults(func=cmd_study)

    rp = sub.add_parser("report", help="convergence rates from CSV files")
    rp.add_argument("files", nargs="+")
    rp.add_argument("--column", default=None)
    rp.add_argument("--tolerance", type=float, default=0.4)
    rp.add_argument("--strict", action="store_true", help="exit 2 when a rate is flagged")
    rp.set_defaults(func=cmd_report)

    d = sub.add_parser("dump-ops", help="write reference matrices as CSV")
    d.add_argument("--dim", type=int, required=True)
    d.add_argument("--degree", type=int, required=True)
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_dump_ops)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PositivityError as exc:
        print(f"positivity abort: {exc}", file=sys.stderr)
        return EXIT_POSITIVITY
    except (ConfigError, MeshError, FileNotFoundError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (GeometryError, OperatorError, MassError) as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
