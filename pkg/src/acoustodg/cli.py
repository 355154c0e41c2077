"""Command-line front end: ``acoustodg {solve,spurious,convergence,bench}``.

Options may also come from a ``key = value`` config file given with
``--config``; keys are option names without the leading dashes (``rect = 1
1.1 8``, ``presets = raw4,plus1-4``).  Command-line flags override the file.

Exit codes: 0 success, 1 numerical failure, 2 usage or input error.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import ProblemConfig, benchmark, build_mesh, convergence_study, format_table, \
    solve_problem, spurious_scan
from .coefficients import BUILTIN_DENSITIES, DensityPositivityError, make_density
from .eigensolve import EigensolverError
from .mesh import MeshError
from .plotting import error_curves_svg

__all__ = ["main", "build_parser", "read_config_file"]

EXIT_OK, EXIT_NUMERICAL, EXIT_USAGE = 0, 1, 2

DENSITY_HELP = (
    "density: built-in id (" + ", ".join(sorted(BUILTIN_DENSITIES)) + ") or an expression "
    "in x, y with + - * / ^, sin, cos, exp, pi, e, e.g. '1/(x^2+y^2+1)'")


class UsageError(Exception):
    pass


def read_config_file(path) -> list[str]:
    """Translate ``key = value`` lines into command-line tokens."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc.strerror}") from None
    tokens = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise UsageError(f"{path}:{lineno}: empty key")
        tokens.append("--" + key.replace("_", "-"))
        tokens.extend(value.split())
    return tokens


def _problem_args(p: argparse.ArgumentParser, multi_k: bool):
    g = p.add_argument_group("problem")
    g.add_argument("--config", metavar="FILE", help="key = value config file")
    g.add_argument("--formulation", choices=["displacement", "pressure"],
                   default="displacement")
    g.add_argument("--eps", type=int, choices=[-1, 0, 1], default=1,
                   help="1 symmetric (SIP), 0 incomplete (IIP), -1 nonsymmetric (NIP)")
    if multi_k:
        g.add_argument("--k", type=int, nargs="+", default=[1], help="polynomial degree(s)")
    else:
        g.add_argument("--k", type=int, default=1, help="polynomial degree")
    m = g.add_mutually_exclusive_group()
    m.add_argument("--rect", nargs=3, metavar=("A", "B", "N"),
                   help="rectangle (0,A)x(0,B) with N subdivisions per side")
    m.add_argument("--mesh-file", metavar="PATH", help="mesh in 'trimesh 1' format")
    g.add_argument("--diag", choices=["right", "left"], default="right",
                   help="diagonal pattern of rectangle meshes")
    g.add_argument("--density", default="const1", help=DENSITY_HELP)
    g.add_argument("--c", type=float, default=1.0, help="sound speed")
    g.add_argument("--preset", default="raw",
                   help="penalty preset: raw[N], sum[N], max[N], plus1[-N] or Nrhobar; "
                        "a_S = value * k^2")
    g.add_argument("--a", type=float, default=10.0,
                   help="base multiplier for presets without a number")
    g.add_argument("--boundary-mode", choices=["weak-normal", "interior-only"],
                   default="weak-normal")
    g.add_argument("--nev", type=int, default=10, help="number of eigenvalues")
    g.add_argument("--solver", choices=["auto", "dense", "arnoldi"], default="auto")
    g.add_argument("--sigma", type=float, default=1.5,
                   help="shift; eigenvalues above it are reported")
    g.add_argument("--tol", type=float, default=1e-9, help="Arnoldi tolerance")
    g.add_argument("--seed", type=int, default=0, help="Arnoldi start-vector seed")
    g.add_argument("--quad-degree", type=int, default=None)
    o = p.add_argument_group("output")
    o.add_argument("--out", default=".", help="output directory")
    o.add_argument("--no-files", action="store_true", help="print only, write no files")
    o.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="acoustodg",
        description="Interior-penalty DG eigensolver for acoustic vibrations "
                    "(displacement and pressure formulations).",
        epilog="Environment: ACOUSTODG_THREADS caps internal parallelism.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve one eigenproblem")
    _problem_args(s, multi_k=False)
    s.add_argument("--export-modes", type=int, default=0, metavar="M",
                   help="also write coefficient/sample CSVs of the first M modes")

    s = sub.add_parser("spurious", help="spurious-eigenvalue scan over presets and degrees")
    _problem_args(s, multi_k=True)
    s.add_argument("--presets", default="raw4,plus1-4,plus1-8,plus1-10",
                   help="comma-separated preset ids")
    s.add_argument("--reference", choices=["auto", "analytic", "trusted"], default="auto")
    s.add_argument("--min-correlation", type=float, default=0.8)
    s.add_argument("--rtol", type=float, default=0.01,
                   help="relative tolerance when matching without eigenvectors")

    s = sub.add_parser("convergence", help="convergence orders over mesh levels")
    _problem_args(s, multi_k=True)
    s.add_argument("--N", type=int, nargs="+", default=[10, 20, 30, 40], dest="levels")
    s.add_argument("--count", type=int, default=4, help="eigenvalues per table")

    s = sub.add_parser("bench", help="cost benchmark of both formulations")
    _problem_args(s, multi_k=False)
    s.add_argument("--N", type=int, nargs="+", default=[4, 8, 16], dest="levels")
    s.add_argument("--repeats", type=int, default=3)
    return ap


def _config(ns, k=None) -> ProblemConfig:
    if ns.mesh_file:
        if not Path(ns.mesh_file).is_file():
            raise UsageError(f"mesh file not found: {ns.mesh_file}")
        mesh = f"file {ns.mesh_file}"
    elif ns.rect:
        try:
            a, b, n = float(ns.rect[0]), float(ns.rect[1]), int(ns.rect[2])
        except ValueError:
            raise UsageError(f"--rect needs A B N numbers, got {' '.join(ns.rect)}") from None
        mesh = f"rect {a!r} {b!r} {n} {ns.diag}"
    else:
        mesh = f"rect 1.0 1.0 8 {ns.diag}"
    cfg = ProblemConfig(mesh=mesh, formulation=ns.formulation,
                        k=ns.k if k is None else k, eps=ns.eps, density=ns.density,
                        c=ns.c, preset=ns.preset, a=ns.a, boundary_mode=ns.boundary_mode,
                        nev=ns.nev, solver=ns.solver, sigma=ns.sigma, tol=ns.tol,
                        seed=ns.seed, quad_degree=ns.quad_degree)
    # validate inputs before any numerical work
    build_mesh(cfg.mesh)
    make_density(cfg.density, cfg.c)
    return cfg


class _Writer:
    def __init__(self, ns):
        self.enabled = not ns.no_files
        self.dir = Path(ns.out)
        self.stamp = time.strftime("%Y%m%d-%H%M%S")
        self.cmd = ns.command
        self.written = []

    def write(self, ext: str, text: str, tag: str = ""):
        if not self.enabled:
            return None
        self.dir.mkdir(parents=True, exist_ok=True)
        path = self.dir / f"{self.cmd}-{self.stamp}{tag}.{ext}"
        path.write_text(text)
        self.written.append(path)
        return path


def _cmd_solve(ns, w: _Writer):
    from .analysis import _dumps
    from .postprocess import DgFunction, coefficients_csv, samples_csv

    cfg = _config(ns)
    sol = solve_problem(cfg, vectors=ns.export_modes > 0)
    s = sol.spectrum
    head = ["index", "lambda", "imag", "omega2", "residual"]
    body = [[str(i), f"{v.real:.8f}", f"{v.imag:.3e}", f"{v.real - 1:.8f}", f"{r:.2e}"]
            for i, (v, r) in enumerate(zip(s.values, s.residuals))]
    print(f"# {cfg.formulation}, k={cfg.k}, eps={cfg.eps}, a_S={sol.penalty:.6g}, "
          f"ndof={sol.space.ndof}, path={s.path}")
    print(format_table(head, body))
    if s.partial:
        print(f"# partial: {len(s)} of {cfg.nev} eigenvalues found", file=sys.stderr)
    w.write("csv", s.to_csv())
    w.write("json", _dumps(sol.to_dict()))
    for i in range(min(ns.export_modes, len(s))):
        f = DgFunction(sol.space, s.vectors[:, i])
        w.write("csv", coefficients_csv(f), tag=f"-mode{i}-coeffs")
        w.write("csv", samples_csv(f), tag=f"-mode{i}-samples")


def _cmd_spurious(ns, w: _Writer):
    cfg = _config(ns, k=ns.k[0])
    presets = [p.strip() for p in ns.presets.split(",") if p.strip()]
    if not presets:
        raise UsageError("--presets is empty")
    rep = spurious_scan(cfg, presets, ns.k, nev=ns.nev, reference=ns.reference,
                        min_correlation=ns.min_correlation, rtol=ns.rtol)
    print(rep.to_text(), end="")
    w.write("json", rep.to_json())
    w.write("csv", rep.to_csv())


def _cmd_convergence(ns, w: _Writer):
    reports = []
    for k in ns.k:
        cfg = _config(ns, k=k)
        rep = convergence_study(cfg, ns.levels, nev=ns.count)
        reports.append(rep)
        print(f"k = {k}")
        print(rep.to_text(), end="")
        tag = f"-k{k}" if len(ns.k) > 1 else ""
        w.write("json", rep.to_json(), tag)
        w.write("csv", rep.to_csv(), tag)
        w.write("csv", rep.error_curve_csv(), tag + "-errors")
        curves = [{"label": f"lambda_{c['index'] + 1}", "dofs": c["dofs"],
                   "errors": c["errors"]} for c in rep.error_curves()]
        try:
            order = 2 * k if cfg.eps == 1 else None
            svg = error_curves_svg(curves, f"Error curves, k={k}, eps={cfg.eps}", order)
        except ValueError:
            svg = None
        if svg:
            w.write("svg", svg, tag)


def _cmd_bench(ns, w: _Writer):
    cfg = _config(ns)
    rep = benchmark(cfg, ns.levels, ns.repeats)
    print(rep.to_text(), end="")
    w.write("json", rep.to_json())
    w.write("csv", rep.to_csv())


_COMMANDS = {"solve": _cmd_solve, "spurious": _cmd_spurious,
             "convergence": _cmd_convergence, "bench": _cmd_bench}


def _expand_config(argv):
    if "--config" not in argv:
        return argv
    i = argv.index("--config")
    if i + 1 >= len(argv):
        raise UsageError("--config needs a file name")
    path = argv[i + 1]
    rest = argv[:i] + argv[i + 2:]
    if not rest:
        raise UsageError("a command is required before --config")
    return rest[:1] + read_config_file(path) + rest[1:]


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _expand_config(argv)
    except UsageError as exc:
        print(f"acoustodg: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    w = _Writer(ns)
    try:
        _COMMANDS[ns.command](ns, w)
    except (UsageError, MeshError, FileNotFoundError) as exc:
        print(f"acoustodg: input error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (EigensolverError, DensityPositivityError, np.linalg.LinAlgError,
            RuntimeError, FloatingPointError) as exc:
        print(f"acoustodg: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"acoustodg: invalid argument: {exc}", file=sys.stderr)
        return EXIT_USAGE
    for p in w.written:
        print(f"# wrote {p}", file=sys.stderr)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
