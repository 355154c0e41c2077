"""Experiment harnesses: single solves, spurious scans, convergence, benchmark.

Eigenvalues are handled as the shifted ``lam = 1 + omega^2``; reports carry
both ``lam`` and ``omega2 = Re(lam) - 1`` (the squared frequency, which is
what published eigenvalue tables list).
"""
from __future__ import annotations

import dataclasses
import json
import logging
import math
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.optimize import minimize_scalar

from .assembly import (
    SCALAR,
    VECTOR2,
    DgFormConfig,
    DgSpace,
    assemble_mass_disp,
    assemble_mass_pressure,
    assemble_stiffness_disp,
    assemble_stiffness_pressure,
    thread_count,
)
from .coefficients import CoefficientField, DensityBounds, density_bounds, make_density, \
    stabilization_preset
from .eigensolve import Spectrum, dense_generalized_eig, filter_physical, shift_invert_arnoldi
from .mesh import TriMesh, generate_rect_mesh, read_mesh

__all__ = [
    "FORMULATIONS",
    "ProblemConfig",
    "Solution",
    "build_mesh",
    "solve_problem",
    "Reference",
    "trusted_reference",
    "analytic_reference",
    "match_to_reference",
    "SpuriousReport",
    "spurious_scan",
    "ConvergenceFit",
    "fit_convergence",
    "ConvergenceReport",
    "convergence_study",
    "BenchReport",
    "benchmark",
    "format_table",
]

log = logging.getLogger(__name__)

FORMULATIONS = ("displacement", "pressure")
SOLVERS = ("auto", "dense", "arnoldi")
AUTO_DENSE_LIMIT = 1500


# ------------------------------------------------------------------- meshes

_RECT = re.compile(r"rect\s+(\S+)\s+(\S+)\s+(\d+)(?:\s+(left|right))?\s*$")


@lru_cache(maxsize=32)
def build_mesh(spec: str) -> TriMesh:
    """``"rect a b n [left|right]"`` or ``"file <path>"``."""
    s = spec.strip()
    m = _RECT.match(s)
    if m:
        return generate_rect_mesh(float(m.group(1)), float(m.group(2)), int(m.group(3)),
                                  m.group(4) or "right")
    if s.startswith("file "):
        return read_mesh(s[5:].strip())
    raise ValueError(f"bad mesh spec {spec!r}; use 'rect a b n' or 'file <path>'")


def rect_dims(spec: str):
    """``(a, b, n)`` of a rectangle spec, or ``None``."""
    m = _RECT.match(spec.strip())
    if not m:
        return None
    return float(m.group(1)), float(m.group(2)), int(m.group(3))


# ------------------------------------------------------------------ problem

@dataclass(frozen=True)
class ProblemConfig:
    """Everything that defines one discrete eigenproblem and its solve."""

    mesh: str = "rect 1 1 8"
    formulation: str = "displacement"
    k: int = 1
    eps: int = 1
    density: str = "const1"
    c: float = 1.0
    preset: str = "raw"
    a: float | None = 10.0
    boundary_mode: str = "weak-normal"
    nev: int = 10
    solver: str = "auto"
    sigma: float = 1.5
    tol: float = 1e-9
    seed: int = 0
    quad_degree: int | None = None

    def __post_init__(self):
        if self.formulation not in FORMULATIONS:
            raise ValueError(f"formulation must be one of {FORMULATIONS}, got {self.formulation!r}")
        if self.solver not in SOLVERS:
            raise ValueError(f"solver must be one of {SOLVERS}, got {self.solver!r}")
        if self.nev < 1:
            raise ValueError("nev must be >= 1")
        if self.sigma <= 1.0:
            raise ValueError("sigma must lie above the lam = 1 cluster (sigma > 1)")

    def replace(self, **kw) -> "ProblemConfig":
        return dataclasses.replace(self, **kw)

    def with_level(self, n: int) -> "ProblemConfig":
        """Same rectangle with ``n`` subdivisions per side."""
        dims = rect_dims(self.mesh)
        if dims is None:
            raise ValueError("mesh levels need a 'rect a b n' mesh spec")
        a, b, _ = dims
        diag = self.mesh.split()[4] if len(self.mesh.split()) > 4 else "right"
        return self.replace(mesh=f"rect {a:g} {b:g} {int(n)} {diag}")

    @property
    def arity(self) -> int:
        return VECTOR2 if self.formulation == "displacement" else SCALAR

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class Solution:
    config: ProblemConfig
    space: DgSpace
    coeff: CoefficientField
    bounds: DensityBounds
    penalty: float
    K: sp.csr_matrix
    M: sp.csr_matrix
    spectrum: Spectrum
    assembly_seconds: float
    solve_seconds: float

    @property
    def omega2(self) -> np.ndarray:
        return self.spectrum.omega2

    def to_dict(self) -> dict:
        s = self.spectrum
        return {
            "config": self.config.to_dict(),
            "penalty": self.penalty,
            "density_bounds": [self.bounds.lower, self.bounds.upper],
            "ndof": self.space.ndof,
            "path": s.path,
            "partial": bool(s.partial),
            "eigenvalues": [
                {"index": i, "re": float(v.real), "im": float(v.imag),
                 "omega2": float(v.real - 1.0), "multiplicity": int(m),
                 "residual": float(r)}
                for i, (v, m, r) in enumerate(zip(s.values, s.multiplicity, s.residuals))
            ],
        }


def assemble(cfg: ProblemConfig, mesh: TriMesh | None = None):
    """``(space, coeff, bounds, penalty, K, M)`` for a configuration."""
    mesh = build_mesh(cfg.mesh) if mesh is None else mesh
    coeff = make_density(cfg.density, cfg.c)
    bounds = density_bounds(coeff, mesh.bbox())
    penalty = stabilization_preset(cfg.preset, bounds, cfg.k, cfg.a)
    form = DgFormConfig(penalty, cfg.eps, cfg.boundary_mode, cfg.quad_degree)
    space = DgSpace(mesh, cfg.k, cfg.arity)
    if cfg.formulation == "displacement":
        K = assemble_stiffness_disp(space, coeff, form)
        M = assemble_mass_disp(space, coeff, cfg.quad_degree)
    else:
        K = assemble_stiffness_pressure(space, coeff, form)
        M = assemble_mass_pressure(space, coeff, cfg.quad_degree)
    return space, coeff, bounds, penalty, K, M


def window(s: Spectrum, sigma: float, count: int) -> Spectrum:
    """Physical eigenvalues above ``sigma`` (the first ``count``)."""
    below = int(np.count_nonzero(s.values.real <= sigma))
    f = filter_physical(s, count=below + count)
    f = f.take(np.flatnonzero(f.values.real > sigma))
    out = f.take(np.arange(min(count, len(f))))
    out.partial = len(out) < count
    return out


def resolve_solver(cfg: ProblemConfig, ndof: int) -> str:
    if cfg.solver != "auto":
        return cfg.solver
    return "dense" if ndof <= AUTO_DENSE_LIMIT else "arnoldi"


def run_solver(cfg: ProblemConfig, K, M, block_size: int, vectors: bool = True) -> Spectrum:
    path = resolve_solver(cfg, K.shape[0])
    if path == "dense":
        # vectors are always computed so that every entry carries a residual
        s = dense_generalized_eig(K, M, block_size, vectors=True)
    else:
        s = shift_invert_arnoldi(K, M, cfg.sigma, nev=cfg.nev + 4, tol=cfg.tol,
                                 which="above", seed=cfg.seed)
    out = window(s, cfg.sigma, cfg.nev)
    if not vectors:
        out.vectors = None
    return out


def solve_problem(cfg: ProblemConfig, vectors: bool = True) -> Solution:
    """Assemble and solve; the spectrum holds the first ``nev`` physical
    eigenvalues above ``sigma`` sorted by real part."""
    t0 = time.perf_counter()
    space, coeff, bounds, penalty, K, M = assemble(cfg)
    t1 = time.perf_counter()
    s = run_solver(cfg, K, M, space.block_size, vectors)
    t2 = time.perf_counter()
    if s.partial:
        log.warning("only %d of %d requested eigenvalues found above sigma=%g",
                    len(s), cfg.nev, cfg.sigma)
    return Solution(cfg, space, coeff, bounds, penalty, K, M, s, t1 - t0, t2 - t1)


# ------------------------------------------------------------ spurious scan

@dataclass
class Reference:
    """Reference eigenvalues ``lam`` and (optionally) their eigenvectors."""

    values: np.ndarray
    source: str
    space: DgSpace | None = None
    vectors: np.ndarray | None = None
    coeff: CoefficientField | None = None


def trusted_reference(cfg: ProblemConfig, count: int, k_ref: int = 3,
                      preset: str = "plus1-10") -> Reference:
    """Same mesh, degree ``k_ref``, SIP, safe penalty."""
    rc = cfg.replace(k=k_ref, eps=1, preset=preset, nev=count)
    try:
        sol = solve_problem(rc)
    except Exception as exc:
        raise RuntimeError(f"reference run failed: {exc}") from exc
    return Reference(sol.spectrum.values.real.copy(),
                     f"trusted k={k_ref} eps=+1 preset={preset}",
                     sol.space, np.real_if_close(sol.spectrum.vectors), sol.coeff)


def analytic_reference(cfg: ProblemConfig, count: int, k_ref: int = 3) -> Reference:
    """Rigid-wall rectangle with constant coefficients:
    ``lam = 1 + c^2 pi^2 (m^2/a^2 + n^2/b^2)``, modes ``cos cos`` (pressure)
    or their gradients (displacement), projected on the same mesh."""
    from .postprocess import project

    mesh = build_mesh(cfg.mesh)
    coeff = make_density(cfg.density, cfg.c)
    b = density_bounds(coeff, mesh.bbox())
    if not math.isclose(b.lower, b.upper, rel_tol=1e-12):
        raise ValueError("analytic reference needs a constant density")
    x0, y0, x1, y1 = mesh.bbox()
    A, B = x1 - x0, y1 - y0
    if not math.isclose(mesh.areas.sum(), A * B, rel_tol=1e-12):
        raise ValueError("analytic reference needs a rectangular domain")
    top = int(math.ceil(math.sqrt(count))) + 2
    modes = sorted(((m / A) ** 2 + (n / B) ** 2, m, n)
                   for m in range(4 * top) for n in range(4 * top) if m or n)
    modes = modes[:count]
    vals = np.array([1.0 + cfg.c ** 2 * math.pi ** 2 * q for q, _, _ in modes])
    space = DgSpace(mesh, max(k_ref, cfg.k), cfg.arity)
    cols = []
    for _, m, n in modes:
        km, kn = m * math.pi / A, n * math.pi / B
        if cfg.formulation == "pressure":
            f = project(space, lambda x, y, km=km, kn=kn:
                        np.cos(km * (x - x0)) * np.cos(kn * (y - y0)))
        else:
            f = project(space, lambda x, y, km=km, kn=kn: (
                -km * np.sin(km * (x - x0)) * np.cos(kn * (y - y0)),
                -kn * np.cos(km * (x - x0)) * np.sin(kn * (y - y0))))
        cols.append(f.coeffs)
    return Reference(vals, "analytic", space, np.column_stack(cols), coeff)


def _mass(space: DgSpace, coeff: CoefficientField):
    return (assemble_mass_disp if space.arity == VECTOR2 else assemble_mass_pressure)(
        space, coeff)


def _embed_columns(X, space: DgSpace, degree: int):
    if degree == space.degree:
        return X
    T, a, n = space.mesh.n_triangles, space.arity, space.n_basis
    n2 = DgSpace(space.mesh, degree, a).n_basis
    Y = np.zeros((T, a, n2, X.shape[1]), dtype=X.dtype)
    Y[:, :, :n, :] = X.reshape(T, a, n, -1)
    return Y.reshape(T * a * n2, -1)


def _clusters(values, rtol=1e-4):
    groups, cur = [], [0]
    for i in range(1, len(values)):
        if abs(values[i] - values[cur[-1]]) <= rtol * max(abs(values[i]), 1.0):
            cur.append(i)
        else:
            groups.append(cur)
            cur = [i]
    groups.append(cur)
    return groups


def match_to_reference(spec: Spectrum, space: DgSpace | None, ref: Reference,
                       min_correlation: float = 0.8, rtol: float = 0.01) -> list[dict]:
    """One-to-one, multiplicity-aware matching of ``spec`` against ``ref``.

    With eigenvectors on both sides, each computed mode is scored by the
    fraction of its weighted norm captured by a cluster of (numerically)
    equal reference eigenvalues; pairs are assigned greedily by decreasing
    score and a mode is flagged when it is unassigned or its score is below
    ``min_correlation``.  Without eigenvectors, sorted greedy matching on
    ``omega^2`` with relative tolerance ``rtol`` is used.
    """
    om = spec.values.real - 1.0
    rom = np.asarray(ref.values, dtype=float) - 1.0
    n = len(om)
    mult = spec.multiplicity
    rows = [dict(index=i, re=float(spec.values[i].real), im=float(spec.values[i].imag),
                 omega2=float(om[i]), multiplicity=int(mult[i]), flagged=True,
                 nearest=None, mismatch=None, correlation=None) for i in range(n)]
    if n == 0:
        return rows
    use_vectors = (spec.vectors is not None and ref.vectors is not None
                   and space is not None and ref.space is not None)
    if use_vectors:
        deg = max(space.degree, ref.space.degree)
        X = _embed_columns(np.asarray(spec.vectors), space, deg)
        R = _embed_columns(ref.vectors, ref.space, deg)
        W = _mass(DgSpace(space.mesh, deg, space.arity), ref.coeff)
        groups = _clusters(rom)
        bases = []
        for g in groups:
            Rg = R[:, g]
            G = Rg.conj().T @ (W @ Rg)
            L = np.linalg.cholesky(0.5 * (G + G.conj().T))
            bases.append(np.linalg.solve(L, Rg.conj().T).conj().T)  # W-orthonormal
        WX = W @ X
        nx = np.sqrt(np.abs(np.einsum("ij,ij->j", X.conj(), WX)))
        score = np.zeros((n, len(groups)))
        for c, Q in enumerate(bases):
            proj = Q.conj().T @ WX
            score[:, c] = np.linalg.norm(proj, axis=0) / nx
        score = np.minimum(score, 1.0)
        capacity = [len(g) for g in groups]
        assigned = {}
        for flat in np.argsort(-score, axis=None, kind="stable"):
            i, c = divmod(int(flat), len(groups))
            if i in assigned or capacity[c] <= 0:
                continue
            assigned[i] = c
            capacity[c] -= min(int(mult[i]), capacity[c])
        for i in range(n):
            c = assigned.get(i)
            if c is None:
                j = int(np.argmin(np.abs(rom - om[i])))
                ref_val = rom[j]
                rows[i]["correlation"] = float(score[i].max())
            else:
                ref_val = float(np.mean(rom[groups[c]]))
                rows[i]["correlation"] = float(score[i, c])
                rows[i]["flagged"] = bool(score[i, c] < min_correlation)
            rows[i]["nearest"] = float(ref_val)
            rows[i]["mismatch"] = float(abs(om[i] - ref_val) / abs(ref_val))
    else:
        used = np.zeros(len(rom), dtype=bool)
        for i in np.argsort(om, kind="stable"):
            for _ in range(int(mult[i])):
                free = np.flatnonzero(~used)
                if free.size == 0:
                    break
                j = free[np.argmin(np.abs(rom[free] - om[i]))]
                mis = abs(om[i] - rom[j]) / abs(rom[j])
                rows[i]["nearest"] = float(rom[j])
                rows[i]["mismatch"] = float(mis)
                if mis <= rtol:
                    used[j] = True
                    rows[i]["flagged"] = False
                else:
                    break
    return rows


@dataclass
class SpuriousReport:
    reference: dict
    grid: list[dict]
    min_correlation: float
    rtol: float

    def flag_counts(self) -> dict:
        return {(g["formulation"], g["eps"], g["k"], g["preset"]):
                sum(r["flagged"] for r in g["rows"]) for g in self.grid}

    def count(self, preset: str, k: int) -> int:
        return sum(sum(r["flagged"] for r in g["rows"]) for g in self.grid
                   if g["preset"] == preset and g["k"] == k)

    def to_dict(self) -> dict:
        return {"reference": self.reference, "grid": self.grid,
                "min_correlation": self.min_correlation, "rtol": self.rtol}

    def to_json(self) -> str:
        return _dumps(self.to_dict())

    def to_csv(self) -> str:
        lines = ["formulation,eps,k,preset,penalty,index,re,im,omega2,multiplicity,"
                 "flagged,nearest,mismatch,correlation"]
        for g in self.grid:
            for r in g["rows"]:
                lines.append(",".join(str(x) for x in (
                    g["formulation"], g["eps"], g["k"], g["preset"], _f(g["penalty"]),
                    r["index"], _f(r["re"]), _f(r["im"]), _f(r["omega2"]), r["multiplicity"],
                    int(r["flagged"]), _f(r["nearest"]), _f(r["mismatch"]),
                    _f(r["correlation"]))))
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        """One column per (k, preset); spurious values marked with ``*``."""
        out = [f"reference: {self.reference['source']}"]
        ks = sorted({g["k"] for g in self.grid})
        for k in ks:
            cols = [g for g in self.grid if g["k"] == k]
            head = ["i"] + [g["preset"] for g in cols]
            nrow = max(len(g["rows"]) for g in cols)
            body = []
            for i in range(nrow):
                row = [str(i + 1)]
                for g in cols:
                    if i < len(g["rows"]):
                        r = g["rows"][i]
                        row.append(f"{r['omega2']:.5f}" + ("*" if r["flagged"] else " "))
                    else:
                        row.append("-")
                body.append(row)
            counts = ["flags"] + [str(sum(r["flagged"] for r in g["rows"])) for g in cols]
            out.append(f"k = {k}")
            out.append(format_table(head, body + [counts]))
        return "\n".join(out) + "\n"


def _map(fn, items):
    n = thread_count()
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def spurious_scan(cfg: ProblemConfig, presets, ks, nev: int | None = None,
                  reference: Reference | str = "auto", min_correlation: float = 0.8,
                  rtol: float = 0.01, k_ref: int = 3,
                  ref_preset: str = "plus1-10") -> SpuriousReport:
    """Solve every (preset, k) on the configured mesh and flag modes that do
    not match the reference spectrum.

    ``reference`` is a :class:`Reference`, ``"analytic"``, ``"trusted"`` or
    ``"auto"`` (analytic for constant density on a rectangle, else trusted).
    """
    nev = cfg.nev if nev is None else nev
    count = 2 * nev + 5
    if isinstance(reference, str):
        kind = reference
        if kind == "auto":
            try:
                reference = analytic_reference(cfg, count, k_ref)
            except ValueError:
                kind = "trusted"
        elif kind == "analytic":
            reference = analytic_reference(cfg, count, k_ref)
        if kind == "trusted":
            reference = trusted_reference(cfg, count, k_ref, ref_preset)
        elif not isinstance(reference, Reference):
            raise ValueError(f"unknown reference kind {kind!r}")
    grid_items = [(k, p) for k in ks for p in presets]

    def one(item):
        k, preset = item
        sol = solve_problem(cfg.replace(k=k, preset=preset, nev=nev))
        rows = match_to_reference(sol.spectrum, sol.space, reference, min_correlation, rtol)
        return {"formulation": cfg.formulation, "eps": cfg.eps, "k": k, "preset": preset,
                "penalty": sol.penalty, "partial": bool(sol.spectrum.partial), "rows": rows}

    grid = _map(one, grid_items)
    ref_info = {"source": reference.source,
                "omega2": [float(v - 1.0) for v in reference.values]}
    return SpuriousReport(ref_info, grid, min_correlation, rtol)


# -------------------------------------------------------------- convergence

@dataclass
class ConvergenceFit:
    order: float
    extrapolated: float | None
    constant: float
    residual: float
    warning: str | None = None


def fit_convergence(h, values, exact: float | None = None) -> ConvergenceFit:
    """Fit ``|lam_h - lam| ~ C h^t``.

    With ``exact`` the fit is linear least squares on
    ``log|lam_h - exact| = log C + t log h``.  Otherwise the three-parameter
    model ``lam_h = lam_extr + C h^t`` is fitted by variable projection:
    for each ``t`` the best ``(lam_extr, C)`` solve a linear least-squares
    problem, and ``t`` minimizes the remaining residual.
    """
    h = np.asarray(h, dtype=float)
    v = np.asarray(values, dtype=float)
    if h.shape != v.shape or h.ndim != 1:
        raise ValueError("h and values must be 1-d arrays of equal length")
    if len(h) < 2:
        raise ValueError("at least two meshes are needed")
    if np.any(h <= 0) or np.any(np.diff(h) >= 0):
        raise ValueError("mesh sizes must be positive and strictly decreasing")
    warning = None
    if exact is not None:
        err = np.abs(v - exact)
        if np.any(err == 0):
            raise ValueError("an error is exactly zero; cannot take logarithms")
        if np.any(np.diff(err) >= 0):
            warning = "non-monotone error sequence"
        A = np.column_stack([np.ones_like(h), np.log(h)])
        coef, *_ = np.linalg.lstsq(A, np.log(err), rcond=None)
        res = np.log(err) - A @ coef
        return ConvergenceFit(float(coef[1]), float(exact), float(np.exp(coef[0])),
                              float(np.sqrt(np.mean(res ** 2))), warning)
    d = np.diff(v)
    if np.any(d == 0) or np.any(np.sign(d) != np.sign(d[0])):
        warning = "non-monotone sequence"
    if len(h) < 3:
        return ConvergenceFit(float("nan"), None, float("nan"), float("nan"),
                              "order needs at least three meshes")
    s = h / h[0]

    def solve(t):
        A = np.column_stack([np.ones_like(s), s ** t])
        coef, *_ = np.linalg.lstsq(A, v, rcond=None)
        return coef, v - A @ coef

    def obj(t):
        return float(np.sum(solve(t)[1] ** 2))

    grid = np.arange(0.1, 15.0 + 1e-9, 0.05)
    vals = [obj(t) for t in grid]
    i = int(np.argmin(vals))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    t = minimize_scalar(obj, bounds=(lo, hi), method="bounded",
                        options={"xatol": 1e-12}).x
    coef, res = solve(t)
    if i in (0, len(grid) - 1):
        warning = (warning + "; " if warning else "") + "order at search bound"
    return ConvergenceFit(float(t), float(coef[0]), float(coef[1] * h[0] ** (-t)),
                          float(np.sqrt(np.mean(res ** 2))), warning)


@dataclass
class ConvergenceReport:
    config: dict
    levels: list[int]
    h: list[float]
    dofs: list[int]
    rows: list[dict]

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return _dumps(self.to_dict())

    def orders(self) -> list[float]:
        return [r["order"] for r in self.rows]

    def extrapolated_omega2(self) -> list[float]:
        return [r["omega2_extr"] for r in self.rows]

    def to_csv(self) -> str:
        lines = ["index,N,h,dof,lam,omega2,order,omega2_extr,fit_residual"]
        for r in self.rows:
            for N, h, d, lam in zip(self.levels, self.h, self.dofs, r["values"]):
                lines.append(",".join(str(x) for x in (
                    r["index"], N, _f(h), d, _f(lam), _f(lam - 1.0), _f(r["order"]),
                    _f(r["omega2_extr"]), _f(r["fit_residual"]))))
        return "\n".join(lines) + "\n"

    def error_curves(self) -> list[dict]:
        """Per eigenvalue: dofs and ``|lam_h - lam_extr|`` (or exact)."""
        out = []
        for r in self.rows:
            target = r["exact"] if r["exact"] is not None else r["lam_extr"]
            err = [abs(v - target) if target is not None else float("nan")
                   for v in r["values"]]
            out.append({"index": r["index"], "dofs": list(self.dofs), "errors": err})
        return out

    def error_curve_csv(self) -> str:
        lines = ["index,dof,h,error"]
        for c in self.error_curves():
            for d, h, e in zip(c["dofs"], self.h, c["errors"]):
                lines.append(f"{c['index']},{d},{_f(h)},{_f(e)}")
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        head = ["i"] + [f"N={N}" for N in self.levels] + ["order", "omega2_extr"]
        body = []
        for r in self.rows:
            body.append([str(r["index"] + 1)] + [f"{v - 1.0:.5f}" for v in r["values"]]
                        + [f"{r['order']:.2f}",
                           "-" if r["omega2_extr"] is None else f"{r['omega2_extr']:.5f}"])
        return format_table(head, body) + "\n"


def convergence_study(cfg: ProblemConfig, levels, nev: int = 4,
                      exact=None) -> ConvergenceReport:
    """Solve on each mesh level and fit orders for the first ``nev`` modes."""
    levels = sorted(int(n) for n in levels)
    sols = [solve_problem(cfg.with_level(n).replace(nev=nev), vectors=False) for n in levels]
    h = [s.space.mesh.h_max for s in sols]
    dofs = [s.space.ndof for s in sols]
    rows = []
    for i in range(nev):
        vals = []
        for s in sols:
            if i >= len(s.spectrum):
                raise RuntimeError(f"level N={s.space.mesh} returned fewer than {nev} modes")
            vals.append(float(s.spectrum.values[i].real))
        ex = None if exact is None else float(exact[i])
        fit = fit_convergence(h, vals, ex)
        lam_extr = fit.extrapolated
        rows.append({"index": i, "values": vals, "order": fit.order,
                     "lam_extr": lam_extr,
                     "omega2_extr": None if lam_extr is None else lam_extr - 1.0,
                     "exact": ex, "constant": fit.constant,
                     "fit_residual": fit.residual, "warning": fit.warning})
    return ConvergenceReport(cfg.to_dict(), levels, h, dofs, rows)


# ---------------------------------------------------------------- benchmark

@dataclass
class BenchReport:
    config: dict
    repeats: int
    rows: list[dict]

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return _dumps(self.to_dict())

    def dof_ratios(self) -> dict:
        by = {(r["N"], r["formulation"]): r["dof"] for r in self.rows}
        return {N: by[(N, "displacement")] / by[(N, "pressure")]
                for N in sorted({r["N"] for r in self.rows})
                if (N, "displacement") in by and (N, "pressure") in by}

    def to_csv(self) -> str:
        keys = ["N", "formulation", "dof", "nnz_K", "nnz_M", "sparsity_K", "sparsity_M",
                "assembly_seconds", "solve_seconds", "total_seconds"]
        lines = [",".join(keys)]
        for r in self.rows:
            lines.append(",".join(_f(r[k]) if isinstance(r[k], float) else str(r[k])
                                  for k in keys))
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        head = ["N", "formulation", "dof", "nnz(K)", "nnz(M)", "nnz(K)/dof^2",
                "assembly s", "solve s", "dof ratio"]
        ratios = self.dof_ratios()
        body = [[str(r["N"]), r["formulation"], str(r["dof"]), str(r["nnz_K"]),
                 str(r["nnz_M"]), f"{r['sparsity_K']:.3e}", f"{r['assembly_seconds']:.4f}",
                 f"{r['solve_seconds']:.4f}", f"{ratios.get(r['N'], float('nan')):.1f}"]
                for r in self.rows]
        return format_table(head, body) + "\n"


def benchmark(cfg: ProblemConfig, levels, repeats: int = 3) -> BenchReport:
    """Assembly/solve timings (mean of ``repeats``) and structural counts for
    both formulations on each mesh level.  Runs strictly sequentially."""
    if repeats < 3:
        raise ValueError("at least 3 repeats are required")
    rows = []
    for n in levels:
        for form in FORMULATIONS:
            c = cfg.with_level(n).replace(formulation=form)
            ta, ts = [], []
            for _ in range(repeats):
                t0 = time.perf_counter()
                space, _, _, _, K, M = assemble(c)
                t1 = time.perf_counter()
                run_solver(c, K, M, space.block_size, vectors=True)
                t2 = time.perf_counter()
                ta.append(t1 - t0)
                ts.append(t2 - t1)
            dof = space.ndof
            rows.append({"N": int(n), "formulation": form, "dof": dof,
                         "nnz_K": int(K.nnz), "nnz_M": int(M.nnz),
                         "sparsity_K": K.nnz / dof ** 2, "sparsity_M": M.nnz / dof ** 2,
                         "assembly_seconds": float(np.mean(ta)),
                         "solve_seconds": float(np.mean(ts)),
                         "total_seconds": float(np.mean(ta) + np.mean(ts))})
    return BenchReport(cfg.to_dict(), repeats, rows)


# ------------------------------------------------------------------ helpers

def _f(x) -> str:
    if x is None:
        return ""
    return repr(float(x))


def _clean(o):
    if isinstance(o, dict):
        return {str(k): _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    if isinstance(o, (np.floating, float)):
        f = float(o)
        return f if math.isfinite(f) else None
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.bool_):
        return bool(o)
    return o


def _dumps(d) -> str:
    return json.dumps(_clean(d), indent=2, sort_keys=True) + "\n"


def format_table(head, rows) -> str:
    """Aligned plain-text columns."""
    cols = list(zip(*([head] + rows)))
    width = [max(len(str(x)) for x in c) for c in cols]
    fmt = lambda r: "  ".join(str(x).rjust(w) for x, w in zip(r, width))  # noqa: E731
    return "\n".join([fmt(head), "  ".join("-" * w for w in width)] + [fmt(r) for r in rows])
