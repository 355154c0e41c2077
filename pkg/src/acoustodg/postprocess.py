"""Recover the complementary unknown of each formulation and compare modes.

Displacement and pressure are linked by ``p = -rho c^2 div u`` and
``grad p = omega^2 rho u``.  Recovery is an elementwise L2 projection onto
the broken P_k space on the same mesh; with the orthonormal reference basis
the element mass is ``|det J| I`` so the projection needs no solve.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assembly import SCALAR, VECTOR2, DgSpace
from .coefficients import CoefficientField
from .fem_core import eval_basis, eval_grad, quad_triangle

__all__ = [
    "DgFunction",
    "ZeroFrequencyError",
    "project",
    "embed",
    "pressure_from_displacement",
    "displacement_from_pressure",
    "correlation",
    "align",
    "evaluate",
    "coefficients_csv",
    "samples_csv",
]


class ZeroFrequencyError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class DgFunction:
    """Coefficient vector on a :class:`DgSpace`."""

    space: DgSpace
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs)
        if c.ndim != 1 or c.size != self.space.ndof:
            raise ValueError(
                f"coefficient vector has shape {c.shape}, space has {self.space.ndof} dofs")
        object.__setattr__(self, "coeffs", c)

    def blocks(self) -> np.ndarray:
        """Coefficients shaped ``(elements, arity, n_basis)``."""
        s = self.space
        return self.coeffs.reshape(s.mesh.n_triangles, s.arity, s.n_basis)

    def __mul__(self, a):
        return DgFunction(self.space, self.coeffs * a)

    __rmul__ = __mul__

    def __add__(self, other: "DgFunction"):
        _check_same(self.space, other.space)
        return DgFunction(self.space, self.coeffs + other.coeffs)


def _check_same(s1: DgSpace, s2: DgSpace):
    if s1.mesh is not s2.mesh and not s1.mesh.same_as(s2.mesh):
        raise ValueError("functions live on different meshes")
    if (s1.degree, s1.arity) != (s2.degree, s2.arity):
        raise ValueError(
            f"space mismatch: degree/arity {(s1.degree, s1.arity)} vs {(s2.degree, s2.arity)}")


def _quad(space, qdeg):
    g = space.geometry
    rule = quad_triangle(qdeg)
    X = g.v0[:, None, :] + np.einsum("eab,qb->eqa", g.J, rule.points)
    return rule, X


def _project_values(space: DgSpace, rule, values) -> np.ndarray:
    """L2 projection of values ``(elements, arity, nq)`` at the rule points."""
    phi = eval_basis(space.degree, rule.points)
    # (1/|detJ|) int_K f phi_i = sum_q w_q f(x_q) phi_i(xi_q)
    coeffs = np.einsum("ecq,iq,q->eci", values, phi, rule.weights)
    return coeffs.reshape(-1)


def project(space: DgSpace, f, qdeg: int | None = None) -> DgFunction:
    """Elementwise L2 projection of ``f(x, y)`` (scalar, or a pair for vectors)."""
    qdeg = 2 * space.degree + 2 if qdeg is None else qdeg
    rule, X = _quad(space, qdeg)
    vals = f(X[..., 0], X[..., 1])
    if space.arity == SCALAR:
        vals = np.asarray(vals)[:, None, :] * np.ones((1, 1, 1))
    else:
        fx, fy = vals
        vals = np.stack(np.broadcast_arrays(fx, fy), axis=1)
    vals = np.broadcast_to(vals, (X.shape[0], space.arity, X.shape[1]))
    return DgFunction(space, _project_values(space, rule, vals))


def embed(f: DgFunction, degree: int) -> DgFunction:
    """Same function in the degree-``degree`` space (hierarchical basis)."""
    s = f.space
    if degree < s.degree:
        raise ValueError(f"cannot embed degree {s.degree} into lower degree {degree}")
    target = DgSpace(s.mesh, degree, s.arity)
    out = np.zeros((s.mesh.n_triangles, s.arity, target.n_basis), dtype=f.coeffs.dtype)
    out[:, :, : s.n_basis] = f.blocks()
    return DgFunction(target, out.reshape(-1))


def _div_and_grad(f: DgFunction, rule):
    """Physical gradients at rule points: ``(elements, arity, nq, 2)``."""
    s = f.space
    g = s.geometry
    grad = eval_grad(s.degree, rule.points)
    gphys = np.einsum("iqb,eba->eiqa", grad, g.invJ)
    return np.einsum("eci,eiqa->ecqa", f.blocks(), gphys)


def pressure_from_displacement(u: DgFunction, coeff: CoefficientField,
                               qdeg: int | None = None) -> DgFunction:
    """``p = -rho c^2 div u`` projected onto scalar P_k."""
    s = u.space
    if s.arity != VECTOR2:
        raise ValueError("pressure_from_displacement needs a vector2 function")
    qdeg = 2 * s.degree + 2 if qdeg is None else qdeg
    rule, X = _quad(s, qdeg)
    G = _div_and_grad(u, rule)
    div = G[:, 0, :, 0] + G[:, 1, :, 1]
    rho = coeff(X[..., 0], X[..., 1])
    vals = (-rho * coeff.c ** 2 * div)[:, None, :]
    ps = DgSpace(s.mesh, s.degree, SCALAR)
    return DgFunction(ps, _project_values(ps, rule, vals))


def displacement_from_pressure(p: DgFunction, omega2: complex, coeff: CoefficientField,
                               qdeg: int | None = None) -> DgFunction:
    """``u = grad p / (omega^2 rho)`` projected onto vector P_k."""
    s = p.space
    if s.arity != SCALAR:
        raise ValueError("displacement_from_pressure needs a scalar function")
    if abs(omega2) <= 1e-10:
        raise ZeroFrequencyError(
            f"omega^2 = {omega2:.3e} is (numerically) zero: the constant-pressure "
            "mode has no displacement")
    qdeg = 2 * s.degree + 2 if qdeg is None else qdeg
    rule, X = _quad(s, qdeg)
    G = _div_and_grad(p, rule)[:, 0]  # (e, q, 2)
    rho = coeff(X[..., 0], X[..., 1])
    vals = np.moveaxis(G / (omega2 * rho[..., None]), 2, 1)
    us = DgSpace(s.mesh, s.degree, VECTOR2)
    return DgFunction(us, _project_values(us, rule, vals))


def _coeffs(f):
    return f.coeffs if isinstance(f, DgFunction) else np.asarray(f)


def correlation(f, g, weight) -> float:
    """``|f^H W g| / (||f||_W ||g||_W)`` in [0, 1]."""
    if isinstance(f, DgFunction) and isinstance(g, DgFunction):
        _check_same(f.space, g.space)
    a, b = _coeffs(f), _coeffs(g)
    if a.shape != b.shape:
        raise ValueError(f"vector shapes differ: {a.shape} vs {b.shape}")
    Wb = weight @ b
    na = np.sqrt(abs(np.vdot(a, weight @ a)))
    nb = np.sqrt(abs(np.vdot(b, Wb)))
    if na == 0 or nb == 0:
        raise ValueError("correlation of a zero vector is undefined")
    return float(min(1.0, abs(np.vdot(a, Wb)) / (na * nb)))


def align(f, g, weight):
    """``g`` multiplied by the unit scalar maximizing ``Re f^H W g``.

    Real inputs are aligned by sign, complex inputs by phase.
    """
    a, b = _coeffs(f), _coeffs(g)
    ip = np.vdot(a, weight @ b)
    if np.iscomplexobj(a) or np.iscomplexobj(b):
        s = np.conj(ip) / abs(ip) if abs(ip) > 0 else 1.0
    else:
        s = -1.0 if ip < 0 else 1.0
    out = b * s
    return DgFunction(g.space, out) if isinstance(g, DgFunction) else out


# --------------------------------------------------------------- evaluation

def _sample_points(m: int) -> np.ndarray:
    """Reference points of the barycentric lattice with ``m`` subdivisions."""
    pts = [(i / m, j / m) for j in range(m + 1) for i in range(m + 1 - j)]
    return np.array(pts)


def evaluate(f: DgFunction, ref_points) -> tuple[np.ndarray, np.ndarray]:
    """Physical points ``(elements, np, 2)`` and values ``(elements, arity, np)``."""
    s = f.space
    g = s.geometry
    ref_points = np.atleast_2d(ref_points)
    X = g.v0[:, None, :] + np.einsum("eab,qb->eqa", g.J, ref_points)
    phi = eval_basis(s.degree, ref_points)
    vals = np.einsum("eci,iq->ecq", f.blocks(), phi)
    return X, vals


def _fmt(z):
    z = complex(z)
    return f"{z.real:.17g},{z.imag:.17g}"


def coefficients_csv(f: DgFunction) -> str:
    """Per-element coefficients: ``element,component,basis,re,im``."""
    lines = ["element,component,basis,re,im"]
    B = f.blocks()
    for e in range(B.shape[0]):
        for c in range(B.shape[1]):
            for i in range(B.shape[2]):
                lines.append(f"{e},{c},{i},{_fmt(B[e, c, i])}")
    return "\n".join(lines) + "\n"


def samples_csv(f: DgFunction, subdivisions: int = 3) -> str:
    """Values on a barycentric lattice in every element.

    Columns ``element,x,y`` then ``re,im`` per component.
    """
    X, V = evaluate(f, _sample_points(subdivisions))
    comps = ["", "_x", "_y"][1:] if f.space.arity == VECTOR2 else [""]
    head = "element,x,y," + ",".join(f"re{c},im{c}" for c in comps)
    lines = [head]
    for e in range(X.shape[0]):
        for q in range(X.shape[1]):
            vals = ",".join(_fmt(V[e, c, q]) for c in range(V.shape[1]))
            lines.append(f"{e},{X[e, q, 0]:.17g},{X[e, q, 1]:.17g},{vals}")
    return "\n".join(lines) + "\n"
