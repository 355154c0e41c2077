"""Interior-penalty DG matrices for the acoustic eigenproblem.

Two formulations share one facet kernel:

* displacement, vector P_k: volume term ``rho c^2 div u div v``, mass
  ``rho u.v``, scalar normal jumps ``[[v]] = v_K.n_K + v_K'.n_K'``;
* pressure, scalar P_k: volume term ``(c^2/rho) grad p . grad v``, mass
  ``p v / rho``, vector jumps ``[[p]] = p_K n_K + p_K' n_K'``.

With the flux ``w`` (``rho c^2 div u`` or ``(c^2/rho) grad p``), the
stiffness is::

    K = V + M + a_S P - B^T - eps B,      B_ij = int_F {w(phi_i)} [[phi_j]]

where ``P`` is the jump penalty ``int_F h_F^-1 [[u]][[v]]``.  Row index =
test function, column index = trial function.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .coefficients import CoefficientField
from .fem_core import basis_dim, eval_basis, eval_grad, quad_edge, quad_triangle
from .mesh import TriMesh

__all__ = [
    "SCALAR",
    "VECTOR2",
    "BOUNDARY_MODES",
    "DgSpace",
    "DgFormConfig",
    "assemble_stiffness_disp",
    "assemble_mass_disp",
    "assemble_stiffness_pressure",
    "assemble_mass_pressure",
    "volume_matrix",
    "mass_matrix",
    "penalty_matrix",
    "consistency_matrix",
    "dg_norm_matrix",
    "export_csr",
    "is_symmetric",
    "thread_count",
]

SCALAR = 1
VECTOR2 = 2
BOUNDARY_MODES = ("weak-normal", "interior-only")
_CHUNK = 2048


@dataclass(frozen=True, eq=False)
class DgSpace:
    """Broken P_k space, element-blocked: element ``e`` owns dofs
    ``[e*block, (e+1)*block)``; vector fields store all x-coefficients of an
    element before its y-coefficients."""

    mesh: TriMesh
    degree: int
    arity: int = SCALAR

    def __post_init__(self):
        if self.arity not in (SCALAR, VECTOR2):
            raise ValueError(f"arity must be 1 (scalar) or 2 (vector), got {self.arity}")
        basis_dim(self.degree)
        if int(self.degree) != self.degree or self.degree < 1:
            raise ValueError(f"degree must be >= 1, got {self.degree}")

    @property
    def n_basis(self) -> int:
        return basis_dim(self.degree)

    @property
    def block_size(self) -> int:
        return self.arity * self.n_basis

    @property
    def ndof(self) -> int:
        return self.mesh.n_triangles * self.block_size

    def element_dofs(self, e: int) -> range:
        b = self.block_size
        return range(e * b, (e + 1) * b)

    def with_degree(self, k: int) -> "DgSpace":
        return DgSpace(self.mesh, k, self.arity)

    @cached_property
    def geometry(self) -> "_Geometry":
        return _Geometry(self.mesh)


@dataclass(frozen=True)
class DgFormConfig:
    """Penalty ``a_S``, variant ``eps`` (1 SIP, 0 IIP, -1 NIP), boundary
    treatment and quadrature degree (default ``2k + 2``)."""

    penalty: float
    eps: int = 1
    boundary_mode: str = "weak-normal"
    quad_degree: int | None = None

    def __post_init__(self):
        if self.eps not in (-1, 0, 1):
            raise ValueError(f"eps must be -1, 0 or 1, got {self.eps}")
        if not self.penalty > 0:
            raise ValueError(f"penalty a_S must be positive, got {self.penalty}")
        if self.boundary_mode not in BOUNDARY_MODES:
            raise ValueError(
                f"boundary_mode must be one of {BOUNDARY_MODES}, got {self.boundary_mode!r}")

    def qdeg(self, k: int) -> int:
        return 2 * k + 2 if self.quad_degree is None else self.quad_degree


class _Geometry:
    """Affine maps x = v0 + J xi of every element."""

    def __init__(self, mesh: TriMesh):
        p = mesh.vertices[mesh.triangles]
        self.v0 = p[:, 0]
        self.J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)
        self.detJ = self.J[:, 0, 0] * self.J[:, 1, 1] - self.J[:, 0, 1] * self.J[:, 1, 0]
        self.invJ = np.empty_like(self.J)
        self.invJ[:, 0, 0] = self.J[:, 1, 1]
        self.invJ[:, 1, 1] = self.J[:, 0, 0]
        self.invJ[:, 0, 1] = -self.J[:, 0, 1]
        self.invJ[:, 1, 0] = -self.J[:, 1, 0]
        self.invJ /= self.detJ[:, None, None]


def thread_count() -> int:
    """Worker threads allowed by ``ACOUSTODG_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("ACOUSTODG_THREADS", "1")))
    except ValueError:
        return 1


def _map_chunks(fn, n, chunk=_CHUNK):
    """Apply ``fn(slice)`` over ``range(n)`` in chunks; results stay in order."""
    slices = [slice(i, min(i + chunk, n)) for i in range(0, n, chunk)]
    nthreads = thread_count()
    if nthreads == 1 or len(slices) == 1:
        return [fn(s) for s in slices]
    with ThreadPoolExecutor(max_workers=nthreads) as pool:
        return list(pool.map(fn, slices))


def _check_arity(space, arity, what):
    if space.arity != arity:
        kind = "vector2" if arity == VECTOR2 else "scalar"
        raise ValueError(f"{what} needs a {kind} space, got arity {space.arity}")


# ----------------------------------------------------------- element terms

def _volume_tables(space, coeff, qdeg, sl):
    g = space.geometry
    rule = quad_triangle(qdeg)
    phi = eval_basis(space.degree, rule.points)
    grad = eval_grad(space.degree, rule.points)
    X = g.v0[sl, None, :] + np.einsum("eab,qb->eqa", g.J[sl], rule.points)
    W = np.abs(g.detJ[sl])[:, None] * rule.weights[None, :]
    rho = coeff(X[..., 0], X[..., 1])
    gphys = np.einsum("iqb,eba->eiqa", grad, g.invJ[sl])
    return phi, gphys, W, rho


def _blocks_to_coo(blocks, rows_e, cols_e, bsize):
    """Element-pair blocks ``(n, bsize, bsize)`` to COO triplets."""
    loc = np.arange(bsize)
    r = (rows_e[:, None] * bsize + loc[None, :])[:, :, None]
    c = (cols_e[:, None] * bsize + loc[None, :])[:, None, :]
    r, c = np.broadcast_arrays(r, c)
    return r.ravel(), c.ravel(), blocks.ravel()


def _assemble(parts, n):
    if not parts:
        return sp.csr_matrix((n, n))
    rows = np.concatenate([p[0] for p in parts])
    cols = np.concatenate([p[1] for p in parts])
    vals = np.concatenate([p[2] for p in parts])
    A = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def volume_matrix(space: DgSpace, coeff: CoefficientField, qdeg: int | None = None):
    """``int rho c^2 div u div v`` (vector) or ``int (c^2/rho) grad p.grad v``."""
    qdeg = 2 * space.degree + 2 if qdeg is None else qdeg
    bsize = space.block_size
    c2 = coeff.c ** 2

    def chunk(sl):
        _, gp, W, rho = _volume_tables(space, coeff, qdeg, sl)
        if space.arity == VECTOR2:
            D = np.concatenate([gp[..., 0], gp[..., 1]], axis=1)
            blocks = np.einsum("eq,eiq,ejq->eij", W * rho * c2, D, D)
        else:
            blocks = np.einsum("eq,eiqa,ejqa->eij", W * c2 / rho, gp, gp)
        e = np.arange(space.mesh.n_triangles)[sl]
        return _blocks_to_coo(blocks, e, e, bsize)

    return _assemble(_map_chunks(chunk, space.mesh.n_triangles), space.ndof)


def mass_matrix(space: DgSpace, coeff: CoefficientField, qdeg: int | None = None):
    """``int rho u.v`` (vector) or ``int p v / rho`` (scalar); block diagonal.

    The full ``block_size**2`` element block is stored even where the two
    vector components do not couple.
    """
    qdeg = 2 * space.degree + 2 if qdeg is None else qdeg
    nb, bsize = space.n_basis, space.block_size

    def chunk(sl):
        phi, _, W, rho = _volume_tables(space, coeff, qdeg, sl)
        wgt = W * (rho if space.arity == VECTOR2 else 1.0 / rho)
        m = np.einsum("eq,iq,jq->eij", wgt, phi, phi)
        if space.arity == VECTOR2:
            blocks = np.zeros((len(m), bsize, bsize))
            blocks[:, :nb, :nb] = m
            blocks[:, nb:, nb:] = m
        else:
            blocks = m
        e = np.arange(space.mesh.n_triangles)[sl]
        return _blocks_to_coo(blocks, e, e, bsize)

    return _assemble(_map_chunks(chunk, space.mesh.n_triangles), space.ndof)


# ------------------------------------------------------------- facet terms

def _facet_sides(space, coeff, qdeg, facets):
    """Per-side traces on the given facets.

    Returns ``(owners, W, hF, jump, flux)`` where ``jump[s]`` and ``flux[s]``
    have shape ``(nf, block, nq)``: ``jump`` is the jump contribution of each
    basis function from side ``s`` (normal component, signed), ``flux`` its
    flux ``w`` dotted with the facet normal for the pressure case.
    """
    mesh, g = space.mesh, space.geometry
    rule = quad_edge(qdeg)
    fv = mesh.facet_vertices[facets]
    A, B = mesh.vertices[fv[:, 0]], mesh.vertices[fv[:, 1]]
    X = A[:, None, :] + rule.points[None, :, None] * (B - A)[:, None, :]
    hF = mesh.facet_length[facets]
    W = hF[:, None] * rule.weights[None, :]
    n = mesh.facet_normal[facets]
    rho = coeff(X[..., 0], X[..., 1])
    c2 = coeff.c ** 2
    owners = mesh.facet_owners[facets]
    nf, nq, nb = len(facets), len(rule), space.n_basis
    jumps, fluxes = [], []
    for s in (0, 1):
        e = owners[:, s]
        valid = e >= 0
        ev = np.where(valid, e, 0)
        xi = np.einsum("fab,fqb->fqa", g.invJ[ev], X - g.v0[ev][:, None, :])
        pts = xi.reshape(-1, 2)
        phi = eval_basis(space.degree, pts).reshape(nb, nf, nq).transpose(1, 0, 2)
        gref = eval_grad(space.degree, pts).reshape(nb, nf, nq, 2)
        gp = np.einsum("ifqb,fba->fiqa", gref, g.invJ[ev])
        sign = 1.0 if s == 0 else -1.0
        if space.arity == VECTOR2:
            jump = sign * np.concatenate(
                [phi * n[:, None, None, 0], phi * n[:, None, None, 1]], axis=1)
            flux = (rho * c2)[:, None, :] * np.concatenate(
                [gp[..., 0], gp[..., 1]], axis=1)
        else:
            jump = sign * phi
            flux = (c2 / rho)[:, None, :] * np.einsum("fiqa,fa->fiq", gp, n)
        jump[~valid] = 0.0
        flux[~valid] = 0.0
        jumps.append(jump)
        fluxes.append(flux)
    return owners, W, hF, jumps, fluxes


def _facet_set(space, boundary_mode):
    mesh = space.mesh
    if space.arity == VECTOR2 and boundary_mode == "weak-normal":
        return np.arange(mesh.n_facets)
    return mesh.interior_facets


def _facet_matrix(space, coeff, qdeg, facets, kind):
    bsize = space.block_size

    def chunk(sl):
        fs = facets[sl]
        owners, W, hF, jumps, fluxes = _facet_sides(space, coeff, qdeg, fs)
        interior = owners[:, 1] >= 0
        avg = np.where(interior, 0.5, 1.0)
        parts = []
        for a in (0, 1):
            for b in (0, 1):
                keep = interior if (a or b) else np.ones(len(fs), dtype=bool)
                if not keep.any():
                    continue
                if kind == "penalty":
                    blk = np.einsum("fq,fiq,fjq->fij", W / hF[:, None],
                                    jumps[a], jumps[b])
                else:
                    # B_ij = int {w(phi_i)} [[phi_j]], i on side a, j on side b
                    blk = np.einsum("fq,fiq,fjq->fij", W * avg[:, None],
                                    fluxes[a], jumps[b])
                parts.append(_blocks_to_coo(blk[keep], owners[keep, a],
                                            owners[keep, b], bsize))
        return tuple(np.concatenate(x) for x in zip(*parts))

    return _assemble(_map_chunks(chunk, len(facets)), space.ndof)


def penalty_matrix(space: DgSpace, boundary_mode: str = "weak-normal",
                   qdeg: int | None = None):
    """Unit-penalty jump matrix ``int_F h_F^-1 [[u]] . [[v]]``."""
    qdeg = 2 * space.degree + 2 if qdeg is None else qdeg
    unit = CoefficientField(lambda x, y: 1.0 + 0.0 * x, 1.0, "const1")
    return _facet_matrix(space, unit, qdeg, _facet_set(space, boundary_mode), "penalty")


def consistency_matrix(space: DgSpace, coeff: CoefficientField,
                       boundary_mode: str = "weak-normal", qdeg: int | None = None):
    """``B_ij = int_F {w(phi_i)} . [[phi_j]]`` with ``w`` the flux of the
    formulation (``rho c^2 div`` or ``(c^2/rho) grad``)."""
    qdeg = 2 * space.degree + 2 if qdeg is None else qdeg
    return _facet_matrix(space, coeff, qdeg, _facet_set(space, boundary_mode),
                         "consistency")


# ------------------------------------------------------------ public forms

def _stiffness(space, coeff, cfg, shift):
    q = cfg.qdeg(space.degree)
    K = volume_matrix(space, coeff, q)
    if shift:
        K = K + mass_matrix(space, coeff, q)
    K = K + cfg.penalty * penalty_matrix(space, cfg.boundary_mode, q)
    B = consistency_matrix(space, coeff, cfg.boundary_mode, q)
    K = K - B.T
    if cfg.eps:
        K = K - cfg.eps * B
    K = K.tocsr()
    K.sort_indices()
    return K


def assemble_stiffness_disp(space: DgSpace, coeff: CoefficientField,
                            cfg: DgFormConfig, shift: bool = True):
    """Matrix of the displacement form ``a_h``.

    ``shift=False`` drops the ``int rho u.v`` term, leaving the operator
    whose eigenvalues are ``omega^2`` instead of ``1 + omega^2``.
    """
    _check_arity(space, VECTOR2, "displacement stiffness")
    return _stiffness(space, coeff, cfg, shift)


def assemble_mass_disp(space: DgSpace, coeff: CoefficientField,
                       qdeg: int | None = None):
    _check_arity(space, VECTOR2, "displacement mass")
    return mass_matrix(space, coeff, qdeg)


def assemble_stiffness_pressure(space: DgSpace, coeff: CoefficientField,
                                cfg: DgFormConfig, shift: bool = True):
    """Matrix of the pressure form ``a_h^p``; interior facets only, the
    Neumann condition being natural.  The penalty carries no coefficient."""
    _check_arity(space, SCALAR, "pressure stiffness")
    return _stiffness(space, coeff, cfg, shift)


def assemble_mass_pressure(space: DgSpace, coeff: CoefficientField,
                           qdeg: int | None = None):
    _check_arity(space, SCALAR, "pressure mass")
    return mass_matrix(space, coeff, qdeg)


def dg_norm_matrix(space: DgSpace, boundary_mode: str = "weak-normal"):
    """Gram matrix of the DG norm (unit coefficients): divergence or
    gradient part, ``h_F^-1`` jump part and L2 part."""
    unit = CoefficientField(lambda x, y: 1.0 + 0.0 * x, 1.0, "const1")
    q = 2 * space.degree + 2
    return (volume_matrix(space, unit, q) + mass_matrix(space, unit, q)
            + penalty_matrix(space, boundary_mode, q)).tocsr()


def is_symmetric(A, rtol: float = 1e-12) -> bool:
    A = sp.csr_matrix(A)
    scale = abs(A).max()
    if scale == 0:
        return True
    diff = A - A.T
    return (abs(diff).max() if diff.nnz else 0.0) <= rtol * scale


def export_csr(A) -> str:
    """Text dump: ``csr <nrows> <nnz>`` then row pointers, column indices
    and values, one line each."""
    A = sp.csr_matrix(A)
    lines = [f"csr {A.shape[0]} {A.nnz}",
             " ".join(str(int(i)) for i in A.indptr),
             " ".join(str(int(i)) for i in A.indices),
             " ".join(f"{v:.17g}" for v in A.data)]
    return "\n".join(lines) + "\n"
