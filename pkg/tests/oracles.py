"""Independent reference implementations used as test oracles.

Nothing here imports the assembly, eigensolver or analysis modules.  The
brute-force DG assembler builds its own edge topology, normals and
quadrature (Duffy-collapsed Gauss-Legendre) and loops over elements and
edges explicitly.  Basis functions come from a pluggable provider so that
matrices can be compared entrywise (same orthonormal basis) and spectra can
be compared basis-independently (scaled monomials).
"""
from __future__ import annotations

import math
from collections import defaultdict

import numpy as np

from acoustodg.fem_core import eval_basis, eval_grad


# ---------------------------------------------------------------- quadrature

def monomial_moment(m: int, n: int) -> float:
    """Exact integral of x^m y^n over the unit reference triangle."""
    return math.factorial(m) * math.factorial(n) / math.factorial(m + n + 2)


def duffy_rule(n: int = 14):
    """Reference-triangle rule from an n x n Gauss-Legendre square rule
    collapsed by ``(u, v) -> (u, (1 - u) v)``."""
    x, w = np.polynomial.legendre.leggauss(n)
    t, wt = (x + 1) / 2, w / 2
    U, V = np.meshgrid(t, t, indexing="ij")
    WU, WV = np.meshgrid(wt, wt, indexing="ij")
    pts = np.column_stack([U.ravel(), ((1 - U) * V).ravel()])
    wts = (WU * WV * (1 - U)).ravel()
    return pts, wts


def gauss_segment(n: int = 14):
    x, w = np.polynomial.legendre.leggauss(n)
    return (x + 1) / 2, w / 2


# --------------------------------------------------------------- basis sets

class OrthoProvider:
    """The package's orthonormal reference basis, mapped affinely; the
    inverse map is recomputed here from the vertex coordinates."""

    def __init__(self, vertices, triangles, k):
        self.V, self.T, self.k = np.asarray(vertices), np.asarray(triangles), k
        self.n = (k + 1) * (k + 2) // 2

    def _map(self, e):
        a, b, c = self.V[self.T[e]]
        J = np.column_stack([b - a, c - a])
        return a, J

    def values(self, e, X):
        a, J = self._map(e)
        xi = np.linalg.solve(J, (X - a).T).T
        return eval_basis(self.k, xi)

    def grads(self, e, X):
        a, J = self._map(e)
        xi = np.linalg.solve(J, (X - a).T).T
        G = eval_grad(self.k, xi)
        return np.einsum("iqb,ba->iqa", G, np.linalg.inv(J))


class MonomialProvider:
    """Scaled monomials ((x-cx)/h)^i ((y-cy)/h)^j, i + j <= k."""

    def __init__(self, vertices, triangles, k):
        self.V, self.T, self.k = np.asarray(vertices), np.asarray(triangles), k
        self.exps = [(i, d - i) for d in range(k + 1) for i in range(d + 1)]
        self.n = len(self.exps)

    def _loc(self, e, X):
        P = self.V[self.T[e]]
        c = P.mean(axis=0)
        h = max(np.linalg.norm(P[i] - P[j]) for i in range(3) for j in range(i))
        return (X[:, 0] - c[0]) / h, (X[:, 1] - c[1]) / h, h

    def values(self, e, X):
        s, t, _ = self._loc(e, X)
        return np.array([s ** i * t ** j for i, j in self.exps])

    def grads(self, e, X):
        s, t, h = self._loc(e, X)
        out = np.zeros((self.n, len(X), 2))
        for r, (i, j) in enumerate(self.exps):
            if i:
                out[r, :, 0] = i * s ** (i - 1) * t ** j / h
            if j:
                out[r, :, 1] = j * s ** i * t ** (j - 1) / h
        return out


# ----------------------------------------------------------- DG brute force

def _element_quad(V, tri, rule):
    pts, wts = rule
    a, b, c = V[tri]
    J = np.column_stack([b - a, c - a])
    X = a + pts @ J.T
    return X, wts * abs(np.linalg.det(J))


def _edges(T):
    """Sorted vertex pair -> list of (element, opposite vertex)."""
    E = defaultdict(list)
    for e, tri in enumerate(T):
        for i in range(3):
            a, b = tri[(i + 1) % 3], tri[(i + 2) % 3]
            E[(min(a, b), max(a, b))].append((e, tri[i]))
    return E


def _outward(V, a, b, opposite):
    d = V[b] - V[a]
    n = np.array([d[1], -d[0]]) / np.linalg.norm(d)
    if np.dot(n, V[opposite] - V[a]) > 0:
        n = -n
    return n


def brute_force_dg(vertices, triangles, k, formulation, rho, c=1.0, a_S=10.0, eps=1,
                   boundary_mode="weak-normal", provider=OrthoProvider, shift=True,
                   nq=14):
    """Dense ``(K, M)`` of the displacement or pressure DG forms.

    ``rho(x, y)`` is vectorized.  The dof layout is element-blocked, and for
    the displacement all x components precede all y components per element.
    """
    V, T = np.asarray(vertices, float), np.asarray(triangles)
    B = provider(V, T, k)
    n = B.n
    arity = 2 if formulation == "displacement" else 1
    bs = arity * n
    N = len(T) * bs
    K = np.zeros((N, N))
    M = np.zeros((N, N))
    rule = duffy_rule(nq)
    c2 = c * c

    def fields(e, X):
        """Per dof of element e: values (bs, nq, arity) and derivative
        data: divergence (disp, (bs, nq)) or gradient (pressure, (bs, nq, 2))."""
        phi, g = B.values(e, X), B.grads(e, X)
        if arity == 1:
            return phi[:, :, None], g
        val = np.zeros((bs, len(X), 2))
        val[:n, :, 0] = phi
        val[n:, :, 1] = phi
        div = np.concatenate([g[:, :, 0], g[:, :, 1]])
        return val, div

    for e, tri in enumerate(T):
        X, w = _element_quad(V, tri, rule)
        r = rho(X[:, 0], X[:, 1]) * np.ones(len(X))
        val, d = fields(e, X)
        sl = slice(e * bs, (e + 1) * bs)
        if arity == 2:
            mass = np.einsum("q,iqc,jqc->ij", w * r, val, val)
            vol = np.einsum("q,iq,jq->ij", w * r * c2, d, d)
        else:
            mass = np.einsum("q,iqc,jqc->ij", w / r, val, val)
            vol = np.einsum("q,iqa,jqa->ij", w * c2 / r, d, d)
        M[sl, sl] += mass
        K[sl, sl] += vol + (mass if shift else 0.0)

    s, ws = gauss_segment(nq)
    for (a, b), owners in _edges(T).items():
        interior = len(owners) == 2
        if not interior and (arity == 1 or boundary_mode == "interior-only"):
            continue
        X = V[a] + s[:, None] * (V[b] - V[a])
        h = np.linalg.norm(V[b] - V[a])
        w = ws * h
        r = rho(X[:, 0], X[:, 1]) * np.ones(len(X))
        avg = 0.5 if interior else 1.0
        jumps, fluxes, dofs = [], [], []
        for e, opp in owners:
            nrm = _outward(V, a, b, opp)
            val, d = fields(e, X)
            if arity == 2:
                jumps.append(np.einsum("iqc,c->iq", val, nrm))
                fluxes.append(r * c2 * d)
            else:
                jumps.append(val[:, :, 0][:, :, None] * nrm)  # (bs, nq, 2)
                fluxes.append((c2 / r)[None, :, None] * d)
            dofs.append(np.arange(e * bs, (e + 1) * bs))
        for si in range(len(owners)):
            for sj in range(len(owners)):
                I, J = dofs[si], dofs[sj]
                if arity == 2:
                    pen = np.einsum("q,iq,jq->ij", w, jumps[si], jumps[sj])
                    # row i = test function, column j = trial function
                    cons_trial = np.einsum("q,jq,iq->ij", w * avg, fluxes[sj], jumps[si])
                    cons_test = np.einsum("q,iq,jq->ij", w * avg, fluxes[si], jumps[sj])
                else:
                    pen = np.einsum("q,iqa,jqa->ij", w, jumps[si], jumps[sj])
                    cons_trial = np.einsum("q,jqa,iqa->ij", w * avg, fluxes[sj], jumps[si])
                    cons_test = np.einsum("q,iqa,jqa->ij", w * avg, fluxes[si], jumps[sj])
                K[np.ix_(I, J)] += a_S / h * pen - cons_trial - eps * cons_test
    return K, M


# ---------------------------------------------------------- interpolation

def lagrange_interpolation_error(vertices, triangles, k, f, weight=None, nq=14):
    """L2 error of elementwise P_k Lagrange interpolation on the equispaced
    lattice.  ``f(x, y)`` returns an array of shape (components, npts)."""
    V, T = np.asarray(vertices, float), np.asarray(triangles)
    lattice = np.array([(i / k, j / k) for j in range(k + 1) for i in range(k + 1 - j)])
    exps = [(i, d - i) for d in range(k + 1) for i in range(d + 1)]
    rule = duffy_rule(nq)
    err2 = 0.0
    for tri in T:
        a, b, c = V[tri]
        J = np.column_stack([b - a, c - a])
        nodes = a + lattice @ J.T
        Vand = np.array([[x ** i * y ** j for i, j in exps] for x, y in lattice])
        X, w = _element_quad(V, tri, rule)
        xi = np.linalg.solve(J, (X - a).T).T
        E = np.array([xi[:, 0] ** i * xi[:, 1] ** j for i, j in exps])
        fn = np.atleast_2d(f(nodes[:, 0], nodes[:, 1]))
        fx = np.atleast_2d(f(X[:, 0], X[:, 1]))
        coef = np.linalg.solve(Vand, fn.T)
        interp = (E.T @ coef).T
        wt = w if weight is None else w * weight(X[:, 0], X[:, 1])
        err2 += float(np.sum(wt * (fx - interp) ** 2))
    return math.sqrt(err2)


def l2_error(space_mesh_vertices, triangles, evaluate_dg, f, nq=14):
    """L2 distance between a DG function (``evaluate_dg(e, X)`` returning
    (components, npts)) and ``f``."""
    V, T = np.asarray(space_mesh_vertices, float), np.asarray(triangles)
    rule = duffy_rule(nq)
    err2 = 0.0
    for e, tri in enumerate(T):
        X, w = _element_quad(V, tri, rule)
        d = np.atleast_2d(evaluate_dg(e, X)) - np.atleast_2d(f(X[:, 0], X[:, 1]))
        err2 += float(np.sum(w * d ** 2))
    return math.sqrt(err2)


# ------------------------------------------------------------ edge counting

def boundary_edge_histogram(triangles) -> int:
    """Number of undirected edges used by exactly one triangle."""
    counts = defaultdict(int)
    for tri in np.asarray(triangles):
        for i in range(3):
            a, b = int(tri[i]), int(tri[(i + 1) % 3])
            counts[(min(a, b), max(a, b))] += 1
    return sum(1 for v in counts.values() if v == 1)


def lagrange_interpolant(vertices, triangles, k, f):
    """Per element: monomial coefficients (in reference coordinates) of the
    P_k Lagrange interpolant of scalar ``f`` on the equispaced lattice."""
    V, T = np.asarray(vertices, float), np.asarray(triangles)
    lattice = np.array([(i / k, j / k) for j in range(k + 1) for i in range(k + 1 - j)])
    exps = [(i, d - i) for d in range(k + 1) for i in range(d + 1)]
    Vand = np.array([[x ** i * y ** j for i, j in exps] for x, y in lattice])
    out = []
    for tri in T:
        a, b, c = V[tri]
        J = np.column_stack([b - a, c - a])
        nodes = a + lattice @ J.T
        out.append(np.linalg.solve(Vand, f(nodes[:, 0], nodes[:, 1])))
    return exps, np.array(out)


def interpolation_h1_seminorm_error(vertices, triangles, k, f, grad_f, nq=14):
    """|f - I_k f|_{H^1} for the equispaced Lagrange interpolant."""
    V, T = np.asarray(vertices, float), np.asarray(triangles)
    exps, coef = lagrange_interpolant(V, T, k, f)
    rule = duffy_rule(nq)
    err2 = 0.0
    for e, tri in enumerate(T):
        a, b, c = V[tri]
        J = np.column_stack([b - a, c - a])
        X, w = _element_quad(V, tri, rule)
        xi = np.linalg.solve(J, (X - a).T).T
        gref = np.zeros((len(X), 2))
        for (i, j), cf in zip(exps, coef[e]):
            if i:
                gref[:, 0] += cf * i * xi[:, 0] ** (i - 1) * xi[:, 1] ** j
            if j:
                gref[:, 1] += cf * j * xi[:, 0] ** i * xi[:, 1] ** (j - 1)
        g = gref @ np.linalg.inv(J)
        d = g - np.asarray(grad_f(X[:, 0], X[:, 1])).T
        err2 += float(np.sum(w[:, None] * d ** 2))
    return math.sqrt(err2)
