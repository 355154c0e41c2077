"""Reference-triangle polynomial basis and quadrature.

The reference triangle is ``{(x, y) : x >= 0, y >= 0, x + y <= 1}`` with
area 1/2.  The basis is the orthonormal Dubiner (collapsed Jacobi) basis,
ordered by total degree so that the degree-k basis is a prefix of the
degree-(k+1) basis.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import eval_jacobi, gammaln, roots_jacobi

__all__ = [
    "MAX_DEGREE",
    "MAX_QUAD_DEGREE",
    "QuadratureRule",
    "ReferenceBasis",
    "basis_dim",
    "basis_indices",
    "eval_basis",
    "eval_grad",
    "quad_triangle",
    "quad_edge",
]

MAX_DEGREE = 4
MAX_QUAD_DEGREE = 30


def basis_dim(k: int) -> int:
    return (k + 1) * (k + 2) // 2


def basis_indices(k: int) -> list[tuple[int, int]]:
    """Jacobi index pairs (p, q), grouped by total degree p + q."""
    return [(n - q, q) for n in range(k + 1) for q in range(n + 1)]


def _check_degree(k):
    if int(k) != k or k < 1:
        raise ValueError(f"polynomial degree must be an integer >= 1, got {k}")
    if k > MAX_DEGREE:
        raise ValueError(f"polynomial degree {k} exceeds the supported maximum {MAX_DEGREE}")


def _jacobi_normalized(n, alpha, beta, x):
    """Jacobi polynomial normalized to unit L2 norm on [-1, 1] with its weight."""
    if n < 0:
        return np.zeros_like(x)
    log_gamma = ((alpha + beta + 1) * np.log(2.0) - np.log(2 * n + alpha + beta + 1)
                 + gammaln(n + alpha + 1) + gammaln(n + beta + 1)
                 - gammaln(n + alpha + beta + 1) - gammaln(n + 1))
    return eval_jacobi(n, alpha, beta, x) / np.exp(0.5 * log_gamma)


def _jacobi_normalized_deriv(n, alpha, beta, x):
    if n == 0:
        return np.zeros_like(x)
    return np.sqrt(n * (n + alpha + beta + 1)) * _jacobi_normalized(
        n - 1, alpha + 1, beta + 1, x)


def _collapsed(pts):
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    r = 2.0 * pts[:, 0] - 1.0
    s = 2.0 * pts[:, 1] - 1.0
    denom = 1.0 - s
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(np.abs(denom) > 1e-14, 2.0 * (1.0 + r) / denom - 1.0, -1.0)
    return a, s


def eval_basis(k: int, pts) -> np.ndarray:
    """Values of the orthonormal degree-``k`` basis, shape ``(n_k, npts)``."""
    _check_degree(k)
    a, b = _collapsed(pts)
    out = np.empty((basis_dim(k), a.size))
    for i, (p, q) in enumerate(basis_indices(k)):
        out[i] = (_jacobi_normalized(p, 0, 0, a)
                  * _jacobi_normalized(q, 2 * p + 1, 0, b)
                  * (1.0 - b) ** p)
    # sqrt(2) orthonormalizes on the biunit triangle, 2 maps to area 1/2
    return 2.0 * np.sqrt(2.0) * out


def eval_grad(k: int, pts) -> np.ndarray:
    """Reference gradients, shape ``(n_k, npts, 2)``."""
    _check_degree(k)
    a, b = _collapsed(pts)
    out = np.empty((basis_dim(k), a.size, 2))
    half = 0.5 * (1.0 - b)
    for i, (p, q) in enumerate(basis_indices(k)):
        fa = _jacobi_normalized(p, 0, 0, a)
        dfa = _jacobi_normalized_deriv(p, 0, 0, a)
        gb = _jacobi_normalized(q, 2 * p + 1, 0, b)
        dgb = _jacobi_normalized_deriv(q, 2 * p + 1, 0, b)
        dr = dfa * gb
        ds = dfa * gb * 0.5 * (1.0 + a)
        if p > 0:
            dr = dr * half ** (p - 1)
            ds = ds * half ** (p - 1)
        tmp = dgb * half ** p
        if p > 0:
            tmp = tmp - 0.5 * p * gb * half ** (p - 1)
        ds = ds + fa * tmp
        scale = 2.0 ** (p + 0.5)
        out[i, :, 0] = dr * scale
        out[i, :, 1] = ds * scale
    # d/dx = 2 d/dr on the unit triangle, times the area normalization 2
    return 4.0 * out


@dataclass(frozen=True)
class QuadratureRule:
    """Points and weights with the polynomial degree they integrate exactly."""

    points: np.ndarray
    weights: np.ndarray
    degree: int

    def __len__(self):
        return len(self.weights)


def _check_quad_degree(d):
    if int(d) != d or d < 0:
        raise ValueError(f"quadrature degree must be a non-negative integer, got {d}")
    if d > MAX_QUAD_DEGREE:
        raise ValueError(
            f"quadrature degree {d} not supported (maximum is {MAX_QUAD_DEGREE})")


@lru_cache(maxsize=None)
def quad_edge(d: int) -> QuadratureRule:
    """Gauss-Legendre rule on [0, 1] exact for degree ``d``."""
    _check_quad_degree(d)
    n = d // 2 + 1
    x, w = np.polynomial.legendre.leggauss(n)
    pts = 0.5 * (x + 1.0)
    wts = 0.5 * w
    pts.setflags(write=False)
    wts.setflags(write=False)
    return QuadratureRule(pts, wts, d)


@lru_cache(maxsize=None)
def quad_triangle(d: int) -> QuadratureRule:
    """Collapsed Gauss-Jacobi product rule on the reference triangle.

    Uses ``ceil((d + 1) / 2)`` points per direction; weights are positive
    and points interior.
    """
    _check_quad_degree(d)
    n = d // 2 + 1
    xg, wg = np.polynomial.legendre.leggauss(n)
    xj, wj = roots_jacobi(n, 1.0, 0.0)
    xi = 0.5 * (xg + 1.0)
    eta = 0.5 * (xj + 1.0)
    # integral of g(eta)(1 - eta) on [0,1] = 1/4 * Gauss-Jacobi(1,0) sum
    X = xi[None, :] * (1.0 - eta[:, None])
    Y = np.broadcast_to(eta[:, None], X.shape)
    W = 0.25 * wj[:, None] * 0.5 * wg[None, :]
    pts = np.column_stack([X.ravel(), Y.ravel()])
    wts = W.ravel().copy()
    pts.setflags(write=False)
    wts.setflags(write=False)
    return QuadratureRule(pts, wts, d)


class ReferenceBasis:
    """Tabulated degree-``k`` basis.

    >>> rb = ReferenceBasis(3)
    >>> rb.dim
    10
    """

    def __init__(self, k: int):
        _check_degree(k)
        self.degree = k
        self.dim = basis_dim(k)

    def values(self, pts) -> np.ndarray:
        return eval_basis(self.degree, pts)

    def gradients(self, pts) -> np.ndarray:
        return eval_grad(self.degree, pts)

    def mass_matrix(self) -> np.ndarray:
        rule = quad_triangle(2 * self.degree)
        phi = self.values(rule.points)
        return (phi * rule.weights) @ phi.T
