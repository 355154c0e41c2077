"""Generalized eigensolvers for ``K x = lam M x`` with block-diagonal SPD ``M``.

Two independent paths:

* :func:`dense_generalized_eig` reduces to the standard problem
  ``L^-1 K L^-T`` through a per-element Cholesky factorization of ``M`` and
  calls LAPACK (symmetric driver when ``K`` is symmetric, Hessenberg/QR
  otherwise);
* :func:`shift_invert_arnoldi` is a Krylov-Schur restarted Arnoldi method on
  ``(K - sigma M)^-1 M`` in the ``M`` inner product, using a sparse LU
  factorization of the shifted matrix.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "EigensolverError",
    "NotPositiveDefiniteError",
    "ConvergenceError",
    "SingularShiftError",
    "BlockCholesky",
    "Spectrum",
    "block_cholesky",
    "dense_generalized_eig",
    "shift_invert_arnoldi",
    "filter_physical",
    "relative_residuals",
    "DENSE_LIMIT",
]

log = logging.getLogger(__name__)

DENSE_LIMIT = 6000


class EigensolverError(RuntimeError):
    pass


class NotPositiveDefiniteError(EigensolverError):
    pass


class ConvergenceError(EigensolverError):
    pass


class SingularShiftError(EigensolverError):
    pass


# ------------------------------------------------------------ block Cholesky

class BlockCholesky:
    """Per-block lower Cholesky factors of a block-diagonal SPD matrix."""

    def __init__(self, factors: np.ndarray):
        self.factors = factors
        self.nblocks, self.bsize, _ = factors.shape
        eye = np.broadcast_to(np.eye(self.bsize), factors.shape)
        self._inv = np.linalg.solve(factors, eye)

    @property
    def n(self) -> int:
        return self.nblocks * self.bsize

    def _apply(self, mats, x):
        x = np.asarray(x)
        shape = x.shape
        xb = x.reshape(self.nblocks, self.bsize, -1)
        return np.matmul(mats, xb).reshape(shape)

    def apply_L(self, x):
        return self._apply(self.factors, x)

    def apply_LT(self, x):
        return self._apply(np.swapaxes(self.factors, 1, 2), x)

    def solve_L(self, x):
        return self._apply(self._inv, x)

    def solve_LT(self, x):
        return self._apply(np.swapaxes(self._inv, 1, 2), x)

    def dense_L(self) -> np.ndarray:
        return la.block_diag(*self.factors)


def extract_blocks(M, block_size: int) -> np.ndarray:
    """Diagonal blocks of a block-diagonal sparse matrix, shape (nb, b, b)."""
    M = sp.coo_matrix(M)
    n = M.shape[0]
    if M.shape[0] != M.shape[1] or n % block_size:
        raise ValueError(f"matrix of shape {M.shape} is not split into blocks of {block_size}")
    rb, cb = M.row // block_size, M.col // block_size
    off = np.flatnonzero((rb != cb) & (M.data != 0))
    if off.size:
        i = off[0]
        raise ValueError(
            f"matrix is not block diagonal: entry ({M.row[i]}, {M.col[i]}) couples "
            f"blocks {rb[i]} and {cb[i]}")
    blocks = np.zeros((n // block_size, block_size, block_size))
    np.add.at(blocks, (rb, M.row % block_size, M.col % block_size), M.data)
    return blocks


def block_cholesky(M, block_size: int) -> BlockCholesky:
    """Cholesky-factor each diagonal block of ``M``.

    Raises :class:`NotPositiveDefiniteError` naming the first block whose
    factorization fails.
    """
    blocks = extract_blocks(M, block_size)
    try:
        L = np.linalg.cholesky(blocks)
    except np.linalg.LinAlgError:
        for b, blk in enumerate(blocks):
            try:
                np.linalg.cholesky(blk)
            except np.linalg.LinAlgError:
                raise NotPositiveDefiniteError(
                    f"block {b} (element {b}) is not positive definite; "
                    f"smallest diagonal entry {blk.diagonal().min():.3e}") from None
        raise
    if not np.all(np.isfinite(L)):
        raise NotPositiveDefiniteError("non-finite Cholesky factor")
    return BlockCholesky(L)


# ------------------------------------------------------------------ spectrum

@dataclass
class Spectrum:
    """Eigenvalues sorted by real part, with optional eigenvectors (columns).

    ``multiplicity`` is 1 per entry unless conjugate pairs were merged.
    """

    values: np.ndarray
    vectors: np.ndarray | None
    residuals: np.ndarray
    path: str = "dense"
    shift: float | None = None
    iterations: int = 0
    tolerance: float = np.nan
    multiplicity: np.ndarray | None = None
    partial: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        self.residuals = np.asarray(self.residuals, dtype=float)
        if self.multiplicity is None:
            self.multiplicity = np.ones(len(self.values), dtype=int)

    def __len__(self):
        return len(self.values)

    @property
    def real(self) -> np.ndarray:
        return self.values.real

    @property
    def omega2(self) -> np.ndarray:
        """Squared frequencies ``Re(lam) - 1``."""
        return self.values.real - 1.0

    def expanded(self) -> np.ndarray:
        """Real parts repeated according to multiplicity."""
        return np.repeat(self.values.real, self.multiplicity)

    def take(self, idx) -> "Spectrum":
        idx = np.asarray(idx, dtype=int)
        return replace(
            self,
            values=self.values[idx],
            vectors=None if self.vectors is None else self.vectors[:, idx],
            residuals=self.residuals[idx],
            multiplicity=self.multiplicity[idx],
            meta=dict(self.meta),
        )

    def sorted(self) -> "Spectrum":
        order = np.lexsort((self.values.imag, self.values.real))
        return self.take(order)

    def to_csv(self) -> str:
        rows = ["index,re,im,residual"]
        for i, (v, r) in enumerate(zip(self.values, self.residuals)):
            rows.append(f"{i},{v.real:.17g},{v.imag:.17g},{r:.6e}")
        return "\n".join(rows) + "\n"


def relative_residuals(K, M, values, vectors) -> np.ndarray:
    """``||K x - lam M x|| / (||K x|| + |lam| ||M x||)`` per column."""
    KX = K @ vectors
    MX = M @ vectors
    num = np.linalg.norm(KX - MX * values[None, :], axis=0)
    den = np.linalg.norm(KX, axis=0) + np.abs(values) * np.linalg.norm(MX, axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(den > 0, num / den, 0.0)


def _is_symmetric(K, rtol=1e-12):
    K = sp.csr_matrix(K)
    scale = abs(K).max()
    D = K - K.T
    return scale == 0 or (abs(D).max() if D.nnz else 0.0) <= rtol * scale


# ---------------------------------------------------------------- dense path

def dense_generalized_eig(K, M, block_size: int = 1, vectors: bool = True,
                          symmetric: bool | None = None,
                          limit: int = DENSE_LIMIT) -> Spectrum:
    """All eigenpairs via ``A = L^-1 K L^-T``.

    Symmetric ``K`` goes to the LAPACK symmetric driver; otherwise the
    matrix is reduced to Hessenberg form and iterated with shifted QR
    (LAPACK ``geev``), which may return conjugate pairs.
    """
    n = K.shape[0]
    if n > limit:
        raise ValueError(f"dense path limited to {limit} dofs, problem has {n}")
    if symmetric is None:
        symmetric = _is_symmetric(K)
    chol = block_cholesky(M, block_size)
    Kd = K.toarray() if sp.issparse(K) else np.asarray(K, dtype=float)
    A = chol.solve_L(Kd)
    A = chol.solve_L(A.T).T
    if symmetric:
        A = 0.5 * (A + A.T)
        if vectors:
            w, Y = la.eigh(A)
        else:
            w, Y = la.eigh(A, eigvals_only=True), None
    else:
        try:
            if vectors:
                w, Y = la.eig(A, overwrite_a=True, check_finite=False)
            else:
                w, Y = la.eigvals(A, overwrite_a=True, check_finite=False), None
        except la.LinAlgError as exc:
            raise ConvergenceError(f"QR iteration did not converge: {exc}") from None
    w = np.asarray(w, dtype=complex)
    order = np.lexsort((w.imag, w.real))
    w = w[order]
    if Y is not None:
        X = chol.solve_LT(Y[:, order])
        X = X / np.linalg.norm(X, axis=0)[None, :]
        res = relative_residuals(K, M, w, X)
    else:
        X = None
        res = np.full(len(w), np.nan)
    return Spectrum(w if not symmetric else w.real.astype(complex), X, res,
                    path="dense", tolerance=float(np.nanmax(res)) if Y is not None else np.nan)


# ------------------------------------------------------------- Arnoldi path

def _select(theta, which, count):
    """Indices of the ``count`` wanted Ritz values, best first."""
    if which == "nearest":
        key = np.abs(theta)
    elif which == "above":
        key = theta.real
    else:
        raise ValueError(f"unknown selection {which!r}")
    order = np.argsort(-key, kind="stable")
    chosen = list(order[:count])
    # keep conjugate partners together
    for i in list(chosen):
        if abs(theta[i].imag) > 0:
            partner = np.argmin(np.abs(theta - np.conj(theta[i])))
            if partner not in chosen:
                chosen.append(partner)
    return np.array(chosen, dtype=int), key


def shift_invert_arnoldi(K, M, sigma: float = 1.5, nev: int = 10,
                         tol: float = 1e-9, cap: int = 300, which: str = "nearest",
                         ncv: int | None = None, seed: int = 0,
                         symmetric: bool | None = None) -> Spectrum:
    """``nev`` eigenpairs of ``K x = lam M x`` near ``sigma``.

    ``which="nearest"`` returns the eigenvalues closest to ``sigma``;
    ``which="above"`` the ones with the smallest real part above ``sigma``
    (useful when ``sigma`` sits just above a huge cluster to be ignored).
    Convergence is declared when every wanted Ritz pair of the shifted and
    inverted operator has residual below ``tol * |theta|``; at most ``cap``
    restarts are performed.
    """
    K = sp.csc_matrix(K)
    M = sp.csc_matrix(M)
    n = K.shape[0]
    if nev < 1:
        raise ValueError("nev must be >= 1")
    if nev >= n - 1:
        raise ValueError(f"nev={nev} too large for a problem of size {n}; use the dense path")
    if symmetric is None:
        symmetric = _is_symmetric(K) and _is_symmetric(M)
    m = ncv if ncv is not None else max(20, 3 * nev)
    m = min(max(m, nev + 4), n)

    try:
        with np.errstate(all="ignore"):
            lu = spla.splu((K - sigma * M).tocsc())
    except RuntimeError as exc:
        raise SingularShiftError(
            f"K - sigma M is singular for sigma={sigma} ({exc}); "
            "retry with a slightly perturbed shift") from None
    if not np.all(np.isfinite(lu.U.diagonal())) or np.any(lu.U.diagonal() == 0):
        raise SingularShiftError(
            f"K - sigma M is singular for sigma={sigma}; retry with a perturbed shift")

    def op(x):
        return lu.solve(M @ x)

    def mnorm(x):
        return np.sqrt(max(float(x @ (M @ x)), 0.0))

    rng = np.random.default_rng(seed)
    V = np.zeros((n, m + 1))
    H = np.zeros((m + 1, m))
    v = op(rng.standard_normal(n))
    V[:, 0] = v / mnorm(v)
    start = 0
    n_op = 1
    restarts = 0
    converged = False
    theta = S = None
    beta = 0.0
    m_eff = m
    while True:
        for j in range(start, m):
            w = op(V[:, j])
            n_op += 1
            MV = M @ V[:, : j + 1]
            h = MV.T @ w
            w = w - V[:, : j + 1] @ h
            h2 = MV.T @ w
            w = w - V[:, : j + 1] @ h2
            h += h2
            H[: j + 1, j] = h
            beta = mnorm(w)
            H[j + 1, j] = beta
            if beta <= 1e-14 * np.abs(h).max():
                # invariant subspace found
                m_eff = j + 1
                break
            V[:, j + 1] = w / beta
        else:
            m_eff = m
        Hm = H[:m_eff, :m_eff]
        if symmetric:
            theta, S = la.eigh(0.5 * (Hm + Hm.T))
            theta = theta.astype(complex)
        else:
            theta, S = la.eig(Hm)
        S = S / np.linalg.norm(S, axis=0)[None, :]
        want, key = _select(theta, which, nev)
        ritz_res = np.abs(H[m_eff, m_eff - 1] * S[m_eff - 1, want])
        if m_eff < m or np.all(ritz_res <= tol * np.abs(theta[want])):
            converged = True
            break
        if restarts >= cap:
            break
        restarts += 1
        # Krylov-Schur restart: keep the wanted part of a sorted real Schur form
        keep_n = min(nev + max(2, (m_eff - nev) // 2), m_eff - 2)
        thr = np.sort(key)[::-1][keep_n - 1]
        if which == "nearest":
            def sel(re, im):
                return np.hypot(re, im) >= thr
        else:
            def sel(re, im):
                return re >= thr
        T, Z, sdim = la.schur(Hm, output="real", sort=sel)
        if sdim >= m_eff - 1 or sdim < nev:
            sdim = min(max(sdim, nev), m_eff - 2)
            # do not split a 2x2 block
            if sdim < m_eff and abs(T[sdim, sdim - 1]) > 0:
                sdim += 1
        b = H[m_eff, m_eff - 1] * Z[m_eff - 1, :sdim]
        V[:, :sdim] = V[:, :m_eff] @ Z[:, :sdim]
        V[:, sdim] = V[:, m_eff]
        V[:, sdim + 1:] = 0.0
        H[:] = 0.0
        H[:sdim, :sdim] = T[:sdim, :sdim]
        H[sdim, :sdim] = b
        start = sdim

    if not converged:
        worst = np.max(ritz_res / np.abs(theta[want]))
        raise ConvergenceError(
            f"Arnoldi did not converge after {cap} restarts "
            f"(worst relative Ritz residual {worst:.2e}, tol {tol:.1e})")

    want = want[:]
    th = theta[want]
    Y = V[:, :m_eff] @ S[:, want]
    # one free inverse-iteration step: OP y = theta y + beta s_m v_{m+1}
    if m_eff == m or H[m_eff, m_eff - 1] != 0:
        Y = Y + np.outer(V[:, m_eff], H[m_eff, m_eff - 1] * S[m_eff - 1, want] / th)
    if symmetric:
        Y = Y.real
        lam = np.einsum("ij,ij->j", Y, K @ Y) / np.einsum("ij,ij->j", Y, M @ Y)
        lam = lam.astype(complex)
    else:
        lam = sigma + 1.0 / th
    Y = Y / np.linalg.norm(Y, axis=0)[None, :]
    res = relative_residuals(K, M, lam, Y)
    order = np.lexsort((lam.imag, lam.real))
    log.debug("arnoldi: %d restarts, %d operator applications", restarts, n_op)
    # The Ritz test bounds the residual of the inverted operator; the residual
    # of the original pencil can sit at a round-off floor above ``tol`` on fine
    # meshes.  The reported tolerance is the bound actually achieved.
    achieved = float(res.max())
    if achieved > tol:
        log.info("arnoldi: pencil residual %.2e exceeds tol %.1e (round-off floor)",
                    achieved, tol)
    return Spectrum(lam[order], Y[:, order], res[order], path="arnoldi",
                    shift=sigma, iterations=restarts, tolerance=max(tol, achieved),
                    meta={"operator_applications": n_op, "krylov_dim": m})


# ------------------------------------------------------------------- filter

def filter_physical(s: Spectrum, delta: float | None = None, count: int | None = None,
                    merge_conjugates: bool = True, imag_tol: float = 1e-10) -> Spectrum:
    """Drop the ``lam = 1`` cluster and keep the first ``count`` entries.

    ``delta`` defaults to ``1e-6 (1 + max |lam kept|)``, where the kept
    entries are the first ``count`` survivors of a provisional pass with the
    floor gap ``2e-6`` (all survivors when ``count`` is None).  Scaling by the
    kept entries rather than the whole spectrum keeps penalty-dominated
    eigenvalues (up to ~1e7 on fine meshes) from widening the gap past
    physical modes; the default is also capped at ``1e-2`` so an uncounted
    call cannot be widened by the tail either.  Conjugate pairs are merged
    into one entry (positive imaginary part kept, multiplicity 2).
    ``partial`` is set when fewer than ``count`` entries survive.
    """
    s = s.sorted()
    if delta is None:
        floor = 2e-6
        cand = s.values[np.abs(s.values - 1.0) > floor]
        if count is not None:
            cand = cand[:max(int(count), 0)]
        delta = max(floor, 1e-6 * (1.0 + (np.abs(cand).max() if len(cand) else 0.0)))
        delta = min(delta, 1e-2)
    if delta <= 0:
        raise ValueError("delta must be positive")
    keep = np.flatnonzero(np.abs(s.values - 1.0) > delta)
    out = s.take(keep)
    if merge_conjugates and len(out):
        vals = out.values
        scale = np.maximum(np.abs(vals), 1.0)
        used = np.zeros(len(vals), dtype=bool)
        idx, mult = [], []
        for i in range(len(vals)):
            if used[i]:
                continue
            used[i] = True
            if abs(vals[i].imag) > imag_tol * scale[i]:
                cand = np.flatnonzero(~used & (np.abs(vals - np.conj(vals[i]))
                                               <= 1e-6 * scale[i]))
                if cand.size:
                    used[cand[0]] = True
                    j = i if vals[i].imag > 0 else cand[0]
                    idx.append(j)
                    mult.append(2)
                    continue
            idx.append(i)
            mult.append(1)
        out = out.take(idx)
        out.multiplicity = np.array(mult, dtype=int)
    if count is not None:
        out.partial = len(out) < count
        out = out.take(np.arange(min(count, len(out))))
        out.partial = len(out) < count
    out.meta["kernel_gap"] = delta
    return out
