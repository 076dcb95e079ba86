"""Sparse and dense linear-algebra kernels.

CSR storage and sparse LU come from scipy; the (incomplete) Cholesky
factorization, triangular solves and the rank-revealing elimination are
implemented here.
"""
from __future__ import annotations

import glob
import os
import sys
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.io
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from numba import njit

CsrMatrix = sp.csr_matrix


class FactorizationError(RuntimeError):
    """Base class for failed factorizations."""


class NotPositiveDefiniteError(FactorizationError):
    def __init__(self, pivot: int, value: float):
        super().__init__(f"non-positive pivot {value:.3e} at index {pivot}")
        self.pivot = pivot
        self.value = value


class SingularMatrixError(FactorizationError):
    pass


def as_csr(A) -> sp.csr_matrix:
    """Canonical CSR: sorted unique column indices, no stored zeros."""
    A = sp.csr_matrix(A, dtype=float, copy=True)
    A.sum_duplicates()
    A.eliminate_zeros()
    A.sort_indices()
    return A


def spmv(A, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    if A.shape[1] != x.shape[0]:
        raise ValueError(f"dimension mismatch: matrix {A.shape} times vector {x.shape}")
    return A @ x


# --------------------------------------------------------------------------
# left-looking (incomplete) Cholesky with threshold dropping

@njit(cache=True)
def _ichol_kernel(N, Ap, Ai, Ax, thresh, scaled, cap):
    # Ap/Ai/Ax: lower triangle of A in CSC with sorted rows.
    # Returns (status, info, Lp, Li, Lx); status 0 ok, 1 out of capacity,
    # 2 breakdown at column `info`.
    Lp = np.zeros(N + 1, np.int64)
    Li = np.empty(cap, np.int64)
    Lx = np.empty(cap, np.float64)
    w = np.zeros(N)
    mark = np.full(N, -1, np.int64)
    pat = np.empty(N, np.int64)
    keep = np.empty(N, np.int64)
    head = np.full(N, -1, np.int64)
    link = np.full(N, -1, np.int64)
    nxt = np.zeros(N, np.int64)
    nz = 0
    for j in range(N):
        npat = 0
        mark[j] = j
        pat[0] = j
        w[j] = 0.0
        npat = 1
        for p in range(Ap[j], Ap[j + 1]):
            i = Ai[p]
            if i < j:
                continue
            if mark[i] != j:
                mark[i] = j
                pat[npat] = i
                npat += 1
                w[i] = 0.0
            w[i] += Ax[p]
        k = head[j]
        while k != -1:
            knext = link[k]
            pk = nxt[k]
            ljk = Lx[pk]
            for p in range(pk, Lp[k + 1]):
                i = Li[p]
                if mark[i] != j:
                    mark[i] = j
                    pat[npat] = i
                    npat += 1
                    w[i] = 0.0
                w[i] -= Lx[p] * ljk
            pk += 1
            nxt[k] = pk
            if pk < Lp[k + 1]:
                r = Li[pk]
                link[k] = head[r]
                head[r] = k
            k = knext
        d = w[j]
        if not d > 0.0:
            Lx[0] = d
            return 2, j, Lp, Li, Lx
        nkeep = 0
        tj = thresh[j] * np.sqrt(d) if scaled else thresh[j]
        for t in range(1, npat):
            i = pat[t]
            if abs(w[i]) >= tj and w[i] != 0.0:
                keep[nkeep] = i
                nkeep += 1
        if nz + nkeep + 1 > cap:
            return 1, j, Lp, Li, Lx
        rows = np.sort(keep[:nkeep])
        ljj = np.sqrt(d)
        Li[nz] = j
        Lx[nz] = ljj
        nz += 1
        for t in range(nkeep):
            Li[nz] = rows[t]
            Lx[nz] = w[rows[t]] / ljj
            nz += 1
        Lp[j + 1] = nz
        if nkeep > 0:
            nxt[j] = Lp[j] + 1
            r = Li[nxt[j]]
            link[j] = head[r]
            head[r] = j
    return 0, N, Lp, Li[:nz].copy(), Lx[:nz].copy()


@njit(cache=True)
def _lower_solve(Lp, Li, Lx, b):
    x = b.copy()
    N = Lp.shape[0] - 1
    for j in range(N):
        p0 = Lp[j]
        for c in range(x.shape[1]):
            x[j, c] /= Lx[p0]
        for p in range(p0 + 1, Lp[j + 1]):
            i = Li[p]
            v = Lx[p]
            for c in range(x.shape[1]):
                x[i, c] -= v * x[j, c]
    return x


@njit(cache=True)
def _upper_solve(Lp, Li, Lx, b):
    # solves L^T x = b with L stored by columns
    x = b.copy()
    N = Lp.shape[0] - 1
    for j in range(N - 1, -1, -1):
        p0 = Lp[j]
        for p in range(p0 + 1, Lp[j + 1]):
            i = Li[p]
            v = Lx[p]
            for c in range(x.shape[1]):
                x[j, c] -= v * x[i, c]
        for c in range(x.shape[1]):
            x[j, c] /= Lx[p0]
    return x


def _run_ichol(A: sp.csr_matrix, droptol: float, scaled: bool = True, norm: str = "2"):
    N = A.shape[0]
    lower = sp.tril(A, format="csc")
    lower.sort_indices()
    if norm == "2":
        colnorm = np.sqrt(np.asarray(A.multiply(A).sum(axis=0)).ravel())
    elif norm == "lower1":
        colnorm = np.asarray(abs(lower).sum(axis=0)).ravel()
    else:
        raise ValueError(f"unknown column norm {norm!r}")
    thresh = droptol * colnorm
    cap = max(4 * lower.nnz, 1024)
    while True:
        status, info, Lp, Li, Lx = _ichol_kernel(
            N, lower.indptr.astype(np.int64), lower.indices.astype(np.int64),
            lower.data.astype(np.float64), thresh, scaled, cap)
        if status == 0:
            return sp.csc_matrix((Lx, Li, Lp), shape=(N, N))
        if status == 2:
            raise NotPositiveDefiniteError(int(info), float(Lx[0]))
        cap *= 2


@dataclass
class Factorization:
    """A factorized square matrix exposing ``solve``."""

    kind: str
    shape: tuple[int, int]
    L: sp.csc_matrix | None = None
    perm: np.ndarray | None = None
    droptol: float | None = None
    shift: float = 0.0
    _lu: object = field(default=None, repr=False)
    _solver: Callable | None = field(default=None, repr=False)

    def solve(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        if b.shape[0] != self.shape[0]:
            raise ValueError(f"right-hand side has {b.shape[0]} rows, expected {self.shape[0]}")
        if self._solver is not None:
            return self._solver(b)
        if self._lu is not None:
            return self._lu.solve(b)
        one = b.ndim == 1
        rhs = b.reshape(b.shape[0], -1)
        if self.perm is not None:
            rhs = rhs[self.perm]
        L = self.L
        y = _lower_solve(L.indptr.astype(np.int64), L.indices.astype(np.int64), L.data, np.ascontiguousarray(rhs))
        x = _upper_solve(L.indptr.astype(np.int64), L.indices.astype(np.int64), L.data, y)
        if self.perm is not None:
            out = np.empty_like(x)
            out[self.perm] = x
            x = out
        return x[:, 0] if one else x

    __call__ = solve


def _ordering(A: sp.csr_matrix, ordering: str) -> np.ndarray | None:
    if ordering == "natural":
        return None
    if ordering == "rcm":
        from scipy.sparse.csgraph import reverse_cuthill_mckee
        return np.asarray(reverse_cuthill_mckee(A, symmetric_mode=True), dtype=np.int64)
    raise ValueError(f"unknown ordering {ordering!r}")


def factor(A, kind: str = "lu", ordering: str | None = None) -> Factorization:
    """Complete factorization.

    ``cholesky`` uses the in-house left-looking kernel (``natural`` or
    ``rcm`` ordering); ``lu`` is SuperLU with partial pivoting and a COLAMD
    column ordering; ``ldl`` is SuperLU in symmetric mode, a fast path for
    SPD matrices; ``pardiso`` is MKL PARDISO, used for the largest grids.
    """
    A = as_csr(A)
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"square matrix required, got {A.shape}")
    if kind == "cholesky":
        perm = _ordering(A, ordering or "natural")
        Ap = A if perm is None else A[perm][:, perm]
        L = _run_ichol(Ap, 0.0)
        return Factorization("cholesky", A.shape, L=L, perm=perm, droptol=0.0)
    if kind == "pardiso":
        pardiso = _pardiso()
        if pardiso is None:
            raise ImportError("pypardiso is not available")
        ps = pardiso.PyPardisoSolver()
        Ac = A.tocsr().astype(np.float64)
        ps.factorize(Ac)

        def _solve(b):
            return ps.solve(Ac, np.ascontiguousarray(b, dtype=np.float64))
        return Factorization("pardiso", A.shape, _solver=_solve)
    if kind in ("lu", "ldl"):
        opts = dict(permc_spec=ordering or "COLAMD")
        if kind == "ldl":
            opts = dict(permc_spec=ordering or "MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                        options=dict(SymmetricMode=True))
        try:
            lu = spla.splu(A.tocsc(), **opts)
        except RuntimeError as exc:
            raise SingularMatrixError(str(exc)) from None
        if not np.all(np.isfinite(lu.U.diagonal())) or np.any(lu.U.diagonal() == 0):
            raise SingularMatrixError("zero pivot in LU factorization")
        if kind == "ldl" and np.any(lu.U.diagonal() <= 0):
            raise NotPositiveDefiniteError(int(np.argmin(lu.U.diagonal())), float(lu.U.diagonal().min()))
        return Factorization(kind, A.shape, _lu=lu)
    raise ValueError(f"unknown factorization kind {kind!r}")


def solve(F: Factorization, b: np.ndarray) -> np.ndarray:
    return F.solve(b)


def incomplete_cholesky(A, droptol: float = 1e-2, rule: str = "update", norm: str = "2",
                        shifts: tuple[float, ...] = (1e-3, 1e-2, 1e-1)) -> Factorization:
    """Threshold incomplete Cholesky in the natural ordering.

    A candidate entry of column j is dropped when it falls below
    ``droptol * ||A(:, j)||``.  With ``rule="factor"`` the test is applied
    to the entry of the factor (after division by the pivot); with
    ``rule="update"`` to the updated entry before scaling.  ``norm`` is
    ``"2"`` (full column) or ``"lower1"`` (1-norm of the lower part).  The
    diagonal is always kept.  On breakdown the factorization is retried on
    ``A + s*diag(A)`` for each shift in turn; the shift used is recorded.
    """
    A = as_csr(A)
    if droptol < 0:
        raise ValueError("droptol must be non-negative")
    if rule not in ("factor", "update"):
        raise ValueError(f"unknown drop rule {rule!r}")
    scaled = rule == "factor"
    try:
        L = _run_ichol(A, droptol, scaled, norm)
        return Factorization("incomplete-cholesky", A.shape, L=L, droptol=droptol)
    except NotPositiveDefiniteError as first:
        D = sp.diags(A.diagonal())
        for s in shifts:
            try:
                L = _run_ichol(as_csr(A + s * D), droptol, scaled, norm)
            except NotPositiveDefiniteError:
                continue
            return Factorization("incomplete-cholesky", A.shape, L=L, droptol=droptol, shift=s)
        raise first


# --------------------------------------------------------------------------
# dense rank by complete pivoting

def _eliminate(A: np.ndarray, tol: float) -> int:
    M = np.array(A, dtype=np.result_type(A, float), copy=True)
    if M.size == 0:
        return 0
    scale = np.abs(M).max()
    if scale == 0:
        return 0
    m, n = M.shape
    rank = 0
    for k in range(min(m, n)):
        sub = np.abs(M[k:, k:])
        r, c = np.unravel_index(np.argmax(sub), sub.shape)
        if sub[r, c] <= tol * scale:
            break
        r += k
        c += k
        if r != k:
            M[[k, r], k:] = M[[r, k], k:]
        if c != k:
            M[k:, [k, c]] = M[k:, [c, k]]
        piv = M[k, k]
        M[k + 1:, k + 1:] -= np.outer(M[k + 1:, k] / piv, M[k, k + 1:])
        rank += 1
    return rank


def dense_rank(A, tol: float = 1e-10) -> int:
    """Number of pivots above ``tol * max|A|`` in Gaussian elimination with complete pivoting."""
    A = A.toarray() if sp.issparse(A) else np.asarray(A)
    return _eliminate(A, tol)


def dense_nullity(A, tol: float = 1e-10) -> int:
    A = A.toarray() if sp.issparse(A) else np.asarray(A)
    return A.shape[1] - _eliminate(A, tol)


# --------------------------------------------------------------------------
# large direct solves and Matrix Market I/O

def pardiso_available() -> bool:
    return _pardiso() is not None


def _pardiso():
    if "PYPARDISO_MKL_RT" not in os.environ:
        for base in (sys.prefix, "/usr/local", "/usr"):
            hits = sorted(glob.glob(os.path.join(base, "lib", "libmkl_rt.so*")))
            if hits:
                os.environ["PYPARDISO_MKL_RT"] = hits[0]
                break
    try:
        import pypardiso
    except ImportError:
        return None
    return pypardiso


def direct_solve(A, b: np.ndarray, backend: str = "auto") -> np.ndarray:
    """One-off sparse direct solve (PARDISO when available, SuperLU otherwise)."""
    A = sp.csr_matrix(A)
    if backend in ("auto", "pardiso"):
        pardiso = _pardiso()
        if pardiso is not None:
            solver = pardiso.PyPardisoSolver()
            x = solver.solve(A, np.asarray(b, dtype=float))
            solver.free_memory(everything=True)
            return x
        if backend == "pardiso":
            raise ImportError("pypardiso is not available")
    return factor(A, "lu").solve(b)


def mm_write(path, A, comment: str = "", symmetric: bool | None = None) -> None:
    A = sp.coo_matrix(A)
    if symmetric is None:
        C = A.tocsr()
        symmetric = C.shape[0] == C.shape[1] and (C - C.T).count_nonzero() == 0
    scipy.io.mmwrite(str(path), A, comment=comment, symmetry="symmetric" if symmetric else "general")


def mm_read(path) -> sp.csr_matrix:
    return as_csr(scipy.io.mmread(str(path)))
