"""Schur-complement approximations and block triangular preconditioners.

All preconditioners act on the sign-flipped system

    K = [[A_d, G^T, 0], [G, -A_s, B^T], [0, B, 0]]

and are lower block triangular with diagonal (A_d, +-S1, S2).  The
application ``z = M^{-1} r`` is a block forward substitution.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .assembly import BlockSystem
from .krylov import GmresConfig, gmres
from .sparse import (Factorization, FactorizationError, factor, incomplete_cholesky,
                     pardiso_available)

DEFAULT_TAU = 1.0 / 3.0
EXACT_S2_MAX_N = 64
DENSE_S2_MAX_N = 64
PARDISO_MIN_N = 512


class SizeGuardError(ValueError):
    """Raised when an exact-Schur construction is requested on a large grid."""


class InnerSolveError(RuntimeError):
    pass


@dataclass(frozen=True)
class VariantSpec:
    s1: str          # "hat" (A_s + T) or "exact" (A_s + G A_d^{-1} G^T)
    s1_sign: int     # sign of the (2,2) block
    s2: str          # "hat" (diagonal) or "exact" (B S1^{-1} B^T)
    lower_G: bool    # keep G in the (2,1) block
    lower_B: bool    # keep B in the (3,2) block


VARIANTS: dict[str, VariantSpec] = {
    "m1ideal": VariantSpec("exact", +1, "exact", False, False),
    "m2ideal": VariantSpec("exact", +1, "exact", True, False),
    "m3ideal": VariantSpec("exact", -1, "exact", True, True),
    "m1tilde": VariantSpec("exact", -1, "exact", False, False),
    "m2tilde": VariantSpec("exact", -1, "exact", True, False),
    "m3tilde": VariantSpec("exact", +1, "exact", True, True),
    "m1hat": VariantSpec("hat", -1, "hat", False, False),
    "m2hat": VariantSpec("hat", -1, "hat", True, False),
    "m3hat": VariantSpec("hat", -1, "hat", True, True),
    "m1in": VariantSpec("hat", +1, "exact", False, False),
    "m2in": VariantSpec("hat", +1, "exact", True, False),
    "m3in": VariantSpec("exact", -1, "hat", True, True),
}

ALIASES = {"m1": "m1ideal", "m2": "m2ideal", "m3": "m3ideal"}

T_MODES = ("identity", "ic", "exact")


def canonical_variant(name: str) -> str:
    key = name.strip().lower().replace("_", "").replace("-", "")
    key = ALIASES.get(key, key)
    if key not in VARIANTS:
        raise ValueError(f"unknown preconditioner {name!r}; choose from {sorted(VARIANTS)}")
    return key


# --------------------------------------------------------------------------
# interface block T ~ nonzero block of G A_d^{-1} G^T

@dataclass(frozen=True)
class InterfaceBlockT:
    T: np.ndarray
    mode: str
    tau: float = DEFAULT_TAU
    shift: float = 0.0


def _interface_coupling(system: BlockSystem) -> tuple[np.ndarray, np.ndarray]:
    """Dense n x n block of G between the interface v row and the phi columns it touches."""
    lay = system.layout
    Gv = system.G[lay.n_u:lay.n_u + lay.n_vg, :].tocsc()
    cols = np.unique(Gv.nonzero()[1])
    if cols.size != lay.n_vg:
        raise ValueError("coupling block is not square on the interface")
    return Gv[:, cols].toarray(), cols


def build_T(system: BlockSystem, mode: str = "ic", droptol: float = 1e-2,
            tau: float = DEFAULT_TAU, Ad_factor: Factorization | None = None,
            ic_rule: str = "update", ic_norm: str = "2") -> InterfaceBlockT:
    """Dense approximation of the interface block of G A_d^{-1} G^T.

    ``identity`` gives (tau/kappa) I; ``ic`` uses the trailing block of a
    threshold incomplete Cholesky factor of A_d; ``exact`` solves with A_d.
    """
    if mode not in T_MODES:
        raise ValueError(f"unknown T mode {mode!r}; choose from {T_MODES}")
    n = system.n
    if mode == "identity":
        return InterfaceBlockT((tau / system.params.kappa) * np.eye(n), mode, tau)
    Gc, cols = _interface_coupling(system)
    if mode == "ic":
        trailing = np.arange(system.layout.n_phi - n, system.layout.n_phi)
        if not np.array_equal(cols, trailing):
            raise ValueError("ic-based T needs the interface Darcy row last in the ordering")
        F = incomplete_cholesky(system.A_d, droptol=droptol, rule=ic_rule, norm=ic_norm)
        F22 = F.L[-n:, :][:, -n:].toarray()
        W = sla.solve_triangular(F22, Gc.T, lower=True)  # F22^{-1} Gc^T
        T = W.T @ W
        return InterfaceBlockT(0.5 * (T + T.T), mode, tau, F.shift)
    Fd = Ad_factor or factor(system.A_d, "ldl")
    E = np.zeros((system.layout.n_phi, n))
    E[cols, :] = Gc.T
    W = Fd.solve(E)
    T = Gc @ W[cols, :]
    return InterfaceBlockT(0.5 * (T + T.T), mode, tau)


def s1_matrix(system: BlockSystem, T: np.ndarray | InterfaceBlockT) -> sp.csr_matrix:
    """A_s with the dense block T added in the interface-v slot."""
    if isinstance(T, InterfaceBlockT):
        T = T.T
    lay = system.layout
    n = system.n
    if T.shape != (n, n):
        raise ValueError(f"T has shape {T.shape}, expected {(n, n)}")
    r, c = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    off = lay.n_u
    emb = sp.csr_matrix((T.ravel(), ((r + off).ravel(), (c + off).ravel())),
                        shape=system.A_s.shape)
    return (system.A_s + emb).tocsr()


def _backend(system: BlockSystem, backend: str) -> str:
    if backend == "auto":
        return "pardiso" if system.n >= PARDISO_MIN_N and pardiso_available() else "superlu"
    if backend not in ("superlu", "pardiso"):
        raise ValueError(f"unknown factorization backend {backend!r}")
    return backend


def build_S1_approx(system: BlockSystem, T: np.ndarray | InterfaceBlockT,
                    backend: str = "superlu") -> Factorization:
    S1 = s1_matrix(system, T)
    try:
        return factor(S1, "pardiso" if _backend(system, backend) == "pardiso" else "lu")
    except FactorizationError as exc:
        raise FactorizationError(f"LU of the (2,2) Schur approximation failed: {exc}") from exc


def exact_S1_matrix(system: BlockSystem, Ad_factor: Factorization | None = None) -> sp.csr_matrix:
    return s1_matrix(system, build_T(system, "exact", Ad_factor=Ad_factor))


def build_S2_hat(system: BlockSystem, tau: float = DEFAULT_TAU) -> np.ndarray:
    """Diagonal of the pressure Schur approximation (interface-adjacent row first)."""
    nu, kappa = system.params.nu, system.params.kappa
    h2 = system.h ** 2
    d = np.full(system.layout.n_p, 1.0 / nu)
    d[:system.n] = (3 * nu * kappa + h2 * tau) / (nu * (2 * nu * kappa + h2 * tau))
    return d


def cross_term_norms(system: BlockSystem, tau: float = DEFAULT_TAU) -> tuple[float, float]:
    """Frobenius norms of the dropped and kept interface terms behind the diagonal S2 model.

    Returns (||B0 A22t^{-1} A23 A33^{-1} B_y^T||, ||B0 A22t^{-1} B0^T||) with
    A22t = A22 + (tau/kappa) I.
    """
    A22t = system.A22.toarray() + (tau / system.params.kappa) * np.eye(system.n)
    B0 = system.B_0.toarray()
    A22inv_B0T = np.linalg.solve(A22t, B0.T)
    kept = B0 @ A22inv_B0T
    A33 = factor(system.A33, "lu")
    Y = A33.solve(system.B_y.T.toarray())
    dropped = (B0 @ np.linalg.solve(A22t, system.A23.toarray())) @ Y
    return float(np.linalg.norm(dropped)), float(np.linalg.norm(kept))


# --------------------------------------------------------------------------
# S2 solvers

@dataclass
class DiagonalS2:
    diag: np.ndarray

    def solve(self, r):
        return r / self.diag if r.ndim == 1 else r / self.diag[:, None]


@dataclass
class DenseS2:
    lu: tuple

    def solve(self, r):
        return sla.lu_solve(self.lu, r)


@dataclass
class InnerSolveS2:
    """S2 = B S1^{-1} B^T applied implicitly and inverted by unrestarted GMRES.

    The inner iteration is right-preconditioned by the diagonal model of S2
    (when given), so its stopping test is on the true residual of S2 z = r.
    """

    S1: Factorization
    B: sp.csr_matrix
    rtol: float = 1e-12
    maxiter: int = 2000
    diag: np.ndarray | None = None
    last_iterations: list = field(default_factory=list)

    def matvec(self, v):
        return self.B @ self.S1.solve(self.B.T @ v)

    def _solve1(self, r):
        d = np.ones(r.shape[0]) if self.diag is None else self.diag
        cfg = GmresConfig(restart=min(self.maxiter, r.shape[0]), rtol=self.rtol,
                          maxiter=self.maxiter)
        y, rep = gmres(lambda v: self.matvec(v / d), r, config=cfg)
        if not rep.converged:
            raise InnerSolveError(
                f"inner S2 solve did not reach rtol={self.rtol:g} in {rep.iterations} iterations")
        self.last_iterations.append(rep.iterations)
        return y / d

    def solve(self, r):
        if r.ndim == 1:
            return self._solve1(r)
        return np.column_stack([self._solve1(r[:, k]) for k in range(r.shape[1])])


def build_S2_exact_handle(system: BlockSystem, S1: Factorization, solver: str = "dense",
                          rtol: float = 1e-12, maxiter: int = 2000,
                          allow_large: bool = False):
    """Exact inverse of S2 = B S1^{-1} B^T, by inner GMRES or a dense LU."""
    n = system.n
    if solver == "gmres":
        if n > EXACT_S2_MAX_N and not allow_large:
            raise SizeGuardError(f"exact S2 requested at n={n} > {EXACT_S2_MAX_N}; pass allow_large")
        return InnerSolveS2(S1, system.B, rtol, maxiter, diag=build_S2_hat(system))
    if solver == "dense":
        if n > DENSE_S2_MAX_N and not allow_large:
            raise SizeGuardError(f"dense S2 requested at n={n} > {DENSE_S2_MAX_N}; pass allow_large")
        S2 = system.B @ S1.solve(system.B.T.toarray())
        return DenseS2(sla.lu_factor(S2))
    raise ValueError(f"unknown S2 solver {solver!r}")


# --------------------------------------------------------------------------
# block preconditioner

@dataclass(frozen=True)
class PreconditionerConfig:
    variant: str = "m3hat"
    t_mode: str = "ic"
    droptol: float = 1e-2
    tau: float = DEFAULT_TAU
    s2_solver: str = "dense"
    inner_rtol: float = 1e-12
    inner_maxiter: int = 2000
    allow_large: bool = False
    ic_rule: str = "update"


@dataclass
class PreconditionerInstance:
    variant: str
    spec: VariantSpec
    Ad: Factorization
    S1: Factorization
    S2: object
    G: sp.csr_matrix
    B: sp.csr_matrix
    n_phi: int
    n_vel: int
    T: InterfaceBlockT | None = None
    config: PreconditionerConfig | None = None

    @property
    def shape(self):
        N = self.n_phi + self.n_vel + self.B.shape[0]
        return (N, N)

    def apply(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        a, b = self.n_phi, self.n_phi + self.n_vel
        r1, r2, r3 = r[:a], r[a:b], r[b:]
        z1 = self.Ad.solve(r1)
        if self.spec.lower_G:
            r2 = r2 - self.G @ z1
        z2 = self.S1.solve(r2)
        if self.spec.s1_sign < 0:
            z2 = -z2
        if self.spec.lower_B:
            r3 = r3 - self.B @ z2
        z3 = self.S2.solve(r3)
        return np.concatenate([z1, z2, z3])

    __call__ = apply
    matvec = apply


def build_preconditioner(system: BlockSystem, variant: str = "m3hat", t_mode: str = "ic",
                         droptol: float = 1e-2, tau: float = DEFAULT_TAU,
                         s2_solver: str = "dense", allow_large: bool = False,
                         inner_rtol: float = 1e-12, inner_maxiter: int = 2000,
                         ic_rule: str = "update", backend: str = "auto") -> PreconditionerInstance:
    """Build one of the block preconditioners listed in ``VARIANTS``.

    ``t_mode`` only matters for variants with an approximate S1.  Exact S1
    variants embed the exact interface block; exact S2 variants invert
    B S1^{-1} B^T with the exact S1.  ``backend`` picks SuperLU or PARDISO
    for the A_d and S1 factorizations (``auto``: PARDISO from n = 512).
    """
    key = canonical_variant(variant)
    spec = VARIANTS[key]
    cfg = PreconditionerConfig(key, t_mode, droptol, tau, s2_solver, inner_rtol,
                               inner_maxiter, allow_large, ic_rule)
    if spec.s2 == "exact" and system.n > EXACT_S2_MAX_N and not allow_large:
        raise SizeGuardError(f"{key} needs an exact S2; n={system.n} exceeds {EXACT_S2_MAX_N}")
    backend = _backend(system, backend)
    Ad = factor(system.A_d, "pardiso" if backend == "pardiso" else "ldl")
    if spec.s1 == "hat":
        T = build_T(system, t_mode, droptol=droptol, tau=tau, Ad_factor=Ad, ic_rule=ic_rule)
    else:
        T = build_T(system, "exact", Ad_factor=Ad)
    S1 = build_S1_approx(system, T, backend)
    if spec.s2 == "hat":
        S2 = DiagonalS2(build_S2_hat(system, tau))
    else:
        S1_for_S2 = S1 if spec.s1 == "exact" else build_S1_approx(system, build_T(system, "exact", Ad_factor=Ad))
        S2 = build_S2_exact_handle(system, S1_for_S2, s2_solver, inner_rtol, inner_maxiter, allow_large)
    return PreconditionerInstance(key, spec, Ad, S1, S2, system.G, system.B,
                                  system.layout.n_phi, system.layout.n_vel, T, cfg)
