"""Restarted left-preconditioned GMRES with modified Gram-Schmidt."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class GmresConfig:
    restart: int = 20
    rtol: float = 1e-8
    maxiter: int = 500
    reorthogonalize: bool = False

    def __post_init__(self):
        if self.restart < 1:
            raise ValueError("restart must be >= 1")
        if not self.rtol > 0:
            raise ValueError("rtol must be positive")
        if self.maxiter < 1:
            raise ValueError("maxiter must be >= 1")


@dataclass
class GmresReport:
    converged: bool
    iterations: int
    cycles: int
    residuals: list[float] = field(default_factory=list)
    true_residual: float = float("nan")

    @property
    def cell(self) -> str:
        """Table entry: iteration count, or '-' without convergence."""
        return str(self.iterations) if self.converged else "-"


class GmresBreakdown(FloatingPointError):
    pass


def as_operator(A) -> Callable[[np.ndarray], np.ndarray] | None:
    if A is None:
        return None
    if callable(A) and not hasattr(A, "shape"):
        return A
    if hasattr(A, "matvec"):
        return A.matvec
    if hasattr(A, "apply"):
        return A.apply
    return lambda x: A @ x


def gmres(A, b, M=None, x0=None, config: GmresConfig | None = None, **kwargs):
    """Solve ``A x = b`` by GMRES(m) on ``M^{-1} A x = M^{-1} b``.

    ``A`` and ``M`` are matrices or callables; ``M`` is applied as the
    inverse of the preconditioner.  Convergence is declared when the
    preconditioned residual relative to ``||M^{-1} b||`` drops below
    ``rtol``; iterations are counted cumulatively across restarts.

    Returns ``(x, GmresReport)``.
    """
    cfg = config or GmresConfig(**kwargs)
    if config is not None and kwargs:
        cfg = GmresConfig(**{**cfg.__dict__, **kwargs})
    Aop = as_operator(A)
    Mop = as_operator(M) or (lambda v: v)
    b = np.asarray(b, dtype=float)
    N = b.shape[0]
    x = np.zeros(N) if x0 is None else np.array(x0, dtype=float, copy=True)

    Mb = Mop(b)
    ref = np.linalg.norm(Mb)
    bnorm = np.linalg.norm(b)
    if ref == 0.0:
        return np.zeros(N), GmresReport(True, 0, 0, [0.0], 0.0)

    r = Mb if x0 is None else Mop(b - Aop(x))
    beta = np.linalg.norm(r)
    history = [beta / ref]
    total = 0
    cycles = 0
    converged = history[-1] <= cfg.rtol
    m = cfg.restart
    V = np.empty((m + 1, N))
    H = np.zeros((m + 1, m))
    cs = np.zeros(m)
    sn = np.zeros(m)

    while not converged and total < cfg.maxiter:
        cycles += 1
        V[0] = r / beta
        g = np.zeros(m + 1)
        g[0] = beta
        H[:] = 0.0
        k_done = 0
        happy = False
        for k in range(m):
            w = Mop(Aop(V[k]))
            total += 1
            if not np.all(np.isfinite(w)):
                raise GmresBreakdown(f"non-finite value in preconditioned operator at iteration {total}")
            for i in range(k + 1):
                H[i, k] = V[i] @ w
                w -= H[i, k] * V[i]
            if cfg.reorthogonalize:
                for i in range(k + 1):
                    c = V[i] @ w
                    H[i, k] += c
                    w -= c * V[i]
            hk1 = np.linalg.norm(w)
            H[k + 1, k] = hk1
            for i in range(k):
                t = cs[i] * H[i, k] + sn[i] * H[i + 1, k]
                H[i + 1, k] = -sn[i] * H[i, k] + cs[i] * H[i + 1, k]
                H[i, k] = t
            denom = np.hypot(H[k, k], H[k + 1, k])
            if denom == 0.0:
                raise GmresBreakdown("zero column in Hessenberg matrix")
            cs[k] = H[k, k] / denom
            sn[k] = H[k + 1, k] / denom
            H[k, k] = denom
            H[k + 1, k] = 0.0
            g[k + 1] = -sn[k] * g[k]
            g[k] = cs[k] * g[k]
            history.append(abs(g[k + 1]) / ref)
            k_done = k + 1
            happy = hk1 <= np.finfo(float).eps * denom
            if happy or history[-1] <= cfg.rtol or total >= cfg.maxiter:
                break
            V[k + 1] = w / hk1
        y = _back_substitute(H[:k_done, :k_done], g[:k_done])
        x += V[:k_done].T @ y
        r = Mop(b - Aop(x))
        beta = np.linalg.norm(r)
        converged = beta / ref <= cfg.rtol
        if happy and not converged:
            # invariant subspace found but the explicit residual disagrees; restart once more
            history[-1] = beta / ref
            if beta == 0.0:
                converged = True

    true_res = np.linalg.norm(b - Aop(x)) / bnorm if bnorm > 0 else 0.0
    return x, GmresReport(bool(converged), total, cycles, history, float(true_res))


def _back_substitute(R: np.ndarray, g: np.ndarray) -> np.ndarray:
    k = R.shape[0]
    y = np.zeros(k)
    for i in range(k - 1, -1, -1):
        y[i] = (g[i] - R[i, i + 1:] @ y[i + 1:]) / R[i, i]
    return y
