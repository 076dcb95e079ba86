"""Acceptance suite: one test and one summary line per criterion.

Reference values are frozen below.  Each test evaluates every cell at its
stated tolerance, records a pass/fail line and then asserts it.  Run with
``pytest tests/test_acceptance.py -v -s`` to see the detail lines inline.
"""
import numpy as np
import pytest
import scipy.sparse as sp

from stokes_darcy.experiments import convergence_orders, run_convergence, run_sweep
from stokes_darcy.krylov import GmresConfig, gmres
from stokes_darcy.precond import build_preconditioner
from stokes_darcy.sparse import dense_nullity, dense_rank, factor, incomplete_cholesky, solve
from stokes_darcy.spectral import (ANNIHILATORS, algebraic_multiplicity, annihilator_residual,
                                   expected_multiplicities, form_preconditioned_dense)

from conftest import cached_system

pytestmark = pytest.mark.acceptance

KAPPAS = (1.0, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8)
PROTOCOL = dict(droptol=1e-2, tau=1 / 3, rtol=1e-8, restart=20, maxit=500)
FAILED = "-"

# reference convergence orders for pairs 32/64 .. 256/512, rows as labelled in the source
REF_ORDERS = {
    1: {"u": (1.9888, 1.9957, 1.9983, 1.9994), "v": (1.9895, 1.9965, 1.9990, 1.9998),
        "p": (1.9946, 1.9982, 1.9994, 1.9998), "phi": (1.7136, 1.7759, 1.8198, 1.8514)},
    2: {"u": (1.9070, 1.7649, 1.4823, 1.2078), "v": (2.0639, 1.9929, 1.5441, 1.0405),
        "p": (2.0035, 2.0197, 2.0306, 2.0009), "phi": (1.0139, 1.0072, 1.0036, 1.0018)},
    3: {"u": (1.0386, 1.0158, 1.0065, 1.0027), "v": (1.0940, 1.0458, 1.0224, 1.0110),
        "p": (1.0767, 1.0351, 1.0165, 1.0079), "phi": (0.9750, 0.9872, 0.9935, 0.9968)},
}
ORDER_TOL = {1: 0.05, 2: 0.1, 3: 0.1}
# the reference rows labelled p and phi hold the phi and p orders respectively
# (every entry agrees to four digits under this one relabelling, none without it)
REF_ROW_TO_FIELD = {"u": "u", "v": "v", "p": "phi", "phi": "p"}

# reference iteration counts, rows n, columns KAPPAS
REF_M3HAT_NU1 = {
    32: (18, 17, 18, 18, 18, 18, 20, 21, 23),
    64: (19, 19, 19, 20, 21, 23, 24, 38, 39),
    128: (20, 20, 20, 23, 24, 35, 37, 37, 38),
}
REF_HYBRID = {
    "m1in": {32: (14, 17, 25, 33, 34, 29, 24, 25, 22), 64: (15, 19, 26, 35, 40, 38, 34, 31, 31)},
    "m2in": {32: (10, 12, 15, 17, 17, 16, 15, 15, 14), 64: (11, 14, 16, 21, 21, 21, 19, 17, 18)},
}
NU_SMALL_CAP = 15
SIMPLE_HAT_KAPPA = 1e-5
SIMPLE_HAT_FLOOR = 200
IDENTITY_T_BAND = (18 - 8, 31 + 8)
IDENTITY_T_DEGRADED = 40


def _count(text: str) -> int | None:
    return None if text == FAILED else int(text)


def _within(measured: str, ref: int, abs_tol: int, rel_tol: float) -> bool:
    m = _count(measured)
    return m is not None and abs(m - ref) <= max(abs_tol, rel_tol * ref)


def _sweep(variant, nu, ns, kappas=KAPPAS, **extra):
    opts = dict(PROTOCOL)
    opts.update(extra)
    (table,) = run_sweep([variant], 3, nu, kappas, ns, **opts)
    return table


# --------------------------------------------------------------------------

SPECTRAL_VARIANTS = ("m1ideal", "m2ideal", "m2tilde", "m3tilde")


def test_spectral_multiplicities(record_acceptance):
    misses, info, checked = [], [], 0
    for n in (4, 6, 8):
        s = cached_system(3, n, 1.0, 1.0)
        for variant in SPECTRAL_VARIANTS:
            X = form_preconditioned_dense(s.K, build_preconditioner(s, variant, s2_solver="dense"), n)
            for label, lam, mult in expected_multiplicities(variant, n):
                got = dense_nullity(X - lam * np.eye(X.shape[0]), tol=1e-8)
                checked += 1
                if got != mult:
                    alg, _, index = algebraic_multiplicity(X, lam)
                    misses.append(f"{variant} n={n} lambda={label}: nullity {got} != {mult}")
                    info.append(f"algebraic {alg}, Jordan index {index}")
    detail = f"{checked - len(misses)}/{checked} nullities exact"
    if misses:
        detail += "; " + "; ".join(f"{m} [{i}]" for m, i in zip(misses, info))
    assert record_acceptance("1", "spectral nullity counts n=4,6,8", not misses, detail), detail


def test_ideal_m3_cubic_annihilator_and_gmres(record_acceptance):
    s = cached_system(3, 8, 1.0, 1.0)
    M = build_preconditioner(s, "m3ideal", s2_solver="dense")
    X = form_preconditioned_dense(s.K, M, 8)
    res = annihilator_residual(X, ANNIHILATORS["m3ideal"], trials=20, seed=0)
    iters = {}
    for n in (8, 16):
        t = cached_system(3, n, 1.0, 1.0)
        _, rep = gmres(t.K, t.rhs, M=build_preconditioner(t, "m3ideal", s2_solver="dense"),
                       config=GmresConfig(restart=20, rtol=1e-8, maxiter=500))
        iters[n] = rep.iterations if rep.converged else None
    ok = res <= 1e-8 and all(v is not None and v <= 3 for v in iters.values())
    detail = f"max ||(X-I)^3 v||/||v|| = {res:.2e}; GMRES iterations {iters}"
    assert record_acceptance("2", "ideal block-triangular: cubic annihilator, <=3 iterations",
                             ok, detail), detail


def test_rank_and_definiteness(record_acceptance):
    bad = []
    for n in range(2, 9):
        s = cached_system(3, n, 1.0, 1.0)
        if dense_rank(s.B) != n * n:
            bad.append(f"rank B n={n}")
        if dense_nullity(s.B_bar) != (n - 1) ** 2:
            bad.append(f"nullity B_bar n={n}")
        GB = sp.hstack([s.G, s.B.T]).toarray()
        if np.linalg.norm(GB @ np.ones(GB.shape[1])) > 1e-12 * np.abs(GB).max():
            bad.append(f"(G B^T) e n={n}")
    for n in range(2, 33):
        s = cached_system(3, n, 1.0, 1.0)
        try:
            factor(s.A_d, "cholesky")
            factor(s.A11, "cholesky")
            lay = s.layout
            E = s.A_s[lay.n_u:, :][:, lay.n_u:].toarray()
            d = np.concatenate([np.ones(n), np.full(lay.n_vi, np.sqrt(2.0))])
            Es = (d[:, None] * E) / d[None, :]
            if np.abs(Es - Es.T).max() > 1e-12 * np.abs(Es).max():
                bad.append(f"symmetrized v block n={n}")
            factor(sp.csr_matrix(Es), "cholesky")
        except Exception as exc:
            bad.append(f"Cholesky n={n}: {exc}")
    detail = "rank/nullity n=2..8, (G B^T)e, Cholesky n=2..32" + (f"; failures {bad}" if bad else "")
    assert record_acceptance("3", "rank facts and positive definiteness", not bad, detail), detail


@pytest.mark.slow
def test_convergence_orders(record_acceptance):
    parts, ok = [], True
    for ex in (1, 2, 3):
        kw = dict(nu=1.0, kappa=1e-2) if ex == 3 else {}
        ours = convergence_orders(run_convergence(ex, (32, 64, 128, 256, 512), **kw))
        ref = REF_ORDERS[ex]
        dev = max(abs(a - b) for row, vals in ref.items()
                  for a, b in zip(ours[REF_ROW_TO_FIELD[row]], vals))
        raw = max(abs(a - b) for row, vals in ref.items() for a, b in zip(ours[row], vals))
        ok &= dev <= ORDER_TOL[ex]
        parts.append(f"ex{ex} max dev {dev:.4f} (tol {ORDER_TOL[ex]}, {raw:.3f} without relabelling)")
    detail = "; ".join(parts)
    assert record_acceptance("4", "convergence orders examples 1-3", ok, detail), detail


@pytest.mark.slow
def test_iteration_tables(record_acceptance):
    parts, ok = [], True

    t = _sweep("m3hat", 1.0, (32, 64, 128))
    miss = [f"({n},{k:g}) {t.get(n, k)} vs {r}" for n, refs in REF_M3HAT_NU1.items()
            for k, r in zip(KAPPAS, refs) if not _within(t.get(n, k), r, 10, 0.3)]
    ok &= not miss
    parts.append(f"m3hat nu=1: {27 - len(miss)}/27 in band" + (f" misses {miss}" if miss else ""))

    t = _sweep("m3hat", 1e-4, (32, 64, 128))
    over = [f"({n},{k:g}) {t.get(n, k)}" for n in (32, 64, 128) for k in KAPPAS
            if _count(t.get(n, k)) is None or _count(t.get(n, k)) > NU_SMALL_CAP]
    ok &= not over
    parts.append(f"m3hat nu=1e-4: {27 - len(over)}/27 <= {NU_SMALL_CAP}" + (f" over {over}" if over else ""))

    cells = []
    for v in ("m1hat", "m2hat"):
        t = _sweep(v, 1.0, (32, 64, 128), kappas=(SIMPLE_HAT_KAPPA,))
        for n in (32, 64, 128):
            c = _count(t.get(n, SIMPLE_HAT_KAPPA))
            cells.append((v, n, c, c is None or c > SIMPLE_HAT_FLOOR))
    bad = [f"{v} n={n}: {c}" for v, n, c, good in cells if not good]
    ok &= not bad
    parts.append(f"m1hat/m2hat kappa=1e-5: {len(cells) - len(bad)}/{len(cells)} fail or >200"
                 + (f" but {bad}" if bad else ""))

    miss = []
    for v, rows in REF_HYBRID.items():
        t = _sweep(v, 1.0, tuple(rows))
        miss += [f"{v} ({n},{k:g}) {t.get(n, k)} vs {r}" for n, refs in rows.items()
                 for k, r in zip(KAPPAS, refs) if not _within(t.get(n, k), r, 8, 0.4)]
    ok &= not miss
    parts.append(f"m1in/m2in: {36 - len(miss)}/36 in band" + (f" misses {miss}" if miss else ""))

    detail = "; ".join(parts)
    assert record_acceptance("5", "iteration tables", ok, detail), detail


@pytest.mark.slow
def test_identity_t_scalable_then_degrades(record_acceptance):
    ns = (32, 64, 128, 256)
    t = _sweep("m3hat", 1.0, ns, t_mode="identity")
    lo, hi = IDENTITY_T_BAND
    bad = []
    for n in ns:
        for k in KAPPAS:
            c = _count(t.get(n, k))
            if k >= 1e-1 and not (c is not None and lo <= c <= hi):
                bad.append(f"({n},{k:g}) {t.get(n, k)} outside [{lo},{hi}]")
            if k <= 1e-4 and not (c is None or c > IDENTITY_T_DEGRADED):
                bad.append(f"({n},{k:g}) {t.get(n, k)} not degraded")
    cells = " ".join(f"n={n}:" + ",".join(t.get(n, k) for k in KAPPAS) for n in ns)
    detail = cells + (f"; {bad}" if bad else "")
    assert record_acceptance("6", "identity-T variant scalable at large kappa only", not bad,
                             detail), detail


def test_kernel_oracles(record_acceptance):
    errs = {}
    rng = np.random.default_rng(0)
    for n in (8, 32):
        s = cached_system(3, n, 1.0, 1e-2)
        for kind, A in (("cholesky", s.A_d), ("lu", s.K12), ("ldl", s.A_d)):
            x0 = rng.standard_normal(A.shape[0])
            x = solve(factor(A, kind), A @ x0)
            errs[f"{kind} n={n}"] = np.linalg.norm(x - x0) / np.linalg.norm(x0)
    fs = max(errs.values())

    s = cached_system(3, 4, 1.0, 1.0)
    K, b = s.K.toarray(), s.rhs
    beta = np.linalg.norm(b)
    _, rep = gmres(K, b, config=GmresConfig(restart=10, rtol=1e-300, maxiter=10))
    H = _arnoldi_cgs2(K, b, 10)
    hess = max(abs(rep.residuals[k] - _ls_residual(H[:k + 1, :k], beta) / beta)
               / max(rep.residuals[k], 1e-300) for k in range(1, 11))

    A = cached_system(3, 8, 1.0, 1.0).A_d
    L = factor(A, "cholesky").L.toarray()
    ic = np.abs(L - incomplete_cholesky(A, droptol=0.0).L.toarray()).max() / np.abs(L).max()

    ok = fs <= 1e-10 and hess <= 1e-12 and ic <= 1e-12
    detail = f"factor/solve {fs:.1e}, Hessenberg residuals {hess:.1e}, IC(0) vs Cholesky {ic:.1e}"
    assert record_acceptance("7", "kernel oracles", ok, detail), detail


def _arnoldi_cgs2(A, b, k):
    """Independent Arnoldi: classical Gram-Schmidt applied twice."""
    V = np.zeros((b.shape[0], k + 1))
    H = np.zeros((k + 1, k))
    V[:, 0] = b / np.linalg.norm(b)
    for j in range(k):
        w = A @ V[:, j]
        for _ in range(2):
            c = V[:, :j + 1].T @ w
            w = w - V[:, :j + 1] @ c
            H[:j + 1, j] += c
        H[j + 1, j] = np.linalg.norm(w)
        V[:, j + 1] = w / H[j + 1, j]
    return H


def _ls_residual(H, beta):
    """min ||beta e1 - H y|| via a complete QR of H."""
    Q, _ = np.linalg.qr(H, mode="complete")
    return abs((Q.T @ np.r_[beta, np.zeros(H.shape[0] - 1)])[-1])
