"""Command-line driver: ``sdmac {assemble,solve,convergence,sweep,spectra,export}``."""
from __future__ import annotations

import argparse
import sys
import time

from .assembly import field_errors
from .experiments import (DESK_MAX_N, EXPORTABLE, SPECTRAL_VARIANTS, export, make_system,
                          run_convergence, run_spectra, run_sweep)
from .krylov import GmresConfig, gmres
from .precond import DEFAULT_TAU, VARIANTS, build_preconditioner


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _names(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


def _add_problem(p, n_default="32", kappa_default="1"):
    p.add_argument("--example", type=int, choices=(1, 2, 3), default=3)
    p.add_argument("--n", type=_ints, default=_ints(n_default), help="grid size(s), comma list")
    p.add_argument("--nu", type=float, default=1.0)
    p.add_argument("--kappa", type=_floats, default=_floats(kappa_default),
                   help="permeability, single value or comma list")
    p.add_argument("--alpha", type=float, default=None,
                   help="slip coefficient (default nu for example 3, forced 1 for examples 1-2)")


def _add_solver(p):
    p.add_argument("--precond", type=_names, default=["m3hat"],
                   help="preconditioner(s): " + ",".join(sorted(VARIANTS)))
    p.add_argument("--t-mode", choices=("identity", "ic", "exact"), default="ic")
    p.add_argument("--droptol", type=float, default=1e-2)
    p.add_argument("--tau", type=float, default=DEFAULT_TAU)
    p.add_argument("--ic-rule", choices=("update", "factor"), default="update",
                   help="incomplete Cholesky drop test on the updated or the scaled entry")
    p.add_argument("--rtol", type=float, default=1e-8)
    p.add_argument("--restart", type=int, default=20)
    p.add_argument("--maxit", type=int, default=500)
    p.add_argument("--large", action="store_true", help=f"allow n > {DESK_MAX_N} and exact-Schur guards")


def _add_output(p):
    p.add_argument("--format", choices=("csv", "md"), default="md")
    p.add_argument("--out", default=None, help="output path (default stdout)")


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sdmac", description="MAC Stokes-Darcy solver experiments")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("assemble", help="assemble a system and print block sizes")
    _add_problem(p)

    p = sub.add_parser("solve", help="solve one configuration with preconditioned GMRES")
    _add_problem(p)
    _add_solver(p)

    p = sub.add_parser("convergence", help="discretization error orders with direct solves")
    _add_problem(p, n_default="32,64,128,256")
    _add_output(p)

    p = sub.add_parser("sweep", help="iteration-count table over n and kappa")
    _add_problem(p, n_default="32,64,128", kappa_default="1,1e-1,1e-2,1e-3,1e-4,1e-5,1e-6,1e-7,1e-8")
    _add_solver(p)
    _add_output(p)
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("spectra", help="eigenvalue multiplicity checks at small n")
    p.add_argument("--n", type=_ints, default=[4, 6, 8])
    p.add_argument("--nu", type=float, default=1.0)
    p.add_argument("--kappa", type=float, default=1.0)
    p.add_argument("--variants", type=_names, default=list(SPECTRAL_VARIANTS))
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)

    p = sub.add_parser("export", help="write a matrix in Matrix Market format")
    _add_problem(p)
    p.add_argument("--matrix", choices=EXPORTABLE, default="K")
    p.add_argument("--t-mode", choices=("identity", "ic", "exact"), default="ic")
    p.add_argument("--droptol", type=float, default=1e-2)
    p.add_argument("--tau", type=float, default=DEFAULT_TAU)
    p.add_argument("--out", required=True)
    return ap


def _one(values, name):
    if len(values) != 1:
        raise SystemExit(f"--{name} takes a single value for this command")
    return values[0]


def cmd_assemble(a) -> int:
    s = make_system(a.example, _one(a.n, "n"), a.nu, _one(a.kappa, "kappa"), a.alpha)
    lay = s.layout
    print(f"n={s.n} h={s.h:g} nu={s.params.nu:g} kappa={s.params.kappa:g} alpha={s.params.alpha:g}")
    print(f"unknowns: phi={lay.n_phi} u={lay.n_u} v={lay.n_v} p={lay.n_p} total={lay.total}")
    for name in ("A_d", "A_s", "G", "B", "K"):
        A = getattr(s, name)
        print(f"{name:4s} {A.shape[0]}x{A.shape[1]} nnz={A.nnz}")
    return 0


def cmd_solve(a) -> int:
    n, kappa = _one(a.n, "n"), _one(a.kappa, "kappa")
    if n > DESK_MAX_N and not a.large:
        raise SystemExit(f"n={n} exceeds {DESK_MAX_N}; pass --large")
    variant = _one(a.precond, "precond")
    t0 = time.perf_counter()
    s = make_system(a.example, n, a.nu, kappa, a.alpha)
    M = build_preconditioner(s, variant, t_mode=a.t_mode, droptol=a.droptol, tau=a.tau,
                             allow_large=a.large, ic_rule=a.ic_rule)
    t1 = time.perf_counter()
    x, rep = gmres(s.K, s.rhs, M=M, config=GmresConfig(a.restart, a.rtol, a.maxit))
    t2 = time.perf_counter()
    print(f"variant={M.variant} n={n} nu={a.nu:g} kappa={kappa:g} alpha={s.params.alpha:g} "
          f"t_mode={a.t_mode} droptol={a.droptol:g} tau={a.tau:g}")
    print(f"converged={rep.converged} iterations={rep.iterations} cycles={rep.cycles} "
          f"true_residual={rep.true_residual:.3e}")
    errs = field_errors(s, s.to_natural(x))
    print("errors " + " ".join(f"{k}={v:.3e}" for k, v in errs.items()))
    print(f"setup={t1 - t0:.2f}s solve={t2 - t1:.2f}s")
    return 0 if rep.converged else 1


def cmd_convergence(a) -> int:
    t = run_convergence(a.example, a.n, a.nu, _one(a.kappa, "kappa"), a.alpha)
    _emit(t.render(a.format), a.out)
    return 0


def cmd_sweep(a) -> int:
    opts = dict(alpha=a.alpha, t_mode=a.t_mode, droptol=a.droptol, tau=a.tau, rtol=a.rtol,
                restart=a.restart, maxit=a.maxit, ic_rule=a.ic_rule)
    tables = run_sweep(a.precond, a.example, a.nu, a.kappa, a.n, jobs=a.jobs, large=a.large, **opts)
    _emit("\n".join(t.render(a.format) for t in tables), a.out)
    return 0


def cmd_spectra(a) -> int:
    try:
        rep = run_spectra(a.n, a.variants, a.nu, a.kappa, a.trials, a.seed)
    except ValueError as exc:
        raise SystemExit(str(exc))
    text = f"# seed={a.seed} trials={a.trials} nu={a.nu:g} kappa={a.kappa:g}\n" + rep.to_csv()
    _emit(text, a.out)
    return 0 if rep.passed else 1


def cmd_export(a) -> int:
    s = make_system(a.example, _one(a.n, "n"), a.nu, _one(a.kappa, "kappa"), a.alpha)
    path = export(a.matrix, a.out, s, a.t_mode, a.droptol, a.tau)
    print(path)
    return 0


COMMANDS = {"assemble": cmd_assemble, "solve": cmd_solve, "convergence": cmd_convergence,
            "sweep": cmd_sweep, "spectra": cmd_spectra, "export": cmd_export}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return COMMANDS[args.command](args)


if __name__ == "__main__":
    raise SystemExit(main())
