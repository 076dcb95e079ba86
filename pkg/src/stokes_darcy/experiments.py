"""Experiment drivers: convergence orders, iteration sweeps, spectra, export."""
from __future__ import annotations

import csv
import io
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .assembly import BlockSystem, assemble_system, field_errors
from .krylov import GmresConfig, gmres
from .manufactured import default_params, make_case
from .precond import DEFAULT_TAU, build_preconditioner, canonical_variant, s1_matrix, build_T
from .sparse import direct_solve, mm_write
from .spectral import MAX_SPECTRAL_N, SpectralReport, run_spectral_checks

DESK_MAX_N = 256
FIELDS = ("u", "v", "p", "phi")


@dataclass
class ResultTable:
    title: str
    row_label: str
    col_label: str
    rows: list
    cols: list
    cells: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def get(self, row, col) -> str:
        return self.cells.get((row, col), "")

    def to_csv(self) -> str:
        buf = io.StringIO()
        for k, v in self.meta.items():
            buf.write(f"# {k}={v}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"{self.row_label}\\{self.col_label}"] + [_label(c) for c in self.cols])
        for r in self.rows:
            w.writerow([_label(r)] + [self.get(r, c) for c in self.cols])
        return buf.getvalue()

    def to_markdown(self) -> str:
        head = [f"{self.row_label} \\ {self.col_label}"] + [_label(c) for c in self.cols]
        body = [[_label(r)] + [self.get(r, c) for c in self.cols] for r in self.rows]
        widths = [max(len(str(x)) for x in col) for col in zip(head, *body)]
        fmt = lambda cells: "| " + " | ".join(str(c).rjust(w) for c, w in zip(cells, widths)) + " |"
        lines = [f"**{self.title}**", ""]
        if self.meta:
            lines += [", ".join(f"{k}={v}" for k, v in self.meta.items()), ""]
        lines += [fmt(head), "|" + "|".join("-" * (w + 2) for w in widths) + "|"]
        lines += [fmt(b) for b in body]
        return "\n".join(lines) + "\n"

    def render(self, fmt: str = "md") -> str:
        return self.to_csv() if fmt == "csv" else self.to_markdown()


def _label(x) -> str:
    if isinstance(x, float):
        return f"{x:g}"
    return str(x)


def make_system(example: int, n: int, nu: float = 1.0, kappa: float = 1.0,
                alpha: float | None = None) -> BlockSystem:
    params = default_params(example, nu=nu, kappa=kappa, alpha=alpha)
    case = make_case(example, params)
    return assemble_system(case.grid(n), params, case)


# --------------------------------------------------------------------------
# discretization error

def solve_direct(system: BlockSystem) -> np.ndarray:
    """Natural-form solution by a sparse direct solve."""
    return direct_solve(system.K12, system.rhs12)


def convergence_errors(example: int, n_list, nu=1.0, kappa=1.0, alpha=None) -> dict[int, dict]:
    out = {}
    for n in n_list:
        s = make_system(example, n, nu, kappa, alpha)
        out[n] = field_errors(s, solve_direct(s))
    return out


def run_convergence(example: int, n_list=(32, 64, 128, 256, 512), nu=1.0, kappa=1.0,
                    alpha=None) -> ResultTable:
    """log2 error ratios per field for consecutive grid pairs (n, 2n)."""
    n_list = sorted(n_list)
    errs = convergence_errors(example, n_list, nu, kappa, alpha)
    pairs = [(a, b) for a, b in zip(n_list, n_list[1:]) if b == 2 * a]
    params = default_params(example, nu=nu, kappa=kappa, alpha=alpha)
    t = ResultTable(f"Convergence orders, example {example}", "field", "pair", list(FIELDS),
                    [f"{a}/{b}" for a, b in pairs],
                    meta=dict(example=example, nu=params.nu, kappa=params.kappa,
                              alpha=params.alpha, solver="direct"))
    for a, b in pairs:
        for f in FIELDS:
            t.cells[(f, f"{a}/{b}")] = f"{math.log2(errs[a][f] / errs[b][f]):.4f}"
    t.meta["errors"] = ";".join(f"n={n}:" + ",".join(f"{f}={errs[n][f]:.3e}" for f in FIELDS)
                                for n in n_list)
    return t


def convergence_orders(table: ResultTable) -> dict[str, list[float]]:
    return {f: [float(table.get(f, c)) for c in table.cols] for f in table.rows}


# --------------------------------------------------------------------------
# iteration counts

@dataclass(frozen=True)
class SweepCell:
    variant: str
    n: int
    kappa: float
    nu: float = 1.0
    example: int = 3
    alpha: float | None = None
    t_mode: str = "ic"
    droptol: float = 1e-2
    tau: float = DEFAULT_TAU
    rtol: float = 1e-8
    restart: int = 20
    maxit: int = 500
    ic_rule: str = "update"
    allow_large: bool = False


@dataclass
class CellResult:
    cell: SweepCell
    converged: bool
    iterations: int
    true_residual: float
    wall: float

    @property
    def text(self) -> str:
        return str(self.iterations) if self.converged else "-"


def run_cell(cell: SweepCell) -> CellResult:
    t0 = time.perf_counter()
    s = make_system(cell.example, cell.n, cell.nu, cell.kappa, cell.alpha)
    M = build_preconditioner(s, cell.variant, t_mode=cell.t_mode, droptol=cell.droptol,
                             tau=cell.tau, allow_large=cell.allow_large, ic_rule=cell.ic_rule)
    cfg = GmresConfig(restart=cell.restart, rtol=cell.rtol, maxiter=cell.maxit)
    _, rep = gmres(s.K, s.rhs, M=M, config=cfg)
    return CellResult(cell, rep.converged, rep.iterations, rep.true_residual,
                      time.perf_counter() - t0)


def run_cells(cells, jobs: int = 1) -> list[CellResult]:
    cells = list(cells)
    if jobs <= 1 or len(cells) <= 1:
        return [run_cell(c) for c in cells]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(run_cell, cells))


def run_sweep(variants, example: int = 3, nu: float = 1.0, kappas=(1.0,), ns=(32,),
              jobs: int = 1, large: bool = False, **options) -> list[ResultTable]:
    """One GMRES solve per (variant, kappa, n); one table (n by kappa) per variant."""
    variants = [canonical_variant(v) for v in variants]
    for n in ns:
        if n > DESK_MAX_N and not large:
            raise ValueError(f"n={n} exceeds the desk-scale limit {DESK_MAX_N}; pass --large")
    cells = [SweepCell(v, n, k, nu=nu, example=example, allow_large=large, **options)
             for v in variants for n in ns for k in kappas]
    results = run_cells(cells, jobs)
    tables = []
    for v in variants:
        base = SweepCell(v, 0, 0.0, nu=nu, example=example, **options)
        meta = {k: val for k, val in asdict(base).items() if k not in ("n", "kappa", "allow_large")}
        t = ResultTable(f"GMRES({base.restart}) iterations, {v}, nu={nu:g}", "n", "kappa",
                        list(ns), list(kappas), meta=meta)
        wall = 0.0
        for r in results:
            if r.cell.variant == v:
                t.cells[(r.cell.n, r.cell.kappa)] = r.text
                wall += r.wall
        t.meta["wall_seconds"] = f"{wall:.1f}"
        tables.append(t)
    return tables


# --------------------------------------------------------------------------
# spectra and export

SPECTRAL_VARIANTS = ("m1ideal", "m2ideal", "m3ideal", "m2tilde", "m3tilde")


def run_spectra(n_list=(4, 6, 8), variants=SPECTRAL_VARIANTS, nu=1.0, kappa=1.0,
                trials: int = 20, seed: int = 0) -> SpectralReport:
    for n in n_list:
        if n > MAX_SPECTRAL_N:
            raise ValueError(f"spectral checks are limited to n <= {MAX_SPECTRAL_N}, got n={n}")
    variants = [canonical_variant(v) for v in variants]
    report = SpectralReport()
    for n in n_list:
        s = make_system(3, n, nu, kappa)
        report.extend(run_spectral_checks(s, variants, trials, seed).rows)
    return report


EXPORTABLE = ("K", "K12", "A_d", "A_s", "B", "G", "S1hat", "rhs")


def export(target: str, path, system: BlockSystem, t_mode: str = "ic", droptol: float = 1e-2,
           tau: float = DEFAULT_TAU) -> str:
    """Write one matrix of the system in Matrix Market coordinate format."""
    comment = (f"n={system.n} nu={system.params.nu:g} kappa={system.params.kappa:g} "
               f"alpha={system.params.alpha:g}")
    if target == "rhs":
        A = system.rhs.reshape(-1, 1)
    elif target in ("K", "K12", "A_d", "A_s", "B", "G"):
        A = getattr(system, target)
    elif target == "S1hat":
        A = s1_matrix(system, build_T(system, t_mode, droptol=droptol, tau=tau))
        comment += f" t_mode={t_mode} droptol={droptol:g} tau={tau:g}"
    else:
        raise ValueError(f"unknown matrix {target!r}; choose from {EXPORTABLE}")
    path = os.fspath(path)
    mm_write(path, A, comment=comment)
    return path
