"""Regenerate every iteration-count table (markdown on stdout, CSV files with --csv-dir).

Single-core machines: the full set takes roughly 15 minutes.
"""
import argparse
import os

from stokes_darcy.experiments import run_sweep

KAPPAS = (1.0, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8)

# (name, variants, nu, grids, kappas, extra options)
TABLES = [
    ("simple_hat", ("m1hat", "m2hat"), 1.0, (32, 64, 128), KAPPAS, {}),
    ("hybrid_exact_s2", ("m1in", "m2in"), 1.0, (32, 64), KAPPAS, {}),
    ("identity_t", ("m3hat",), 1.0, (32, 64, 128, 256), KAPPAS, {"t_mode": "identity"}),
    ("m3hat_nu1", ("m3hat",), 1.0, (32, 64, 128), KAPPAS, {}),
    ("m3hat_nu1e-2", ("m3hat",), 1e-2, (32, 64, 128), KAPPAS, {}),
    ("m3in_nu1e-2", ("m3in",), 1e-2, (32, 64, 128), KAPPAS, {}),
    ("m3hat_nu1e-4", ("m3hat",), 1e-4, (32, 64, 128), KAPPAS, {}),
]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--only", default=None, help="comma list of table names")
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--csv-dir", default=None)
    a = ap.parse_args()
    wanted = set(a.only.split(",")) if a.only else None
    for name, variants, nu, ns, kappas, extra in TABLES:
        if wanted and name not in wanted:
            continue
        for t in run_sweep(variants, 3, nu, kappas, ns, jobs=a.jobs, **extra):
            print(t.to_markdown(), flush=True)
            if a.csv_dir:
                os.makedirs(a.csv_dir, exist_ok=True)
                path = os.path.join(a.csv_dir, f"{name}_{t.meta['variant']}.csv")
                with open(path, "w") as fh:
                    fh.write(t.to_csv())


if __name__ == "__main__":
    main()
