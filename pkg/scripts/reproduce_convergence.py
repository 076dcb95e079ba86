"""Convergence-order tables for the three manufactured examples (direct solves up to n=512)."""
import argparse

from stokes_darcy.experiments import run_convergence


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", default="32,64,128,256,512")
    ap.add_argument("--format", choices=("csv", "md"), default="md")
    a = ap.parse_args()
    ns = [int(x) for x in a.n.split(",")]
    for ex, kw in ((1, {}), (2, {}), (3, {"nu": 1.0, "kappa": 1e-2})):
        print(run_convergence(ex, ns, **kw).render(a.format), flush=True)


if __name__ == "__main__":
    main()
