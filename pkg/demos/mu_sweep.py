"""Reconstruction error and optimal beta as the structure amplitude grows.

Also writes the full error-versus-beta curve for every mu so the position
of the optimum can be inspected.

    python3 demos/mu_sweep.py --out demo_out
"""
import argparse
from pathlib import Path

import numpy as np

from aetlab import Setup, fileio
from aetlab.recon_power import error_curve
from aetlab.uq import Reconstructor, mu_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="demo_out")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--mu", type=float, nargs="+", default=[0.0, 0.01, 0.05, 0.10])
    args = ap.parse_args()
    out = fileio.ensure_dir(Path(args.out))

    S = Setup.desk()
    rec = Reconstructor(S)
    rows = mu_sweep(S, args.mu, seed=args.seed, reconstructor=rec)
    print(f"{'mu':>6} {'error':>8} {'beta*':>10}  floor")
    for r in rows:
        print(f"{r.mu:6.3f} {r.error:8.4f} {r.beta:10.2e}  {r.at_lower_bound}")

    grid = np.linspace(-8, 2, 81)
    H = S.H_true[0]
    curves = []
    for mu in args.mu:
        I = S.forward(S.sound_speed(mu=mu, seed=args.seed)) @ H
        curves.append(error_curve(rec.K_assumed, I, H, S.M, grid, rec.solver))
    fileio.write_csv(out / "beta_curves.csv", ["log10_beta", *[f"mu_{m:g}" for m in args.mu]],
                     [[lb, *c] for lb, *c in zip(grid, *curves)])
    print(f"error curves in {out / 'beta_curves.csv'}")


if __name__ == "__main__":
    main()
