"""Compare walk endpoints on a warped sphere decoder with fine-step Brownian motion.

Prints the KS distance of the geodesic-radius law for the second-order walk and
its first-order ablation at several step sizes.
"""
import argparse

import numpy as np
from scipy.stats import ks_2samp

from geocompass.decoders import make_sphere
from geocompass.walk import WalkParams, brownian_reference, geodesic_radius, sorbes_paths


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--T", type=float, default=0.04)
    ap.add_argument("--paths", type=int, default=10_000)
    ap.add_argument("--reference-paths", type=int, default=100_000)
    ap.add_argument("--warp", type=float, default=3.0)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    m = make_sphere(1.0, warp=args.warp)
    ref = brownian_reference(args.T, args.reference_paths, 0.005, np.random.default_rng(args.seed + 1))
    ref_r = geodesic_radius(ref, (0, 0, -1))
    print("eps     second-order  first-order")
    for eps in (0.1, 0.05, 0.025):
        row = []
        for order in (2, 1):
            p = WalkParams(kappa=1e-8, eps=eps, T=args.T, eps_fd=1e-6, rho=0.01, order=order)
            b = sorbes_paths(m, np.zeros(2), p, args.paths, run_seed=args.seed)
            row.append(ks_2samp(geodesic_radius(m.embed(b.ends), (0, 0, -1)), ref_r).statistic)
        print(f"{eps:<7} {row[0]:<13.4f} {row[1]:.4f}")


if __name__ == "__main__":
    main()
