"""Histogram of stable dimensions against decoded peptide length on the pad-growing decoder."""
import argparse
from collections import Counter

import numpy as np
from scipy.stats import spearmanr

from geocompass.decoders import argmax_peptide, jacobian_fd, make_pad_growing_mlp


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--samples", type=int, default=1000)
    ap.add_argument("--kappa", type=float, default=1e-8)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    m = make_pad_growing_mlp(d=16, L=12, seed=0)
    rng = np.random.default_rng(args.seed)
    dims, lengths = [], []
    for _ in range(args.samples):
        z = rng.standard_normal(m.d)
        s = np.linalg.svd(jacobian_fd(m, z, 1e-6), compute_uv=False)
        dims.append(int(np.sum(s**2 > args.kappa)))
        lengths.append(len(argmax_peptide(m, z)))
    rho, p = spearmanr(lengths, dims)
    print(f"fraction below full dimension {m.d}: {np.mean(np.array(dims) < m.d):.3f}")
    print(f"spearman(length, dimension) = {rho:.3f} (p = {p:.2e})")
    print("dim  count")
    for k, c in sorted(Counter(dims).items()):
        print(f"{k:>3}  {c}")


if __name__ == "__main__":
    main()
