"""Write a synthetic t31 decay trace (model curve plus 1% noise) for the fit recipe."""

import argparse
import csv

import numpy as np

from nlpemem.model import NlpeParams, nlpe_efficiency


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="configs/data/t31_decay.csv")
    ap.add_argument("--seed", type=int, default=5)
    args = ap.parse_args()
    p = NlpeParams.device_fit()
    t = np.linspace(5e-6, 120e-6, 24)
    y = nlpe_efficiency(p, t, 0.0)
    rng = np.random.default_rng(args.seed)
    sig = 0.01 * y.max() * np.ones_like(y)
    noisy = y + sig * rng.standard_normal(len(t))
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t_s", "efficiency", "sigma"])
        for row in zip(t, noisy, sig):
            w.writerow([repr(float(v)) for v in row])


if __name__ == "__main__":
    main()
