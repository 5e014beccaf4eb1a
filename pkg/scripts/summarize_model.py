"""Print the closed-form efficiency model at the fitted device parameters."""

import argparse

import numpy as np

from nlpemem import model, photonics


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--d", type=float, default=2.09, help="optical depth")
    args = p.parse_args()
    par = model.NlpeParams.device_fit(args.d)
    print(f"efficiency at zero delay      {model.nlpe_efficiency(par, 0, 0):.4f}")
    print(f"1/e time along t31            {1e6 * model.lifetime_1e(par, 't31'):.1f} us")
    print(f"1/e time along t42            {1e6 * model.lifetime_1e(par, 't42'):.1f} us")
    print("mu_q   classical bound  n_min  theory (eta 0.12, p_n 0.0098)")
    ch = photonics.MemoryChannel(0.12, 0.0098)
    for mu in np.array([0.1, 0.66, 1.07, 2.0, 4.21, 10.0]):
        b, n = photonics.classical_bound(mu, 0.12)
        print(f"{mu:5.2f}  {b:15.4f}  {n:5d}  {photonics.theoretical_fidelity(mu, ch):.4f}")


if __name__ == "__main__":
    main()
