"""Compare the truncated multi-commutator heat series with the direct heat.

Prints, per field strength, the per-order contributions and the error of
the truncation at each order against the quasi-free relative entropy.

    python3 scripts/series_vs_heat.py --L 16 --lam 0.5 --K 5
"""

import argparse

import numpy as np

from heatprod.lattice import VectorPotentialSpec, build_box, hamiltonian, sample_disorder
from heatprod.onebody import fermi_symbol
from heatprod.quasifree import driven_trajectory
from heatprod.trees import heat_series_sum


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--L", type=float, default=16)
    p.add_argument("--lam", type=float, default=0.5)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--l", type=float, default=2.0)
    p.add_argument("--K", type=int, default=5)
    p.add_argument("--grid", type=int, default=800)
    p.add_argument("--eta", type=float, nargs="+", default=[0.025, 0.05, 0.1, 0.2])
    args = p.parse_args()

    box = build_box(1, args.L)
    h = hamiltonian(box, sample_disorder(box, args.seed), args.lam)
    d = fermi_symbol(h, args.beta)
    print("eta,Q," + ",".join(f"order_{k}" for k in range(1, args.K + 1)) + ","
          + ",".join(f"error_K{k}" for k in range(1, args.K + 1)))
    for eta in args.eta:
        A = VectorPotentialSpec(eta, args.l, 0.0, 4.0)
        Q = driven_trajectory(box, h, A, args.beta, A.t1, 4.0 / args.grid, every=10**9).Q_rel[-1]
        rep = heat_series_sum(args.K, args.grid, h, d, A, box)
        err = np.abs(np.cumsum(rep.orders) - Q)
        print(",".join(repr(float(v)) for v in [eta, Q, *rep.orders, *err]))


if __name__ == "__main__":
    main()
