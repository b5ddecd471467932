"""Fit the correlation-decay constant on training seeds and test it on held-out ones.

    python3 scripts/tree_decay_fit.py --eps 0.5 --window 3 --seeds 30
"""

import argparse

import numpy as np

from heatprod.lattice import build_box, hamiltonian, sample_disorder
from heatprod.onebody import correlation_decay_profile, fermi_symbol
from heatprod.trees import check_tree_decay_bound, tree_decay_constant


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--L", type=float, default=10)
    p.add_argument("--eps", type=float, default=0.5)
    p.add_argument("--window", type=float, default=3.0)
    p.add_argument("--seeds", type=int, default=30)
    p.add_argument("--lam", type=float, nargs="+", default=[0.0, 0.5, 1.0])
    p.add_argument("--margin", type=float, default=1.1)
    args = p.parse_args()

    box = build_box(1, args.L)
    times = np.linspace(0.0, args.window, 61)
    systems = {(lam, s): hamiltonian(box, sample_disorder(box, s), lam)
               for lam in args.lam for s in range(2 * args.seeds)}
    D = {k: correlation_decay_profile(h, times, args.eps, box).D for k, h in systems.items()}
    train = [v for (lam, s), v in D.items() if s < args.seeds]
    held = [v for (lam, s), v in D.items() if s >= args.seeds]
    D_fit = args.margin * max(train)
    print(f"training D range {min(train):.4f}..{max(train):.4f}, fitted D {D_fit:.4f}")
    print(f"held-out D max {max(held):.4f} -> {'dominated' if max(held) <= D_fit else 'NOT dominated'}")
    C = tree_decay_constant(D_fit, 1, args.eps)
    rng = np.random.default_rng(0)
    for N in (2, 3, 4):
        worst = 0.0
        for (lam, s), h in systems.items():
            if s < args.seeds:
                continue
            rep = check_tree_decay_bound(fermi_symbol(h, 1.0), h, args.eps, 0.0, args.window, 2, box, N=N, rng=rng)
            worst = max(worst, float(np.max(rep.ratios)))
        print(f"N={N}: max |expectation| / envelope {worst:.3e}, bound {C ** (N - 1):.3e}")


if __name__ == "__main__":
    main()
