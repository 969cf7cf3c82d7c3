"""Refinement study: resolvent of a constant scalar kernel against a*exp(a(t-s)).

    python3 scripts/resolvent_convergence.py --a -1 0.5 2 --levels 5
"""

import argparse

import numpy as np

from volgame.grid import make_grid
from volgame.volterra import resolvent


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--a", type=float, nargs="+", default=[-1.0, 0.5, 2.0])
    ap.add_argument("--levels", type=int, default=4, help="grid doublings starting at n=17")
    ap.add_argument("--exact-discrete", action="store_true", help="use the exact discrete resolvent")
    args = ap.parse_args()
    print(f"{'a':>6} {'n':>5} {'max error':>12} {'ratio':>7}")
    for a in args.a:
        prev = None
        for level in range(args.levels):
            n = 16 * 2**level + 1
            g = make_grid(0.0, 1.0, n)
            S = resolvent(np.full((n, n, 1, 1), a), g, exact_discrete=args.exact_discrete)[..., 0, 0]
            T, Sg = np.meshgrid(g.nodes, g.nodes, indexing="ij")
            err = np.abs(np.tril(S - a * np.exp(a * (T - Sg)))).max()
            ratio = f"{prev / err:7.2f}" if prev else " " * 7
            print(f"{a:6.2f} {n:5d} {err:12.3e} {ratio}")
            prev = err


if __name__ == "__main__":
    main()
