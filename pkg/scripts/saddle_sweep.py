"""Sweep the coupling strength of a random LQ game and track certification and the saddle value.

For each scale ``s`` the state weights are multiplied by ``s``; larger weights
eventually break joint negative definiteness of the maximizer's block.

    python3 scripts/saddle_sweep.py --scales 0.5 1 2 4 8 16 --n 33
"""

import argparse

import numpy as np

from volgame.grid import make_grid
from volgame.lqgame import (LQGameProblem, accretivity_constants, assemble_form, coercivity_constants,
                            solve_lq_game)


def problem(g, scale, rng):
    N = g.n
    t, s = np.meshgrid(g.nodes, g.nodes, indexing="ij")
    k2 = lambda x: np.asarray(x, float).reshape(N, N, 1, 1)  # noqa: E731
    k1 = lambda x: np.broadcast_to(np.asarray(x, float), (N,)).reshape(N, 1, 1).copy()  # noqa: E731
    c = rng.uniform(0.5, 1.5, 3)
    return LQGameProblem(
        grid=g, y0=1.0 - 0.5 * g.nodes,
        A=k2(-c[0] * np.exp(-(t - s))), B=k2(np.ones_like(t)), C=k2(c[1] * np.ones_like(t)),
        P0=scale * np.eye(1), P1=k1(scale), Q1=k1(1.0), R1=k1(-c[2]),
    )


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scales", type=float, nargs="+", default=[0.25, 0.5, 1, 2, 4, 8, 16])
    ap.add_argument("--n", type=int, default=33)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    g = make_grid(0.0, 1.0, args.n)
    print(f"{'scale':>7} {'alpha(Q1,L11)':>14} {'beta(R1,L22)':>13} {'certified':>9} {'value':>12}")
    for sc in args.scales:
        prob = problem(g, sc, np.random.default_rng(args.seed))
        f = assemble_form(prob)
        a = coercivity_constants(prob.Q1, f.L11, g).raw_joint
        b = accretivity_constants(prob.R1, f.L22, g).raw_joint
        sol = solve_lq_game(prob, override=True)
        print(f"{sc:7.2f} {a:14.4e} {b:13.4e} {str(sol.report.certified):>9} {sol.value:12.5e}")


if __name__ == "__main__":
    main()
