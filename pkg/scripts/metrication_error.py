"""Worst-case metrication error of grid stencils for Minkowski norms.

For a position-independent F the graph distance between distant nodes
tends to the stencil norm: the cheapest way to write ``v`` as a
nonnegative combination of stencil offsets, which for planar stencils is
attained on a pair of angularly adjacent offsets. The script prints the
largest relative excess ``stencil_norm(v) / F(v) - 1`` over directions,
and the empirical graph error on random pairs of a 101 x 101 grid.

    python3 scripts/metrication_error.py [--pairs 200] [--seed 0]
"""

import argparse

import numpy as np

from blfinsler.finsler_core import euclidean, randers, square_norm
from blfinsler.metric_space import distance, stencil_offsets


def stencil_norm_excess(F, stencil, directions=20_000):
    offs = stencil_offsets(2, stencil).astype(float)
    offs = offs[np.argsort(np.arctan2(offs[:, 1], offs[:, 0]))]
    cost = F.evaluator(np.zeros(2), offs)
    th = np.linspace(0, 2 * np.pi, directions, endpoint=False)
    V = np.stack([np.cos(th), np.sin(th)], axis=1)
    best = np.full(len(V), np.inf)
    for k in range(len(offs)):
        a, b = offs[k], offs[(k + 1) % len(offs)]
        lam = np.linalg.solve(np.column_stack([a, b]), V.T).T
        inside = np.all(lam >= -1e-12, axis=1)
        val = lam @ np.array([cost[k], cost[(k + 1) % len(offs)]])
        best = np.where(inside, np.minimum(best, val), best)
    return float(np.max(best / F.evaluator(np.zeros(2), V) - 1))


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--pairs", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    metrics = {"euclidean": euclidean(), "square": square_norm(), "randers b=(0.5,0)": randers([0.5, 0.0])}
    print(f"{'metric':20s} {'stencil':>7s} {'worst-case':>11s} {'sampled graph':>14s} {'refined':>9s}")
    for name, F in metrics.items():
        for stencil in (8, 16, 32):
            excess = stencil_norm_excess(F, stencil)
            if stencil == 16:
                rng = np.random.default_rng(args.seed)
                P, Q = F.domain.sample(rng, args.pairs), F.domain.sample(rng, args.pairs)
                g, r = 0.0, 0.0
                for p, q in zip(P, Q):
                    res = distance(F, p, q, 101, stencil)
                    exact = F.evaluator(p, q - p)
                    g, r = max(g, res.graph_value / exact - 1), max(r, abs(res.value / exact - 1))
                print(f"{name:20s} {stencil:7d} {excess:11.2%} {g:14.2%} {r:9.1e}")
            else:
                print(f"{name:20s} {stencil:7d} {excess:11.2%}")


if __name__ == "__main__":
    main()
