"""Binet-Legendre tensor of the regular hexagon norm: exact path vs Monte Carlo vs quadrature.

Six-fold symmetry forces the tensor to be a multiple of the identity;
this prints the scalar from each route.

    python3 scripts/hexagon_scalar.py [--samples 4000000] [--seed 0]
"""

import argparse

import numpy as np
from scipy.spatial import Delaunay

from blfinsler import binet_legendre as bl
from blfinsler import quadrature as quad
from blfinsler.finsler_core import MetricSpec, build_zoo_metric


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--samples", type=int, default=4_000_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    th = np.arange(6) * np.pi / 3
    V = np.stack([np.cos(th), np.sin(th)], axis=1)
    g = bl.bl_polyhedral_exact(V)
    print(f"exact path        g = {g[0, 0]:.15f} * I   (off-diagonal {g[0, 1]:.1e})")

    rng = np.random.default_rng(args.seed)
    X = rng.uniform(-1, 1, (args.samples, 2))
    inside = Delaunay(V).find_simplex(X) >= 0
    terms = 4.0 * inside * X[:, 0] ** 2
    area = 4.0 * inside.mean()
    m, se = terms.mean(), terms.std() / np.sqrt(args.samples)
    # g^{-1} = (n + 2) / vol * M  with n = 2
    scalar = area / (4 * m)
    print(f"Monte Carlo       g = {scalar:.6f} * I   (+- {scalar * se / m:.1e}, {args.samples} samples)")

    F = build_zoo_metric(MetricSpec("polyhedral", 2, {"vertices": V.tolist()}))
    for res in (256, 1024, 4096):
        gq = bl.bl_tensor_at(F, np.zeros(2), quad.build(2, resolution=res))
        print(f"quadrature {res:5d}  g = {gq[0, 0]:.10f} * I   (error {np.max(np.abs(gq - g)):.1e})")


if __name__ == "__main__":
    main()
