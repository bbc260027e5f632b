"""Convergence orders of the discretised checks.

* Binet-Legendre tensor of the square norm under angle refinement
* Christoffel change-of-coordinates residual of the remark2 isometry under grid refinement
* blow-up residuals of the remark2 isometry as t -> 0
* graph vs refined distance for the remark2 metric under grid refinement

Results are written as CSV to ``--out`` (default ``sweeps/``).

    python3 scripts/convergence_sweep.py [--out sweeps]
"""

import argparse
import csv
import os

import numpy as np

from blfinsler import binet_legendre as bl
from blfinsler import quadrature as quad
from blfinsler.finsler_core import Domain, MetricSpec, build_zoo_metric, euclidean, square_norm
from blfinsler.maps import blowup_isometry_test, christoffel_transform_residual, remark2_map
from blfinsler.metric_space import distance

EXPR = "t + 0.3*sin(t)"


def orders(xs, errs):
    return [float(np.log(e0 / e1) / np.log(x0 / x1)) if e0 > 0 and e1 > 0 else float("nan")
            for x0, x1, e0, e1 in zip(xs, xs[1:], errs, errs[1:])]


def dump(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--out", default="sweeps")
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)

    sq = square_norm()
    res = [64, 128, 256, 512, 1024, 2048, 4096]
    errs = [float(np.max(np.abs(bl.bl_tensor_at(sq, np.zeros(2), quad.build(2, resolution=r))
                                - 0.75 * np.eye(2)))) for r in res]
    print("square-norm BL tensor error vs angles:", dict(zip(res, [f"{e:.1e}" for e in errs])))
    print("  orders in 1/m:", [f"{o:.2f}" for o in orders([1 / r for r in res], errs)])
    dump(os.path.join(args.out, "bl_square.csv"), ["angles", "error"], zip(res, errs))

    src, tgt = Domain.box(2, -2.0, 2.0), Domain.box(2, -3.0, 3.0)
    F1 = build_zoo_metric(MetricSpec("remark2", 2, {"f": EXPR}, [[-2, 2], [-2, 2]]))
    F2 = euclidean(bounds=[[-3, 3], [-3, 3]])
    phi = remark2_map(EXPR, src, tgt, step=1e-5)
    q = quad.build(2, resolution=256)
    Ns, chris = [11, 21, 41, 81], []
    for N in Ns:
        g1, g2 = bl.bl_field(F1, N, q), bl.bl_field(F2, N, q)
        chris.append(christoffel_transform_residual(g1, g2, phi.with_step(min(g1.spacing))))
    hs = [4.0 / (N - 1) for N in Ns]
    print("Christoffel residual vs h:", [f"{c:.2e}" for c in chris], "orders", [f"{o:.2f}" for o in orders(hs, chris)])
    dump(os.path.join(args.out, "christoffel.csv"), ["nodes", "h", "residual"], zip(Ns, hs, chris))

    ts = [0.2, 0.1, 0.05, 0.025, 0.0125]
    rows = []
    for x in ([0.0, 0.0], [0.4, 0.0], [-1.2, 0.7]):
        rep = blowup_isometry_test(F1, F2, phi, x, ts)
        print(f"blow-up at {x}: orders", [f"{o:.2f}" for o in rep.orders])
        rows += [(x[0], x[1], t, r) for t, r in zip(ts, rep.residuals)]
    dump(os.path.join(args.out, "blowup.csv"), ["x1", "x2", "t", "residual"], rows)

    f = lambda t: t + 0.3 * np.sin(t)
    p, qpt = np.array([-1.6, -1.1]), np.array([1.4, 1.5])
    exact = float(np.hypot(f(qpt[0]) - f(p[0]), qpt[1] - p[1]))
    rows = []
    for N in (26, 51, 101, 201):
        r = distance(F1, p, qpt, N)
        rows.append((N, r.graph_value - exact, r.value - exact))
        print(f"remark2 distance N={N:4d}: graph excess {r.graph_value - exact:.2e}, refined excess {r.value - exact:.2e}")
    dump(os.path.join(args.out, "distance.csv"), ["nodes", "graph_excess", "refined_excess"], rows)


if __name__ == "__main__":
    main()
