"""Finsler lengths of polylines and approximate (directed) distances.

Distances are computed on a directed grid graph whose edges join each
node to the nodes at a set of primitive integer offsets; the edge weight
is the midpoint-rule F-length of the segment. The graph witness is then
refined: shortcut greedily, optimised coarse to fine with L-BFGS-B on the
interior vertices down to one grid spacing per segment, and polished by
red-black pattern search. A refinement stage is accepted only if it does
not lengthen the curve, so the refined value never exceeds the graph value.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import minimize
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from .errors import DomainError, InputError, ResolutionError
from .finsler_core import FinslerStructure

STENCIL_RADIUS = {8: 1, 16: 2, 32: 3}
DEFAULT_RESOLUTION = 101
DEFAULT_STENCIL = 16


def validate_polyline(F: FinslerStructure, points) -> np.ndarray:
    P = np.asarray(points, dtype=float)
    if P.ndim != 2 or P.shape[1] != F.dimension:
        raise InputError(f"polyline must be an (m, {F.dimension}) array")
    if len(P) < 2:
        raise InputError("polyline needs at least two points")
    if not np.isfinite(P).all():
        raise InputError("polyline has non-finite points")
    if np.any(np.all(P[1:] == P[:-1], axis=1)):
        raise InputError("polyline has repeated consecutive points")
    inside = F.domain.contains(P)
    if not inside.all():
        raise DomainError(f"polyline point {P[np.argmin(inside)].tolist()} outside the domain")
    return P


def _length(F: FinslerStructure, P: np.ndarray) -> float:
    seg = np.diff(P, axis=0)
    mid = 0.5 * (P[1:] + P[:-1])
    return float(np.sum(F.evaluator(mid, seg)))


def path_length(F: FinslerStructure, points) -> float:
    """Midpoint-rule F-length ``sum F(midpoint, segment)``; orientation matters.

    On a box domain a segment leaves the domain only if an endpoint does,
    so validating the vertices is enough.
    """
    return _length(F, validate_polyline(F, points))


@dataclass
class DistanceResult:
    value: float
    witness: np.ndarray
    method: str
    gap: float
    graph_value: float
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"value": self.value, "method": self.method, "gap": self.gap,
                "graph_value": self.graph_value, "witness_points": len(self.witness)}


def stencil_offsets(n: int, stencil: int) -> np.ndarray:
    """Primitive integer offsets with max-norm at most 1, 2 or 3.

    In the plane that is 8, 16 or 32 neighbours.
    """
    if stencil not in STENCIL_RADIUS:
        raise InputError(f"stencil must be one of {sorted(STENCIL_RADIUS)}")
    r = STENCIL_RADIUS[stencil]
    rng = np.arange(-r, r + 1)
    offs = np.array(np.meshgrid(*[rng] * n, indexing="ij")).reshape(n, -1).T
    keep = [o for o in offs if np.any(o) and np.gcd.reduce(np.abs(o)) == 1]
    return np.array(keep, dtype=int)


@dataclass(frozen=True, eq=False)
class GridGraph:
    axes: tuple
    nodes: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    weights: np.ndarray
    spacing: np.ndarray
    radius: int

    @property
    def size(self) -> int:
        return len(self.nodes)


@lru_cache(maxsize=32)
def grid_graph(F: FinslerStructure, resolution: int, stencil: int) -> GridGraph:
    """Directed grid graph over ``F.domain``; cached per (F, resolution, stencil)."""
    n = F.dimension
    if resolution < 3:
        raise ResolutionError("grid resolution must be >= 3")
    lo, hi = F.domain.lo, F.domain.hi
    axes = tuple(np.linspace(a, b, resolution) for a, b in zip(lo, hi))
    shape = (resolution,) * n
    idx = np.array(np.meshgrid(*[np.arange(resolution)] * n, indexing="ij")).reshape(n, -1).T
    nodes = lo + idx * (hi - lo) / (resolution - 1)
    spacing = (hi - lo) / (resolution - 1)
    rows, cols, wts = [], [], []
    for off in stencil_offsets(n, stencil):
        tgt = idx + off
        ok = np.all((tgt >= 0) & (tgt < resolution), axis=1)
        src = np.flatnonzero(ok)
        dst = np.ravel_multi_index(tgt[ok].T, shape)
        vec = off * spacing
        mid = nodes[src] + 0.5 * vec
        w = np.broadcast_to(F.evaluator(mid, np.broadcast_to(vec, mid.shape)), (len(src),))
        rows.append(src)
        cols.append(dst)
        wts.append(np.asarray(w, dtype=float))
    return GridGraph(axes, nodes, np.concatenate(rows), np.concatenate(cols),
                     np.concatenate(wts), spacing, STENCIL_RADIUS[stencil])


def _attach(F, graph: GridGraph, p, outgoing: bool):
    """Edges between an off-grid point and nearby grid nodes."""
    reach = (graph.radius + 1) * graph.spacing
    near = np.flatnonzero(np.all(np.abs(graph.nodes - p) <= reach + 1e-12, axis=1))
    pts = graph.nodes[near]
    vec = pts - p if outgoing else p - pts
    mid = 0.5 * (pts + p)
    w = np.asarray(np.broadcast_to(F.evaluator(mid, vec), (len(near),)), dtype=float)
    return near, np.maximum(w, 1e-300)


def _segment_length(F, a, b, max_seg):
    k = max(1, int(np.ceil(np.max(np.abs(b - a) / max_seg) - 1e-9)))
    t = np.linspace(0.0, 1.0, k + 1)[:, None]
    return _length(F, a + t * (b - a)), k


def _subdivide(P, max_seg):
    out = [P[:1]]
    for a, b in zip(P[:-1], P[1:]):
        k = max(1, int(np.ceil(np.max(np.abs(b - a) / max_seg) - 1e-9)))
        t = np.linspace(0.0, 1.0, k + 1)[1:, None]
        pts = a + t * (b - a)
        pts[-1] = b
        out.append(pts)
    return np.vstack(out)


def _shortcut(F, P, max_seg):
    """Greedy shortcutting; returns the corner points of the shortened polyline.

    From each kept vertex jump to the furthest later vertex whose straight
    connection (measured at ``max_seg`` resolution) is no longer than the
    path it replaces, halving the jump on failure.
    """
    seg = F.evaluator(0.5 * (P[1:] + P[:-1]), np.diff(P, axis=0))
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    keep = [0]
    i, m = 0, len(P)
    while i < m - 1:
        j = m - 1
        while j > i + 1:
            length, _ = _segment_length(F, P[i], P[j], max_seg)
            if length <= cum[j] - cum[i]:
                break
            j = i + (j - i) // 2
        keep.append(j)
        i = j
    return P[keep]


def _smooth_descent(F, P, maxiter):
    """L-BFGS-B on the interior vertices, gradient by central differences."""
    if len(P) < 3:
        return P
    n = P.shape[1]
    lo, hi = F.domain.lo, F.domain.hi
    h = 1e-7 * F.domain.diameter
    eye = np.eye(n)
    a, b = P[0], P[-1]

    def fun(z):
        X = np.vstack([a, z.reshape(-1, n), b])
        X = np.clip(X, lo, hi)
        total = _length(F, X)
        inner = X[1:-1]
        grad = np.empty_like(inner)
        for k in range(n):
            cost = []
            for sgn in (1.0, -1.0):
                Y = np.clip(inner + sgn * h * eye[k], lo, hi)
                cost.append(F.evaluator(0.5 * (X[:-2] + Y), Y - X[:-2])
                            + F.evaluator(0.5 * (Y + X[2:]), X[2:] - Y))
            grad[:, k] = (cost[0] - cost[1]) / (2 * h)
        return total, grad.ravel()

    bounds = np.tile(np.stack([lo, hi], axis=1), (len(P) - 2, 1))
    r = minimize(fun, P[1:-1].ravel(), jac=True, method="L-BFGS-B", bounds=bounds,
                 options={"maxiter": maxiter, "ftol": 1e-10, "gtol": 1e-12})
    return np.vstack([a, np.clip(r.x.reshape(-1, n), lo, hi), b])


def _relax(F, P, step, min_step, sweeps):
    P = P.copy()
    n = P.shape[1]
    moves = np.vstack([np.eye(n), -np.eye(n)])
    m = len(P)
    for _ in range(sweeps):
        if step < min_step or m < 3:
            break
        improved = False
        for parity in (1, 2):
            i = np.arange(parity, m - 1, 2)
            if len(i) == 0:
                continue
            prev, nxt = P[i - 1], P[i + 1]
            cand = P[i][:, None, :] + step * np.vstack([np.zeros((1, n)), moves])[None, :, :]
            ok = F.domain.contains(cand)
            cost = (F.evaluator(0.5 * (prev[:, None] + cand), cand - prev[:, None])
                    + F.evaluator(0.5 * (cand + nxt[:, None]), nxt[:, None] - cand))
            cost = np.where(ok, cost, np.inf)
            best = np.argmin(cost, axis=1)
            better = cost[np.arange(len(i)), best] < cost[:, 0] * (1 - 1e-13)
            if better.any():
                P[i[better]] = cand[better, best[better]]
                improved = True
        if not improved:
            step *= 0.5
    # drop vertices that collapsed onto a neighbour
    keep = np.concatenate([[True], np.any(P[1:] != P[:-1], axis=1)])
    return P[keep]


def refine_polyline(F: FinslerStructure, P: np.ndarray, max_seg: float, sweeps: int = 40,
                    maxiter: int = 100) -> np.ndarray:
    """Shorten a polyline: shortcut, then optimise coarse to fine.

    The shortcut corners are subdivided to segments of Euclidean size about
    ``L / 8`` and the interior vertices optimised; the segment size is then
    halved and the optimisation repeated down to ``max_seg``. A final
    pattern-search sweep handles metrics whose derivative jumps. Each stage
    is kept only if it does not lengthen the curve.
    """
    P = _subdivide(np.asarray(P, dtype=float), max_seg)
    best, best_len = P, _length(F, P)
    corners = _shortcut(F, P, max_seg)
    Q = _subdivide(corners, max_seg)
    if _length(F, Q) <= best_len:
        best, best_len = Q, _length(F, Q)
    span = float(np.sum(np.linalg.norm(np.diff(corners, axis=0), axis=1)))
    size = max(max_seg, span / 8)
    C = corners
    while True:
        C = _smooth_descent(F, _subdivide(C, size), maxiter)
        if size <= max_seg:
            break
        size = max(max_seg, 0.5 * size)
    R = _subdivide(C, max_seg)
    R = _relax(F, R, 0.05 * max_seg, 1e-4 * max_seg, sweeps)
    if _length(F, R) <= best_len:
        best = R
    keep = np.concatenate([[True], np.any(best[1:] != best[:-1], axis=1)])
    return best[keep]


def distance(F: FinslerStructure, p, q, grid_resolution: int = DEFAULT_RESOLUTION,
             stencil: int = DEFAULT_STENCIL, refine: bool = True) -> DistanceResult:
    """Approximate directed distance ``d_F(p, q)``.

    The returned value equals the midpoint F-length of the returned
    witness. ``gap`` is the improvement achieved by refinement over the raw
    graph value.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    for name, pt in (("p", p), ("q", q)):
        if pt.shape != (F.dimension,) or not np.isfinite(pt).all():
            raise InputError(f"{name} must be a finite {F.dimension}-vector")
        if not F.domain.contains(pt):
            raise DomainError(f"{name} = {pt.tolist()} outside the domain")
    if np.array_equal(p, q):
        return DistanceResult(0.0, p[None, :], "graph", 0.0, 0.0)

    g = grid_graph(F, int(grid_resolution), int(stencil))
    N = g.size
    src, w_src = _attach(F, g, p, outgoing=True)
    dst, w_dst = _attach(F, g, q, outgoing=False)
    rows = [g.rows, np.full(len(src), N), dst]
    cols = [g.cols, src, np.full(len(dst), N + 1)]
    wts = [g.weights, w_src, w_dst]
    if np.all(np.abs(q - p) <= (g.radius + 1) * g.spacing + 1e-12):
        rows.append([N])
        cols.append([N + 1])
        wts.append([max(float(F.evaluator(0.5 * (p + q), q - p)), 1e-300)])
    A = csr_matrix((np.concatenate(wts), (np.concatenate(rows), np.concatenate(cols))),
                   shape=(N + 2, N + 2))
    dist, pred = dijkstra(A, directed=True, indices=N, return_predecessors=True)
    if not np.isfinite(dist[N + 1]):
        raise ResolutionError("target unreachable on the grid graph")
    chain = [N + 1]
    while chain[-1] != N:
        chain.append(pred[chain[-1]])
    chain.reverse()
    pts = np.vstack([p] + [g.nodes[k] for k in chain[1:-1]] + [q])
    pts = pts[np.concatenate([[True], np.any(pts[1:] != pts[:-1], axis=1)])]
    graph_value = _length(F, pts)
    if not refine:
        return DistanceResult(graph_value, pts, "graph", 0.0, graph_value)
    max_seg = float(np.min(g.spacing))
    R = refine_polyline(F, pts, max_seg)
    value = _length(F, R)
    if value > graph_value:
        return DistanceResult(graph_value, pts, "graph", 0.0, graph_value)
    return DistanceResult(value, R, "refined", graph_value - value, graph_value)


def symmetrized_distance(F: FinslerStructure, p, q, **kwargs) -> float:
    """``(d_F(p, q) + d_F(q, p)) / 2``; symmetric by construction."""
    a = distance(F, p, q, **kwargs).value
    b = distance(F, q, p, **kwargs).value
    lo, hi = sorted((a, b))
    return 0.5 * (lo + hi)


@dataclass
class BilipschitzReport:
    C: float
    K: float
    slack: float
    pairs: int
    violations: int
    worst_lower_ratio: float
    worst_upper_ratio: float
    witness: dict | None

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def to_dict(self) -> dict:
        return {"C": self.C, "K": self.K, "slack": self.slack, "pairs": self.pairs,
                "violations": self.violations, "worst_lower_ratio": self.worst_lower_ratio,
                "worst_upper_ratio": self.worst_upper_ratio, "witness": self.witness,
                "passed": self.passed}


def bilipschitz_check(F: FinslerStructure, C: float | None = None, pair_count: int = 1000,
                      seed: int = 0, slack: float = 0.05, K: float | None = None,
                      grid_resolution: int = 41, stencil: int = DEFAULT_STENCIL,
                      refine: bool = True) -> BilipschitzReport:
    """Check ``|q-p|/C <= d(p,q) <= C K |q-p|`` on random pairs, up to ``slack``.

    ``K`` is the quasi-convexity constant and is required for non-convex
    domains (it defaults to 1 for convex ones). The reported ratios are
    ``min d C / |q-p|`` (should be >= 1) and ``max d / (C K |q-p|)``
    (should be <= 1).
    """
    C = F.c0 if C is None else float(C)
    if K is None:
        if not F.domain.convex:
            raise InputError("non-convex domain: supply the quasi-convexity constant K")
        K = 1.0
    rng = np.random.default_rng(seed)
    P = F.domain.sample(rng, pair_count)
    Q = F.domain.sample(rng, pair_count)
    lower, upper = np.inf, 0.0
    violations = 0
    witness = None
    for p, q in zip(P, Q):
        e = float(np.linalg.norm(q - p))
        if e == 0:
            continue
        d = distance(F, p, q, grid_resolution, stencil, refine).value
        lo_r = d * C / e
        up_r = d / (C * K * e)
        lower, upper = min(lower, lo_r), max(upper, up_r)
        if lo_r < 1 - slack or up_r > 1 + slack:
            violations += 1
            if witness is None:
                witness = {"p": p.tolist(), "q": q.tolist(), "distance": d, "euclidean": e}
    return BilipschitzReport(C, K, slack, pair_count, violations, float(lower), float(upper), witness)
