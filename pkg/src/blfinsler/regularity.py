"""Sampled Hölder seminorms and norms.

Every estimate is a supremum over a finite pair sample and hence a lower
bound on the true seminorm. Pairs come in levels: uniformly random pairs
first, then near-diagonal strata at separations ``diam * 10^-k`` for
``k = 1..4``. Each stratum mixes lattice base points displaced along the
coordinate axes (which catches singularities sitting on lattice
hyperplanes, e.g. ``|x_1|^{1/2}``) with random base points displaced in
random directions. The refinement trace records the running supremum after
each level.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EvaluationError, InputError
from .finsler_core import Domain, FinslerStructure

STRATA = (1e-1, 1e-2, 1e-3, 1e-4)


@dataclass
class HolderEstimate:
    k: int
    alpha: float
    seminorm: float
    sup_norm: float
    pair_count: int
    trace: tuple = ()
    witness: dict = field(default_factory=dict)

    @property
    def norm(self) -> float:
        """``||f||_{C^k} + [D^k f]_alpha`` as sampled."""
        return self.sup_norm + self.seminorm

    def to_dict(self) -> dict:
        return {"k": self.k, "alpha": self.alpha, "seminorm": self.seminorm,
                "sup_norm": self.sup_norm, "norm": self.norm, "pair_count": self.pair_count,
                "trace": list(self.trace), "witness": self.witness}


def _lattice_size(budget: int, n: int) -> int:
    k = int((max(budget, 1) / n) ** (1.0 / n))
    k = max(k, 3)
    return k if k % 2 else k - 1


def _partner(domain: Domain, X: np.ndarray, D: np.ndarray) -> np.ndarray:
    """``X + D``, flipped to ``X - D`` when that leaves the box, then clipped."""
    Y = X + D
    out = ~domain.contains(Y)
    Y[out] = X[out] - D[out]
    return np.clip(Y, domain.lo, domain.hi)


def holder_pairs(domain: Domain, pair_count: int, seed: int = 0) -> list[tuple[np.ndarray, np.ndarray]]:
    """Pair levels ``[(X_0, Y_0), (X_1, Y_1), ...]``: random, then one per stratum."""
    if pair_count < 10:
        raise InputError("pair_count must be >= 10")
    n = domain.dimension
    rng = np.random.default_rng(seed)
    per_level = pair_count // (len(STRATA) + 1)
    levels = [(domain.sample(rng, per_level), domain.sample(rng, per_level))]
    diam = domain.diameter
    for frac in STRATA:
        delta = frac * diam
        half = per_level // 2
        base = domain.lattice(_lattice_size(half, n))
        Xa = np.repeat(base, n, axis=0)
        Da = delta * np.tile(np.eye(n), (len(base), 1))
        m = per_level - len(Xa)
        Xr = domain.sample(rng, max(m, 1))
        g = rng.standard_normal((len(Xr), n))
        Dr = delta * g / np.linalg.norm(g, axis=1, keepdims=True)
        X = np.vstack([Xa, Xr])
        Y = _partner(domain, X.copy(), np.vstack([Da, Dr]))
        levels.append((X, Y))
    return levels


def _values(f, X):
    vals = np.asarray(f(X), dtype=float)
    if vals.ndim == 0:
        vals = np.full(len(X), float(vals))
    if vals.shape[:1] != (len(X),):
        raise EvaluationError(f"f returned shape {vals.shape} for {len(X)} points; f must be vectorised")
    flat = vals.reshape(len(X), -1)
    bad = ~np.isfinite(flat).all(axis=1)
    if bad.any():
        raise EvaluationError(f"f is not finite at {X[np.argmax(bad)].tolist()}")
    return flat


def seminorm_on_pairs(f, levels, alpha: float) -> tuple[float, float, tuple, dict, int]:
    """Running supremum of ``max|f(y) - f(x)| / |y - x|^alpha`` over pair levels."""
    best, sup = 0.0, 0.0
    trace = []
    witness: dict = {}
    count = 0
    for X, Y in levels:
        d = np.linalg.norm(Y - X, axis=1)
        keep = d > 0
        X, Y, d = X[keep], Y[keep], d[keep]
        fx, fy = _values(f, X), _values(f, Y)
        sup = max(sup, float(np.max(np.abs(fx))), float(np.max(np.abs(fy))))
        ratio = np.max(np.abs(fy - fx), axis=1) / d ** alpha
        i = int(np.argmax(ratio))
        if ratio[i] > best:
            best = float(ratio[i])
            witness = {"x": X[i].tolist(), "y": Y[i].tolist()}
        count += len(X)
        trace.append(best)
    return best, sup, tuple(trace), witness, count


def holder_seminorm(f, domain: Domain, alpha: float, pair_count: int = 10_000,
                    seed: int = 0) -> HolderEstimate:
    """Sampled ``[f]_{C^{0,alpha}}`` of a vectorised scalar-, vector- or matrix-valued ``f``.

    Differences of non-scalar values are measured in the entrywise max norm.
    """
    if not 0 < alpha <= 1:
        raise InputError("alpha must lie in (0, 1]")
    levels = holder_pairs(domain, pair_count, seed)
    best, sup, trace, witness, count = seminorm_on_pairs(f, levels, alpha)
    return HolderEstimate(0, alpha, best, sup, count, trace, witness)


def holder_norm(f, domain: Domain, k: int = 0, alpha: float = 1.0, pair_count: int = 10_000,
                seed: int = 0, step: float | None = None) -> HolderEstimate:
    """Sampled ``C^{k,alpha}`` norm for ``k`` in {0, 1}.

    For ``k = 1`` first partial derivatives are taken by central differences
    with ``step`` (default ``1e-5 * diam``); evaluation points closer than
    ``step`` to the boundary are pulled inside.
    """
    if k not in (0, 1):
        raise InputError("only k in {0, 1} is supported")
    if k == 0:
        return holder_seminorm(f, domain, alpha, pair_count, seed)
    if not 0 < alpha <= 1:
        raise InputError("alpha must lie in (0, 1]")
    h = step or 1e-5 * domain.diameter
    n = domain.dimension
    eye = np.eye(n)
    levels = holder_pairs(domain, pair_count, seed)

    def partial(j):
        def g(X):
            Xc = np.clip(X, domain.lo + h, domain.hi - h)
            return (_values(f, Xc + h * eye[j]) - _values(f, Xc - h * eye[j])) / (2 * h)
        return g

    sup_f = max(float(np.max(np.abs(_values(f, X)))) for X, _ in levels)
    best, sup, trace, witness, count = 0.0, sup_f, None, {}, 0
    for j in range(n):
        s, sd, tr, wit, count = seminorm_on_pairs(partial(j), levels, alpha)
        sup = max(sup, sd)
        trace = tr if trace is None else tuple(max(a, b) for a, b in zip(trace, tr))
        if s > best:
            best, witness = s, {**wit, "partial": j}
    return HolderEstimate(1, alpha, best, sup, count, trace, witness)


# ----------------------------------------------------------------------------


@dataclass
class RegularityProbe:
    alpha: float
    resolutions: list
    seminorms: list
    sup_norms: list
    relative_change: float
    stable: bool
    tolerance: float

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "resolutions": self.resolutions, "seminorms": self.seminorms,
                "sup_norms": self.sup_norms, "relative_change": self.relative_change,
                "stable": self.stable, "tolerance": self.tolerance}


def _half_offsets(n: int) -> list[tuple]:
    offs = np.array(np.meshgrid(*[[-1, 0, 1]] * n, indexing="ij")).reshape(n, -1).T
    keep = []
    for o in offs:
        nz = np.flatnonzero(o)
        if len(nz) and o[nz[0]] > 0:
            keep.append(tuple(int(a) for a in o))
    return keep


def field_seminorm(tensors: np.ndarray, spacing, alpha: float, pair_count: int = 2000,
                   seed: int = 0) -> float:
    """Sampled alpha-seminorm of a gridded matrix field.

    Uses every nearest-neighbour pair (axis and diagonal offsets) plus
    ``pair_count`` random node pairs; entrywise max norm.
    """
    n = len(spacing)
    shape = tensors.shape[:n]
    flat = tensors.reshape(shape + (-1,))
    h = np.asarray(spacing, dtype=float)
    best = 0.0
    for o in _half_offsets(n):
        src = tuple(slice(max(0, -a), s - max(0, a)) for a, s in zip(o, shape))
        dst = tuple(slice(max(0, a), s + min(0, a)) for a, s in zip(o, shape))
        diff = np.max(np.abs(flat[dst] - flat[src]), axis=-1)
        dist = float(np.linalg.norm(np.array(o) * h))
        if diff.size:
            best = max(best, float(diff.max()) / dist ** alpha)
    rng = np.random.default_rng(seed)
    total = int(np.prod(shape))
    i = rng.integers(0, total, pair_count)
    j = rng.integers(0, total, pair_count)
    keep = i != j
    i, j = i[keep], j[keep]
    idx_i = np.array(np.unravel_index(i, shape)).T
    idx_j = np.array(np.unravel_index(j, shape)).T
    dist = np.linalg.norm((idx_i - idx_j) * h, axis=1)
    vals = flat.reshape(total, -1)
    ratio = np.max(np.abs(vals[i] - vals[j]), axis=1) / dist ** alpha
    if ratio.size:
        best = max(best, float(ratio.max()))
    return best


def bl_regularity_probe(F: FinslerStructure, alpha: float, resolutions=(11, 21, 41), q=None,
                        pair_count: int = 2000, seed: int = 0,
                        tolerance: float = 0.05) -> RegularityProbe:
    """Seminorm of the Binet-Legendre field across grid refinements.

    Stable means the two finest estimates differ by at most ``tolerance``
    relative to the larger; constant fields give zero at every resolution.
    """
    from .binet_legendre import bl_field

    if not 0 < alpha <= 1:
        raise InputError("alpha must lie in (0, 1]")
    resolutions = [int(r) for r in resolutions]
    if len(resolutions) < 2:
        raise InputError("need at least two resolutions")
    seminorms, sups = [], []
    for r in resolutions:
        fld = bl_field(F, r, q)
        seminorms.append(field_seminorm(fld.tensors, fld.spacing, alpha, pair_count, seed))
        sups.append(float(np.max(np.abs(fld.tensors))))
    a, b = seminorms[-2], seminorms[-1]
    top = max(abs(a), abs(b))
    rel = abs(b - a) / top if top > 0 else 0.0
    return RegularityProbe(alpha, resolutions, seminorms, sups, rel, rel <= tolerance, tolerance)
