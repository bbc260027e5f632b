"""Finsler structures on box domains, axiom checks and the metric zoo.

An evaluator is a broadcasting function ``F(x, v)``: ``x`` has shape
``(..., n)``, ``v`` has shape ``(..., n)``, and the result has the broadcast
leading shape. All zoo metrics follow that contract so that quadrature and
graph construction can evaluate thousands of vectors in one call.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainError, InputError, InvalidSpecError
from .quadrature import sphere_directions

KINDS = ("riemannian", "minkowski", "randers", "funk", "polyhedral", "custom")
ZOO = ("euclidean", "ellipsoid", "p-norm", "polyhedral", "randers", "funk", "remark2")

C0_MARGIN = 1.05
AXIOM_TOL = 1e-9


@dataclass(frozen=True)
class Domain:
    """Axis-aligned box ``prod [lower_i, upper_i]`` in R^n."""

    lower: tuple
    upper: tuple
    convex: bool = True

    def __post_init__(self):
        lo = tuple(float(a) for a in self.lower)
        hi = tuple(float(b) for b in self.upper)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if len(lo) != len(hi):
            raise InputError("lower and upper bounds differ in length")
        if len(lo) < 2:
            raise InputError("dimension n = 1 is not supported (need n >= 2)")
        if not all(np.isfinite(lo + hi)):
            raise InputError("domain bounds must be finite")
        if any(a >= b for a, b in zip(lo, hi)):
            raise InputError(f"need lower < upper on every axis, got {lo} / {hi}")

    @classmethod
    def box(cls, n: int, lo: float = -1.0, hi: float = 1.0) -> "Domain":
        return cls((lo,) * n, (hi,) * n)

    @classmethod
    def from_bounds(cls, bounds, convex: bool = True) -> "Domain":
        bounds = np.asarray(bounds, dtype=float)
        return cls(tuple(bounds[:, 0]), tuple(bounds[:, 1]), convex)

    @property
    def dimension(self) -> int:
        return len(self.lower)

    @property
    def lo(self) -> np.ndarray:
        return np.array(self.lower)

    @property
    def hi(self) -> np.ndarray:
        return np.array(self.upper)

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.hi - self.lo))

    def contains(self, x, margin: float = 0.0) -> np.ndarray:
        """Boolean (array) telling whether points lie in the closed box shrunk by ``margin``."""
        x = np.asarray(x, dtype=float)
        tol = 1e-12 * self.diameter
        return np.all((x >= self.lo + margin - tol) & (x <= self.hi - margin + tol), axis=-1)

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, size=(count, self.dimension))

    def lattice(self, per_axis: int) -> np.ndarray:
        axes = [np.linspace(a, b, per_axis) for a, b in zip(self.lower, self.upper)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def to_dict(self) -> dict:
        return {"lower": list(self.lower), "upper": list(self.upper), "convex": self.convex}


@dataclass(frozen=True, eq=False)
class FinslerStructure:
    """A continuous Finsler function on ``domain x R^n`` plus metadata.

    ``c0`` is the comparability constant: ``|v|/c0 <= F(x, v) <= c0 |v|``.
    ``params`` carries the closed-form parameters of zoo metrics (for
    instance the polytope vertices used by the exact Binet-Legendre path).
    Instances hash by identity so they can key graph caches.
    """

    domain: Domain
    evaluator: Callable
    reversible: bool
    kind: str = "custom"
    c0: float = 1.0
    position_independent: bool = False
    name: str = "custom"
    params: dict = field(default_factory=dict)

    @property
    def dimension(self) -> int:
        return self.domain.dimension

    def __call__(self, x, v):
        return evaluate(self, x, v)

    def scaled(self, factor: float) -> "FinslerStructure":
        """The structure ``factor * F``."""
        if factor <= 0:
            raise InputError("scale factor must be positive")
        ev = self.evaluator
        return FinslerStructure(self.domain, lambda x, v: factor * ev(x, v), self.reversible,
                                self.kind, self.c0 * max(factor, 1.0 / factor),
                                self.position_independent, f"{factor}*{self.name}",
                                {**self.params, "scale": factor})

    def composed(self, T) -> "FinslerStructure":
        """The Minkowski norm ``v -> F(Tv)`` for an invertible matrix ``T``."""
        T = np.asarray(T, dtype=float)
        ev = self.evaluator
        s = np.linalg.svd(T, compute_uv=False)
        params = dict(self.params)
        if "vertices" in params:
            params["vertices"] = np.linalg.solve(T, np.asarray(params["vertices"]).T).T
        return FinslerStructure(self.domain, lambda x, v: ev(x, np.einsum("ij,...j->...i", T, v)),
                                self.reversible, self.kind,
                                self.c0 * max(s[0], 1.0 / s[-1]), self.position_independent,
                                f"{self.name}@T", params)


def evaluate(F: FinslerStructure, x, v):
    """Evaluate ``F(x, v)`` with input validation.

    Raises :class:`DomainError` if ``x`` is outside the domain and
    :class:`InputError` on non-finite input.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    n = F.dimension
    if x.shape[-1:] != (n,) or v.shape[-1:] != (n,):
        raise InputError(f"expected vectors of length {n}, got shapes {x.shape} and {v.shape}")
    if not (np.isfinite(x).all() and np.isfinite(v).all()):
        raise InputError("non-finite point or vector")
    if not np.all(F.domain.contains(x)):
        raise DomainError(f"point outside the domain {F.domain.lower}..{F.domain.upper}")
    out = F.evaluator(x, v)
    return float(out) if np.ndim(out) == 0 else np.asarray(out)


# ----------------------------------------------------------------------------
# axioms


@dataclass
class AxiomReport:
    homogeneity: float
    subadditivity: float
    comparability: float
    tolerance: float
    homogeneity_ok: bool
    subadditivity_ok: bool
    comparability_ok: bool
    samples: int
    witnesses: dict

    @property
    def passed(self) -> bool:
        return self.homogeneity_ok and self.subadditivity_ok and self.comparability_ok

    def to_dict(self) -> dict:
        return {
            "homogeneity_residual": self.homogeneity,
            "subadditivity_violation": self.subadditivity,
            "comparability_violation": self.comparability,
            "tolerance": self.tolerance,
            "homogeneity_ok": self.homogeneity_ok,
            "subadditivity_ok": self.subadditivity_ok,
            "comparability_ok": self.comparability_ok,
            "samples": self.samples,
            "passed": self.passed,
            "witnesses": self.witnesses,
        }


def _probe_vectors(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic (v, w) pairs built from signed basis vectors."""
    basis = np.vstack([np.eye(n), -np.eye(n)])
    v = np.repeat(basis, len(basis), axis=0)
    w = np.tile(basis, (len(basis), 1))
    return v, w


def check_axioms(F: FinslerStructure, sample_count: int = 1000, seed: int = 0,
                 tol: float = AXIOM_TOL) -> AxiomReport:
    """Sample-based check of homogeneity, subadditivity and comparability.

    Residuals are reported raw; pass/fail uses the scaled criteria
    ``|F(x, lv) - l F(x, v)| <= tol (1 + l F(x, v))`` and the analogous
    relative form for the other two axioms. Besides the random samples,
    every pair of signed basis vectors is probed at the domain centre.
    """
    if sample_count < 1:
        raise InputError("sample_count must be >= 1")
    n = F.dimension
    rng = np.random.default_rng(seed)
    x = F.domain.sample(rng, sample_count)
    v = rng.standard_normal((sample_count, n))
    w = rng.standard_normal((sample_count, n))
    lam = rng.uniform(0.0, 10.0, sample_count)
    lam[0] = 0.0
    pv, pw = _probe_vectors(n)
    x = np.vstack([x, np.broadcast_to(F.domain.center, pv.shape)])
    v = np.vstack([v, pv])
    w = np.vstack([w, pw])
    lam = np.concatenate([lam, np.ones(len(pv))])

    ev = F.evaluator
    fv, fw, fvw = ev(x, v), ev(x, w), ev(x, v + w)
    flv = ev(x, lam[:, None] * v)

    hom = np.abs(flv - lam * fv)
    sub = np.maximum(0.0, fvw - fv - fw)
    nv = np.linalg.norm(v, axis=1)
    comp = np.maximum.reduce([np.zeros_like(nv), nv / F.c0 - fv, fv - F.c0 * nv])

    def worst(arr):
        i = int(np.argmax(arr))
        return i, float(arr[i])

    ih, h = worst(hom)
    isub, s = worst(sub)
    ic, c = worst(comp)
    return AxiomReport(
        homogeneity=h, subadditivity=s, comparability=c, tolerance=tol,
        homogeneity_ok=bool(np.all(hom <= tol * (1.0 + lam * np.abs(fv)))),
        subadditivity_ok=bool(np.all(sub <= tol * (1.0 + fv + fw))),
        comparability_ok=bool(np.all(comp <= tol * (1.0 + nv))),
        samples=len(x),
        witnesses={
            "homogeneity": {"x": x[ih].tolist(), "v": v[ih].tolist(), "lambda": float(lam[ih])},
            "subadditivity": {"x": x[isub].tolist(), "v": v[isub].tolist(), "w": w[isub].tolist()},
            "comparability": {"x": x[ic].tolist(), "v": v[ic].tolist()},
        },
    )


def reversibility_defect(F: FinslerStructure, x, direction_count: int = 360) -> float:
    """``max_u max(F(x,-u)/F(x,u), F(x,u)/F(x,-u))`` over sampled unit vectors."""
    if direction_count < 4:
        raise InputError("direction_count must be >= 4")
    x = np.asarray(x, dtype=float)
    if not F.domain.contains(x):
        raise DomainError(f"point {x.tolist()} outside the domain")
    u = sphere_directions(F.dimension, direction_count)
    fp = F.evaluator(x, u)
    fm = F.evaluator(x, -u)
    return float(np.max(np.maximum(fm / fp, fp / fm)))


# ----------------------------------------------------------------------------
# the zoo


@dataclass
class MetricSpec:
    """Declarative description of a zoo metric.

    ``params`` by kind: ellipsoid ``h``; p-norm ``p``; polyhedral
    ``vertices``; randers ``h`` (default identity) and ``b``; remark2 ``f``
    (expression in ``t``, default ``t + 0.3*sin(t)``). ``bounds`` defaults
    to ``[-1, 1]^n`` (``[-0.5, 0.5]^n`` for funk).
    """

    kind: str
    dimension: int = 2
    params: dict = field(default_factory=dict)
    bounds: list | None = None


def estimate_c0(domain: Domain, evaluator, position_independent: bool,
                direction_count: int | None = None) -> float:
    """Comparability constant from sampled ``F`` on the unit sphere, with a 5% margin."""
    n = domain.dimension
    u = sphere_directions(n, direction_count or (720 if n == 2 else 2000))
    if position_independent:
        xs = domain.center[None, :]
    else:
        rng = np.random.default_rng(12345)
        per_axis = 9 if n <= 3 else 3
        xs = np.vstack([domain.lattice(per_axis), domain.sample(rng, 64)])
    vals = evaluator(xs[:, None, :], u[None, :, :])
    if not np.all(np.isfinite(vals)):
        raise InvalidSpecError("metric is not finite on the unit sphere")
    lo, hi = float(vals.min()), float(vals.max())
    if lo <= 0:
        raise InvalidSpecError("metric is not positive on the unit sphere")
    return C0_MARGIN * max(hi, 1.0 / lo)


def _spd(h, n, what="h") -> np.ndarray:
    h = np.asarray(h, dtype=float)
    if h.shape != (n, n):
        raise InvalidSpecError(f"{what} must be {n}x{n}")
    if not np.allclose(h, h.T, atol=1e-12):
        raise InvalidSpecError(f"{what} must be symmetric")
    if np.linalg.eigvalsh(h).min() <= 0:
        raise InvalidSpecError(f"{what} must be positive definite")
    return 0.5 * (h + h.T)


def _quadratic(h):
    return lambda x, v: np.sqrt(np.einsum("...i,ij,...j->...", v, h, v))


def polytope_gauge(vertices) -> tuple[np.ndarray, np.ndarray]:
    """Facet normals ``a_k`` with ``Omega = {v : a_k . v <= 1}``, and hull vertices.

    Raises :class:`InvalidSpecError` unless the origin is interior.
    """
    from scipy.spatial import ConvexHull, QhullError

    pts = np.asarray(vertices, dtype=float)
    try:
        hull = ConvexHull(pts)
    except QhullError as exc:
        raise InvalidSpecError(f"degenerate polytope: {exc}") from None
    normals, offsets = hull.equations[:, :-1], hull.equations[:, -1]
    if np.any(offsets >= -1e-12):
        raise InvalidSpecError("polytope does not contain the origin in its interior")
    return normals / -offsets[:, None], pts[hull.vertices]


def _polyhedral(vertices):
    a, _ = polytope_gauge(vertices)
    return lambda x, v: np.max(np.einsum("kj,...j->...k", a, v), axis=-1)


def _funk(x, v):
    xx = np.einsum("...i,...i->...", x, x)
    xv = np.einsum("...i,...i->...", x, v)
    vv = np.einsum("...i,...i->...", v, v)
    s = 1.0 - xx
    return (np.sqrt(s * vv + xv ** 2) + xv) / s


def remark2_functions(expr: str = "t + 0.3*sin(t)"):
    """Return vectorised ``f, f', f''`` for an expression in ``t``."""
    import sympy

    t = sympy.Symbol("t")
    try:
        fexpr = sympy.sympify(expr, locals={"t": t})
    except (sympy.SympifyError, TypeError) as exc:
        raise InvalidSpecError(f"cannot parse f(t) = {expr!r}: {exc}") from None
    if fexpr.free_symbols - {t}:
        raise InvalidSpecError(f"f(t) = {expr!r} has symbols other than t")
    d1 = sympy.diff(fexpr, t)
    d2 = sympy.diff(d1, t)

    def vec(e):
        fn = sympy.lambdify(t, e, "numpy")
        return lambda s: np.asarray(fn(s), dtype=float) * np.ones_like(s, dtype=float)

    return vec(fexpr), vec(d1), vec(d2)


def remark2_metric(expr: str = "t + 0.3*sin(t)", bounds=None) -> FinslerStructure:
    """Riemannian metric ``f'(x1)^2 dx1^2 + dx2^2`` on the plane."""
    return build_zoo_metric(MetricSpec("remark2", 2, {"f": expr}, bounds))


def build_zoo_metric(spec: MetricSpec) -> FinslerStructure:
    """Build and validate a named metric; ``c0`` is estimated automatically."""
    kind = spec.kind
    n = int(spec.dimension)
    p = dict(spec.params)
    if n < 2:
        raise InvalidSpecError("dimension n = 1 is not supported")
    if spec.bounds is not None:
        domain = Domain.from_bounds(spec.bounds)
        if domain.dimension != n:
            raise InvalidSpecError("bounds do not match the dimension")
    else:
        domain = Domain.box(n, -0.5, 0.5) if kind == "funk" else Domain.box(n)

    minkowski = True
    stored: dict = {}
    if kind == "euclidean":
        ev, reversible, tag = (lambda x, v: np.linalg.norm(v, axis=-1)), True, "riemannian"
    elif kind == "ellipsoid":
        h = _spd(p.get("h"), n)
        ev, reversible, tag = _quadratic(h), True, "riemannian"
        stored["h"] = h
    elif kind == "p-norm":
        order = float(p.get("p", 2.0))
        if not order >= 1:
            raise InvalidSpecError("p-norm needs p >= 1")
        ev = lambda x, v: np.linalg.norm(v, ord=order, axis=-1)  # noqa: E731
        reversible, tag = True, "minkowski"
        stored["p"] = order
    elif kind == "polyhedral":
        verts = np.asarray(p.get("vertices"), dtype=float)
        if verts.ndim != 2 or verts.shape[1] != n:
            raise InvalidSpecError(f"polyhedral vertices must be a list of {n}-vectors")
        ev = _polyhedral(verts)
        _, hull_verts = polytope_gauge(verts)
        reversible = bool(np.allclose(ev(np.zeros(n), -hull_verts), 1.0, atol=1e-12))
        tag = "polyhedral"
        stored["vertices"] = verts
    elif kind == "randers":
        h = _spd(p.get("h", np.eye(n)), n)
        b = np.asarray(p.get("b"), dtype=float)
        if b.shape != (n,):
            raise InvalidSpecError(f"randers b must be a {n}-vector")
        if float(b @ np.linalg.solve(h, b)) >= 1.0:
            raise InvalidSpecError("randers drift must satisfy |b|_h < 1")
        quad = _quadratic(h)
        ev = lambda x, v: quad(x, v) + np.einsum("i,...i->...", b, v)  # noqa: E731
        reversible, tag = not np.any(b), "randers"
        stored.update(h=h, b=b)
    elif kind == "funk":
        corners = np.array(np.meshgrid(*zip(domain.lower, domain.upper))).reshape(n, -1).T
        if np.max(np.linalg.norm(corners, axis=1)) >= 1.0:
            raise InvalidSpecError("funk domain must lie inside the open unit ball")
        ev, reversible, tag, minkowski = _funk, False, "funk", False
    elif kind == "remark2":
        if n != 2:
            raise InvalidSpecError("remark2 metric is planar (n = 2)")
        expr = str(p.get("f", "t + 0.3*sin(t)"))
        _, fp, _ = remark2_functions(expr)

        def ev(x, v):
            s = fp(np.asarray(x, dtype=float)[..., 0])
            return np.sqrt((s * v[..., 0]) ** 2 + v[..., 1] ** 2)

        reversible, tag, minkowski = True, "riemannian", False
        stored["f"] = expr
    else:
        raise InvalidSpecError(f"unknown metric kind {kind!r}; expected one of {ZOO}")

    c0 = estimate_c0(domain, ev, minkowski)
    return FinslerStructure(domain, ev, reversible, tag, c0, minkowski, kind, stored)


def euclidean(n: int = 2, bounds=None) -> FinslerStructure:
    return build_zoo_metric(MetricSpec("euclidean", n, bounds=bounds))


def square_norm(bounds=None) -> FinslerStructure:
    """Max-norm on the plane (unit ball ``[-1, 1]^2``)."""
    verts = [[1, 1], [-1, 1], [-1, -1], [1, -1]]
    return build_zoo_metric(MetricSpec("polyhedral", 2, {"vertices": verts}, bounds))


def randers(b, h=None, bounds=None) -> FinslerStructure:
    b = np.asarray(b, dtype=float)
    params = {"b": b} if h is None else {"b": b, "h": h}
    return build_zoo_metric(MetricSpec("randers", len(b), params, bounds))


def custom_metric(evaluator, domain: Domain, reversible: bool = False,
                  position_independent: bool = False, c0: float | None = None,
                  name: str = "custom") -> FinslerStructure:
    """Wrap a user evaluator; ``c0`` is estimated when not given."""
    if c0 is None:
        c0 = estimate_c0(domain, evaluator, position_independent)
    return FinslerStructure(domain, evaluator, reversible, "custom", c0,
                            position_independent, name)
