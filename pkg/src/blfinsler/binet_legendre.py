"""Binet-Legendre tensors of Finsler structures.

The inverse tensor at ``x`` is the normalised second-moment matrix of the
unit tangent ball ``Omega_x = {v : F(x, v) < 1}``::

    g^{ij}(x) = (n + 2) / vol(Omega_x) * int_{Omega_x} v_i v_j dv

which in polar coordinates becomes a ratio of two sphere integrals,
``n * int u_i u_j F^{-(n+2)} dsigma / int F^{-n} dsigma``. Three evaluation
paths are provided: spherical quadrature (default), exact moments of a
convex polytope (polyhedral unit balls), and the twisted form in which the
sphere is first pushed through a homogeneous map ``A_x``.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from dataclasses import dataclass
from math import factorial
from typing import Callable

import numpy as np

from . import quadrature as quad
from .errors import (ConfigurationError, InputError, InvalidSpecError,
                     InvalidStructureError, NumericalError)
from .finsler_core import Domain, FinslerStructure, polytope_gauge

COND_CAP = 1e12
FIELD_FORMAT = "blfinsler-tensor-field"
FIELD_VERSION = 1


def check_spd(g, what: str = "matrix") -> np.ndarray:
    """Validate symmetry (1e-12 relative) and positive definiteness; return ``g``."""
    g = np.asarray(g, dtype=float)
    if g.ndim != 2 or g.shape[0] != g.shape[1]:
        raise NumericalError(f"{what} is not square")
    scale = max(1.0, float(np.max(np.abs(g))))
    if np.max(np.abs(g - g.T)) > 1e-12 * scale:
        raise NumericalError(f"{what} is not symmetric")
    eig = np.linalg.eigvalsh(g)
    if not np.all(np.isfinite(eig)) or eig[0] <= 0:
        raise NumericalError(f"{what} is not positive definite (eigenvalues {eig.tolist()})")
    if eig[-1] / eig[0] > COND_CAP:
        raise NumericalError(f"{what} condition number {eig[-1] / eig[0]:.3g} exceeds {COND_CAP:g}")
    return g


def spd_inverse(g) -> np.ndarray:
    """Inverse via symmetric eigendecomposition, refusing condition numbers above 1e12."""
    g = np.asarray(g, dtype=float)
    g = 0.5 * (g + g.T)
    w, V = np.linalg.eigh(g)
    if w[0] <= 0 or not np.all(np.isfinite(w)):
        raise NumericalError(f"cannot invert: eigenvalues {w.tolist()}")
    if w[-1] / w[0] > COND_CAP:
        raise NumericalError(f"cannot invert: condition number {w[-1] / w[0]:.3g}")
    inv = (V / w) @ V.T
    return 0.5 * (inv + inv.T)


def _default_rule(F: FinslerStructure, q):
    if q is not None:
        if q.dimension != F.dimension:
            raise ConfigurationError(f"quadrature dimension {q.dimension} != metric dimension {F.dimension}")
        return q
    return quad.build(F.dimension, kinked=F.kind == "polyhedral")


def _moment_ratio(values, nodes, weights, n, jac=None):
    """``n * sum w J u u^T F^{-(n+2)} / sum w J F^{-n}`` along the last node axis."""
    wj = weights if jac is None else weights * jac
    inv_n = values ** (-n)
    den = inv_n @ wj
    num = np.einsum("...m,m,mi,mj->...ij", inv_n / values ** 2, wj, nodes, nodes)
    if np.any(~np.isfinite(den)) or np.any(den <= 0):
        raise NumericalError("volume integral is not positive")
    G = n * num / np.asarray(den)[..., None, None]
    return 0.5 * (G + np.swapaxes(G, -1, -2))


def _check_values(values, where=""):
    bad = ~np.isfinite(values) | (values <= 0)
    if np.any(bad):
        raise InvalidStructureError(f"F is not positive on the unit sphere{where}")


def bl_inverse_tensor_at(F: FinslerStructure, x, q: quad.SphericalQuadrature | None = None) -> np.ndarray:
    """Inverse Binet-Legendre tensor ``g^{ij}(x)`` by spherical quadrature."""
    q = _default_rule(F, q)
    x = np.asarray(x, dtype=float)
    if not F.domain.contains(x):
        raise InputError(f"point {x.tolist()} outside the domain")
    values = np.asarray(F.evaluator(x, q.nodes), dtype=float)
    _check_values(values, f" at x = {x.tolist()}")
    return _moment_ratio(values, q.nodes, q.weights, F.dimension)


def bl_tensor_at(F: FinslerStructure, x, q: quad.SphericalQuadrature | None = None) -> np.ndarray:
    """Binet-Legendre tensor ``g_{ij}(x)``."""
    return spd_inverse(bl_inverse_tensor_at(F, x, q))


# ----------------------------------------------------------------------------
# tensor fields


@dataclass(frozen=True, eq=False)
class MetricTensorField:
    """SPD matrices sampled on a regular grid over ``domain``.

    ``tensors`` has shape ``(*resolution, n, n)``; nodes are ordered with
    ``indexing="ij"`` and serialised in C (row-major) order.
    """

    domain: Domain
    resolution: tuple
    tensors: np.ndarray
    provenance: str = "quadrature"

    @property
    def dimension(self) -> int:
        return self.domain.dimension

    @property
    def axes(self) -> list[np.ndarray]:
        return [np.linspace(a, b, k) for a, b, k in zip(self.domain.lower, self.domain.upper, self.resolution)]

    @property
    def spacing(self) -> tuple:
        return tuple((b - a) / (k - 1) for a, b, k in zip(self.domain.lower, self.domain.upper, self.resolution))

    def nodes(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack(mesh, axis=-1)

    def flat(self) -> tuple[np.ndarray, np.ndarray]:
        n = self.dimension
        return self.nodes().reshape(-1, n), self.tensors.reshape(-1, n, n)

    def to_dict(self) -> dict:
        pts, mats = self.flat()
        return {
            "format": FIELD_FORMAT,
            "version": FIELD_VERSION,
            "dimension": self.dimension,
            "lower": list(self.domain.lower),
            "upper": list(self.domain.upper),
            "resolution": list(self.resolution),
            "provenance": self.provenance,
            "nodes": pts.tolist(),
            "matrices": mats.reshape(len(mats), -1).tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MetricTensorField":
        if data.get("format") != FIELD_FORMAT:
            raise ConfigurationError("not a tensor field file")
        if data.get("version") != FIELD_VERSION:
            raise ConfigurationError(f"unsupported field version {data.get('version')}")
        n = int(data["dimension"])
        res = tuple(int(k) for k in data["resolution"])
        mats = np.asarray(data["matrices"], dtype=float).reshape(*res, n, n)
        return cls(Domain(tuple(data["lower"]), tuple(data["upper"])), res, mats, data.get("provenance", ""))


def bl_field(F: FinslerStructure, grid_resolution, q: quad.SphericalQuadrature | None = None,
             chunk: int = 256) -> MetricTensorField:
    """Binet-Legendre tensor at every node of a regular grid over ``F.domain``.

    Nodes are computed independently in fixed C order; a failing node is
    reported with its coordinates.
    """
    n = F.dimension
    if np.isscalar(grid_resolution):
        grid_resolution = (int(grid_resolution),) * n
    res = tuple(int(k) for k in grid_resolution)
    if len(res) != n or min(res) < 2:
        raise ConfigurationError(f"grid resolution {res} invalid for dimension {n}")
    q = _default_rule(F, q)
    axes = [np.linspace(a, b, k) for a, b, k in zip(F.domain.lower, F.domain.upper, res)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    out = np.empty((len(pts), n, n))
    for s in range(0, len(pts), chunk):
        block = pts[s:s + chunk]
        values = np.asarray(F.evaluator(block[:, None, :], q.nodes[None, :, :]), dtype=float)
        values = np.broadcast_to(values, (len(block), q.size))
        bad = ~np.all(np.isfinite(values) & (values > 0), axis=1)
        if bad.any():
            raise InvalidStructureError(f"F is not positive at node {block[np.argmax(bad)].tolist()}")
        ginv = _moment_ratio(values, q.nodes, q.weights, n)
        for k, g in enumerate(ginv):
            try:
                out[s + k] = spd_inverse(g)
            except NumericalError as exc:
                raise NumericalError(f"node {block[k].tolist()}: {exc}") from None
    return MetricTensorField(F.domain, res, out.reshape(*res, n, n), f"quadrature:{q.scheme}:{q.resolution}")


def _atomic_write(path, text: str):
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    with os.fdopen(fd, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def field_to_json(field: MetricTensorField) -> str:
    return json.dumps(field.to_dict(), indent=1)


def field_to_csv(field: MetricTensorField) -> str:
    """One row per node: coordinates ``x1..xn`` then entries ``g11..gnn`` row-major."""
    n = field.dimension
    pts, mats = field.flat()
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"x{i + 1}" for i in range(n)] + [f"g{i + 1}{j + 1}" for i in range(n) for j in range(n)])
    for p, m in zip(pts, mats):
        w.writerow([repr(float(a)) for a in p] + [repr(float(a)) for a in m.ravel()])
    return buf.getvalue()


def save_field(field: MetricTensorField, path) -> None:
    """Write ``.json`` or ``.csv`` depending on the suffix (atomic)."""
    text = field_to_csv(field) if str(path).endswith(".csv") else field_to_json(field)
    _atomic_write(path, text)


def _field_from_csv(text: str) -> MetricTensorField:
    rows = list(csv.reader(io.StringIO(text)))
    header, data = rows[0], np.array(rows[1:], dtype=float)
    n = sum(h.startswith("x") for h in header)
    if len(header) != n + n * n or len(data) == 0:
        raise ConfigurationError("field CSV must have columns x1..xn, g11..gnn")
    axes = [np.unique(data[:, k]) for k in range(n)]
    res = tuple(len(a) for a in axes)
    if int(np.prod(res)) != len(data):
        raise ConfigurationError("field CSV is not a full regular grid")
    idx = tuple(np.searchsorted(a, data[:, k]) for k, a in enumerate(axes))
    tensors = np.empty(res + (n, n))
    tensors[idx] = data[:, n:].reshape(-1, n, n)
    dom = Domain(tuple(a[0] for a in axes), tuple(a[-1] for a in axes))
    return MetricTensorField(dom, res, tensors, "csv")


def load_field(path) -> MetricTensorField:
    """Read a field written by :func:`save_field` (JSON, or CSV by suffix)."""
    with open(path) as fh:
        text = fh.read()
    if str(path).endswith(".csv"):
        return _field_from_csv(text)
    return MetricTensorField.from_dict(json.loads(text))


# ----------------------------------------------------------------------------
# exact polyhedral path


def simplex_second_moment(P) -> tuple[float, np.ndarray]:
    """Volume and ``int v v^T dv`` of the simplex with vertices ``0, P[0], ..., P[n-1]``.

    Uses ``vol / ((n+1)(n+2)) * (sum_i p_i p_i^T + s s^T)`` with ``s = sum_i p_i``.
    """
    P = np.asarray(P, dtype=float)
    n = P.shape[1]
    vol = abs(float(np.linalg.det(P))) / factorial(n)
    s = P.sum(axis=0)
    return vol, vol / ((n + 1) * (n + 2)) * (P.T @ P + np.outer(s, s))


def polytope_moments(vertices) -> tuple[float, np.ndarray]:
    """Exact volume and second moment of a convex polytope containing the origin.

    Fan triangulation from the origin over the (triangulated) hull facets.
    """
    from scipy.spatial import ConvexHull

    verts = np.asarray(vertices, dtype=float)
    polytope_gauge(verts)
    hull = ConvexHull(verts)
    n = verts.shape[1]
    total, M = 0.0, np.zeros((n, n))
    for simplex in hull.simplices:
        vol, m = simplex_second_moment(verts[simplex])
        if vol <= 1e-15:
            continue
        total += vol
        M += m
    if total <= 0:
        raise InvalidSpecError("polytope has zero volume")
    return total, M


def bl_polyhedral_exact(vertices, n: int | None = None) -> np.ndarray:
    """Exact Binet-Legendre tensor of the Minkowski norm whose unit ball is ``conv(vertices)``."""
    verts = np.asarray(vertices, dtype=float)
    if n is not None and verts.shape[1] != n:
        raise InvalidSpecError(f"vertices are {verts.shape[1]}-dimensional, expected {n}")
    if verts.shape[1] not in (2, 3):
        raise InvalidSpecError("exact polyhedral path supports n in {2, 3}")
    vol, M = polytope_moments(verts)
    ginv = (verts.shape[1] + 2) / vol * M
    return spd_inverse(ginv)


# ----------------------------------------------------------------------------
# twisted form


@dataclass(frozen=True, eq=False)
class TwistMap:
    """Homogeneous map ``A(x, v)`` used to straighten ``F`` before integrating.

    ``evaluator`` broadcasts like a Finsler evaluator but returns vectors.
    ``jacobian(x, v)`` returns ``D_v A(x, v)`` with shape ``(..., n, n)``;
    when omitted, forward differences with step ``1e-6 |v|`` are used.
    """

    evaluator: Callable
    jacobian: Callable | None = None
    name: str = "twist"

    def __call__(self, x, v):
        return self.evaluator(np.asarray(x, dtype=float), np.asarray(v, dtype=float))

    def differential(self, x, v) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        if self.jacobian is not None:
            return np.asarray(self.jacobian(x, v), dtype=float)
        n = v.shape[-1]
        h = 1e-6 * np.linalg.norm(v, axis=-1, keepdims=True)
        base = self.evaluator(x, v)
        cols = [(self.evaluator(x, v + h * np.eye(n)[j]) - base) / h for j in range(n)]
        return np.stack(cols, axis=-1)

    def jacobian_det(self, x, v) -> np.ndarray:
        return np.abs(np.linalg.det(self.differential(x, v)))


def identity_twist() -> TwistMap:
    def jac(x, v):
        n = v.shape[-1]
        return np.broadcast_to(np.eye(n), v.shape + (n,))

    return TwistMap(lambda x, v: np.broadcast_to(v, np.broadcast_shapes(x.shape, v.shape)).copy(), jac, "identity")


def linear_twist(T) -> TwistMap:
    T = np.asarray(T, dtype=float)

    def jac(x, v):
        return np.broadcast_to(T, v.shape + (T.shape[1],))

    return TwistMap(lambda x, v: np.einsum("ij,...j->...i", T, v) + 0.0 * x, jac, "linear")


def rotation_twist(angle: Callable) -> TwistMap:
    """Planar rotation of ``v`` by ``angle(x)``."""

    def rot(x):
        th = np.asarray(angle(np.asarray(x, dtype=float)), dtype=float)
        c, s = np.cos(th), np.sin(th)
        return np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)

    def ev(x, v):
        return np.einsum("...ij,...j->...i", rot(x), v)

    def jac(x, v):
        R = rot(x)
        return np.broadcast_to(R, np.broadcast_shapes(R.shape, v.shape + (2,)))

    return TwistMap(ev, jac, "rotation")


def bl_twisted_tensor_at(F: FinslerStructure, A: TwistMap, x,
                         q: quad.SphericalQuadrature | None = None) -> np.ndarray:
    """Binet-Legendre tensor computed through the change of variables ``v = A_x(v')``.

    Volume uses ``int J(x,u) F(x, A_x u)^{-n} dsigma / n`` and the moments
    ``int a_i a_j J F(x, A_x u)^{-(n+2)} dsigma / (n+2)`` with ``a = A_x(u)``.
    """
    q = _default_rule(F, q)
    x = np.asarray(x, dtype=float)
    if not F.domain.contains(x):
        raise InputError(f"point {x.tolist()} outside the domain")
    a = np.asarray(A(x, q.nodes), dtype=float)
    J = np.asarray(A.jacobian_det(x, q.nodes), dtype=float)
    if np.any(~np.isfinite(J)) or np.any(J <= 0):
        raise InvalidSpecError(f"twist Jacobian is not positive at x = {x.tolist()}")
    values = np.asarray(F.evaluator(x, a), dtype=float)
    _check_values(values, f" (twisted) at x = {x.tolist()}")
    return spd_inverse(_moment_ratio(values, a, q.weights, F.dimension, jac=J))


@dataclass
class PartialSmoothnessReport:
    alpha: float
    bound: float
    h_seminorm: float
    a_seminorm: float
    j_seminorm: float
    traces: dict
    diverging: bool
    directions: int

    @property
    def total(self) -> float:
        return self.h_seminorm + self.a_seminorm + self.j_seminorm

    @property
    def bounded(self) -> bool:
        return self.total <= self.bound and not self.diverging

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "bound": self.bound, "h_seminorm": self.h_seminorm,
                "a_seminorm": self.a_seminorm, "j_seminorm": self.j_seminorm,
                "total": self.total, "diverging": self.diverging, "bounded": self.bounded,
                "directions": self.directions, "traces": self.traces}


def partial_smoothness_check(F: FinslerStructure, A: TwistMap, alpha: float,
                             direction_count: int = 16, pair_count: int = 2000,
                             bound: float = 1e3, seed: int = 0,
                             growth_tol: float = 1.5) -> PartialSmoothnessReport:
    """Sampled alpha-seminorms of ``h_u``, ``A_u`` and ``J_u`` maximised over directions ``u``.

    A quantity is flagged as diverging when its seminorm trace grows by more
    than ``growth_tol`` at the finest separation stratum.
    """
    from .regularity import holder_seminorm

    if not 0 < alpha <= 1:
        raise InputError("alpha must lie in (0, 1]")
    n = F.dimension
    dirs = quad.sphere_directions(n, direction_count, seed)
    best = {"h": 0.0, "A": 0.0, "J": 0.0}
    traces: dict = {"h": [], "A": [], "J": []}
    diverging = False
    for u in dirs:
        funcs = {
            "h": lambda X, u=u: F.evaluator(X, A(X, np.broadcast_to(u, X.shape))),
            "A": lambda X, u=u: A(X, np.broadcast_to(u, X.shape)),
            "J": lambda X, u=u: A.jacobian_det(X, np.broadcast_to(u, X.shape)),
        }
        for key, f in funcs.items():
            est = holder_seminorm(f, F.domain, alpha, pair_count, seed)
            if est.seminorm >= best[key]:
                best[key] = est.seminorm
                traces[key] = list(est.trace)
            t = est.trace
            if len(t) >= 2 and t[-2] > 0 and t[-1] > growth_tol * t[-2]:
                diverging = True
    return PartialSmoothnessReport(alpha, bound, best["h"], best["A"], best["J"], traces,
                                   diverging, len(dirs))
