"""Analysis of candidate maps between Finsler domains.

Pullback residuals, blow-up tests, linear distortion, Christoffel symbols
of gridded metric fields and the change-of-coordinates residual, and the
dilation check built on the distance solver.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.optimize import minimize

from .binet_legendre import MetricTensorField, bl_tensor_at, spd_inverse
from .errors import (ConfigurationError, DegenerateMapError, DomainError, InputError,
                     NumericalError)
from .finsler_core import Domain, FinslerStructure, remark2_functions
from .metric_space import DEFAULT_STENCIL, distance
from .quadrature import sphere_directions

DEFAULT_DIRECTIONS = {2: 256, 3: 2048}


@dataclass(frozen=True, eq=False)
class DiscreteMap:
    """A map ``phi`` from ``source`` into ``target`` evaluated on ``(..., n)`` arrays.

    ``step`` is the finite-difference step; it defaults to ``1e-4`` times
    the source diameter.
    """

    source: Domain
    target: Domain
    evaluator: Callable
    step: float | None = None
    name: str = "map"
    params: dict = field(default_factory=dict)

    @property
    def h(self) -> float:
        return self.step if self.step is not None else 1e-4 * self.source.diameter

    def __call__(self, x):
        return np.asarray(self.evaluator(np.asarray(x, dtype=float)), dtype=float)

    def with_step(self, step: float) -> "DiscreteMap":
        return DiscreteMap(self.source, self.target, self.evaluator, step, self.name, self.params)


def identity_map(domain: Domain, step=None) -> DiscreteMap:
    return DiscreteMap(domain, domain, lambda x: np.array(x, dtype=float), step, "identity")


def linear_map(T, source: Domain, target: Domain | None = None, step=None) -> DiscreteMap:
    T = np.asarray(T, dtype=float)
    return DiscreteMap(source, target or source, lambda x: np.einsum("ij,...j->...i", T, x), step,
                       "linear", {"matrix": T.tolist()})


def dilation_map(a: float, source: Domain, target: Domain | None = None, step=None) -> DiscreteMap:
    return DiscreteMap(source, target or source, lambda x: a * np.asarray(x, dtype=float), step,
                       "dilation", {"a": a})


def remark2_map(expr: str = "t + 0.3*sin(t)", source: Domain | None = None,
                target: Domain | None = None, step=None) -> DiscreteMap:
    """``(x1, x2) -> (f(x1), x2)``."""
    f, _, _ = remark2_functions(expr)
    source = source or Domain.box(2)
    if target is None:
        lo, hi = f(np.array(source.lower[0])), f(np.array(source.upper[0]))
        target = Domain((float(min(lo, hi)), source.lower[1]), (float(max(lo, hi)), source.upper[1]))

    def ev(x):
        x = np.asarray(x, dtype=float)
        return np.stack([f(x[..., 0]), x[..., 1]], axis=-1)

    return DiscreteMap(source, target, ev, step, "remark2", {"f": expr})


def grid_map(axes, values, target: Domain | None = None, step=None) -> DiscreteMap:
    """Map sampled on a regular grid, interpolated with cubic splines.

    ``values`` has shape ``(*len(axes), n)``.
    """
    axes = [np.asarray(a, dtype=float) for a in axes]
    values = np.asarray(values, dtype=float)
    source = Domain(tuple(a[0] for a in axes), tuple(a[-1] for a in axes))
    method = "cubic" if min(len(a) for a in axes) >= 4 else "linear"
    interp = RegularGridInterpolator(axes, values, method=method)
    if target is None:
        flat = values.reshape(-1, values.shape[-1])
        target = Domain(tuple(flat.min(axis=0)), tuple(flat.max(axis=0)))

    def ev(x):
        x = np.asarray(x, dtype=float)
        return interp(x.reshape(-1, x.shape[-1])).reshape(x.shape)

    return DiscreteMap(source, target, ev, step, "grid")


# ----------------------------------------------------------------------------
# pointwise analysis


def jacobian_at(phi: DiscreteMap, x, step: float | None = None) -> np.ndarray:
    """Central-difference Jacobian ``(phi(x + h e_j) - phi(x - h e_j)) / 2h``."""
    x = np.asarray(x, dtype=float)
    h = step or phi.h
    if not phi.source.contains(x, margin=h):
        raise DomainError(f"stencil of width {h:g} around {x.tolist()} leaves the source domain")
    n = len(x)
    E = h * np.eye(n)
    plus = phi(x + E)
    minus = phi(x - E)
    return ((plus - minus) / (2 * h)).T


def _directions(n, count):
    return sphere_directions(n, count or DEFAULT_DIRECTIONS.get(n, 2048))


def _check_images(J, u):
    img = u @ J.T
    norms = np.linalg.norm(img, axis=1)
    if norms.min() <= 1e-12 * max(norms.max(), 1e-300):
        raise DegenerateMapError("differential is singular at the test point")
    return img


def pullback_residual(F1: FinslerStructure, F2: FinslerStructure, phi: DiscreteMap, x,
                      direction_count: int | None = None) -> float:
    """``max_u |F2(phi(x), dphi_x u) - F1(x, u)|`` over unit ``u``."""
    x = np.asarray(x, dtype=float)
    J = jacobian_at(phi, x)
    u = _directions(len(x), direction_count)
    img = _check_images(J, u)
    y = phi(x)
    return float(np.max(np.abs(F2.evaluator(y, img) - F1.evaluator(x, u))))


def bl_pullback_defect(F1: FinslerStructure, F2: FinslerStructure, phi: DiscreteMap, x,
                       q1=None, q2=None) -> float:
    """``|| dphi^T g2(phi(x)) dphi - g1(x) ||_inf`` for the Binet-Legendre tensors."""
    x = np.asarray(x, dtype=float)
    J = jacobian_at(phi, x)
    g1 = bl_tensor_at(F1, x, q1)
    g2 = bl_tensor_at(F2, phi(x), q2)
    return float(np.max(np.abs(J.T @ g2 @ J - g1)))


@dataclass
class BlowupReport:
    ts: list
    residuals: list
    linear_residual: float
    errors: list
    orders: list
    monotone: bool

    @property
    def min_order(self) -> float:
        return min(self.orders) if self.orders else float("nan")

    def to_dict(self) -> dict:
        return {"ts": self.ts, "residuals": self.residuals, "linear_residual": self.linear_residual,
                "errors": self.errors, "orders": self.orders, "monotone": self.monotone,
                "min_order": self.min_order}


def blowup_isometry_test(F1: FinslerStructure, F2: FinslerStructure, phi: DiscreteMap, x, ts,
                         direction_count: int | None = None) -> BlowupReport:
    """Residuals of the rescaled maps between the frozen norms ``F1(x, .)`` and ``F2(phi(x), .)``.

    For each ``t`` the rescaled map acts on a unit vector as the secant
    ``(phi(x + t u) - phi(x)) / t``. ``errors`` are distances of each
    residual to the residual of the differential; ``orders`` are the
    empirical convergence orders between consecutive ``t``.
    """
    x = np.asarray(x, dtype=float)
    ts = [float(t) for t in ts]
    if any(t <= 0 for t in ts) or any(b >= a for a, b in zip(ts, ts[1:])):
        raise InputError("t values must be positive and strictly decreasing")
    if not phi.source.contains(x, margin=ts[0]):
        raise DomainError(f"t = {ts[0]} too large: rescaled points leave the source domain")
    u = _directions(len(x), direction_count)
    y = phi(x)
    frozen1 = F1.evaluator(x, u)
    res = []
    for t in ts:
        sec = (phi(x + t * u) - y) / t
        res.append(float(np.max(np.abs(F2.evaluator(y, sec) - frozen1))))
    J = jacobian_at(phi, x)
    r0 = float(np.max(np.abs(F2.evaluator(y, _check_images(J, u)) - frozen1)))
    errs = [abs(r - r0) for r in res]
    orders = []
    for (t1, e1), (t2, e2) in zip(zip(ts, errs), zip(ts[1:], errs[1:])):
        orders.append(float(np.log(e1 / e2) / np.log(t1 / t2)) if e1 > 0 and e2 > 0 else float("inf"))
    monotone = all(b < a for a, b in zip(errs, errs[1:]))
    return BlowupReport(ts, res, r0, errs, orders, monotone)


@dataclass
class DistortionResult:
    H: float
    mu: float
    max_direction: np.ndarray
    min_direction: np.ndarray
    max_value: float
    min_value: float

    def to_dict(self) -> dict:
        return {"H": self.H, "mu": self.mu, "max_direction": self.max_direction.tolist(),
                "min_direction": self.min_direction.tolist(), "max_value": self.max_value,
                "min_value": self.min_value}


def distortion_at(F1: FinslerStructure, F2: FinslerStructure, phi: DiscreteMap, x,
                  direction_count: int | None = None, polish: bool = True,
                  conformal_tol: float = 1e-12) -> DistortionResult:
    """Linear distortion ``H = max / min`` of ``F2(phi(x), dphi_x w)`` over the F1-indicatrix.

    Directions are sampled uniformly and rescaled to F1-unit length; the
    best samples are then polished by Nelder-Mead on the degree-0
    homogeneous ratio. ``mu`` is the geometric mean of max and min (their
    common value when ``H = 1``).
    """
    x = np.asarray(x, dtype=float)
    J = jacobian_at(phi, x)
    n = len(x)
    u = _directions(n, direction_count)
    _check_images(J, u)
    y = phi(x)

    def ratio(w):
        w = np.atleast_2d(w)
        return F2.evaluator(y, w @ J.T) / F1.evaluator(x, w)

    vals = ratio(u)
    imax, imin = int(np.argmax(vals)), int(np.argmin(vals))
    vmax, vmin = float(vals[imax]), float(vals[imin])
    dmax, dmin = u[imax], u[imin]
    if polish and vmax - vmin > conformal_tol * vmax:
        opts = {"xatol": 1e-13, "fatol": 1e-15, "maxiter": 4000}
        r = minimize(lambda w: -ratio(w)[0], dmax, method="Nelder-Mead", options=opts)
        if -r.fun > vmax:
            vmax, dmax = float(-r.fun), r.x / np.linalg.norm(r.x)
        r = minimize(lambda w: ratio(w)[0], dmin, method="Nelder-Mead", options=opts)
        if r.fun < vmin:
            vmin, dmin = float(r.fun), r.x / np.linalg.norm(r.x)
    if vmin <= 0:
        raise DegenerateMapError("differential annihilates a direction")
    H = vmax / vmin
    mu = vmax if H - 1 <= conformal_tol else float(np.sqrt(vmax * vmin))
    wmax = dmax / F1.evaluator(x, dmax)
    wmin = dmin / F1.evaluator(x, dmin)
    return DistortionResult(H, mu, wmax, wmin, vmax, vmin)


# ----------------------------------------------------------------------------
# Christoffel symbols


@dataclass(frozen=True, eq=False)
class ChristoffelField:
    """``gamma[..., m, i, j]`` = Gamma^m_{ij} on the grid of ``field``."""

    field: MetricTensorField
    gamma: np.ndarray
    boundary: np.ndarray

    def interpolator(self):
        f = self.field
        n = f.dimension
        vals = self.gamma.reshape(f.resolution + (n ** 3,))
        return RegularGridInterpolator(f.axes, vals, method="linear")


def christoffel_field(g: MetricTensorField) -> ChristoffelField:
    """Christoffel symbols by second-order differences of a gridded metric.

    Interior nodes use central differences, boundary nodes one-sided
    second-order formulas and are flagged in ``boundary``.
    """
    n = g.dimension
    if min(g.resolution) < 5:
        raise ConfigurationError("christoffel_field needs at least 5 nodes per axis")
    T = g.tensors
    dg = np.stack([np.gradient(T, h, axis=k, edge_order=2) for k, h in enumerate(g.spacing)], axis=n)
    # dg[..., k, i, j] = d_k g_ij
    try:
        ginv = np.linalg.inv(T)
    except np.linalg.LinAlgError:
        raise NumericalError("metric field is singular at some node") from None
    term = (np.einsum("...ilj->...lij", dg) + np.einsum("...jli->...lij", dg) - dg)
    gamma = 0.5 * np.einsum("...ml,...lij->...mij", ginv, term)
    boundary = np.zeros(g.resolution, dtype=bool)
    for k in range(n):
        sl = [slice(None)] * n
        sl[k] = 0
        boundary[tuple(sl)] = True
        sl[k] = -1
        boundary[tuple(sl)] = True
    return ChristoffelField(g, gamma, boundary)


def _second_derivatives(phi: DiscreteMap, x: np.ndarray, h: float):
    """First and second derivatives of ``phi`` at points ``x`` (shape (m, n))."""
    n = x.shape[1]
    E = h * np.eye(n)
    f0 = phi(x)
    D1 = np.empty(x.shape[:1] + (n, n))  # [p, m, i]
    D2 = np.empty(x.shape[:1] + (n, n, n))  # [p, m, i, j]
    for i in range(n):
        fp, fm = phi(x + E[i]), phi(x - E[i])
        D1[:, :, i] = (fp - fm) / (2 * h)
        D2[:, :, i, i] = (fp - 2 * f0 + fm) / h ** 2
        for j in range(i + 1, n):
            d = (phi(x + E[i] + E[j]) - phi(x + E[i] - E[j])
                 - phi(x - E[i] + E[j]) + phi(x - E[i] - E[j])) / (4 * h ** 2)
            D2[:, :, i, j] = d
            D2[:, :, j, i] = d
    return D1, D2


def christoffel_transform_residual(g1: MetricTensorField, g2: MetricTensorField,
                                   phi: DiscreteMap) -> float:
    """Max residual of the change-of-coordinates identity for Christoffel symbols.

    At every interior node ``x`` of ``g1``::

        d_i d_j phi^m - Gamma1^mu_ij d_mu phi^m + Gamma2^m_nl(phi(x)) d_i phi^n d_j phi^l

    with derivatives of ``phi`` by central differences (step ``phi.h``)
    and ``Gamma2`` interpolated linearly from the grid of ``g2``.
    """
    if g1.dimension != g2.dimension:
        raise ConfigurationError("metric fields have different dimensions")
    src, tgt = phi.source, g1.domain
    if np.any(tgt.lo < src.lo - 1e-12) or np.any(tgt.hi > src.hi + 1e-12):
        raise ConfigurationError("g1 grid is not contained in the map's source domain")
    c1, c2 = christoffel_field(g1), christoffel_field(g2)
    n = g1.dimension
    nodes = g1.nodes()[~c1.boundary]
    G1 = c1.gamma[~c1.boundary]
    h = phi.h
    if not np.all(src.contains(nodes, margin=h)):
        raise ConfigurationError("finite-difference stencil leaves the map's source domain")
    y = phi(nodes)
    if not np.all(g2.domain.contains(y)):
        raise ConfigurationError("phi maps interior nodes of g1 outside the grid of g2")
    G2 = c2.interpolator()(y).reshape(-1, n, n, n)
    D1, D2 = _second_derivatives(phi, nodes, h)
    lhs = D2
    rhs = (np.einsum("puij,pmu->pmij", G1, D1)
           - np.einsum("pmab,pai,pbj->pmij", G2, D1, D1))
    return float(np.max(np.abs(lhs - rhs)))


# ----------------------------------------------------------------------------
# dilation


@dataclass
class DilationReport:
    a: float
    pairs: int
    worst_deviation: float
    tolerance: float
    witness: dict | None
    deviations: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.worst_deviation <= self.tolerance

    def to_dict(self) -> dict:
        return {"a": self.a, "pairs": self.pairs, "worst_deviation": self.worst_deviation,
                "tolerance": self.tolerance, "witness": self.witness, "passed": self.passed}


def dilation_check(F: FinslerStructure, phi: DiscreteMap, a: float, pair_count: int = 20,
                   seed: int = 0, tolerance: float = 0.01, grid_resolution: int = 101,
                   stencil: int = DEFAULT_STENCIL, max_tries: int = 100_000) -> DilationReport:
    """Compare ``d(phi p, phi q)`` with ``a d(p, q)`` on random pairs.

    Pairs are drawn in ``F.domain`` and kept only if both images stay in
    it; the worst relative deviation is reported.
    """
    if a <= 0:
        raise InputError("a must be positive")
    rng = np.random.default_rng(seed)
    pairs = []
    tries = 0
    while len(pairs) < pair_count:
        tries += 1
        if tries > max_tries:
            raise DomainError("could not find pairs whose images stay in the domain")
        p, q = F.domain.sample(rng, 2)
        if F.domain.contains(phi(p)) and F.domain.contains(phi(q)) and np.any(p != q):
            pairs.append((p, q))
    worst, witness, devs = -1.0, None, []
    for p, q in pairs:
        d = distance(F, p, q, grid_resolution, stencil).value
        dphi = distance(F, phi(p), phi(q), grid_resolution, stencil).value
        dev = abs(dphi - a * d) / (a * d)
        devs.append(dev)
        if dev > worst:
            worst = dev
            witness = {"p": p.tolist(), "q": q.tolist(), "d": d, "d_image": dphi}
    return DilationReport(a, pair_count, worst, tolerance, witness, devs)
