"""Node/weight rules on the unit sphere S^{n-1}.

Three schemes are available:

``uniform-angle``
    n = 2, equally spaced angles with equal weights (periodic trapezoid rule).
``product-rule``
    n = 3, Gauss-Legendre nodes in ``cos(polar angle)`` times a uniform
    azimuthal rule with ``2 * resolution`` angles.
``monte-carlo``
    any n >= 2, normalised Gaussian samples with equal weights and a stored seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import gamma, pi

import numpy as np

from .errors import ConfigurationError, EvaluationError

SCHEMES = ("uniform-angle", "product-rule", "monte-carlo")

DEFAULT_SCHEME = {2: "uniform-angle", 3: "product-rule"}
DEFAULT_RESOLUTION = {"uniform-angle": 512, "product-rule": 64, "monte-carlo": 100_000}
MIN_RESOLUTION = {"uniform-angle": 8, "product-rule": 2, "monte-carlo": 1}


def sphere_area(n: int) -> float:
    """Surface measure of S^{n-1} in R^n, ``2 pi^{n/2} / Gamma(n/2)``."""
    return 2.0 * pi ** (n / 2.0) / gamma(n / 2.0)


@dataclass(frozen=True, eq=False)
class SphericalQuadrature:
    dimension: int
    nodes: np.ndarray
    weights: np.ndarray
    scheme: str
    resolution: int
    seed: int | None = None

    def __post_init__(self):
        self.nodes.setflags(write=False)
        self.weights.setflags(write=False)

    @property
    def size(self) -> int:
        return len(self.weights)

    def refined(self) -> "SphericalQuadrature":
        """The same scheme at twice the resolution."""
        return build(self.dimension, self.scheme, 2 * self.resolution, seed=self.seed)

    def rotated(self, rotation) -> "SphericalQuadrature":
        """Rule whose nodes are ``R u`` for every node ``u``; weights unchanged."""
        rotation = np.asarray(rotation, dtype=float)
        nodes = self.nodes @ rotation.T
        nodes = nodes / np.linalg.norm(nodes, axis=1, keepdims=True)
        return SphericalQuadrature(self.dimension, nodes, self.weights.copy(),
                                   self.scheme, self.resolution, self.seed)


def _uniform_angle(resolution: int):
    theta = 2.0 * pi * np.arange(resolution) / resolution
    nodes = np.column_stack([np.cos(theta), np.sin(theta)])
    weights = np.full(resolution, 2.0 * pi / resolution)
    return nodes, weights


def _product_rule(resolution: int):
    z, wz = np.polynomial.legendre.leggauss(resolution)
    n_phi = 2 * resolution
    phi = 2.0 * pi * np.arange(n_phi) / n_phi
    s = np.sqrt(1.0 - z ** 2)
    zz, pp = np.meshgrid(z, phi, indexing="ij")
    ss = np.broadcast_to(s[:, None], zz.shape)
    nodes = np.column_stack([(ss * np.cos(pp)).ravel(), (ss * np.sin(pp)).ravel(), zz.ravel()])
    weights = np.repeat(wz, n_phi) * (2.0 * pi / n_phi)
    return nodes, weights


def _monte_carlo(n: int, resolution: int, seed: int):
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((resolution, n))
    nodes = g / np.linalg.norm(g, axis=1, keepdims=True)
    weights = np.full(resolution, sphere_area(n) / resolution)
    return nodes, weights


def build(n: int, scheme: str | None = None, resolution: int | None = None,
          seed: int = 0, kinked: bool = False) -> SphericalQuadrature:
    """Construct a quadrature rule on S^{n-1}.

    Parameters
    ----------
    n : int
        Ambient dimension, ``n >= 2``.
    scheme : str, optional
        One of :data:`SCHEMES`; defaults to uniform-angle for n = 2,
        product-rule for n = 3 and monte-carlo otherwise.
    resolution : int, optional
        Angle count (uniform-angle), number of Gauss nodes in the polar
        variable (product-rule) or sample count (monte-carlo).
    seed : int
        Seed for the monte-carlo scheme; ignored otherwise.
    kinked : bool
        Double the default resolution, for integrands that are only
        piecewise smooth (polyhedral norms).
    """
    if n < 2:
        raise ConfigurationError(f"spherical quadrature needs n >= 2, got {n}")
    scheme = scheme or DEFAULT_SCHEME.get(n, "monte-carlo")
    if scheme not in SCHEMES:
        raise ConfigurationError(f"unknown quadrature scheme {scheme!r}")
    if resolution is None:
        resolution = DEFAULT_RESOLUTION[scheme] * (2 if kinked else 1)
    resolution = int(resolution)
    if resolution < MIN_RESOLUTION[scheme]:
        raise ConfigurationError(
            f"{scheme} needs resolution >= {MIN_RESOLUTION[scheme]}, got {resolution}")

    if scheme == "uniform-angle":
        if n != 2:
            raise ConfigurationError("uniform-angle rule is only defined for n = 2")
        nodes, weights = _uniform_angle(resolution)
        seed = None
    elif scheme == "product-rule":
        if n != 3:
            raise ConfigurationError("product-rule is only defined for n = 3")
        nodes, weights = _product_rule(resolution)
        seed = None
    else:
        nodes, weights = _monte_carlo(n, resolution, seed)
    return SphericalQuadrature(n, nodes, weights, scheme, resolution, seed)


def integrate(q: SphericalQuadrature, f) -> float | np.ndarray:
    """Return ``sum_i w_i f(u_i)``.

    ``f`` is called once with the ``(m, n)`` node array and must return an
    array whose leading axis has length ``m``; trailing axes (for
    matrix-valued integrands) are kept.
    """
    values = np.asarray(f(q.nodes), dtype=float)
    if values.shape[:1] != (q.size,):
        raise EvaluationError(
            f"integrand returned shape {values.shape}, expected leading axis {q.size}")
    finite = np.isfinite(values.reshape(q.size, -1)).all(axis=1)
    if not finite.all():
        i = int(np.argmin(finite))
        raise EvaluationError(f"non-finite integrand at node {i}: u = {q.nodes[i].tolist()}")
    return np.tensordot(q.weights, values, axes=(0, 0))


def estimate_error(q: SphericalQuadrature, f) -> float:
    """A posteriori error estimate ``|I(q) - I(q refined)|`` (max-abs for arrays)."""
    coarse = integrate(q, f)
    fine = integrate(q.refined(), f)
    return float(np.max(np.abs(np.asarray(fine) - np.asarray(coarse))))


def sphere_directions(n: int, count: int, seed: int = 0) -> np.ndarray:
    """Deterministic, roughly uniform unit vectors for sampling purposes.

    n = 2 gives equally spaced angles starting at e_1, n = 3 a Fibonacci
    lattice, larger n seeded Gaussian directions.
    """
    if n == 2:
        return _uniform_angle(count)[0]
    if n == 3:
        k = np.arange(count) + 0.5
        z = 1.0 - 2.0 * k / count
        phi = pi * (1.0 + 5 ** 0.5) * k
        r = np.sqrt(1.0 - z ** 2)
        return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])
    return _monte_carlo(n, count, seed)[0]
