import numpy as np
import pytest
from hypothesis import given, strategies as st

from blfinsler import quadrature as quad
from blfinsler.binet_legendre import MetricTensorField, bl_field
from blfinsler.errors import ConfigurationError, DegenerateMapError, DomainError
from blfinsler.finsler_core import (Domain, MetricSpec, build_zoo_metric, euclidean, randers,
                                    remark2_functions, square_norm)
from blfinsler.maps import (DiscreteMap, blowup_isometry_test, bl_pullback_defect,
                            christoffel_field, christoffel_transform_residual, dilation_check,
                            dilation_map, distortion_at, grid_map, identity_map, jacobian_at,
                            linear_map, pullback_residual, remark2_map)
from conftest import random_invertible

EXPR = "t + 0.3*sin(t)"
f, fp, fpp = remark2_functions(EXPR)
SRC = Domain.box(2, -2.0, 2.0)
BIG = Domain.box(2, -3.0, 3.0)
F1 = build_zoo_metric(MetricSpec("remark2", 2, {"f": EXPR}, [[-2, 2], [-2, 2]]))
E2 = euclidean(bounds=[[-3, 3], [-3, 3]])
PHI = remark2_map(EXPR, SRC, BIG, step=1e-5)


def rotation(theta):
    return np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])


def test_jacobian_examples(rng):
    dom = Domain.box(2)
    assert np.allclose(jacobian_at(identity_map(dom), [0.1, 0.2]), np.eye(2), atol=1e-10)
    T = random_invertible(rng, 2)
    assert np.allclose(jacobian_at(linear_map(T, dom), [0.1, -0.3]), T, atol=1e-9)
    h = 1e-3
    J = jacobian_at(remark2_map(EXPR, SRC, step=h), [0.0, 0.0])
    # f''' = -0.3 cos, bounded by 0.3
    assert abs(J[0, 0] - 1.3) <= h ** 2 * 0.3 / 6 + 1e-12
    assert np.allclose(J[1], [0.0, 1.0]) and abs(J[0, 1]) < 1e-12


def test_jacobian_second_order_convergence():
    phi = remark2_map(EXPR, SRC)
    x = np.array([0.7, 0.1])
    errs = [abs(jacobian_at(phi, x, h)[0, 0] - fp(0.7)) for h in (0.1, 0.05, 0.025)]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(np.abs(orders - 2) < 0.05)


def test_jacobian_stencil_outside_domain():
    with pytest.raises(DomainError):
        jacobian_at(identity_map(Domain.box(2)), [1.0, 0.0])


def test_pullback_residual_examples():
    E = euclidean()
    rot = linear_map(rotation(0.4), Domain.box(2))
    assert pullback_residual(E, E, rot, [0.0, 0.0]) < 1e-10
    big = euclidean(bounds=[[-3, 3], [-3, 3]])
    assert pullback_residual(E, big, dilation_map(2.0, Domain.box(2), big.domain), [0.1, 0.2]) == \
        pytest.approx(1.0, abs=1e-9)
    for x in ([0.0, 0.0], [1.2, -0.7], [-1.7, 1.5]):
        assert pullback_residual(F1, E2, PHI, x) <= 1e-6


def test_singular_differential_is_degenerate():
    dom = Domain.box(2)
    proj = linear_map([[1.0, 0.0], [0.0, 0.0]], dom)
    with pytest.raises(DegenerateMapError):
        pullback_residual(euclidean(), euclidean(), proj, [0.0, 0.0])
    with pytest.raises(DegenerateMapError):
        distortion_at(euclidean(), euclidean(), proj, [0.0, 0.0])


def test_bl_transfer_on_remark2_and_linear(rng):
    q = quad.build(2, resolution=512)
    for x in ([0.3, 0.2], [-1.4, 0.9]):
        assert bl_pullback_defect(F1, E2, PHI, x, q, q) <= 1e-5
    T = random_invertible(rng, 2, 3.0)
    # phi = T carries the square norm onto the norm whose unit ball is T([-1, 1]^2)
    H = build_zoo_metric(MetricSpec("polyhedral", 2, {"vertices": (T @ np.array(
        [[1, 1], [-1, 1], [-1, -1], [1, -1]]).T).T.tolist()}, [[-10, 10], [-10, 10]]))
    phi = linear_map(T, Domain.box(2), H.domain)
    assert pullback_residual(square_norm(), H, phi, [0.0, 0.0]) < 1e-8
    q4 = quad.build(2, resolution=4096)
    assert bl_pullback_defect(square_norm(), H, phi, [0.0, 0.0], q4, q4) <= 1e-3 * np.linalg.norm(T) ** 2


def test_blowup_linear_isometry_between_minkowski_norms():
    R = rotation(0.3)
    verts = (R @ np.array([[1, 1], [-1, 1], [-1, -1], [1, -1]]).T).T.tolist()
    F2 = build_zoo_metric(MetricSpec("polyhedral", 2, {"vertices": verts}))
    rep = blowup_isometry_test(square_norm(), F2, linear_map(R, Domain.box(2)), [0.0, 0.0],
                               [0.1, 0.05, 0.025])
    assert max(rep.residuals) < 1e-12 and rep.linear_residual < 1e-12


def test_blowup_remark2_first_order():
    rep = blowup_isometry_test(F1, E2, PHI, [0.4, 0.0], [0.1, 0.05, 0.025])
    assert rep.monotone and rep.min_order >= 0.9
    assert rep.linear_residual <= 1e-6


def test_blowup_non_isometry_converges_to_differential_residual():
    dom = Domain.box(2)
    phi = DiscreteMap(dom, Domain.box(2, -2, 2),
                      lambda x: x + 0.1 * np.stack([x[..., 0] ** 2, 0 * x[..., 1]], axis=-1))
    x = np.array([0.5, 0.0])
    E = euclidean(bounds=[[-2, 2], [-2, 2]])
    rep = blowup_isometry_test(euclidean(), E, phi, x, [0.1, 0.05, 0.025, 0.0125])
    # d phi_x = diag(1 + 0.2 x1, 1), largest stretch 0.1 along e1
    assert rep.linear_residual == pytest.approx(0.1, rel=1e-6)
    assert rep.monotone
    assert abs(rep.residuals[-1] - 0.1) < abs(rep.residuals[0] - 0.1)


def test_blowup_scale_error():
    with pytest.raises(DomainError):
        blowup_isometry_test(F1, E2, PHI, [1.95, 0.0], [0.1, 0.05])


def test_distortion_examples(rng):
    dom = Domain.box(2)
    E = euclidean()
    d = distortion_at(E, E, identity_map(dom), [0.2, 0.1])
    assert d.H == pytest.approx(1.0, abs=1e-9) and d.mu == pytest.approx(1.0, abs=1e-9)
    A = random_invertible(rng, 2, 5.0)
    s = np.linalg.svd(A, compute_uv=False)
    d = distortion_at(E, E, linear_map(A, dom), [0.0, 0.0])
    assert d.H == pytest.approx(s[0] / s[-1], abs=1e-6)
    big = euclidean(bounds=[[-3, 3], [-3, 3]])
    d = distortion_at(E, big, dilation_map(2.0, dom, big.domain), [0.1, 0.1])
    assert d.H == pytest.approx(1.0, abs=1e-9) and d.mu == pytest.approx(2.0, abs=1e-9)


def test_distortion_of_remark2_isometry():
    d = distortion_at(F1, E2, PHI, [0.5, -0.5])
    assert d.H == pytest.approx(1.0, abs=1e-6) and d.mu == pytest.approx(1.0, abs=1e-6)


def test_conformal_implies_scaled_pullback():
    E = euclidean()
    big = euclidean(bounds=[[-5, 5], [-5, 5]])
    phi = linear_map(3.0 * rotation(1.1), Domain.box(2), big.domain)
    d = distortion_at(E, big, phi, [0.0, 0.0])
    assert d.H == pytest.approx(1.0, abs=1e-9)
    assert pullback_residual(E.scaled(d.mu), big, phi, [0.0, 0.0]) <= 1e-8


@given(st.integers(0, 1000), st.floats(0.2, 5.0))
def test_distortion_invariant_under_post_dilation(seed, a):
    r = np.random.default_rng(seed)
    A = random_invertible(r, 2, 4.0)
    dom = Domain.box(2)
    F2 = randers([0.3, -0.2], bounds=[[-100, 100], [-100, 100]])
    H1 = distortion_at(randers([0.1, 0.4]), F2, linear_map(A, dom, F2.domain), [0.0, 0.0]).H
    H2 = distortion_at(randers([0.1, 0.4]), F2, linear_map(a * A, dom, F2.domain), [0.0, 0.0]).H
    assert H1 >= 1.0 and H2 == pytest.approx(H1, rel=1e-9)


# Christoffel symbols


def closed_form_field(N, bounds=(-2.0, 2.0)):
    dom = Domain.box(2, *bounds)
    ax = np.linspace(bounds[0], bounds[1], N)
    X1, _ = np.meshgrid(ax, ax, indexing="ij")
    T = np.zeros((N, N, 2, 2))
    T[..., 0, 0] = fp(X1) ** 2
    T[..., 1, 1] = 1.0
    return MetricTensorField(dom, (N, N), T, "closed-form")


def test_christoffel_constant_field():
    g = MetricTensorField(Domain.box(2), (9, 9), np.broadcast_to(np.diag([2.0, 0.5]), (9, 9, 2, 2)).copy(), "c")
    assert np.all(christoffel_field(g).gamma == 0)


def test_christoffel_closed_form_remark2():
    errs = []
    for N in (21, 41, 81):
        g = closed_form_field(N)
        c = christoffel_field(g)
        X = g.nodes()
        expect = np.zeros((N, N, 2, 2, 2))
        expect[..., 0, 0, 0] = fpp(X[..., 0]) / fp(X[..., 0])
        errs.append(np.max(np.abs(c.gamma - expect)[~c.boundary]))
    assert errs[-1] < 1e-3
    assert all(np.log2(a / b) > 1.8 for a, b in zip(errs, errs[1:]))


def test_christoffel_euclidean_field_vanishes():
    g = bl_field(euclidean(), 9)
    assert np.max(np.abs(christoffel_field(g).gamma)) < 1e-10


def test_transform_residual_examples():
    dom = Domain.box(2)
    g = closed_form_field(21, (-1.0, 1.0))
    assert christoffel_transform_residual(g, g, identity_map(dom, 0.05)) < 1e-9
    e1 = bl_field(euclidean(), 11)
    e2 = bl_field(euclidean(bounds=[[-2, 2], [-2, 2]]), 11)
    phi = dilation_map(2.0, dom, e2.domain, 0.05)
    assert christoffel_transform_residual(e1, e2, phi) < 1e-9


def test_transform_residual_remark2_converges():
    res = []
    for N in (11, 21, 41):
        g1 = closed_form_field(N)
        g2 = bl_field(E2, N)
        res.append(christoffel_transform_residual(g1, g2, PHI.with_step(min(g1.spacing))))
    assert all(np.log2(a / b) >= 1.0 for a, b in zip(res, res[1:]))


def test_transform_residual_grid_mismatch():
    g1 = closed_form_field(11, (-2.5, 2.5))
    with pytest.raises(ConfigurationError):
        christoffel_transform_residual(g1, bl_field(E2, 11), PHI)


# maps from grids and dilations


def test_grid_map_reproduces_closed_form():
    ax = np.linspace(-2, 2, 41)
    X = np.stack(np.meshgrid(ax, ax, indexing="ij"), axis=-1)
    phi = grid_map([ax, ax], PHI(X), BIG, step=1e-3)
    for x in ([0.3, 0.2], [-1.1, 1.4]):
        assert np.allclose(phi(np.array(x)), PHI(np.array(x)), atol=1e-5)
        assert pullback_residual(F1, E2, phi, x) < 1e-3


def test_dilation_check_minkowski_and_remark2():
    for F in (randers([0.5, 0.0]), square_norm()):
        rep = dilation_check(F, dilation_map(2.0, F.domain), 2.0, pair_count=10)
        assert rep.passed, rep.to_dict()
    R = build_zoo_metric(MetricSpec("remark2", 2, {"f": EXPR}, [[-3, 3], [-3, 3]]))
    rep = dilation_check(R, dilation_map(2.0, R.domain), 2.0, pair_count=20)
    assert not rep.passed and rep.witness is not None
