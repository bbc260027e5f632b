import numpy as np
import pytest
from hypothesis import given, strategies as st

from blfinsler import binet_legendre as bl
from blfinsler import quadrature as quad
from blfinsler.errors import InvalidSpecError, InvalidStructureError, NumericalError
from blfinsler.finsler_core import (Domain, MetricSpec, build_zoo_metric, custom_metric, euclidean,
                                    randers, remark2_functions, square_norm)
from conftest import random_invertible, random_spd

Q2 = quad.build(2, resolution=512)
Q3 = quad.build(3, resolution=64)


def ellipsoid(h, bounds=None):
    return build_zoo_metric(MetricSpec("ellipsoid", len(h), {"h": h}, bounds))


def mc_second_moment(vertices, rng, N=1_000_000):
    """Monte-Carlo oracle for vol(conv V) and the integral of v v^T over it."""
    from scipy.spatial import ConvexHull, Delaunay

    V = np.asarray(vertices, dtype=float)
    lo, hi = V.min(axis=0), V.max(axis=0)
    X = rng.uniform(lo, hi, size=(N, V.shape[1]))
    inside = Delaunay(V).find_simplex(X) >= 0
    box = np.prod(hi - lo)
    terms = box * inside[:, None, None] * X[:, :, None] * X[:, None, :]
    return ConvexHull(V).volume, terms.mean(axis=0), terms.std(axis=0) / np.sqrt(N)


def test_euclidean_inverse_tensor_is_identity():
    for n, q in ((2, Q2), (3, Q3)):
        F = euclidean(n)
        assert np.allclose(bl.bl_inverse_tensor_at(F, np.zeros(n), q), np.eye(n), atol=1e-12)
        assert np.allclose(bl.bl_tensor_at(F, np.zeros(n), q), np.eye(n), atol=1e-12)


def test_ellipsoid_fixed_point(rng):
    h = random_spd(rng, 2)
    F = ellipsoid(h)
    assert np.allclose(bl.bl_inverse_tensor_at(F, np.zeros(2), Q2), np.linalg.inv(h), atol=1e-10)
    assert np.allclose(bl.bl_tensor_at(F, np.zeros(2), Q2), h, atol=1e-9)


def test_square_norm_quadrature():
    F = square_norm()
    q = quad.build(2, resolution=4096)
    assert np.allclose(bl.bl_inverse_tensor_at(F, np.zeros(2), q), 4 / 3 * np.eye(2), atol=1e-4)
    assert np.allclose(bl.bl_tensor_at(F, np.zeros(2), q), 0.75 * np.eye(2), atol=1e-4)


def test_simplex_moment_against_monte_carlo(rng):
    P = np.array([[1.0, 0.2], [-0.3, 0.9]])
    vol, M = bl.simplex_second_moment(P)
    # uniform samples in the simplex via Dirichlet barycentric weights
    N = 1_000_000
    lam = rng.dirichlet(np.ones(3), N)[:, 1:]
    X = lam @ P
    terms = vol * X[:, :, None] * X[:, None, :]
    est, se = terms.mean(axis=0), terms.std(axis=0) / np.sqrt(N)
    assert vol == pytest.approx(abs(np.linalg.det(P)) / 2)
    assert np.all(np.abs(M - est) <= 3 * se)


def test_square_exact_path_and_oracle(rng):
    verts = [[1, 1], [-1, 1], [-1, -1], [1, -1]]
    vol, M = bl.polytope_moments(verts)
    vol_mc, M_mc, se = mc_second_moment(verts, rng)
    assert vol == pytest.approx(4.0)
    assert np.all(np.abs(M - M_mc) <= 3 * se + 1e-15)
    assert np.allclose(bl.bl_polyhedral_exact(verts), 0.75 * np.eye(2), atol=1e-12)


def test_hexagon_is_isotropic_with_oracle_scalar(rng):
    th = np.arange(6) * np.pi / 3
    verts = np.stack([np.cos(th), np.sin(th)], axis=1)
    g = bl.bl_polyhedral_exact(verts)
    assert abs(g[0, 1]) < 1e-12 and g[0, 0] == pytest.approx(g[1, 1], rel=1e-12)
    vol, M_mc, se = mc_second_moment(verts, rng)
    ginv_mc = (2 + 2) / vol * M_mc[0, 0]
    ginv_se = (2 + 2) / vol * se[0, 0]
    assert abs(1 / g[0, 0] - ginv_mc) <= 3 * ginv_se
    # quadrature path agrees
    F = build_zoo_metric(MetricSpec("polyhedral", 2, {"vertices": verts.tolist()}))
    gq = bl.bl_tensor_at(F, np.zeros(2), quad.build(2, resolution=4096))
    assert np.allclose(gq, g, atol=1e-4)


def test_exact_path_three_dimensional_cube():
    verts = np.array(np.meshgrid([-1, 1], [-1, 1], [-1, 1])).reshape(3, -1).T
    # integral of x^2 over [-1,1]^3 is 8/3, volume 8, factor (n+2)/vol
    assert np.allclose(bl.bl_polyhedral_exact(verts), np.eye(3) / (5 / 8 * 8 / 3), atol=1e-12)


def test_exact_path_rejects_bad_bodies():
    with pytest.raises(InvalidSpecError):
        bl.bl_polyhedral_exact([[1, 1], [2, 1], [2, 2]])
    with pytest.raises(InvalidSpecError):
        bl.bl_polyhedral_exact([[1, 0], [-1, 0], [0.5, 0], [-0.5, 0]])


def test_image_of_square_follows_equivariance(rng):
    T = random_invertible(rng, 2)
    sq = np.array([[1, 1], [-1, 1], [-1, -1], [1, -1]], dtype=float)
    # the unit ball of v -> F(Tv) is T^{-1} applied to the square
    g = bl.bl_polyhedral_exact(np.linalg.solve(T, sq.T).T)
    assert np.allclose(g, T.T @ (0.75 * np.eye(2)) @ T, atol=1e-9)


def test_field_examples():
    fld = bl.bl_field(euclidean(), 5, Q2)
    assert fld.tensors.shape == (5, 5, 2, 2)
    assert np.allclose(fld.tensors, np.eye(2), atol=1e-12)

    F = build_zoo_metric(MetricSpec("remark2", 2, {"f": "t + 0.3*sin(t)"}))
    fld = bl.bl_field(F, 7, Q2)
    _, fp, _ = remark2_functions("t + 0.3*sin(t)")
    X = fld.flat()[0]
    g = fld.tensors.reshape(-1, 2, 2)
    assert np.allclose(g[:, 0, 0], fp(X[:, 0]) ** 2, atol=1e-9)
    assert np.allclose(g[:, 1, 1], 1.0, atol=1e-9) and np.allclose(g[:, 0, 1], 0.0, atol=1e-9)

    fld = bl.bl_field(randers([0.5, 0.0]), (4, 6), Q2)
    assert fld.tensors.shape == (4, 6, 2, 2)
    assert np.all(fld.tensors == fld.tensors[0, 0])


def test_field_round_trip(tmp_path):
    fld = bl.bl_field(randers([0.2, -0.4]), (3, 4), Q2)
    for name in ("f.json", "f.csv"):
        bl.save_field(fld, tmp_path / name)
        back = bl.load_field(tmp_path / name)
        assert back.resolution == fld.resolution
        assert back.domain == fld.domain
        assert np.array_equal(back.tensors, fld.tensors)


def test_nonpositive_integrand_rejected():
    F = custom_metric(lambda x, v: np.maximum(v[..., 0], 0.0), Domain.box(2), c0=1.0,
                      position_independent=True)
    with pytest.raises(InvalidStructureError):
        bl.bl_inverse_tensor_at(F, np.zeros(2), quad.build(2, resolution=16))


def test_ill_conditioned_inverse_rejected():
    with pytest.raises(NumericalError):
        bl.spd_inverse(np.diag([1.0, 1e-14]))


# twisted form


def test_identity_twist_matches_plain_tensor():
    for F in (randers([0.5, 0.0]), square_norm(), euclidean()):
        a = bl.bl_twisted_tensor_at(F, bl.identity_twist(), np.zeros(2), Q2)
        b = bl.bl_tensor_at(F, np.zeros(2), Q2)
        assert np.max(np.abs(a - b)) <= 1e-10


def test_rotation_twist_on_euclidean():
    A = bl.rotation_twist(lambda x: 0.7 + x[..., 0])
    for x in ([0.0, 0.0], [0.4, -0.3]):
        g = bl.bl_twisted_tensor_at(euclidean(), A, np.array(x), Q2)
        assert np.max(np.abs(g - np.eye(2))) <= 1e-8


def test_linear_twist_straightens_norm(rng):
    T = random_invertible(rng, 2)
    F = euclidean().composed(T)
    A = bl.linear_twist(np.linalg.inv(T))
    u = Q2.nodes
    assert np.allclose(F.evaluator(np.zeros(2), A(np.zeros(2), u)), 1.0)
    g = bl.bl_twisted_tensor_at(F, A, np.zeros(2), Q2)
    assert np.allclose(g, T.T @ T, atol=1e-9)
    assert np.allclose(g, bl.bl_tensor_at(F, np.zeros(2), Q2), atol=1e-9)


def test_finite_difference_jacobian_fallback(rng):
    T = random_invertible(rng, 2)
    exact = bl.linear_twist(T)
    fd = bl.TwistMap(exact.evaluator, None, "fd")
    u = Q2.nodes[:20]
    assert np.allclose(fd.jacobian_det(np.zeros(2), u), exact.jacobian_det(np.zeros(2), u), rtol=1e-6)


def test_partial_smoothness_examples():
    rep = bl.partial_smoothness_check(randers([0.5, 0.0]), bl.identity_twist(), 1.0)
    assert rep.total == 0.0 and rep.bounded

    F = build_zoo_metric(MetricSpec("remark2", 2))
    rep = bl.partial_smoothness_check(F, bl.identity_twist(), 1.0)
    # |d/dx1 F(x, u)| <= |f''| |u1| <= 0.3 sin(1)
    assert 0 < rep.h_seminorm <= 0.3 * np.sin(1.0) + 1e-6
    assert rep.bounded

    dom = Domain.box(2)
    G = custom_metric(lambda x, v: (1 + np.sqrt(np.abs(x[..., 0]))) * np.linalg.norm(v, axis=-1),
                      dom, reversible=True, c0=2.0)
    rep = bl.partial_smoothness_check(G, bl.identity_twist(), 1.0)
    assert rep.diverging and not rep.bounded


@given(st.floats(0.05, 20.0), st.integers(0, 2))
def test_scaling_law(lam, which):
    F = (euclidean(), randers([0.5, 0.0]), ellipsoid([[2.0, 0.3], [0.3, 1.0]]))[which]
    g = bl.bl_tensor_at(F, np.zeros(2), Q2)
    gs = bl.bl_tensor_at(F.scaled(lam), np.zeros(2), Q2)
    assert np.max(np.abs(gs - lam ** 2 * g)) <= 1e-10 * lam ** 2 * np.max(np.abs(g))


@given(st.integers(0, 10_000))
def test_linear_equivariance_property(seed):
    r = np.random.default_rng(seed)
    T = random_invertible(r, 2)
    F = randers(r.uniform(-0.4, 0.4, 2))
    g = bl.bl_tensor_at(F, np.zeros(2), Q2)
    gT = bl.bl_tensor_at(F.composed(T), np.zeros(2), Q2)
    assert np.max(np.abs(gT - T.T @ g @ T)) <= 1e-6 * max(1, np.max(np.abs(gT)))


@given(st.integers(0, 10_000))
def test_output_is_symmetric_positive_definite(seed):
    r = np.random.default_rng(seed)
    F = ellipsoid(random_spd(r, 3))
    g = bl.bl_tensor_at(F, np.zeros(3), Q3)
    assert np.allclose(g, g.T) and np.linalg.eigvalsh(g).min() > 0


@pytest.mark.parametrize("beta", [0.0, 0.3, 0.5, 0.8])
def test_randers_against_shifted_ellipse_moments(beta):
    # {|v| + beta v1 <= 1} is an ellipse with semi-axes a = 1/(1-beta^2), c = 1/sqrt(1-beta^2)
    # centred at x0 = -beta/(1-beta^2); moments about the origin give
    # g^{-1} = diag(a^2 + 4 x0^2, c^2) in the plane
    a, c, x0 = 1 / (1 - beta ** 2), 1 / np.sqrt(1 - beta ** 2), -beta / (1 - beta ** 2)
    ginv = bl.bl_inverse_tensor_at(randers([beta, 0.0]), np.zeros(2), quad.build(2, resolution=2048))
    assert np.allclose(ginv, np.diag([a ** 2 + 4 * x0 ** 2, c ** 2]), rtol=1e-10, atol=1e-12)
