import numpy as np
import pytest
from hypothesis import given, strategies as st

from nholo.lagrange import (
    Lagrangian,
    almost_complex_apply,
    canonical_nconnection,
    euler_lagrange_check,
    hessian_metric,
    homogeneity_residual,
    sasaki_inner,
    sasaki_metric,
    semispray,
    symplectic_form,
)
from nholo.nconn import DVector
from nholo.numerics import SingularMatrixError

from conftest import CHART22, LAGRANGIANS, field, make_lagrangian, sample


def christoffel_spray(a_src, p):
    """1/2 gamma^i_jk y^j y^k from symbolic partials of a_ij(x) (independent of the jet pipeline)."""
    a = [[field(s) for s in row] for row in a_src]
    A = np.array([[f(p) for f in row] for row in a])
    dA = np.array([[[f.partial(k)(p) for k in range(2)] for f in row] for row in a])  # dA[i, j, k]
    low = 0.5 * (np.einsum("lkj->ljk", dA) + np.einsum("ljk->ljk", dA) - np.einsum("jkl->ljk", dA))
    gam = np.linalg.solve(A, low.reshape(2, -1)).reshape(2, 2, 2)
    y = p[2:]
    return 0.5 * np.einsum("ijk,j,k->i", gam, y, y)


def test_hessian_examples():
    p = np.array([0.4, -0.3, 1.2, 0.7])
    g, ginv = hessian_metric(make_lagrangian("flat"), p)
    assert np.array_equal(g, np.eye(2))
    g, _ = hessian_metric(make_lagrangian("conformal"), p)
    assert np.allclose(g, np.exp(0.8) * np.eye(2), rtol=1e-15)
    g, ginv = hessian_metric(Lagrangian(CHART22, field("y1*y2")), p)
    assert np.array_equal(g, [[0, 0.5], [0.5, 0]])
    assert np.allclose(ginv @ g, np.eye(2))


def test_singular_hessian_raises():
    lag = Lagrangian(CHART22, field("y1^2 + x1*y2^2"))
    with pytest.raises(SingularMatrixError):
        hessian_metric(lag, np.array([0.0, 0.0, 1.0, 1.0]))


def test_conformal_semispray_and_connection():
    pts = sample(20)
    lag = make_lagrangian("conformal")
    G = semispray(lag, pts)
    y1, y2 = pts[:, 2], pts[:, 3]
    assert np.abs(G[:, 0] - 0.5 * (y1**2 - y2**2)).max() < 1e-14
    assert np.abs(G[:, 1] - y1 * y2).max() < 1e-14
    N = canonical_nconnection(lag).values(pts)  # N[j, i] = N^i_j
    assert np.abs(N[:, 0, 0] - y1).max() < 1e-14
    assert np.abs(N[:, 1, 0] + y2).max() < 1e-14
    assert np.abs(N[:, 0, 1] - y2).max() < 1e-14
    assert np.abs(N[:, 1, 1] - y1).max() < 1e-14


def test_x_independent_lagrangian_has_zero_spray():
    lag = Lagrangian(CHART22, field("y1^2 + y1*y2 + 3*y2^2 + y1^4"))
    pts = sample(5)
    assert np.abs(semispray(lag, pts)).max() == 0.0
    assert np.abs(canonical_nconnection(lag).values(pts)).max() == 0.0


def test_quadratic_lagrangian_matches_christoffel_oracle():
    a_src = [["2 + x2^2", "0.3*sin(x1)"], ["0.3*sin(x1)", "1 + x1^2"]]
    lag = make_lagrangian("offdiagonal")
    for p in sample(10):
        assert np.abs(semispray(lag, p) - christoffel_spray(a_src, p)).max() < 1e-9


def test_quadratic_lagrangian_connection_is_linear_in_y():
    lag = make_lagrangian("offdiagonal")
    p = np.array([0.2, 0.5, 0.7, -0.4])
    q = p.copy()
    q[2:] *= 3.0
    Np, Nq = canonical_nconnection(lag).values(p), canonical_nconnection(lag).values(q)
    assert np.allclose(Nq, 3.0 * Np, rtol=1e-13, atol=1e-15)


def test_sasaki_blocks_are_equal():
    dm = sasaki_metric(make_lagrangian("offdiagonal"))
    pts = sample(4)
    g, h, _ = dm.jets(pts, 0)
    assert np.array_equal(g.val, h.val)


def test_symplectic_form_on_frame_vectors():
    lag = make_lagrangian("flat")
    p = np.zeros(4)
    e1 = DVector((1.0, 0.0), (0.0, 0.0))
    ve1 = DVector((0.0, 0.0), (1.0, 0.0))
    # theta(X, Y) = g(FX, Y) with F e_1 = vertical e_1
    assert symplectic_form(lag, e1, ve1, p) == 1.0
    assert symplectic_form(lag, ve1, e1, p) == -1.0
    assert almost_complex_apply(e1) == ve1


def _dvec(rng_vals):
    return DVector(tuple(rng_vals[:2]), tuple(rng_vals[2:]))


vectors = st.lists(st.floats(-10, 10), min_size=4, max_size=4)


@given(vectors)
def test_F_squares_to_minus_identity(x):
    X = _dvec(x)
    assert almost_complex_apply(almost_complex_apply(X)) == -X


@given(vectors, vectors)
@pytest.mark.parametrize("name", sorted(LAGRANGIANS))
def test_theta_antisymmetric_and_hermitian(name, x, y):
    lag = make_lagrangian(name)
    p = np.array([0.3, -0.2, 0.5, 0.9])
    X, Y = _dvec(x), _dvec(y)
    scale = max(1.0, float(np.abs(x).max() * np.abs(y).max()))
    assert abs(symplectic_form(lag, X, Y, p) + symplectic_form(lag, Y, X, p)) <= 1e-12 * scale
    assert abs(symplectic_form(lag, X, X, p)) <= 1e-12 * scale
    g, _ = hessian_metric(lag, p)
    FX, FY = almost_complex_apply(X), almost_complex_apply(Y)
    assert abs(sasaki_inner(g, FX, FY) - sasaki_inner(g, X, Y)) <= 1e-12 * scale


def test_euler_lagrange_flat_is_straight():
    out = euler_lagrange_check(make_lagrangian("flat"), [0.1, 0.2], [1.0, -0.5])
    assert out.max_deviation <= 1e-10
    assert np.allclose(out.final_spray[:2], [1.1, -0.3], atol=1e-12)


def test_euler_lagrange_conformal_matches_spray():
    out = euler_lagrange_check(make_lagrangian("conformal"), [0.1, 0.2], [0.3, -0.2])
    assert out.max_deviation <= 1e-7


def test_euler_lagrange_zero_velocity_is_stationary():
    out = euler_lagrange_check(make_lagrangian("offdiagonal"), [0.1, 0.2], [0.0, 0.0], steps=50)
    assert out.max_deviation == 0.0
    assert np.array_equal(out.final_spray[:2], [0.1, 0.2])


def test_euler_lagrange_detects_blowup():
    lag = Lagrangian(CHART22, field("exp(-2*x1)*(y1^2 + y2^2)"))
    with pytest.raises(ArithmeticError):
        euler_lagrange_check(lag, [0.0, 0.0], [20.0, 0.0], steps=1000, h=1e-2)


def test_homogeneity_diagnostic():
    pts = sample(6)
    assert np.abs(homogeneity_residual(make_lagrangian("conformal"), pts)).max() < 1e-14
    inhom = Lagrangian(CHART22, field("y1^2 + y2^2 + y1^4"))
    assert np.abs(homogeneity_residual(inhom, pts)).max() > 1e-3
