import numpy as np
import pytest
from hypothesis import given, strategies as st

from nholo.nconn import (
    DVector,
    NConnection,
    adapted_derivative,
    almost_product,
    anholonomy,
    bracket_oracle,
    coframe_jet,
    frame_matrix_jet,
    h,
    n_curvature,
    v,
)
from nholo.sampling import SplitMix64, random_expression

from conftest import CHART22, field, generic_metric, sample


def generic_nconn():
    return generic_metric().Ncon


def test_frame_index_validation():
    N = generic_nconn()
    assert N.index(h(1)) == 1
    assert N.index(v(0)) == 2
    with pytest.raises(IndexError):
        N.index(h(2))
    with pytest.raises(IndexError):
        N.index(v(2))
    with pytest.raises(ValueError):
        h(-1)
    with pytest.raises(IndexError):
        N.index(4)


def test_adapted_derivative_of_coordinates():
    N = generic_nconn()
    p = np.array([0.3, 0.2, -0.4, 0.5])
    # e_1 y^1 = -N_1^1 = -y1^2 x2
    assert adapted_derivative(N, field("y1"), h(0), p) == pytest.approx(-0.4**2 * 0.2)
    assert adapted_derivative(N, field("x1"), h(0), p) == 1.0
    assert adapted_derivative(N, field("y2"), v(1), p) == 1.0


def test_n_curvature_is_antisymmetric():
    Om = n_curvature(generic_nconn(), sample(10))
    assert np.abs(Om + np.swapaxes(Om, -1, -2)).max() < 1e-15
    assert np.abs(Om).max() > 1e-2


def test_anholonomy_matches_nested_brackets():
    """[e_a, e_b] x^mu = W^g_ab E[g, mu] for every coordinate function x^mu."""
    N = generic_nconn()
    pts = sample(8)
    W = anholonomy(N, pts)
    E = frame_matrix_jet(N.jets(pts, 0)).val
    for mu, name in enumerate(CHART22.names):
        f = field(name)
        for a in range(4):
            for b in range(4):
                lhs = bracket_oracle(N, a, b, f, pts)
                rhs = np.einsum("pg,pg->p", W[:, :, a, b], E[:, :, mu])
                assert np.abs(lhs - rhs).max() < 1e-13


@given(st.integers(0, 2**63))
def test_anholonomy_acts_on_random_fields(seed):
    rng = SplitMix64(seed)
    N = generic_nconn()
    f = random_expression(rng, CHART22, 2)
    p = np.array([[rng.uniform(-1, 1) for _ in range(4)]])
    W = anholonomy(N, p)[0]
    a, b = rng.below(4), rng.below(4)
    lhs = bracket_oracle(N, a, b, f, p)[0]
    rhs = sum(W[g, a, b] * adapted_derivative(N, f, g, p)[0] for g in range(4))
    assert abs(lhs - rhs) <= 1e-11 * max(1.0, abs(lhs))


def test_holonomic_when_connection_vanishes():
    N = NConnection.zero(CHART22)
    assert np.abs(anholonomy(N, sample(3))).max() == 0.0


def test_coframe_is_dual_to_frame():
    N = generic_nconn()
    Nj = N.jets(sample(5), 0)
    E, th = frame_matrix_jet(Nj).val, coframe_jet(Nj).val
    assert np.abs(np.einsum("pgm,pam->pga", th, E) - np.eye(4)).max() < 1e-15


def test_almost_product_squares_to_identity():
    X = DVector((1.0, 2.0), (3.0, -4.0))
    P = almost_product(None, X)
    assert P.array().tolist() == [1.0, 2.0, -3.0, 4.0]
    assert almost_product(None, P) == X
