import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dgpn.graph import (
    OperatorKind,
    OracleMismatch,
    apply,
    build_graph,
    normalize,
    spectral_filter_oracle,
)

from .helpers import random_graph

R2 = 1.0 / np.sqrt(2.0)


def test_reversed_pair_deduplicated():
    g = build_graph([(0, 1), (1, 0), (1, 2)], 3)
    assert g.num_edges == 2
    np.testing.assert_array_equal(g.degree, [1, 2, 1])
    np.testing.assert_array_equal(g.edges, [[0, 1], [1, 2]])


def test_empty_graph():
    g = build_graph([], 4)
    assert g.num_edges == 0
    np.testing.assert_array_equal(g.degree, [0, 0, 0, 0])
    assert g.adjacency.nnz == 0


def test_out_of_range_and_self_pair_rejected():
    with pytest.raises(IndexError):
        build_graph([(0, 3)], 3)
    with pytest.raises(IndexError):
        build_graph([(-1, 0)], 3)
    with pytest.raises(ValueError):
        build_graph([(1, 1)], 3)


def test_path_sym_norm():
    P = normalize(build_graph([(0, 1), (1, 2)], 3), OperatorKind.SYM_NORM).dense()
    want = np.array([[0, R2, 0], [R2, 0, R2], [0, R2, 0]])
    np.testing.assert_allclose(P, want, atol=1e-12)


def test_single_edge_trick_full_and_diag():
    g = build_graph([(0, 1)], 2)
    np.testing.assert_allclose(normalize(g, "trick_full").dense(), 0.5 * np.ones((2, 2)))
    np.testing.assert_allclose(normalize(g, "trick_diag").dense(), np.diag([0.5, 0.5]))


def test_isolated_node_zero_row():
    g = build_graph([(0, 1)], 3)
    P = normalize(g, OperatorKind.SYM_NORM).dense()
    assert not P[2].any() and not P[:, 2].any()
    assert np.isfinite(P).all()


def test_apply_examples():
    g = build_graph([(0, 1)], 2)
    out = apply(normalize(g, OperatorKind.TRICK_DIAG), np.array([[2.0], [4.0]]))
    np.testing.assert_allclose(out, [[1.0], [2.0]])

    path = normalize(build_graph([(0, 1), (1, 2)], 3), OperatorKind.SYM_NORM)
    np.testing.assert_allclose(apply(path, np.array([0.0, 1.0, 0.0])), [R2, 0.0, R2])
    assert not apply(path, np.zeros((3, 4))).any()
    with pytest.raises(ValueError):
        apply(path, np.zeros((4, 1)))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 30), st.floats(0.0, 1.0), st.integers(0, 10_000))
def test_operators_match_dense_definitions(n, p, seed):
    g = random_graph(n, p, seed)
    A = g.adjacency.toarray()
    deg = A.sum(axis=1)
    s = np.where(deg > 0, 1.0 / np.sqrt(np.where(deg > 0, deg, 1.0)), 0.0)
    st_ = 1.0 / np.sqrt(deg + 1.0)
    np.testing.assert_allclose(normalize(g, "sym_norm").dense(), s[:, None] * A * s, atol=1e-14)
    np.testing.assert_allclose(normalize(g, "trick_sym_norm").dense(), st_[:, None] * A * st_, atol=1e-14)
    full = normalize(g, "trick_full").dense()
    np.testing.assert_allclose(full, st_[:, None] * (A + np.eye(n)) * st_, atol=1e-14)
    # symmetric, and the full operator is a similarity transform of a stochastic matrix
    np.testing.assert_allclose(full, full.T, atol=1e-15)
    assert np.max(np.abs(np.linalg.eigvalsh(full))) <= 1.0 + 1e-12


def test_chebyshev_trivial_orders():
    g = random_graph(10, 0.4, 1)
    x = np.random.default_rng(0).normal(size=10)
    np.testing.assert_allclose(spectral_filter_oracle(g, [1.0], x), x, atol=1e-12)
    P = normalize(g, "sym_norm").dense()
    L = np.eye(10) - P
    lmax = np.linalg.eigvalsh(L)[-1]
    want = (2.0 / lmax) * L @ x - x
    np.testing.assert_allclose(spectral_filter_oracle(g, [0.0, 1.0], x), want, atol=1e-12)


def test_chebyshev_fixed_lambda_and_matrix_input():
    g = random_graph(10, 0.4, 2)
    X = np.random.default_rng(1).normal(size=(10, 3))
    out = spectral_filter_oracle(g, [0.3, -0.2, 0.1], X, lambda_max=2.0)
    assert out.shape == (10, 3)


def test_chebyshev_mismatch_raises():
    g = random_graph(12, 0.5, 3)
    x = np.ones(12)
    with pytest.raises(OracleMismatch):
        spectral_filter_oracle(g, [0.3, -0.2, 0.1], x, atol=-1.0)


def test_chebyshev_edgeless_graph_and_bad_scale():
    # no edges: L = I, so T_1(L~) with exact scaling is the identity too
    out = spectral_filter_oracle(build_graph([], 3), [0.0, 1.0], np.arange(3.0))
    np.testing.assert_allclose(out, np.arange(3.0), atol=1e-12)
    with pytest.raises(np.linalg.LinAlgError):
        spectral_filter_oracle(build_graph([], 3), [1.0, 1.0], np.ones(3), lambda_max=0.0)
