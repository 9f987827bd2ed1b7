import numpy as np
import pytest

from multinoise.shape_ops import (
    mat,
    reshape_F,
    reshape_G,
    selection_matrices,
    smat,
    svec,
    svec_dim,
    svec_index_pairs,
    vec,
)


def vec_by_loop(M):
    """Independent definition: component (j-1)*rows + i is M[i, j] (1-based)."""
    rows, cols = M.shape
    out = np.empty(rows * cols)
    for j in range(cols):
        for i in range(rows):
            out[j * rows + i] = M[i, j]
    return out


def test_vec_2x2():
    assert np.array_equal(vec([[1, 2], [3, 4]]), [1, 3, 2, 4])


def test_vec_identity():
    assert np.array_equal(vec(np.eye(2)), [1, 0, 0, 1])


def test_vec_matches_loop_definition():
    rng = np.random.default_rng(1)
    M = rng.standard_normal((4, 7))
    assert np.array_equal(vec(M), vec_by_loop(M))


def test_vec_symmetrizer_fixed_point():
    rng = np.random.default_rng(2)
    R = rng.standard_normal((3, 3))
    S = R + R.T
    T = selection_matrices(3).T
    assert np.allclose(T @ vec(S), vec(S), atol=1e-14)


def test_mat_inverse_of_vec():
    assert np.array_equal(mat([1, 3, 2, 4], 2, 2), [[1, 2], [3, 4]])
    assert np.array_equal(mat(np.zeros(6), 2, 3), np.zeros((2, 3)))
    rng = np.random.default_rng(3)
    M = rng.standard_normal((3, 5))
    assert np.array_equal(mat(vec(M), 3, 5), M)


def test_mat_dimension_mismatch():
    with pytest.raises(ValueError):
        mat([1, 2, 3], 2, 2)


def test_selection_golden_n2():
    sm = selection_matrices(2)
    assert np.array_equal(sm.P, [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1]])
    assert np.array_equal(sm.Q, [[1, 0, 0], [0, 1, 0], [0, 1, 0], [0, 0, 1]])
    assert np.array_equal(sm.T, [[1, 0, 0, 0], [0, 1, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1]])
    assert np.array_equal(np.diag(sm.D), [1.0, 0.5, 0.5, 1.0])


def test_selection_n1():
    sm = selection_matrices(1)
    for M in (sm.P, sm.Q, sm.T):
        assert np.array_equal(M, [[1.0]])


@pytest.mark.parametrize("n", range(1, 7))
def test_selection_identities(n):
    sm = selection_matrices(n)
    assert np.array_equal(sm.P @ sm.Q, np.eye(svec_dim(n)))
    assert np.array_equal(sm.Q @ sm.P, sm.T)
    assert set(np.unique(sm.P)) <= {0.0, 1.0}
    assert set(np.unique(sm.Q)) <= {0.0, 1.0}
    assert np.array_equal(sm.P.sum(axis=1), np.ones(svec_dim(n)))


def test_half_weight_diagonal():
    n = 3
    d = np.diag(selection_matrices(n).D)
    for i in range(1, n + 1):  # positions (i-1)n+i carry weight 1 (1-based)
        assert d[(i - 1) * n + i - 1] == 1.0
    assert np.sum(d == 1.0) == n
    assert np.sum(d == 0.5) == n * n - n


def test_svec_ordering_n2():
    S = np.array([[1.0, 2.0], [2.0, 5.0]])
    # kept order (1,1), (2,1), (2,2)
    assert np.array_equal(svec(S), [1.0, 2.0, 5.0])


def test_svec_identity3():
    # column-major lower triangle of I3: (1,1),(2,1),(3,1),(2,2),(3,2),(3,3)
    assert np.array_equal(svec(np.eye(3)), [1, 0, 0, 1, 0, 1])


def test_svec_equals_P_vec():
    rng = np.random.default_rng(4)
    for n in (2, 3, 5):
        R = rng.standard_normal((n, n))
        S = R + R.T
        assert np.allclose(svec(S), selection_matrices(n).P @ vec(S), atol=0)


def test_svec_rejects_asymmetric():
    with pytest.raises(ValueError):
        svec([[1.0, 2.0], [0.0, 1.0]])


def test_svec_tolerates_rounding_asymmetry():
    S = np.array([[1.0, 2.0], [2.0 + 1e-12, 5.0]])
    out = svec(S)
    assert out[1] == pytest.approx(2.0 + 0.5e-12, abs=1e-15)


def test_smat_roundtrips():
    rng = np.random.default_rng(5)
    R = rng.standard_normal((4, 4))
    S = R + R.T
    assert np.allclose(smat(svec(S), 4), S, atol=0)
    v = rng.standard_normal(svec_dim(4))
    assert np.allclose(svec(smat(v, 4)), v, atol=0)


def test_smat_length_check():
    with pytest.raises(ValueError):
        smat([1.0, 2.0], 2)


def test_svec_index_pairs():
    assert svec_index_pairs(2) == [(1, 1), (2, 1), (2, 2)]
    assert svec_index_pairs(3) == [(1, 1), (2, 1), (3, 1), (2, 2), (3, 2), (3, 3)]


def test_reshape_F_kron_outer():
    A = np.array([[1.0, 2.0], [3.0, 4.0]])
    v = vec_by_loop(A)
    assert np.array_equal(v, [1, 3, 2, 4])
    F = reshape_F(np.kron(A, A), 2, 2, 2, 2)
    assert np.allclose(F, np.outer(v, v), atol=1e-12)


def test_reshape_G_outer_kron():
    A = np.array([[1.0, 2.0], [3.0, 4.0]])
    v = vec_by_loop(A)
    G = reshape_G(np.outer(v, v), 2, 2, 2, 2)
    assert np.allclose(G, np.kron(A, A), atol=1e-12)


def test_reshape_F_degenerates_to_vec():
    rng = np.random.default_rng(6)
    M = rng.standard_normal((3, 4))
    F = reshape_F(M, 3, 4, 1, 1)
    assert np.array_equal(F.ravel(), vec_by_loop(M))


def test_reshape_mutual_inverse_grid():
    rng = np.random.default_rng(7)
    for m in range(1, 4):
        for n in range(1, 4):
            for p in range(1, 4):
                for q in range(1, 4):
                    X = rng.standard_normal((m * p, n * q))
                    assert np.array_equal(reshape_G(reshape_F(X, m, n, p, q), m, n, p, q), X)
                    Y = rng.standard_normal((m * n, p * q))
                    assert np.array_equal(reshape_F(reshape_G(Y, m, n, p, q), m, n, p, q), Y)


def test_reshape_linearity():
    rng = np.random.default_rng(8)
    X = rng.standard_normal((6, 8))
    Y = rng.standard_normal((6, 8))
    lhs = reshape_F(X + Y, 3, 4, 2, 2)
    rhs = reshape_F(X, 3, 4, 2, 2) + reshape_F(Y, 3, 4, 2, 2)
    assert np.array_equal(lhs, rhs)


def test_reshape_G_kron_random():
    rng = np.random.default_rng(9)
    A = rng.standard_normal((3, 2))
    v = vec_by_loop(A)
    assert np.max(np.abs(reshape_G(np.outer(v, v), 3, 2, 3, 2) - np.kron(A, A))) <= 1e-12


def test_reshape_shape_errors():
    with pytest.raises(ValueError):
        reshape_F(np.zeros((3, 3)), 2, 2, 2, 2)
    with pytest.raises(ValueError):
        reshape_G(np.zeros((3, 3)), 2, 2, 2, 2)
