"""Rank machinery: SVD contract, tolerance policy, null spaces, subset search."""

import numpy as np
import pytest

from identrank import ranklab
from identrank.errors import InputError


def random_orthogonal(rng, n):
    Q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    return Q


def test_svd_identity():
    _, s, _ = ranklab.svd(np.eye(3))
    assert np.allclose(s, [1.0, 1.0, 1.0])


def test_svd_zero_matrix():
    U, s, V = ranklab.svd(np.zeros((2, 4)))
    assert np.array_equal(s, [0.0, 0.0])
    assert np.allclose(U.T @ U, np.eye(2), atol=1e-12)
    assert np.allclose(V.T @ V, np.eye(2), atol=1e-12)


def test_svd_diag():
    _, s, _ = ranklab.svd(np.diag([3.0, 0.0]))
    assert np.array_equal(s, [3.0, 0.0])


@pytest.mark.parametrize("shape", [(3, 3), (5, 2), (2, 5), (8, 8), (40, 6), (500, 5)])
def test_svd_reconstruction_and_orthonormality(shape):
    rng = np.random.default_rng(hash(shape) % 2**32)
    M = rng.normal(size=shape)
    U, s, V = ranklab.svd(M)
    k = min(shape)
    sigma1 = s[0]
    assert np.all(np.diff(s) <= 1e-300)  # descending
    assert np.max(np.abs(U @ np.diag(s) @ V.T - M)) <= 1e-10 * sigma1 * max(shape)
    assert np.max(np.abs(U.T @ U - np.eye(k))) <= 1e-10
    assert np.max(np.abs(V.T @ V - np.eye(k))) <= 1e-10


def test_numerical_rank_identity_and_outer_product():
    assert ranklab.numerical_rank(np.eye(4)).rank == 4
    rng = np.random.default_rng(1)
    u = rng.normal(size=6)
    v = rng.normal(size=9)
    assert ranklab.numerical_rank(np.outer(u, v)).rank == 1


def test_numerical_rank_constructed_gap():
    # derived oracle: U diag(1, 1e-9) V^T from random orthogonal factors has
    # exactly one singular value above threshold at tol_rel = 1e-8, tol_abs = 0
    rng = np.random.default_rng(2)
    Q1 = random_orthogonal(rng, 5)
    Q2 = random_orthogonal(rng, 7)
    M = Q1[:, :2] @ np.diag([1.0, 1e-9]) @ Q2[:, :2].T
    d = ranklab.numerical_rank(M, tol_rel=1e-8, tol_abs=0.0)
    assert d.rank == 1
    assert d.singular_values[0] == pytest.approx(1.0, rel=1e-10)
    assert d.singular_values[1] == pytest.approx(1e-9, rel=1e-6)
    assert d.gap_ratio == pytest.approx(1e-9, rel=1e-6)
    assert d.threshold_used == pytest.approx(1e-8, rel=1e-9)


def test_rank_decision_invariants():
    rng = np.random.default_rng(3)
    for _ in range(20):
        M = rng.normal(size=(4, 6))
        d = ranklab.numerical_rank(M)
        s = np.array(d.singular_values)
        assert d.rank == int(np.sum(s > d.threshold_used))
        assert d.threshold_used == pytest.approx(d.tol_rel * s[0] + d.tol_abs)
        assert d.rank <= min(M.shape)
        assert np.all(s >= 0)


def test_rank_equals_rank_of_transpose():
    rng = np.random.default_rng(4)
    for trial in range(30):
        m, n = rng.integers(2, 8, size=2)
        r = int(rng.integers(1, min(m, n) + 1))
        M = rng.normal(size=(m, r)) @ rng.normal(size=(r, n))
        assert ranklab.numerical_rank(M).rank == ranklab.numerical_rank(M.T).rank == r


def test_rank_stable_under_orthogonal_rotation():
    rng = np.random.default_rng(5)
    for _ in range(50):
        m, n = rng.integers(2, 7, size=2)
        r = int(rng.integers(0, min(m, n) + 1))
        M = (
            rng.normal(size=(m, r)) @ rng.normal(size=(r, n))
            if r
            else np.zeros((m, n))
        )
        Q = random_orthogonal(rng, m)
        Qp = random_orthogonal(rng, n)
        assert ranklab.numerical_rank(Q @ M @ Qp).rank == r


def test_psd_rank_matches_eigendecomposition():
    # cross-check against an independent factorization route
    rng = np.random.default_rng(6)
    for _ in range(25):
        p = int(rng.integers(2, 8))
        r = int(rng.integers(0, p + 1))
        B = rng.normal(size=(p, r)) if r else np.zeros((p, 1))
        H = B @ B.T
        d = ranklab.numerical_rank(H)
        eig = np.linalg.eigvalsh(H)
        assert d.rank == int(np.sum(eig > d.threshold_used))


def test_left_null_space_of_proportional_rows():
    rng = np.random.default_rng(7)
    r = rng.normal(size=12)
    M = np.vstack([r, 2.0 * r])
    B = ranklab.left_null_space(M)
    assert B.shape == (2, 1)
    expected = np.array([2.0, -1.0]) / np.sqrt(5.0)
    assert np.allclose(B[:, 0], expected, atol=1e-12)
    assert np.linalg.norm(B[:, 0] @ M) <= 1e-12 * np.linalg.norm(M)


def test_right_null_space_identity_empty():
    B = ranklab.right_null_space(np.eye(3))
    assert B.shape == (3, 0)


def test_null_space_residual_bound_and_dimensions():
    rng = np.random.default_rng(8)
    for _ in range(20):
        m, n = rng.integers(2, 9, size=2)
        r = int(rng.integers(0, min(m, n) + 1))
        M = (
            rng.normal(size=(m, r)) @ rng.normal(size=(r, n))
            if r
            else np.zeros((m, n))
        )
        d = ranklab.numerical_rank(M)
        right = ranklab.right_null_space(M)
        left = ranklab.left_null_space(M)
        assert right.shape == (n, n - d.rank)
        assert left.shape == (m, m - d.rank)
        sigma1 = d.singular_values[0] if d.singular_values else 0.0
        bound = 10.0 * max(d.threshold_used * max(sigma1, 1.0), 1e-300)
        for j in range(right.shape[1]):
            assert np.linalg.norm(M @ right[:, j]) <= bound
        for j in range(left.shape[1]):
            assert np.linalg.norm(left[:, j] @ M) <= bound
        # orthonormal bases
        assert np.allclose(right.T @ right, np.eye(right.shape[1]), atol=1e-10)
        assert np.allclose(left.T @ left, np.eye(left.shape[1]), atol=1e-10)


def test_principal_submatrix_rank_examples():
    H = np.diag([1.0, 0.0, 2.0])
    assert ranklab.principal_submatrix_rank(H, [0, 2]).rank == 2
    assert ranklab.principal_submatrix_rank(H, [1]).rank == 0
    with pytest.raises(InputError):
        ranklab.principal_submatrix_rank(H, [0, 0])
    with pytest.raises(InputError):
        ranklab.principal_submatrix_rank(H, [3])


def test_principal_submatrix_rank_rejects_asymmetric():
    with pytest.raises(InputError):
        ranklab.principal_submatrix_rank(np.array([[0.0, 1.0], [0.0, 0.0]]), [0])


def test_max_rank_subset_examples():
    res = ranklab.max_rank_subset(np.diag([1.0, 1.0, 0.0]))
    assert (res.k, res.subset) == (2, (0, 1))
    res0 = ranklab.max_rank_subset(np.zeros((3, 3)))
    assert (res0.k, res0.subset) == (0, ())
    assert res0.method == "exhaustive"


def test_max_rank_subset_matches_rank_for_symmetric():
    # a symmetric matrix of rank r has a nonsingular r x r principal submatrix
    rng = np.random.default_rng(9)
    for _ in range(20):
        p = int(rng.integers(2, 7))
        r = int(rng.integers(0, p + 1))
        B = rng.normal(size=(p, r)) if r else np.zeros((p, 1))
        S = rng.choice([-1.0, 1.0], size=r) if r else np.ones(1)
        H = B @ np.diag(S) @ B.T  # indefinite symmetric of rank r
        H = 0.5 * (H + H.T)
        res = ranklab.max_rank_subset(H)
        assert res.k == ranklab.numerical_rank(H).rank
        if res.k:
            sub = ranklab.principal_submatrix_rank(H, res.subset)
            assert sub.rank == res.k
        # verify against the independent numpy rank oracle
        assert res.k == np.linalg.matrix_rank(H, tol=1e-8 * max(1e-300, np.linalg.norm(H, 2)))


def test_max_rank_subset_ties_break_lexicographically():
    res = ranklab.max_rank_subset(np.diag([1.0, 1.0, 1.0, 0.0]))
    assert res.subset == (0, 1, 2)


def test_max_rank_subset_greedy_path_for_large_p():
    rng = np.random.default_rng(10)
    p, r = 14, 9
    B = rng.normal(size=(p, r))
    H = B @ B.T
    res = ranklab.max_rank_subset(H)
    assert res.method == "greedy"
    assert res.k == r
    assert ranklab.principal_submatrix_rank(H, res.subset).rank == r


def test_non_finite_input_rejected():
    with pytest.raises(InputError):
        ranklab.numerical_rank(np.array([[1.0, np.nan]]))
    with pytest.raises(InputError):
        ranklab.svd(np.array([[np.inf, 1.0]]))
