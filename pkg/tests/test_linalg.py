import numpy as np
import pytest

from lipcert import linalg
from lipcert.errors import NonFinite, ShapeMismatch


COUNTEREXAMPLE = np.array([[1.0, 1.0], [-1.0, 1.0]])


def test_norm_closed_forms():
    assert linalg.norm(COUNTEREXAMPLE, "l1") == 2.0
    assert linalg.norm(COUNTEREXAMPLE, "linf") == 2.0
    assert abs(linalg.norm(COUNTEREXAMPLE, "l2") - np.sqrt(2.0)) < 1e-9


def test_norm_identity():
    eye = np.eye(5)
    for p in linalg.NORM_KINDS:
        assert abs(linalg.norm(eye, p) - 1.0) < 1e-12


def test_norm_rejects_nonfinite():
    bad = np.array([[1.0, np.nan]])
    with pytest.raises(NonFinite):
        linalg.norm(bad, "l1")


def test_spectral_norm_adversarial_start():
    # Gram image of the all-ones start is exactly zero here; the deterministic
    # restart must still find sigma_max = sqrt(2).
    m = np.array([[1.0, -1.0]])
    assert abs(linalg.norm(m, "l2") - np.sqrt(2.0)) < 1e-9
    assert linalg.norm(np.zeros((3, 4)), "l2") == 0.0


def test_abs_matrix():
    np.testing.assert_array_equal(linalg.abs_matrix(COUNTEREXAMPLE), np.ones((2, 2)))
    np.testing.assert_array_equal(linalg.abs_matrix(np.zeros((2, 3))), np.zeros((2, 3)))
    np.testing.assert_array_equal(linalg.abs_matrix([[-3.0]]), [[3.0]])


def test_abs_norm_identities_exact():
    # l1 and linf norms only see absolute values, so these hold exactly.
    rng = np.random.default_rng(7)
    for _ in range(50):
        a = rng.standard_normal((rng.integers(1, 8), rng.integers(1, 8)))
        assert linalg.norm(a, "l1") == linalg.norm(linalg.abs_matrix(a), "l1")
        assert linalg.norm(a, "linf") == linalg.norm(linalg.abs_matrix(a), "linf")


def test_abs_can_grow_l2():
    assert linalg.norm(linalg.abs_matrix(COUNTEREXAMPLE), "l2") == pytest.approx(2.0, abs=1e-9)
    assert linalg.norm(COUNTEREXAMPLE, "l2") == pytest.approx(np.sqrt(2.0), abs=1e-9)


def test_submultiplicativity():
    rng = np.random.default_rng(11)
    for _ in range(25):
        a = rng.standard_normal((4, 5))
        b = rng.standard_normal((5, 3))
        for p in linalg.NORM_KINDS:
            lhs = linalg.norm(a @ b, p)
            rhs = linalg.norm(a, p) * linalg.norm(b, p)
            assert lhs <= rhs + 1e-9


def test_elementwise_domination_of_abs_products():
    rng = np.random.default_rng(23)
    for _ in range(20):
        k = rng.integers(2, 6)
        dims = rng.integers(1, 6, size=k + 1)
        mats = [rng.standard_normal((dims[i + 1], dims[i])) for i in range(k)]
        prod = mats[-1]
        abs_prod = np.abs(mats[-1])
        for m in mats[-2::-1]:
            prod = prod @ m
            abs_prod = abs_prod @ np.abs(m)
        assert np.all(np.abs(prod) <= abs_prod + 1e-12)


def test_monotone_products_of_nonnegative_matrices():
    rng = np.random.default_rng(31)
    for _ in range(20):
        a = rng.uniform(0, 1, (3, 4))
        c = a + rng.uniform(0, 1, (3, 4))
        b = rng.uniform(0, 1, (4, 2))
        d = b + rng.uniform(0, 1, (4, 2))
        assert np.all(a @ b <= c @ d + 1e-12)


def test_matmul_matches_triple_loop():
    rng = np.random.default_rng(5)
    a = rng.standard_normal((4, 3))
    b = rng.standard_normal((3, 2))
    want = np.zeros((4, 2))
    for i in range(4):
        for j in range(2):
            for k in range(3):
                want[i, j] += a[i, k] * b[k, j]
    np.testing.assert_allclose(linalg.matmul(a, b), want, atol=1e-12)
    np.testing.assert_array_equal(linalg.matmul(np.eye(2), b.T @ a.T), b.T @ a.T)
    assert linalg.matmul([[1.0, 1.0]], [[1.0], [1.0]]) == np.array([[2.0]])


def test_matmul_shape_error():
    with pytest.raises(ShapeMismatch):
        linalg.matmul(np.eye(2), np.eye(3))


def test_svd_diagonal_and_identity():
    f = linalg.svd(np.diag([3.0, 4.0]))
    np.testing.assert_allclose(f.sigma, [4.0, 3.0], atol=1e-12)
    f = linalg.svd(np.eye(4))
    np.testing.assert_allclose(f.sigma, np.ones(4), atol=1e-12)


def _check_factors(w, f):
    scale = max(1.0, np.abs(w).max())
    assert np.abs(f.reconstruct() - w).max() <= 1e-10 * scale
    m, n = w.shape
    assert np.abs(f.u.T @ f.u - np.eye(m)).max() <= 1e-10
    assert np.abs(f.vt @ f.vt.T - np.eye(n)).max() <= 1e-10
    assert np.all(np.diff(f.sigma) <= 1e-12)
    assert np.all(f.sigma >= 0)


def test_svd_reconstruction_random():
    rng = np.random.default_rng(42)
    w = rng.standard_normal((3, 2))
    _check_factors(w, linalg.svd(w))


def test_svd_various_shapes():
    rng = np.random.default_rng(9)
    for shape in [(1, 1), (1, 4), (4, 1), (5, 3), (3, 5), (4, 4)]:
        w = rng.standard_normal(shape)
        _check_factors(w, linalg.svd(w))
    # Rank-deficient: duplicated column and a zero column.
    w = np.array([[1.0, 1.0, 0.0], [2.0, 2.0, 0.0], [0.5, 0.5, 0.0]])
    _check_factors(w, linalg.svd(w))


def test_svd_largest_sigma_matches_power_iteration():
    rng = np.random.default_rng(3)
    for _ in range(10):
        w = rng.standard_normal((4, 6))
        f = linalg.svd(w)
        assert f.sigma[0] == pytest.approx(linalg.norm(w, "l2"), abs=1e-8)


def test_batched_norm_agrees_with_scalar():
    rng = np.random.default_rng(17)
    stack = rng.standard_normal((12, 3, 5))
    for p in linalg.NORM_KINDS:
        got = linalg.batched_norm(stack, p)
        want = [linalg.norm(stack[i], p) for i in range(12)]
        np.testing.assert_allclose(got, want, atol=1e-8)
