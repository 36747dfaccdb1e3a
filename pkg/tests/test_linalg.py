from __future__ import annotations

import math

import numpy as np
import pytest

from app.errors import NonFiniteError, ShapeError
from app.services.linalg import add_scaled, as_matrix, frobenius_norm, matmul, svd, trace, transpose


def naive_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = np.zeros((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            for k in range(a.shape[1]):
                out[i, j] += a[i, k] * b[k, j]
    return out


def test_matmul_identity_and_hand_product() -> None:
    m = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(matmul(np.eye(2), m), m)
    np.testing.assert_array_equal(matmul(np.array([[1.0, 2.0]]), np.array([[3.0], [4.0]])), [[11.0]])


def test_matmul_matches_triple_loop() -> None:
    rng = np.random.default_rng(3)
    a = rng.normal(size=(5, 4))
    b = rng.normal(size=(4, 3))
    np.testing.assert_allclose(matmul(a, b), naive_matmul(a, b), atol=1e-12)


def test_matmul_shape_error_names_both_shapes() -> None:
    with pytest.raises(ShapeError) as excinfo:
        matmul(np.ones((2, 3)), np.ones((2, 3)))
    assert "(2, 3)" in str(excinfo.value)


def test_matmul_is_associative() -> None:
    rng = np.random.default_rng(4)
    for _ in range(20):
        a, b, c = rng.normal(size=(3, 4)), rng.normal(size=(4, 2)), rng.normal(size=(2, 5))
        np.testing.assert_allclose(matmul(matmul(a, b), c), matmul(a, matmul(b, c)), atol=1e-10)


def test_small_helpers() -> None:
    assert frobenius_norm(np.eye(2)) == pytest.approx(math.sqrt(2.0))
    assert trace(np.array([[1.0, 2.0], [3.0, 4.0]])) == 5.0
    a = np.arange(6.0).reshape(2, 3)
    np.testing.assert_array_equal(add_scaled(a, np.ones((2, 3)), 0.0), a)
    np.testing.assert_array_equal(transpose(transpose(a)), a)
    with pytest.raises(ShapeError):
        trace(np.ones((2, 3)))


def test_as_matrix_rejects_non_finite() -> None:
    with pytest.raises(NonFiniteError):
        as_matrix([[1.0, float("nan")]])


def test_svd_hand_cases() -> None:
    np.testing.assert_allclose(svd(np.eye(2)).sigma, [1.0, 1.0])
    np.testing.assert_allclose(svd(np.array([[3.0, 0.0], [0.0, 0.0]])).sigma, [3.0, 0.0], atol=1e-15)
    np.testing.assert_allclose(svd(np.array([[0.0, 2.0], [1.0, 0.0]])).sigma, [2.0, 1.0], atol=1e-14)


def test_svd_random_matrices_reconstruct_and_are_orthonormal() -> None:
    rng = np.random.default_rng(7)
    for _ in range(50):
        m, n = rng.integers(1, 9, size=2)
        a = rng.normal(size=(m, n))
        result = svd(a)
        r = min(m, n)
        assert result.u.shape == (m, r)
        assert result.vt.shape == (r, n)
        scale = np.linalg.norm(a)
        assert np.linalg.norm(result.reconstruct() - a) <= 1e-9 * scale
        np.testing.assert_allclose(result.u.T @ result.u, np.eye(r), atol=1e-9)
        np.testing.assert_allclose(result.vt @ result.vt.T, np.eye(r), atol=1e-9)
        assert np.all(np.diff(result.sigma) <= 0.0)
        assert np.all(result.sigma >= 0.0)
        assert result.sigma[0] <= scale + 1e-12
        np.testing.assert_allclose(result.sigma, np.linalg.svd(a, compute_uv=False), atol=1e-10)


def test_svd_rank_deficient_keeps_orthonormal_factors() -> None:
    a = np.outer([1.0, 2.0, 3.0], [1.0, -1.0, 0.5])
    result = svd(a)
    np.testing.assert_allclose(result.u.T @ result.u, np.eye(3), atol=1e-9)
    np.testing.assert_allclose(result.reconstruct(), a, atol=1e-12)
    np.testing.assert_allclose(result.sigma[1:], [0.0, 0.0], atol=1e-12)


def test_svd_canonical_signs_are_deterministic() -> None:
    a = np.array([[-2.0, 0.0], [0.0, -1.0]])
    result = svd(a)
    for column in result.u.T:
        first = column[np.flatnonzero(np.abs(column) > 1e-12)[0]]
        assert first > 0.0
    np.testing.assert_allclose(result.reconstruct(), a, atol=1e-14)


def test_svd_handles_stacks() -> None:
    rng = np.random.default_rng(11)
    stack = rng.normal(size=(6, 2, 5))
    result = svd(stack)
    assert result.sigma.shape == (6, 2)
    for index in range(6):
        single = svd(stack[index])
        np.testing.assert_allclose(result.sigma[index], single.sigma, atol=1e-12)
    np.testing.assert_allclose(result.reconstruct(), stack, atol=1e-10)


def test_svd_rejects_empty() -> None:
    with pytest.raises(ShapeError):
        svd(np.zeros((0, 3)))


def assert_valid_factorisation(a: np.ndarray, atol: float = 1e-10) -> None:
    result = svd(a)
    r = min(a.shape)
    scale = max(np.linalg.norm(a), 1.0)
    assert np.linalg.norm(result.reconstruct() - a) <= atol * scale
    np.testing.assert_allclose(result.u.T @ result.u, np.eye(r), atol=1e-9)
    np.testing.assert_allclose(result.vt @ result.vt.T, np.eye(r), atol=1e-9)
    np.testing.assert_allclose(result.sigma, np.linalg.svd(a, compute_uv=False), atol=1e-10 * scale)


def test_svd_repeated_row_matrix_converges() -> None:
    a = np.array([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [1.0, 1.0, 1.0]])
    assert_valid_factorisation(a)
    assert svd(a).sigma[2] == pytest.approx(0.0, abs=1e-12)


def test_svd_relu_masked_transforms_converge() -> None:
    rng = np.random.default_rng(5)
    for _ in range(200):
        rows = int(rng.choice([2, 4]))
        weights = rng.normal(size=(rows, 8))
        mask = rng.random(8) < 0.5
        transform = weights * mask
        assert_valid_factorisation(transform)
        assert_valid_factorisation(transform.T)


def test_svd_stack_with_zero_and_low_rank_members() -> None:
    rng = np.random.default_rng(12)
    stack = rng.normal(size=(5, 4, 8))
    stack[1] = 0.0
    stack[2, :, 3:] = 0.0
    stack[3] = np.outer(rng.normal(size=4), rng.normal(size=8))
    result = svd(stack)
    np.testing.assert_allclose(result.reconstruct(), stack, atol=1e-10)
    np.testing.assert_array_equal(result.sigma[1], np.zeros(4))
    for index in range(5):
        np.testing.assert_allclose(result.u[index].T @ result.u[index], np.eye(4), atol=1e-9)
