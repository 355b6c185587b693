import numpy as np
import pytest
from scipy.linalg import svdvals

from dsfactor.core.matrix import (
    frobenius_error, heavy_tailed_spectrum, make_rng, matmul_dense, random_heavy_tailed,
)
from dsfactor.utils.errors import ValidationError


def naive_matmul(a, b):
    out = np.zeros((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            acc = 0.0
            for t in range(a.shape[1]):
                acc += a[i, t] * b[t, j]
            out[i, j] = acc
    return out


def test_matmul_identity(rng):
    b = rng.standard_normal((3, 4))
    assert np.array_equal(matmul_dense(np.eye(3), b), b)


def test_matmul_hand_checked():
    out = matmul_dense(np.array([[1.0, 2.0], [3.0, 4.0]]), np.array([[1.0], [1.0]]))
    assert out.tolist() == [[3.0], [7.0]]


def test_matmul_matches_triple_loop(rng):
    a = rng.standard_normal((17, 9))
    b = rng.standard_normal((9, 5))
    assert np.max(np.abs(matmul_dense(a, b) - naive_matmul(a, b))) < 1e-12


def test_matmul_dimension_mismatch():
    with pytest.raises(ValidationError, match="a.cols must equal b.rows"):
        matmul_dense(np.ones((2, 3)), np.ones((2, 3)))


def test_matmul_associative(rng):
    a, b, c = rng.standard_normal((12, 7)), rng.standard_normal((7, 9)), rng.standard_normal((9, 4))
    left = matmul_dense(matmul_dense(a, b), c)
    right = matmul_dense(a, matmul_dense(b, c))
    assert np.linalg.norm(left - right) / np.linalg.norm(left) < 1e-10


def test_frobenius_error_cases(rng):
    w = rng.standard_normal((5, 6))
    assert frobenius_error(w, w) == 0.0
    assert frobenius_error(np.array([[3.0, 4.0]]), np.zeros((1, 2))) == 1.0
    w_hat = rng.standard_normal((5, 6))
    num = sum((w[i, j] - w_hat[i, j]) ** 2 for i in range(5) for j in range(6))
    den = sum(w[i, j] ** 2 for i in range(5) for j in range(6))
    assert frobenius_error(w, w_hat) == pytest.approx(np.sqrt(num / den), rel=1e-12)


def test_frobenius_error_rejects_zero_reference():
    with pytest.raises(ValidationError):
        frobenius_error(np.zeros((2, 2)), np.ones((2, 2)))
    assert frobenius_error(np.zeros((2, 2)), np.ones((2, 2)), relative=False) == 2.0


def test_heavy_tailed_spectrum_matches(rng):
    w = random_heavy_tailed(40, 25, 0.5, rng)
    sv = svdvals(w)
    want = heavy_tailed_spectrum(25, 0.5)
    assert np.max(np.abs(sv - want) / want) < 1e-6


def test_heavy_tailed_flat_limit_is_full_rank(rng):
    w = random_heavy_tailed(20, 12, 1e-9, rng)
    sv = svdvals(w)
    assert np.linalg.matrix_rank(w) == 12
    assert sv.max() / sv.min() < 1 + 1e-6


def test_heavy_tailed_is_seeded():
    a = random_heavy_tailed(16, 8, 0.3, make_rng(7))
    b = random_heavy_tailed(16, 8, 0.3, make_rng(7))
    assert np.array_equal(a, b)


@pytest.mark.parametrize("decay", [0.0, -0.1, 1.5])
def test_heavy_tailed_rejects_decay(rng, decay):
    with pytest.raises(ValidationError):
        random_heavy_tailed(4, 4, decay, rng)
