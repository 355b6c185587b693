import itertools

import numpy as np
import pytest

from dsfactor.core.omp import omp_encode_block, omp_encode_row
from dsfactor.utils.errors import ValidationError


def best_subset_residual(target, dictionary, s):
    best = np.inf
    for support in itertools.combinations(range(dictionary.shape[0]), s):
        atoms = dictionary[list(support)].T
        coef, *_ = np.linalg.lstsq(atoms, target, rcond=None)
        best = min(best, np.linalg.norm(target - atoms @ coef))
    return best


def residual_of(row, target, dictionary):
    return target - row.values @ dictionary[row.indices]


def planted(rng, k, b, s, m, dictionary=None):
    if dictionary is None:
        dictionary = rng.standard_normal((k, b))
    indices = np.sort(np.stack([rng.choice(k, size=s, replace=False) for _ in range(m)]), axis=1)
    values = rng.uniform(1.0, 2.0, size=(m, s)) * rng.choice([-1.0, 1.0], size=(m, s))
    targets = np.einsum("mt,mtb->mb", values, dictionary[indices])
    return dictionary, indices, values, targets


def test_single_planted_atom(rng):
    dictionary = rng.standard_normal((6, 5))
    row = omp_encode_row(3.0 * dictionary[4], dictionary, 1)
    assert row.indices.tolist() == [4]
    assert row.values[0] == pytest.approx(3.0, rel=1e-12)
    assert np.linalg.norm(residual_of(row, 3.0 * dictionary[4], dictionary)) < 1e-12


def test_zero_target_takes_lowest_atoms(rng):
    row = omp_encode_row(np.zeros(5), rng.standard_normal((6, 5)), 3)
    assert row.indices.tolist() == [0, 1, 2]
    assert np.all(row.values == 0.0)


def test_small_instance_against_brute_force(rng):
    dictionary = rng.standard_normal((6, 5))
    target = rng.standard_normal(5)
    row = omp_encode_row(target, dictionary, 2)
    got = np.linalg.norm(residual_of(row, target, dictionary))
    assert got >= best_subset_residual(target, dictionary, 2) - 1e-12


def test_greedy_never_beats_exhaustive_optimum():
    rng = np.random.default_rng(99)
    instances = 0
    while instances < 1000:
        k = int(rng.integers(3, 9))
        s = int(rng.integers(1, min(3, k - 1) + 1))
        b = int(rng.integers(s + 1, 7))
        dictionary = rng.standard_normal((k, b))
        targets = rng.standard_normal((10, b))
        sc = omp_encode_block(targets, dictionary, s)
        for j, row in enumerate(sc.rows):
            got = np.linalg.norm(residual_of(row, targets[j], dictionary))
            assert got >= best_subset_residual(targets[j], dictionary, s) - 1e-10
        instances += len(targets)


def test_planted_two_sparse_support_recovered(rng):
    # near-orthogonal atoms keep the mutual coherence far below 1/3
    q, _ = np.linalg.qr(rng.standard_normal((16, 6)))
    near = q.T + 0.02 * rng.standard_normal((6, 16))
    dictionary, indices, _, targets = planted(rng, k=6, b=16, s=2, m=20, dictionary=near)
    sc = omp_encode_block(targets, dictionary, 2)
    assert np.array_equal(sc.indices, indices)
    for j, row in enumerate(sc.rows):
        assert np.linalg.norm(residual_of(row, targets[j], dictionary)) < 1e-10


def test_block_identity_rows(rng):
    dictionary = rng.standard_normal((10, 6))
    sc = omp_encode_block(dictionary[:4], dictionary, 1)
    assert sc.indices[:, 0].tolist() == [0, 1, 2, 3]
    assert np.allclose(sc.values, 1.0, rtol=0, atol=1e-12)


def test_block_rows_match_row_encoder(rng):
    dictionary = rng.standard_normal((12, 6))
    targets = rng.standard_normal((5, 6))
    sc = omp_encode_block(targets, dictionary, 3)
    for j in range(5):
        row = omp_encode_row(targets[j], dictionary, 3)
        assert np.array_equal(row.indices, sc.indices[j])
        assert np.allclose(row.values, sc.values[j], rtol=1e-12, atol=1e-14)
    single = omp_encode_block(targets[:1], dictionary, 3)
    row0 = omp_encode_row(targets[0], dictionary, 3)
    assert np.array_equal(single.indices[0], row0.indices)
    assert np.array_equal(single.values[0], row0.values)


def test_planted_model_reconstruction(rng):
    dictionary, _, _, targets = planted(rng, k=32, b=64, s=3, m=40)
    sc = omp_encode_block(targets, dictionary, 3)
    err = np.linalg.norm(targets - sc.times(dictionary), axis=1) / np.linalg.norm(targets, axis=1)
    assert np.mean(err < 1e-8) >= 0.95


def test_invariants_on_random_rows(rng):
    dictionary = rng.standard_normal((16, 8)) * rng.uniform(0.1, 5.0, size=(16, 1))
    targets = rng.standard_normal((30, 8))
    s = 4
    sc = omp_encode_block(targets, dictionary, s)
    assert sc.indices.shape == (30, s)
    assert np.all(np.diff(sc.indices, axis=1) > 0)

    unit = dictionary / np.linalg.norm(dictionary, axis=1, keepdims=True)
    hist = sc.diagnostics.residual_norms
    for j, row in enumerate(sc.rows):
        r = residual_of(row, targets[j], dictionary)
        for idx in row.indices:
            atom = dictionary[idx]
            assert abs(r @ atom) < 1e-8 * max(np.linalg.norm(r), 1e-300) * np.linalg.norm(atom) + 1e-14
        assert np.all(np.diff(hist[j]) <= 1e-12 * hist[j, 0])
        corr = np.abs(unit @ targets[j])
        assert corr[row.indices].max() == pytest.approx(corr.max(), rel=1e-12)


def test_rank_deficient_support_is_flagged(rng):
    base = rng.standard_normal((3, 5))
    dictionary = np.vstack([base, 2.0 * base[0]])
    target = base[1] + base[2] + 0.1 * base[0]
    sc = omp_encode_block(target[None, :], dictionary, 4)
    assert sc.diagnostics.rank_deficient[0]
    assert np.all(np.isfinite(sc.values))


def test_argument_checks(rng):
    d = rng.standard_normal((4, 6))
    with pytest.raises(ValidationError, match="exceeds dictionary size"):
        omp_encode_row(np.ones(6), d, 5)
    with pytest.raises(ValidationError):
        omp_encode_row(np.ones(6), d, 0)
    with pytest.raises(ValidationError, match="all zero"):
        omp_encode_row(np.ones(6), np.zeros((4, 6)), 1)
