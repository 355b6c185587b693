import numpy as np
import pytest

from dsfactor.core.factorization import BlockPlan, block_errors, factorize, reconstruct, stacked_view
from dsfactor.core.ksvd import KsvdConfig, ksvd_factor
from dsfactor.core.matrix import frobenius_error, make_rng, random_heavy_tailed
from dsfactor.utils.errors import PlanError
from tests.conftest import rel

FAST = KsvdConfig(max_iters=5)


@pytest.mark.parametrize("plan, m, n, constraint", [
    (BlockPlan(4, 4, 2), 10, 8, "B < K"),
    (BlockPlan(4, 12, 2), 10, 8, "K <= M"),
    (BlockPlan(4, 6, 4), 10, 8, "S < B"),
    (BlockPlan(3, 6, 1), 10, 8, "N % B == 0"),
    (BlockPlan(0, 6, 1), 10, 8, "B, K, S >= 1"),
])
def test_plan_violations_name_the_constraint(plan, m, n, constraint):
    with pytest.raises(PlanError, match=f"plan violates {constraint}"):
        plan.validate(m, n)


def test_non_strict_validation_keeps_divisibility():
    BlockPlan(4, 4, 4).validate(10, 8, strict=False)
    with pytest.raises(PlanError):
        BlockPlan(3, 4, 4).validate(10, 8, strict=False)


def test_plan_ratios():
    plan = BlockPlan(64, 96, 8)
    assert plan.gamma(768) == 0.125
    assert plan.delta == 0.125


def test_from_ratios():
    plan, notes = BlockPlan.from_ratios(768, 64, 0.125, 0.125)
    assert plan == BlockPlan(64, 96, 8)
    assert notes == []
    plan, notes = BlockPlan.from_ratios(100, 8, 0.333, 0.3)
    assert plan == BlockPlan(8, 33, 2)
    assert len(notes) == 2


def test_zero_matrix():
    f = factorize(np.zeros((12, 8)), BlockPlan(4, 6, 2), FAST)
    assert f.n_blocks == 2
    assert np.all(reconstruct(f) == 0.0)


def test_single_block_is_one_ksvd_call(rng):
    w = rng.standard_normal((20, 4))
    plan = BlockPlan(4, 8, 2)
    f = factorize(w, plan, FAST)
    direct = ksvd_factor(w, 8, 2, FAST.for_block(0))
    assert np.array_equal(f.blocks[0].dictionary, direct.dictionary)
    assert np.array_equal(f.blocks[0].coeffs.values, direct.coeffs.values)


def test_block_layout_and_stacked_view(rng):
    w = rng.standard_normal((24, 12))
    f = factorize(w, BlockPlan(4, 8, 2), FAST)
    assert f.n_blocks == 3
    assert f.column_range(1) == slice(4, 8)
    s_wide, d_diag = stacked_view(f)
    assert s_wide.shape == (24, 24)
    assert d_diag.shape == (24, 12)
    assert np.allclose(s_wide @ d_diag, reconstruct(f), rtol=0, atol=1e-10)
    assert np.all(np.count_nonzero(s_wide, axis=1) <= 3 * 2)


def test_block_errors_add_up(rng):
    w = rng.standard_normal((24, 12))
    f = factorize(w, BlockPlan(4, 8, 2), FAST)
    total = np.sum((w - reconstruct(f)) ** 2)
    assert block_errors(w, f).sum() == pytest.approx(total, rel=1e-12)
    assert frobenius_error(w, reconstruct(f)) == pytest.approx(rel(reconstruct(f), w), rel=1e-12)


def test_thread_count_does_not_change_result(rng):
    w = rng.standard_normal((32, 16))
    plan = BlockPlan(4, 8, 2)
    a = factorize(w, plan, FAST, threads=1)
    b = factorize(w, plan, FAST, threads=3)
    assert np.array_equal(reconstruct(a), reconstruct(b))


def test_more_nonzeros_lower_error():
    low, high = [], []
    for seed in range(10):
        w = random_heavy_tailed(32, 16, 0.5, make_rng(seed))
        cfg = KsvdConfig(max_iters=10, seed=seed)
        low.append(frobenius_error(w, reconstruct(factorize(w, BlockPlan(8, 12, 1), cfg))))
        high.append(frobenius_error(w, reconstruct(factorize(w, BlockPlan(8, 12, 4), cfg))))
    assert np.mean(high) < np.mean(low)


@pytest.mark.slow
def test_planted_dense_sparse_matrix_recovered():
    rng = make_rng(11)
    plan = BlockPlan(8, 24, 2)
    blocks = []
    for _ in range(4):
        d = rng.standard_normal((24, 8))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        idx = np.stack([rng.choice(24, 2, replace=False) for _ in range(256)])
        vals = rng.uniform(1.0, 2.0, (256, 2)) * rng.choice([-1.0, 1.0], (256, 2))
        blocks.append(np.einsum("mt,mtb->mb", vals, d[idx]))
    w = np.hstack(blocks)
    f = factorize(w, plan, KsvdConfig(max_iters=100, seed=3), threads=2)
    assert frobenius_error(w, reconstruct(f)) < 0.35
