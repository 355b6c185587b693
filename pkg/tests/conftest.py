import numpy as np
import pytest

from dsfactor.core.factorization import BlockPlan, DSFactorization
from dsfactor.core.ksvd import BlockFactor
from dsfactor.core.omp import SparseCoefficients


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_coeffs(rng, m, k, s):
    indices = np.sort(np.stack([rng.choice(k, size=s, replace=False) for _ in range(m)]), axis=1)
    return SparseCoefficients(indices, rng.standard_normal((m, s)), k)


def random_factorization(rng, m, n, plan: BlockPlan) -> DSFactorization:
    blocks = [
        BlockFactor(random_coeffs(rng, m, plan.k, plan.s), rng.standard_normal((plan.k, plan.b)), [])
        for _ in range(n // plan.b)
    ]
    return DSFactorization(m, n, plan, blocks)


def rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)
