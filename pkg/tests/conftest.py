from __future__ import annotations

import numpy as np
import pytest

from sconcord.core.oracle import ReferencePair, quadratic_oracle, zero_oracle
from sconcord.problems.demos import log_barrier_demo
from sconcord.problems.nmf import make_nmf_kl, make_nmf_mse
from sconcord.problems.phase_retrieval import make_phase_retrieval


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(0)


@pytest.fixture
def half_norm_pair() -> ReferencePair:
    """f = 1/2 ||x||^2 with F = 1/2 ||x||^2, kappa = 0."""
    return ReferencePair(
        objective=quadratic_oracle(np.eye(2)),
        reference=quadratic_oracle(np.eye(2)),
        kappa=0.0,
        kappa_ref=0.0,
    )


@pytest.fixture
def bare_quadratic_pair() -> ReferencePair:
    """A strongly convex quadratic with F = 0 and kappa = 0."""
    A = np.array([[3.0, 1.0, 0.0], [1.0, 2.0, 0.5], [0.0, 0.5, 1.5]])
    return ReferencePair(
        objective=quadratic_oracle(A, linear=np.array([1.0, -2.0, 0.5])),
        reference=zero_oracle(3),
        kappa=0.0,
    )


@pytest.fixture
def barrier_pair() -> ReferencePair:
    return log_barrier_demo(5)


@pytest.fixture(scope="session")
def small_nmf_mse():
    return make_nmf_mse(6, 4, 2, seed=0)


@pytest.fixture(scope="session")
def small_nmf_kl():
    return make_nmf_kl(6, 4, 2, seed=0, noise=0.01)


@pytest.fixture(scope="session")
def desk_phase():
    return make_phase_retrieval(4, 12, seed=0)
