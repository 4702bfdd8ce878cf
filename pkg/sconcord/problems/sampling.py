"""Interior samplers used by the self-concordance checks and reference fits."""

from __future__ import annotations

import numpy as np

from sconcord.core.oracle import Sampler, Vector

# log10 range of the sampled magnitudes
LOG_LOW = -2.0
LOG_HIGH = 1.0


def positive_log_uniform(dim: int, low: float = LOG_LOW, high: float = LOG_HIGH) -> Sampler:
    """Componentwise 10**U[low, high]: points strictly inside the positive orthant."""

    def sample(rng: np.random.Generator) -> Vector:
        return np.power(10.0, rng.uniform(low, high, size=dim))

    return sample


def scaled_gaussian(dim: int, low: float = LOG_LOW, high: float = LOG_HIGH) -> Sampler:
    """Standard normal directions with a log-uniform radius scale, for R^n domains."""

    def sample(rng: np.random.Generator) -> Vector:
        scale = 10.0 ** rng.uniform(low, high)
        return scale * rng.standard_normal(dim)

    return sample
