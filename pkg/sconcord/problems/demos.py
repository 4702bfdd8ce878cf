"""Small closed-form problems used by the tests, the CLI and the acceptance runs."""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from sconcord.core.oracle import OracleHandle, ReferencePair, Vector, quadratic_oracle, zero_oracle
from sconcord.problems.polynomial import (
    polynomial_reference,
    polynomial_reference_fit,
    polynomial_sc_constant,
    saddle_objective,
)
from sconcord.problems.sampling import positive_log_uniform, scaled_gaussian

# min over x2 of x2^4 - x2^2
SADDLE_OPTIMAL_VALUE = -0.25


def log_barrier_objective(n: int, quad_weight: float = 0.0) -> OracleHandle:
    """f(x) = sum(x_i - log x_i) + q/2 ||x - 1||^2 on x > 0; minimizer 1, f* = n."""
    q = float(quad_weight)

    def value(x: Vector) -> float:
        shifted = x - 1.0
        return float(np.sum(x - np.log(x))) + 0.5 * q * float(shifted @ shifted)

    return OracleHandle(
        dim=n,
        evaluate=value,
        gradient=lambda x: 1.0 - 1.0 / x + q * (x - 1.0),
        hessian=lambda x: np.diag(1.0 / (x * x) + q),
        hvp=lambda x, v: (1.0 / (x * x) + q) * v,
        in_domain=lambda x: bool(np.all(np.isfinite(x)) and np.all(x > 0.0)),
        name=f"log_barrier[n={n}]",
    )


def log_barrier_demo(n: int, quad_weight: float = 0.0, ref_weight: float = 0.0) -> ReferencePair:
    """The barrier objective with F = (s/2)||x||^2 (the zero function when s = 0)."""
    if ref_weight > 0.0:
        reference = quadratic_oracle(ref_weight * np.eye(n), name=f"{ref_weight:g}/2*|x|^2")
    else:
        reference = zero_oracle(n)
    return ReferencePair(
        objective=log_barrier_objective(n, quad_weight),
        reference=reference,
        kappa=1.0,
        kappa_ref=0.0,
        lower_bound_hint=float(n),
        sampler=positive_log_uniform(n),
        name=f"log_barrier_demo[n={n}]",
    )


def polynomial_saddle(
    seed: int = 0, sample_budget: int = 10, weight: Optional[float] = None
) -> ReferencePair:
    """
    x1^2 - x2^2 + x2^4 with a (||x||^2 + 1)^2 reference, fitted unless a
    previously fitted weight is given.
    """
    objective = saddle_objective()
    if weight is None:
        weight = polynomial_reference_fit(
            objective, p=2, sample_budget=sample_budget, seed=seed
        ).weight
    return ReferencePair(
        objective=objective,
        reference=polynomial_reference(2, 2, weight),
        kappa=1.0,
        kappa_ref=polynomial_sc_constant(2) / math.sqrt(weight),
        lower_bound_hint=SADDLE_OPTIMAL_VALUE,
        sampler=scaled_gaussian(2),
        name="polynomial_saddle",
    )
