"""
Polynomial references F(x) = w (||x||^2 + 1)^p: any polynomial of degree at
most 2p is F-based 1-self-concordant for a large enough weight w, which is
found here numerically.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy import optimize

from sconcord.core.oracle import (
    OracleHandle,
    ReferencePair,
    Sampler,
    Vector,
    check_self_concordance,
)
from sconcord.errors import AssumptionViolation
from sconcord.problems.sampling import scaled_gaussian

logger = logging.getLogger(__name__)

# doubling grid for the fitted weight: 2^-20, 2^-19, ... up to 1e12
GRID_START_EXPONENT = -20
GRID_MAX_WEIGHT = 1e12
SAFETY_FACTOR = 2.0


def _phi_derivatives(p: int, s: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    u = s + 1.0
    d1 = p * u ** (p - 1)
    d2 = p * (p - 1) * u ** (p - 2)
    d3 = p * (p - 1) * (p - 2) * u ** (p - 3)
    return d1, d2, d3


def polynomial_reference(p: int, dim: int, weight: float = 1.0) -> OracleHandle:
    """w (||x||^2 + 1)^p on R^dim."""
    if p < 2:
        raise ValueError(f"p must be at least 2, got {p}")
    w = float(weight)

    def value(x: Vector) -> float:
        return w * (float(x @ x) + 1.0) ** p

    def gradient(x: Vector) -> Vector:
        d1, _, _ = _phi_derivatives(p, np.array(float(x @ x)))
        return 2.0 * w * float(d1) * x

    def hessian(x: Vector) -> np.ndarray:
        d1, d2, _ = _phi_derivatives(p, np.array(float(x @ x)))
        return w * (2.0 * float(d1) * np.eye(dim) + 4.0 * float(d2) * np.outer(x, x))

    def hvp(x: Vector, v: Vector) -> Vector:
        d1, d2, _ = _phi_derivatives(p, np.array(float(x @ x)))
        return w * (2.0 * float(d1) * v + 4.0 * float(d2) * float(x @ v) * x)

    return OracleHandle(
        dim=dim,
        evaluate=value,
        gradient=gradient,
        hessian=hessian,
        hvp=hvp,
        name=f"{w:g}*(|x|^2+1)^{p}",
    )


def _sc_ratio(p: int, log_s: np.ndarray, c: np.ndarray) -> np.ndarray:
    # x^T h = a with |h| = 1 and a^2 <= s; c = a / sqrt(s) in [0, 1]
    s = np.exp(log_s)
    a = c * np.sqrt(s)
    d1, d2, d3 = _phi_derivatives(p, s)
    second = 2.0 * d1 + 4.0 * d2 * a * a
    third = 12.0 * d2 * a + 8.0 * d3 * a**3
    return np.abs(third) / (2.0 * second**1.5)


@lru_cache(maxsize=None)
def polynomial_sc_constant(p: int) -> float:
    """
    Smallest kappa with |D^3 F[h,h,h]| <= 2 kappa (D^2 F[h,h])^{3/2} for
    F = (||x||^2 + 1)^p, by a grid search refined with Nelder-Mead.
    """
    if p < 2:
        raise ValueError(f"p must be at least 2, got {p}")
    log_s = np.linspace(math.log(1e-8), math.log(1e8), 801)[:, None]
    c = np.linspace(0.0, 1.0, 401)[None, :]
    ratios = _sc_ratio(p, log_s, c)
    i, j = np.unravel_index(int(np.argmax(ratios)), ratios.shape)
    best = float(ratios[i, j])

    def objective(z: np.ndarray) -> float:
        return -float(_sc_ratio(p, np.array(z[0]), np.clip(np.array(z[1]), 0.0, 1.0)))

    refined = optimize.minimize(
        objective, x0=np.array([log_s[i, 0], c[0, j]]), method="Nelder-Mead"
    )
    return max(best, -float(refined.fun))


@dataclass(frozen=True)
class PolynomialReference:
    degree_bound: int
    weight: float
    reference: OracleHandle
    kappa_ref: Optional[float]
    worst_ratio: float
    grid_steps: int

    @property
    def p(self) -> int:
        return self.degree_bound // 2


def polynomial_reference_fit(
    f: OracleHandle,
    p: int,
    sample_budget: int = 10,
    seed: int = 0,
    shape: Optional[OracleHandle] = None,
    shape_kappa: Optional[float] = None,
    sampler: Optional[Sampler] = None,
    n_dirs: int = 4,
) -> PolynomialReference:
    """
    Smallest w on the doubling grid such that f with reference w * shape
    passes check_self_concordance with kappa = 1, times the safety factor 2.
    The shape defaults to (||x||^2 + 1)^p.
    """
    if p < 2:
        raise ValueError(f"p must be at least 2, got {p}")
    if shape is None:
        shape = polynomial_reference(p, f.dim)
        shape_kappa = polynomial_sc_constant(p)
    sampler = sampler or scaled_gaussian(f.dim)

    exponent = GRID_START_EXPONENT
    steps = 0
    while 2.0**exponent <= GRID_MAX_WEIGHT:
        weight = 2.0**exponent
        steps += 1
        candidate = ReferencePair(
            objective=f, reference=shape.scaled(weight), kappa=1.0, sampler=sampler
        )
        report = check_self_concordance(
            candidate, n_points=sample_budget, n_dirs=n_dirs, seed=seed
        )
        logger.debug("fit %s: w=%.3e worst ratio %.4g", f.name, weight, report.worst_ratio)
        if report.passed:
            fitted = SAFETY_FACTOR * weight
            kappa_ref = None if shape_kappa is None else shape_kappa / math.sqrt(fitted)
            logger.info(
                "Fitted reference weight %.3e for %s after %d grid steps", fitted, f.name, steps
            )
            return PolynomialReference(
                degree_bound=2 * p,
                weight=fitted,
                reference=shape.scaled(fitted, name=f"{fitted:g}*{shape.name}"),
                kappa_ref=kappa_ref,
                worst_ratio=report.worst_ratio,
                grid_steps=steps,
            )
        exponent += 1
    raise AssumptionViolation(
        f"{f.name}: no reference weight up to {GRID_MAX_WEIGHT:g} passes the "
        f"self-concordance check (is the degree at most {2 * p}?)"
    )


def saddle_objective() -> OracleHandle:
    """f(x) = x1^2 - x2^2 + x2^4, with a strict saddle at the origin."""

    def value(x: Vector) -> float:
        return float(x[0] ** 2 - x[1] ** 2 + x[1] ** 4)

    def gradient(x: Vector) -> Vector:
        return np.array([2.0 * x[0], -2.0 * x[1] + 4.0 * x[1] ** 3])

    def hessian(x: Vector) -> np.ndarray:
        return np.diag([2.0, -2.0 + 12.0 * x[1] ** 2])

    return OracleHandle(dim=2, evaluate=value, gradient=gradient, hessian=hessian, name="saddle")
