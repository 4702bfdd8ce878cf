"""
Scalar machinery for self-concordant analysis: the conjugate pair omega /
omega_star, the level radius Gamma_f, and the absolute constants used by the
Newton-CG and proximal-point schedules.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from sconcord.errors import DomainError

logger = logging.getLogger(__name__)

# omega_star is reported as +inf from this point on
OMEGA_STAR_POLE = 1.0 - 1e-14

# Below this argument the power series is more accurate than the log1p form
_SERIES_CUTOFF = 1e-4


@dataclass(frozen=True)
class ExtendedReal:
    """A real number or +inf, with the infinite case tagged explicitly."""

    value: float
    finite: bool = True

    @classmethod
    def of(cls, value: float) -> "ExtendedReal":
        if math.isinf(value) and value > 0:
            return cls.infinity()
        if not math.isfinite(value):
            raise DomainError(f"ExtendedReal only admits reals or +inf, got {value}")
        return cls(float(value), True)

    @classmethod
    def infinity(cls) -> "ExtendedReal":
        return cls(math.inf, False)

    @property
    def is_finite(self) -> bool:
        return self.finite

    def __float__(self) -> float:
        return self.value if self.finite else math.inf

    def __add__(self, other: "ExtendedReal | float") -> "ExtendedReal":
        rhs = float(other)
        if not self.finite or math.isinf(rhs):
            return ExtendedReal.infinity()
        return ExtendedReal.of(self.value + rhs)

    __radd__ = __add__

    def __lt__(self, other: "ExtendedReal | float") -> bool:
        return float(self) < float(other)

    def __le__(self, other: "ExtendedReal | float") -> bool:
        return float(self) <= float(other)

    def __gt__(self, other: "ExtendedReal | float") -> bool:
        return float(self) > float(other)

    def __ge__(self, other: "ExtendedReal | float") -> bool:
        return float(self) >= float(other)


def _require_nonneg(z: float, name: str) -> float:
    z = float(z)
    if math.isnan(z) or z < 0.0:
        raise DomainError(f"{name} requires a nonnegative argument, got {z}")
    return z


def omega(z: float) -> float:
    """omega(z) = z - log(1 + z) for z >= 0."""
    z = _require_nonneg(z, "omega")
    if math.isinf(z):
        return math.inf
    if z < _SERIES_CUTOFF:
        return z * z * (0.5 - z * (1.0 / 3.0 - z * 0.25))
    return z - math.log1p(z)


def omega_star(z: float) -> ExtendedReal:
    """omega_star(z) = -z - log(1 - z) for 0 <= z < 1 and +inf beyond the pole."""
    z = _require_nonneg(z, "omega_star")
    if z >= OMEGA_STAR_POLE:
        return ExtendedReal.infinity()
    if z < _SERIES_CUTOFF:
        return ExtendedReal.of(z * z * (0.5 + z * (1.0 / 3.0 + z * 0.25)))
    return ExtendedReal.of(-z - math.log1p(-z))


def scaled_omega(kappa: float, z: float) -> float:
    """kappa^-2 * omega(kappa * z), with the kappa -> 0 limit z^2 / 2."""
    if kappa == 0.0:
        z = _require_nonneg(z, "scaled_omega")
        return 0.5 * z * z
    return omega(kappa * z) / (kappa * kappa)


def scaled_omega_star(kappa: float, z: float) -> ExtendedReal:
    """kappa^-2 * omega_star(kappa * z), with the kappa -> 0 limit z^2 / 2."""
    if kappa == 0.0:
        z = _require_nonneg(z, "scaled_omega_star")
        return ExtendedReal.of(0.5 * z * z)
    inner = omega_star(kappa * z)
    if not inner.is_finite:
        return inner
    return ExtendedReal.of(inner.value / (kappa * kappa))


def omega_quadratic_floor(z: float, gamma: float) -> float:
    """Lower bound z^2 / (2(1 + gamma)) on omega(z), valid for 0 <= z <= gamma."""
    z = _require_nonneg(z, "omega_quadratic_floor")
    return z * z / (2.0 * (1.0 + gamma))


def gamma_f(gap: float, kappa: float) -> float:
    """
    Level radius Gamma_f: the t >= 0 with omega(t) = kappa^2 * gap.

    Bisection brackets the root to 1e-12, then one Newton step polishes it.
    """
    gap = _require_nonneg(gap, "gamma_f gap")
    kappa = _require_nonneg(kappa, "gamma_f kappa")
    target = kappa * kappa * gap
    if target == 0.0:
        return 0.0
    if math.isinf(target):
        return math.inf

    # omega(t) >= t - log(1+t) grows at least like t/2 past t = 2
    upper = max(1.0, 2.0 * target + 2.0)
    while omega(upper) < target:
        upper *= 2.0

    root = optimize.bisect(
        lambda t: omega(t) - target, 0.0, upper, xtol=1e-13, rtol=4 * np.finfo(float).eps
    )
    slope = root / (1.0 + root)
    if slope > 0.0:
        polished = root - (omega(root) - target) / slope
        if polished >= 0.0 and abs(omega(polished) - target) <= abs(omega(root) - target):
            root = polished
    return float(root)


@dataclass(frozen=True)
class AppendixConstants:
    """Absolute constants steering the Newton-CG and proximal-point schedules."""

    alpha_star: float
    r1: float
    r2: float
    r3: float
    c1: float
    c2: float
    c3: float

    @classmethod
    def default(cls) -> "AppendixConstants":
        alpha_star = 1e-4
        r1 = 0.49
        r2 = r1 / math.sqrt(1.0 - alpha_star)
        r3 = math.sqrt(1.0 - alpha_star) / (1.0 + alpha_star) * r1
        c3 = (1.0 / r2 - 1.0) / (1.0 / r2 - 2.0)
        return cls(alpha_star=alpha_star, r1=r1, r2=r2, r3=r3, c1=9.0, c2=0.95, c3=c3)


APPENDIX = AppendixConstants.default()


def local_contraction_factor(
    t: float, zeta: float, constants: AppendixConstants = APPENDIX
) -> float:
    """Factor g(t, zeta) with lambda_f(x_{k+1})^2 <= g * lambda_f(x_k)^2 in the local phase."""
    a = constants.alpha_star
    shrink = 1.0 - t * zeta
    if shrink <= 0.0:
        return math.inf
    first = 1.0 - 2.0 * t * (1.0 - a) ** 2 * (shrink + (t * zeta) ** 2 / 3.0)
    return (
        first / shrink**2
        + t**2 * (1.0 + a) ** 2 / shrink**4
        + a * t / shrink**2 * ((1.0 + a) ** 2 / shrink**2 + 1.0)
    )


def local_contraction_bound(
    zeta_lower: float, zeta_upper: float, constants: AppendixConstants = APPENDIX
) -> float:
    """
    Upper bound of local_contraction_factor over zeta in [zeta_lower, zeta_upper],
    where zeta = kappa * sqrt(delta_k) and the step size ranges over the
    interval the inexact CG direction allows.
    """
    a = constants.alpha_star
    t_upper = 1.0 / ((1.0 - a) ** 2 / (1.0 + a) + 3.0 * zeta_lower)
    t_lower = 1.0 / ((1.0 + a) ** 2 / (1.0 - a) + 3.0 * zeta_upper)
    shrink_upper = 1.0 - t_upper * zeta_upper
    if shrink_upper <= 0.0:
        return math.inf
    first = (1.0 - 2.0 * t_lower * (1.0 - a) ** 2 * shrink_upper) / (
        1.0 - t_lower * zeta_lower
    ) ** 2
    second = t_upper**2 * (1.0 + a) ** 2 / shrink_upper**4
    third = a * t_upper / shrink_upper**2 * ((1.0 + a) ** 2 / shrink_upper**2 + 1.0)
    return first + second + third


def verify_local_contraction(
    n_intervals: int = 1000, constants: AppendixConstants = APPENDIX
) -> float:
    """Worst contraction bound over an equal split of the local-phase zeta range."""
    zeta_max = (1.0 + constants.alpha_star) / math.sqrt(1.0 - constants.alpha_star) * constants.r1
    edges = np.linspace(0.0, zeta_max, n_intervals + 1)
    worst = max(
        local_contraction_bound(float(lo), float(hi), constants)
        for lo, hi in zip(edges[:-1], edges[1:])
    )
    logger.debug("Local contraction over %d intervals: worst bound %.6f", n_intervals, worst)
    return worst
