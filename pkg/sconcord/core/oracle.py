"""
Function oracles consumed by every solver, the objective/reference pairing,
and the finite-difference and self-concordance verification utilities.
"""

from __future__ import annotations

import logging
import math
import threading
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional

import numpy as np
import numpy.typing as npt
from scipy.sparse.linalg import LinearOperator

from sconcord.core.numerics import lanczos_extreme
from sconcord.core.scalar import ExtendedReal, scaled_omega, scaled_omega_star
from sconcord.errors import DomainError

logger = logging.getLogger(__name__)

Vector = npt.NDArray[np.float64]
Matrix = npt.NDArray[np.float64]
Sampler = Callable[[np.random.Generator], Vector]

_EPS = float(np.finfo(float).eps)
# Finite-difference steps are halved at most this many times to stay in the domain
_MAX_SHRINKS = 10
# above this dimension lambda_min is estimated by Lanczos
DENSE_EIGEN_LIMIT = 400


def _whole_space(x: Vector) -> bool:
    return bool(np.all(np.isfinite(x)))


@dataclass
class OracleCalls:
    value: int = 0
    gradient: int = 0
    hessian: int = 0
    hvp: int = 0

    def as_dict(self) -> Dict[str, int]:
        return {
            "value": self.value,
            "gradient": self.gradient,
            "hessian": self.hessian,
            "hvp": self.hvp,
        }


class OracleHandle:
    """
    A twice-differentiable objective with domain membership.

    At least one of `hessian` and `hvp` must be supplied; the missing one is
    derived from the other (column-by-column assembly, or a dense product).
    Call counters are shared across threads and protected by a lock.
    """

    def __init__(
        self,
        dim: int,
        evaluate: Callable[[Vector], float],
        gradient: Callable[[Vector], Vector],
        hessian: Optional[Callable[[Vector], Matrix]] = None,
        hvp: Optional[Callable[[Vector, Vector], Vector]] = None,
        in_domain: Optional[Callable[[Vector], bool]] = None,
        name: str = "objective",
    ) -> None:
        if dim < 1:
            raise ValueError(f"Oracle dimension must be positive, got {dim}")
        if hessian is None and hvp is None:
            raise ValueError("An oracle needs a Hessian or a Hessian-vector product")
        self.dim = int(dim)
        self.name = name
        self._evaluate = evaluate
        self._gradient = gradient
        self._hessian = hessian
        self._hvp = hvp
        self._in_domain = in_domain or _whole_space
        self._lock = threading.Lock()
        self.calls = OracleCalls()

    # ---- counting ----
    def _count(self, kind: str) -> None:
        with self._lock:
            setattr(self.calls, kind, getattr(self.calls, kind) + 1)

    def reset_calls(self) -> None:
        with self._lock:
            self.calls = OracleCalls()

    def snapshot_calls(self) -> OracleCalls:
        with self._lock:
            return OracleCalls(**self.calls.as_dict())

    @property
    def has_explicit_hessian(self) -> bool:
        return self._hessian is not None

    # ---- raw evaluation (uncounted) ----
    def _raw_value(self, x: Vector) -> float:
        if not self._in_domain(x):
            return math.inf
        value = float(self._evaluate(x))
        return value if math.isfinite(value) else math.inf

    def _raw_hessian(self, x: Vector) -> Matrix:
        if self._hessian is not None:
            return np.asarray(self._hessian(x), dtype=float)
        columns = [self._hvp(x, e) for e in np.eye(self.dim)]  # type: ignore[misc]
        assembled = np.column_stack(columns)
        return 0.5 * (assembled + assembled.T)

    def _raw_hvp(self, x: Vector, v: Vector) -> Vector:
        if self._hvp is not None:
            return np.asarray(self._hvp(x, v), dtype=float)
        return self._raw_hessian(x) @ v

    # ---- public queries ----
    def in_domain(self, x: Vector) -> bool:
        return bool(self._in_domain(x))

    def value(self, x: Vector) -> float:
        """f(x), or +inf outside the domain."""
        self._count("value")
        return self._raw_value(x)

    def gradient(self, x: Vector) -> Vector:
        self._count("gradient")
        return np.asarray(self._gradient(x), dtype=float)

    def hessian(self, x: Vector) -> Matrix:
        self._count("hessian")
        return self._raw_hessian(x)

    def hvp(self, x: Vector, v: Vector) -> Vector:
        self._count("hvp")
        return self._raw_hvp(x, v)

    # ---- arithmetic ----
    def scaled(self, alpha: float, name: Optional[str] = None) -> "OracleHandle":
        """The oracle of alpha * f on the same domain."""
        alpha = float(alpha)
        hessian = None
        if self._hessian is not None:
            hessian = lambda x: alpha * self._raw_hessian(x)  # noqa: E731
        return OracleHandle(
            dim=self.dim,
            evaluate=lambda x: alpha * self._raw_value(x) if alpha != 0.0 else 0.0,
            gradient=lambda x: alpha * np.asarray(self._gradient(x), dtype=float),
            hessian=hessian,
            hvp=lambda x, v: alpha * self._raw_hvp(x, v),
            in_domain=self._in_domain,
            name=name or f"{alpha:g}*{self.name}",
        )

    def plus(self, other: "OracleHandle", name: Optional[str] = None) -> "OracleHandle":
        """The oracle of f + g on the intersection of both domains."""
        if other.dim != self.dim:
            raise ValueError(f"Cannot add oracles of dimension {self.dim} and {other.dim}")
        hessian = None
        if self._hessian is not None and other._hessian is not None:
            hessian = lambda x: self._raw_hessian(x) + other._raw_hessian(x)  # noqa: E731
        return OracleHandle(
            dim=self.dim,
            evaluate=lambda x: self._raw_value(x) + other._raw_value(x),
            gradient=lambda x: np.asarray(self._gradient(x), dtype=float)
            + np.asarray(other._gradient(x), dtype=float),
            hessian=hessian,
            hvp=lambda x, v: self._raw_hvp(x, v) + other._raw_hvp(x, v),
            in_domain=lambda x: self.in_domain(x) and other.in_domain(x),
            name=name or f"{self.name}+{other.name}",
        )


def zero_oracle(dim: int) -> OracleHandle:
    return OracleHandle(
        dim=dim,
        evaluate=lambda x: 0.0,
        gradient=lambda x: np.zeros(dim),
        hessian=lambda x: np.zeros((dim, dim)),
        hvp=lambda x, v: np.zeros(dim),
        name="zero",
    )


def quadratic_oracle(
    matrix: Matrix, linear: Optional[Vector] = None, name: str = "quadratic"
) -> OracleHandle:
    """f(x) = 1/2 x^T A x + b^T x for a symmetric A."""
    a = np.asarray(matrix, dtype=float)
    a = 0.5 * (a + a.T)
    b = np.zeros(a.shape[0]) if linear is None else np.asarray(linear, dtype=float)
    return OracleHandle(
        dim=a.shape[0],
        evaluate=lambda x: 0.5 * float(x @ a @ x) + float(b @ x),
        gradient=lambda x: a @ x + b,
        hessian=lambda x: a.copy(),
        hvp=lambda x, v: a @ v,
        name=name,
    )


@dataclass
class ReferencePair:
    """An objective f, its convex reference F, and the constants kappa, kappa_F."""

    objective: OracleHandle
    reference: OracleHandle
    kappa: float
    kappa_ref: Optional[float] = None
    lower_bound_hint: Optional[float] = None
    sampler: Optional[Sampler] = None
    name: str = "pair"

    def __post_init__(self) -> None:
        if self.objective.dim != self.reference.dim:
            raise ValueError(
                f"Objective and reference dimensions differ: "
                f"{self.objective.dim} vs {self.reference.dim}"
            )
        if self.kappa < 0:
            raise ValueError(f"kappa must be nonnegative, got {self.kappa}")
        if self.kappa_ref is not None and self.kappa_ref < 0:
            raise ValueError(f"kappa_ref must be nonnegative, got {self.kappa_ref}")

    @property
    def dim(self) -> int:
        return self.objective.dim

    def combined(self) -> OracleHandle:
        """f + F."""
        return self.objective.plus(self.reference, name=f"{self.name}:f+F")

    def with_sigma(self, sigma: float) -> "ReferencePair":
        """The pair (f, sigma F); sigma F is kappa_F / sqrt(sigma) self-concordant."""
        kappa_ref = None
        if self.kappa_ref is not None:
            kappa_ref = self.kappa_ref / math.sqrt(sigma)
        return ReferencePair(
            objective=self.objective,
            reference=self.reference.scaled(sigma),
            kappa=self.kappa,
            kappa_ref=kappa_ref,
            lower_bound_hint=self.lower_bound_hint,
            sampler=self.sampler,
            name=self.name,
        )


def conic_combination(
    first: ReferencePair, second: ReferencePair, alpha1: float, alpha2: float
) -> ReferencePair:
    """alpha1 f1 + alpha2 f2 with reference alpha1 F1 + alpha2 F2."""
    if alpha1 <= 0 or alpha2 <= 0:
        raise ValueError("Conic weights must be positive")

    def _merge(k1: Optional[float], k2: Optional[float]) -> Optional[float]:
        if k1 is None or k2 is None:
            return None
        return max(k1 / math.sqrt(alpha1), k2 / math.sqrt(alpha2))

    hint = None
    if first.lower_bound_hint is not None and second.lower_bound_hint is not None:
        hint = alpha1 * first.lower_bound_hint + alpha2 * second.lower_bound_hint
    return ReferencePair(
        objective=first.objective.scaled(alpha1).plus(second.objective.scaled(alpha2)),
        reference=first.reference.scaled(alpha1).plus(second.reference.scaled(alpha2)),
        kappa=max(first.kappa / math.sqrt(alpha1), second.kappa / math.sqrt(alpha2)),
        kappa_ref=_merge(first.kappa_ref, second.kappa_ref),
        lower_bound_hint=hint,
        sampler=first.sampler,
        name=f"{first.name}+{second.name}",
    )


@dataclass(frozen=True)
class StepQuantities:
    rho: float
    delta: float
    delta_ref: float
    eta: float
    t_bar: float

    @classmethod
    def from_scalars(
        cls, rho: float, delta: float, delta_ref: float, kappa: float
    ) -> "StepQuantities":
        curv = delta + delta_ref
        if curv <= 0.0:
            return cls(rho, delta, delta_ref, math.inf, math.inf)
        root = math.sqrt(curv)
        eta = rho / root
        t_bar = rho / (curv + kappa * rho * root) if rho > 0.0 else 0.0
        return cls(rho, delta, delta_ref, eta, t_bar)

    @property
    def curvature(self) -> float:
        return self.delta + self.delta_ref


def step_quantities(
    pair: ReferencePair, x: Vector, d: Vector, sigma: float = 1.0
) -> StepQuantities:
    """rho, delta, Delta, eta and t_bar of direction d at x (Delta scaled by sigma)."""
    rho = -float(pair.objective.gradient(x) @ d)
    delta = float(d @ pair.objective.hvp(x, d))
    delta_ref = sigma * float(d @ pair.reference.hvp(x, d))
    return StepQuantities.from_scalars(rho, delta, delta_ref, pair.kappa)


def descent_bound(pair: ReferencePair, x: Vector, d: Vector, t: float) -> ExtendedReal:
    """
    Upper bound on f(x + t d) from the descent inequality:
    f(x) - rho t + kappa^-2 omega_star(kappa t sqrt(delta + Delta)), tightened by
    - kappa_F^-2 omega(kappa_F t sqrt(Delta)) when kappa_F is known.
    """
    q = step_quantities(pair, x, d)
    if q.curvature < 0.0:
        return ExtendedReal.infinity()
    f_x = pair.objective.value(x)
    bound = f_x - q.rho * t + scaled_omega_star(pair.kappa, t * math.sqrt(q.curvature))
    if not bound.is_finite or pair.kappa_ref is None:
        return bound
    return ExtendedReal.of(
        bound.value - scaled_omega(pair.kappa_ref, t * math.sqrt(max(q.delta_ref, 0.0)))
    )


# ---------------------------------------------------------------------------
# Finite-difference verification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DerivativeReport:
    gradient_error: float
    hessian_error: float
    epsilon: float

    def passed(self, tol: float = 1e-5) -> bool:
        return self.gradient_error <= tol and self.hessian_error <= tol


def _unit_directions(dim: int, count: int, rng: np.random.Generator) -> list[Vector]:
    directions = []
    while len(directions) < count:
        h = rng.standard_normal(dim)
        norm = float(np.linalg.norm(h))
        if norm > 0.0:
            directions.append(h / norm)
    return directions


def _feasible_step(
    oracle: OracleHandle, x: Vector, h: Vector, eps: float, reach: int = 1
) -> float:
    offsets = [s * k for k in range(1, reach + 1) for s in (1, -1)]
    for _ in range(_MAX_SHRINKS + 1):
        if all(oracle.in_domain(x + c * eps * h) for c in offsets):
            return eps
        eps *= 0.5
    raise DomainError(f"{oracle.name}: no feasible finite-difference step around the point")


def _mixed_error(estimate: float, exact: float) -> float:
    # relative for large magnitudes, absolute below one
    return abs(estimate - exact) / (1.0 + abs(exact))


def check_derivatives(
    oracle: OracleHandle, x: Vector, n_dirs: int = 10, seed: int = 0
) -> DerivativeReport:
    """
    Central-difference comparison of the gradient and Hessian against values
    and gradients along random unit directions.
    """
    x = np.asarray(x, dtype=float)
    if not oracle.in_domain(x):
        raise DomainError(f"{oracle.name}: derivative check requested outside the domain")
    rng = np.random.default_rng(seed)
    base_eps = _EPS ** (1.0 / 3.0) * (1.0 + float(np.linalg.norm(x)))
    grad = oracle._gradient(x)
    worst_grad = 0.0
    worst_hess = 0.0
    used_eps = base_eps
    for h in _unit_directions(oracle.dim, n_dirs, rng):
        eps = _feasible_step(oracle, x, h, base_eps)
        used_eps = min(used_eps, eps)
        fd_slope = (oracle._raw_value(x + eps * h) - oracle._raw_value(x - eps * h)) / (2 * eps)
        worst_grad = max(worst_grad, _mixed_error(fd_slope, float(grad @ h)))

        fd_hess = (
            np.asarray(oracle._gradient(x + eps * h)) - np.asarray(oracle._gradient(x - eps * h))
        ) / (2 * eps)
        exact = oracle._raw_hvp(x, h)
        error = float(np.linalg.norm(fd_hess - exact)) / (1.0 + float(np.linalg.norm(exact)))
        worst_hess = max(worst_hess, error)
    logger.debug(
        "%s derivative check: gradient %.2e, hessian %.2e", oracle.name, worst_grad, worst_hess
    )
    return DerivativeReport(gradient_error=worst_grad, hessian_error=worst_hess, epsilon=used_eps)


def third_directional(oracle_sum: OracleHandle, x: Vector, h: Vector) -> float:
    """
    Estimate of D^3 g(x)[h, h, h] by differencing the Hessian quadratic form
    q(y) = h^T D^2 g(y) h with a five-point stencil (fourth-root step).
    """
    x = np.asarray(x, dtype=float)
    h = np.asarray(h, dtype=float)
    eps = _feasible_step(
        oracle_sum, x, h, _EPS ** (1.0 / 4.0) * (1.0 + float(np.linalg.norm(x))), reach=2
    )

    def q(y: Vector) -> float:
        return float(h @ oracle_sum._raw_hvp(y, h))

    return (
        -q(x + 2 * eps * h) + 8.0 * q(x + eps * h) - 8.0 * q(x - eps * h) + q(x - 2 * eps * h)
    ) / (12.0 * eps)


def _smallest_curvature(g: OracleHandle, x: Vector, seed: int) -> tuple[float, Vector]:
    """lambda_min of D^2 g(x) and its unit eigenvector."""
    if g.dim <= DENSE_EIGEN_LIMIT:
        eigenvalues, eigenvectors = np.linalg.eigh(g._raw_hessian(x))
        return float(eigenvalues[0]), eigenvectors[:, 0]
    op = LinearOperator(
        shape=(g.dim, g.dim), matvec=lambda v: g._raw_hvp(x, np.ravel(v)), dtype=np.float64
    )
    estimate = lanczos_extreme(op, "smallest", rel_tol=1e-2, seed=seed)
    vector = estimate.vector / max(float(np.linalg.norm(estimate.vector)), _EPS)
    return estimate.value, vector


@dataclass
class SelfConcordanceReport:
    passed: bool
    worst_ratio: float
    kappa: float
    samples: int
    assumption_violations: int = 0
    sc_failures: int = 0
    min_curvature: float = math.inf
    notes: list[str] = field(default_factory=list)


def check_self_concordance(
    pair: ReferencePair,
    n_points: int = 10,
    n_dirs: int = 10,
    seed: int = 0,
    slack: float = 1e-3,
    sampler: Optional[Sampler] = None,
) -> SelfConcordanceReport:
    """
    Samples (x, h) and checks |D^3(f+F)[h,h,h]| <= 2 kappa (D^2(f+F)[h,h])^{3/2} (1 + slack).
    Besides the random directions, every point tests the eigendirection of
    lambda_min(D^2(f+F)). lambda_min <= 0, or a nonpositive curvature along
    any direction, counts as an Assumption-1 violation rather than an
    inequality failure.
    """
    sampler = sampler or pair.sampler
    if sampler is None:
        raise ValueError(f"{pair.name}: no interior sampler available for the SC check")
    rng = np.random.default_rng(seed)
    g = pair.combined()
    worst = 0.0
    violations = 0
    failures = 0
    samples = 0
    min_curvature = math.inf
    for k in range(n_points):
        x = np.asarray(sampler(rng), dtype=float)
        if not g.in_domain(x):
            raise DomainError(f"{pair.name}: sampler produced a point outside the domain")
        lam_min, v_min = _smallest_curvature(g, x, seed + k)
        min_curvature = min(min_curvature, lam_min)
        if lam_min <= 0.0:
            samples += 1
            violations += 1
            logger.debug("%s: lambda_min %.4g <= 0 at a sampled point", pair.name, lam_min)
        directions = _unit_directions(pair.dim, n_dirs, rng)
        if lam_min > 0.0:
            directions.append(v_min)
        for h in directions:
            samples += 1
            curvature = float(h @ g._raw_hvp(x, h))
            if curvature <= 0.0:
                violations += 1
                continue
            ratio = abs(third_directional(g, x, h)) / (2.0 * curvature**1.5)
            worst = max(worst, ratio)
            if ratio > pair.kappa * (1.0 + slack):
                failures += 1
    passed = violations == 0 and failures == 0
    if not passed:
        logger.warning(
            "%s SC check failed: worst ratio %.4g vs kappa %.4g (%d violations, %d failures)",
            pair.name,
            worst,
            pair.kappa,
            violations,
            failures,
        )
    return SelfConcordanceReport(
        passed=passed,
        worst_ratio=worst,
        kappa=pair.kappa,
        samples=samples,
        assumption_violations=violations,
        sc_failures=failures,
        min_curvature=min_curvature,
    )
