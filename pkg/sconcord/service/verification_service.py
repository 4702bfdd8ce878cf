from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Literal

import numpy as np

from sconcord.core.numerics import cg_inverse, lanczos_extreme, solve_pd
from sconcord.core.oracle import ReferencePair, Sampler, check_derivatives, check_self_concordance
from sconcord.core.scalar import (
    APPENDIX,
    gamma_f,
    omega,
    omega_quadratic_floor,
    omega_star,
    verify_local_contraction,
)
from sconcord.model.schemas import ProblemKind
from sconcord.problems.demos import log_barrier_demo
from sconcord.problems.registry import build_pair, generate
from sconcord.problems.sampling import positive_log_uniform, scaled_gaussian

logger = logging.getLogger(__name__)

Scope = Literal["derivatives", "self_concordance", "scalar_identities", "numerics", "all"]
SCOPES: tuple[str, ...] = ("scalar_identities", "numerics", "derivatives", "self_concordance")

# local-phase contraction bound proven by the interval split
LOCAL_CONTRACTION_LIMIT = 0.945


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    worst: float
    threshold: float
    detail: str = ""


@dataclass
class SuiteResult:
    scope: str
    checks: List[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name: str, worst: float, threshold: float, detail: str = "") -> None:
        passed = bool(worst <= threshold)
        self.checks.append(CheckResult(name, passed, float(worst), float(threshold), detail))
        if not passed:
            logger.warning(
                "%s/%s failed: %.4g > %.4g %s", self.scope, name, worst, threshold, detail
            )


def _moderate_sampler(pair: ReferencePair) -> Sampler:
    # finite differences need the point well away from a barrier boundary
    if pair.objective.in_domain(-np.ones(pair.dim)):
        return scaled_gaussian(pair.dim, -0.5, 0.5)
    return positive_log_uniform(pair.dim, -0.5, 0.5)


class VerificationService:
    """Runs the invariant suites behind `verify`, on the desk-size problem instances."""

    def __init__(self, seed: int = 0) -> None:
        self.seed = seed
        self._pairs: Dict[ProblemKind, ReferencePair] = {}

    def pair(self, problem: ProblemKind) -> ReferencePair:
        if problem not in self._pairs:
            self._pairs[problem] = build_pair(generate(problem, self.seed, {}))
        return self._pairs[problem]

    # ---- suites ----
    def scalar_identities(self) -> SuiteResult:
        suite = SuiteResult("scalar_identities")
        worst = 0.0
        for z in np.arange(0.0, 0.99 + 5e-4, 1e-3):
            t = z / (1.0 - z)
            worst = max(worst, abs(float(omega_star(z)) - (z * t - omega(t))))
        suite.add("conjugacy", worst, 1e-9)

        rng = np.random.default_rng(self.seed)
        worst = -math.inf
        for z, t in zip(rng.uniform(0.0, 0.99, 2000), rng.exponential(5.0, 2000)):
            worst = max(worst, z * t - omega(t) - float(omega_star(z)))
        suite.add("fenchel_young", worst, 1e-12)

        worst = -math.inf
        for gamma in (0.1, 1.0, 10.0):
            for z in np.linspace(0.0, gamma, 1001):
                worst = max(worst, omega_quadratic_floor(z, gamma) - omega(z))
        suite.add("quadratic_floor", worst, 0.0)

        worst = 0.0
        for t in np.linspace(0.0, 50.0, 501):
            worst = max(worst, abs(gamma_f(omega(t), 1.0) - t) / (1.0 + t))
        suite.add("gamma_inverts_omega", worst, 1e-9)

        grid = np.linspace(0.0, 0.98, 500)
        drops = [
            max(0.0, omega(a) - omega(b)) + max(0.0, float(omega_star(a)) - float(omega_star(b)))
            for a, b in zip(grid[:-1], grid[1:])
        ]
        suite.add("monotonicity", max(drops), 0.0)

        contraction = verify_local_contraction(1000, APPENDIX)
        suite.add("local_contraction", contraction, LOCAL_CONTRACTION_LIMIT)
        return suite

    def numerics(self, systems: int = 100, dim: int = 100) -> SuiteResult:
        suite = SuiteResult("numerics")
        rng = np.random.default_rng(self.seed)
        alpha = APPENDIX.alpha_star
        sandwich = 0.0
        residual = 0.0
        overshoot = 0.0
        for k in range(systems):
            Q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
            eigenvalues = np.exp(rng.uniform(0.0, math.log(1e2), dim))
            H = (Q * eigenvalues) @ Q.T
            H = 0.5 * (H + H.T)
            g = rng.standard_normal(dim)
            exact = np.linalg.solve(H, g)
            energy = float(g @ exact)
            beta = max(math.sqrt(eigenvalues.max() / eigenvalues.min()), 1.0 + 1e-9)
            h = cg_inverse(H, g, beta, alpha)
            rel = abs(float(h @ g) - energy) / energy
            sandwich = max(sandwich, rel - alpha)

            solved = solve_pd(H, g)
            residual = max(
                residual,
                float(np.linalg.norm(H @ solved.solution - g)) / (1.0 + float(np.linalg.norm(g))),
            )

            top = lanczos_extreme(H, "largest", rel_tol=1e-2, seed=self.seed + k)
            overshoot = max(overshoot, (top.value - eigenvalues.max()) / eigenvalues.max())
        suite.add("cg_sandwich", sandwich, 1e-12, f"{systems} systems")
        suite.add("pd_residual", residual, 1e-10)
        suite.add("lanczos_upper", overshoot, 1e-12)
        return suite

    def derivatives(self, n_points: int = 10) -> SuiteResult:
        suite = SuiteResult("derivatives")
        for problem in ProblemKind:
            pair = self.pair(problem)
            sampler = _moderate_sampler(pair)
            rng = np.random.default_rng(self.seed)
            worst_f = 0.0
            worst_ref = 0.0
            for k in range(n_points):
                x = sampler(rng)
                for oracle, label in ((pair.objective, "f"), (pair.reference, "F")):
                    report = check_derivatives(oracle, x, n_dirs=5, seed=self.seed + k)
                    err = max(report.gradient_error, report.hessian_error)
                    if label == "f":
                        worst_f = max(worst_f, err)
                    else:
                        worst_ref = max(worst_ref, err)
            suite.add(f"{problem.value}:f", worst_f, 1e-5)
            suite.add(f"{problem.value}:F", worst_ref, 1e-5)

            rng = np.random.default_rng(self.seed + 1)
            consistency = 0.0
            for _ in range(20):
                x = sampler(rng)
                v = rng.standard_normal(pair.dim)
                H = pair.objective.hessian(x)
                gap = float(np.linalg.norm(H @ v - pair.objective.hvp(x, v)))
                scale = 1.0 + float(np.linalg.norm(H, 2)) * float(np.linalg.norm(v))
                consistency = max(consistency, gap / scale)
            suite.add(f"{problem.value}:hvp", consistency, 1e-10)
        return suite

    def self_concordance(self, n_points: int = 10, n_dirs: int = 10) -> SuiteResult:
        suite = SuiteResult("self_concordance")
        barrier = check_self_concordance(
            log_barrier_demo(1), n_points=n_points, n_dirs=n_dirs, seed=self.seed
        )
        suite.add(
            "neg_log_equality", abs(barrier.worst_ratio - 1.0), 1e-4, "worst ratio of -log x"
        )
        for problem in ProblemKind:
            pair = self.pair(problem)
            report = check_self_concordance(
                pair, n_points=n_points, n_dirs=n_dirs, seed=self.seed
            )
            ratio = math.inf
            if report.assumption_violations == 0:
                ratio = report.worst_ratio / pair.kappa
            suite.add(
                problem.value,
                ratio,
                1.0 + 1e-3,
                f"kappa={pair.kappa:g}, {report.samples} samples",
            )
        return suite

    def run(self, scope: Scope) -> List[SuiteResult]:
        suites: Dict[str, Callable[[], SuiteResult]] = {
            "scalar_identities": self.scalar_identities,
            "numerics": self.numerics,
            "derivatives": self.derivatives,
            "self_concordance": self.self_concordance,
        }
        selected = SCOPES if scope == "all" else (scope,)
        results = []
        for name in selected:
            logger.info("Running verification suite %s", name)
            results.append(suites[name]())
        return results
