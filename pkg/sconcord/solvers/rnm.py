"""
Regularized Newton method: x+ = x - (1 / (1 + kappa nu)) (D^2(f+F))^{-1} grad f,
where nu = nu_{f,F}(x) is the regularized Newton decrement.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass
from typing import List, NamedTuple, Optional

import numpy as np

from sconcord.core.numerics import solve_pd
from sconcord.core.oracle import ReferencePair, StepQuantities, Vector
from sconcord.core.scalar import gamma_f
from sconcord.errors import AssumptionViolation, DomainError
from sconcord.model.schemas import RnmConfig, SolveReport, SolveStatus, TraceRecord
from sconcord.solvers.reporting import build_report, call_counts, running_min

logger = logging.getLogger(__name__)

# nu^2 values in (-CLAMP * |g|^2, 0) are rounding noise
NU_SQUARED_CLAMP = 1e-12


class RnmStep(NamedTuple):
    x_next: Vector
    quantities: StepQuantities
    nu: float


def regularized_decrement(
    gradient: Vector, hess_objective: np.ndarray, hess_reference: np.ndarray
) -> tuple[Vector, float]:
    """Direction -(H_f + H_F)^{-1} g and nu = sqrt(g^T (H_f + H_F)^{-1} g)."""
    solved = solve_pd(hess_objective + hess_reference, gradient)
    if not solved.success:
        raise AssumptionViolation(
            f"D^2(f+F) is not positive definite (smallest pivot {solved.smallest_pivot:.3e})"
        )
    d = -solved.solution
    nu_sq = -float(gradient @ d)
    if nu_sq < 0.0:
        if nu_sq < -NU_SQUARED_CLAMP * float(gradient @ gradient):
            raise AssumptionViolation(f"negative squared decrement {nu_sq:.3e}")
        nu_sq = 0.0
    return d, math.sqrt(nu_sq)


def rnm_step(pair: ReferencePair, x: Vector) -> RnmStep:
    """One damped step with t = 1 / (1 + kappa nu)."""
    g = pair.objective.gradient(x)
    hess_f = pair.objective.hessian(x)
    hess_ref = pair.reference.hessian(x)
    d, nu = regularized_decrement(g, hess_f, hess_ref)
    t = 1.0 / (1.0 + pair.kappa * nu)
    delta = float(d @ hess_f @ d)
    delta_ref = float(d @ hess_ref @ d)
    quantities = StepQuantities(
        rho=nu * nu, delta=delta, delta_ref=delta_ref, eta=nu, t_bar=t if nu > 0.0 else 0.0
    )
    return RnmStep(x_next=x + t * d, quantities=quantities, nu=nu)


def rnm_solve(
    pair: ReferencePair, x0: Vector, config: Optional[RnmConfig] = None
) -> SolveReport:
    config = config or RnmConfig()
    oracle = pair.objective
    x = np.array(x0, dtype=float)
    if not oracle.in_domain(x):
        raise DomainError(f"{pair.name}: starting point outside the domain")

    f_x = oracle.value(x)
    best_f = f_x
    nus: List[float] = []
    trace: List[TraceRecord] = []
    status = SolveStatus.MAX_ITERS
    message: Optional[str] = None
    nu: Optional[float] = None
    steps = 0
    start = time.perf_counter_ns()
    logger.info("RNM on %s: dim=%d kappa=%.3g f0=%.6e", pair.name, pair.dim, pair.kappa, f_x)

    for j in range(config.max_iters + 1):
        try:
            step = rnm_step(pair, x)
        except AssumptionViolation as e:
            logger.warning("RNM iteration %d: %s", j, e)
            status, message = SolveStatus.ASSUMPTION_VIOLATION, str(e)
            break
        nu = step.nu
        nus.append(nu)
        t = step.quantities.t_bar
        if config.record_trace:
            trace.append(
                TraceRecord(
                    iter=j,
                    f_value=f_x,
                    nu=nu,
                    step_size=t,
                    accepted=True,
                    oracle_calls=call_counts(oracle),
                    wall_nanos=time.perf_counter_ns() - start,
                )
            )
        logger.debug("RNM iteration %d: f=%.10e nu=%.3e t=%.3e", j, f_x, nu, t)
        if nu <= config.tol_nu:
            status = SolveStatus.CONVERGED
            break
        if j == config.max_iters:
            break
        if not oracle.in_domain(step.x_next):
            message = f"iteration {j}: damped step left the domain"
            logger.warning("RNM %s", message)
            status = SolveStatus.DOMAIN_REJECTION
            break
        f_next = oracle.value(step.x_next)
        if f_next > f_x + 1e-9 * (1.0 + abs(f_x)):
            logger.warning("RNM iteration %d: f increased %.6e -> %.6e", j, f_x, f_next)
        x, f_x = step.x_next, f_next
        best_f = min(best_f, f_x)
        steps += 1

    logger.info(
        "RNM finished on %s: status=%s iterations=%d f=%.10e nu=%s",
        pair.name,
        status.value,
        steps,
        f_x,
        f"{nu:.3e}" if nu is not None else "n/a",
    )
    return build_report(
        method="rnm",
        status=status,
        x=x,
        f_x=f_x,
        nu=nu,
        trace=trace,
        oracle=oracle,
        best_f=best_f,
        min_nu=running_min(nus),
        iterations=steps,
        message=message,
    )


@dataclass(frozen=True)
class TheoremCheck:
    holds: bool
    worst_margin: float
    prefix_holds: List[bool]


def rnm_theorem_bound(
    report: SolveReport,
    lower_bound: float,
    kappa: float,
    f0: Optional[float] = None,
    tol: float = 1e-9,
) -> TheoremCheck:
    """
    Checks min_{j<=k} nu_j <= sqrt(2 (1 + Gamma) (f(x0) - lb) / (k + 1)) for
    every prefix of the trace, Gamma = gamma_f(f(x0) - lb, kappa).
    """
    if not report.trace:
        raise ValueError("rnm_theorem_bound needs a recorded trace")
    f0 = report.trace[0].f_value if f0 is None else f0
    gap = max(f0 - lower_bound, 0.0)
    gamma = gamma_f(gap, kappa)
    running = math.inf
    prefix: List[bool] = []
    worst = -math.inf
    for k, record in enumerate(report.trace):
        if record.nu is not None:
            running = min(running, record.nu)
        bound = math.sqrt(2.0 * (1.0 + gamma) * gap / (k + 1))
        margin = running - bound
        worst = max(worst, margin)
        prefix.append(margin <= tol)
    return TheoremCheck(holds=all(prefix), worst_margin=worst, prefix_holds=prefix)


def q_linear_ratios(report: SolveReport, f_star: float, floor: float = 1e-14) -> np.ndarray:
    """Successive optimality-gap ratios (f_{j+1} - f*) / (f_j - f*) while gaps exceed floor."""
    gaps = np.array([r.f_value - f_star for r in report.trace])
    gaps = gaps[gaps > floor]
    if gaps.size < 2:
        return np.array([])
    return gaps[1:] / gaps[:-1]
