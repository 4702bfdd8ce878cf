"""
Line-search-free Newton-CG for convex kappa-self-concordant functions.

Each iteration inverts the Hessian approximately with a fixed CG budget
driven by a running bound beta_k on sqrt(cond). A global phase takes damped
steps while rho_k > R1^2 / kappa^2 and inflates beta_k by B_k; the local
phase re-estimates the condition number once and keeps it.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import List, Literal, Optional

import numpy as np
from scipy.sparse.linalg import LinearOperator

from sconcord.core.numerics import CountingOperator, cg_inverse, solve_pd, sqrt_cond
from sconcord.core.oracle import OracleHandle, Vector
from sconcord.core.scalar import APPENDIX, omega
from sconcord.errors import AssumptionViolation, DomainError
from sconcord.model.schemas import NewtonCgConfig, NewtonCgTraceRecord

logger = logging.getLogger(__name__)

Certificate = Literal["early_exit_at_x0", "converged", "max_iters", "aborted"]


@dataclass
class NewtonCgState:
    beta_k: float
    beta_local: Optional[float] = None
    flag: bool = True
    k_star_reached: bool = False
    k_star: Optional[int] = None


@dataclass
class NewtonCgResult:
    point: Vector
    certificate: Certificate
    trace: List[NewtonCgTraceRecord] = field(default_factory=list)
    hvp_count: int = 0
    iterations: int = 0
    state: Optional[NewtonCgState] = None
    message: Optional[str] = None

    @property
    def succeeded(self) -> bool:
        return self.certificate in ("early_exit_at_x0", "converged")


def lambda_f(oracle: OracleHandle, x: Vector) -> float:
    """Newton decrement sqrt(g^T H^{-1} g) by direct factorization."""
    g = oracle.gradient(x)
    solved = solve_pd(oracle.hessian(x), g)
    if not solved.success:
        raise AssumptionViolation(
            f"{oracle.name}: Hessian not positive definite (pivot {solved.smallest_pivot:.3e})"
        )
    return math.sqrt(max(float(g @ solved.solution), 0.0))


def default_max_iters(kappa: float, eps1: float, gap_budget: float) -> int:
    """2 + ceil(kappa^2 gap / omega(R3)) + ceil(2 log_{1/C2}(R2 / (kappa eps1)))."""
    if kappa == 0.0:
        return 2
    global_steps = math.ceil(kappa * kappa * gap_budget / omega(APPENDIX.r3))
    local_steps = math.ceil(
        2.0 * math.log(APPENDIX.r2 / (kappa * eps1)) / math.log(1.0 / APPENDIX.c2)
    )
    return 2 + global_steps + max(local_steps, 0)


def _hessian_operator(oracle: OracleHandle, x: Vector, hvp_only: bool) -> CountingOperator:
    if hvp_only or not oracle.has_explicit_hessian:
        return CountingOperator(
            LinearOperator(
                shape=(oracle.dim, oracle.dim),
                matvec=lambda v: oracle.hvp(x, np.asarray(v).reshape(-1)),
                dtype=np.float64,
            )
        )
    return CountingOperator(oracle.hessian(x))


def _direct_solve(oracle: OracleHandle, x0: Vector, config: NewtonCgConfig) -> NewtonCgResult:
    # kappa = 0: the thresholds degenerate and a quadratic is solved exactly
    x = np.array(x0, dtype=float)
    trace: List[NewtonCgTraceRecord] = []
    start = time.perf_counter_ns()
    for k in range(config.max_iters):
        g = oracle.gradient(x)
        H = oracle.hessian(x)
        solved = solve_pd(H, g)
        if not solved.success:
            return NewtonCgResult(x, "aborted", trace, 0, k, message="indefinite Hessian")
        rho = float(g @ solved.solution)
        trace.append(
            NewtonCgTraceRecord(
                k=k,
                f_value=oracle.value(x),
                rho=rho,
                delta=rho,
                step_size=1.0,
                beta_k=1.0,
                phase="exit" if rho <= config.eps1**2 else "local",
                hvp_count=0,
                wall_nanos=time.perf_counter_ns() - start,
            )
        )
        if k == 0 and rho <= config.eps0**2:
            return NewtonCgResult(x, "early_exit_at_x0", trace, 0, k)
        if rho <= config.eps1**2:
            return NewtonCgResult(x, "converged", trace, 0, k)
        x = x - solved.solution
    return NewtonCgResult(x, "max_iters", trace, 0, config.max_iters)


def newton_cg_solve(
    oracle: OracleHandle, x0: Vector, config: NewtonCgConfig, seed: int = 0
) -> NewtonCgResult:
    x = np.array(x0, dtype=float)
    if not oracle.in_domain(x):
        raise DomainError(f"{oracle.name}: Newton-CG start outside the domain")
    if config.kappa == 0.0:
        return _direct_solve(oracle, x, config)

    c = APPENDIX
    kappa = config.kappa
    alpha = c.alpha_star
    half_fail = 0.5 * config.fail_prob
    local_threshold = c.r1**2 / kappa**2
    hvp_count = 0
    start = time.perf_counter_ns()

    op = _hessian_operator(oracle, x, config.hvp_only)
    beta0 = sqrt_cond(op, half_fail, config.beta, seed=seed)
    hvp_count += op.matvecs
    if not math.isfinite(beta0):
        return NewtonCgResult(x, "aborted", [], hvp_count, 0, message="sqrt_cond failed at x0")
    state = NewtonCgState(beta_k=max(beta0, 1.0 + 1e-12))
    trace: List[NewtonCgTraceRecord] = []
    f_x = oracle.value(x)
    logger.info(
        "Newton-CG on %s: kappa=%.3g beta0=%.3e f0=%.6e", oracle.name, kappa, state.beta_k, f_x
    )

    for k in range(config.max_iters):
        g = oracle.gradient(x)
        if k > 0:
            op = _hessian_operator(oracle, x, config.hvp_only)
        before = op.matvecs
        h = cg_inverse(op, g, state.beta_k, alpha)
        rho = float(h @ g)
        delta = float(h @ op.matvec(h))
        hvp_count += op.matvecs - before

        exit_now = rho <= (1.0 - alpha) * config.eps1**2 or (
            k == 0 and rho <= (1.0 - alpha) * config.eps0**2
        )
        if exit_now:
            trace.append(
                NewtonCgTraceRecord(
                    k=k,
                    f_value=f_x,
                    rho=rho,
                    delta=delta,
                    step_size=0.0,
                    beta_k=state.beta_k,
                    phase="exit",
                    hvp_count=hvp_count,
                    wall_nanos=time.perf_counter_ns() - start,
                )
            )
            certificate: Certificate = "early_exit_at_x0" if k == 0 else "converged"
            logger.info("Newton-CG %s after %d iterations (rho=%.3e)", certificate, k, rho)
            return NewtonCgResult(x, certificate, trace, hvp_count, k, state)
        if delta <= 0.0:
            return NewtonCgResult(
                x, "aborted", trace, hvp_count, k, state, f"nonpositive curvature {delta:.3e}"
            )

        root = math.sqrt(delta)
        if rho > local_threshold:
            phase: Literal["global", "local"] = "global"
            t = rho / (delta + kappa * rho * root)
            growth = (1.0 + math.sqrt(1.0 + alpha) / (1.0 - alpha) * kappa * math.sqrt(rho)) ** 2
            beta_next = growth * state.beta_k
        else:
            phase = "local"
            if state.flag:
                before = op.matvecs
                beta_star = sqrt_cond(op, half_fail, state.beta_k, seed=seed + 1)
                hvp_count += op.matvecs - before
                state.beta_local = c.c3**4 * beta_star
                state.flag = False
                state.k_star_reached = True
                state.k_star = k
                logger.debug("Newton-CG local phase at k=%d: beta_local=%.3e", k, state.beta_local)
            t = rho / (delta + 2.0 * kappa * rho * root)
            beta_next = state.beta_local  # type: ignore[assignment]

        trace.append(
            NewtonCgTraceRecord(
                k=k,
                f_value=f_x,
                rho=rho,
                delta=delta,
                step_size=t,
                beta_k=state.beta_k,
                phase=phase,
                hvp_count=hvp_count,
                wall_nanos=time.perf_counter_ns() - start,
            )
        )
        x_next = x - t * h
        f_next = oracle.value(x_next)
        if not math.isfinite(f_next) or f_next > f_x + 1e-12 * (1.0 + abs(f_x)):
            message = f"iteration {k}: f increased {f_x:.6e} -> {f_next:.6e} (beta too small?)"
            logger.warning("Newton-CG aborted: %s", message)
            return NewtonCgResult(x, "aborted", trace, hvp_count, k, state, message)
        x, f_x = x_next, f_next
        state.beta_k = max(beta_next, 1.0 + 1e-12)

    logger.warning("Newton-CG hit max_iters=%d on %s", config.max_iters, oracle.name)
    return NewtonCgResult(x, "max_iters", trace, hvp_count, config.max_iters, state)
