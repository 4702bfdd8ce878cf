"""
Inexact proximal point method for (kappa, ell)-weakly self-concordant
objectives, with Newton-CG solving each strongly convex prox subproblem,
and the Moreau-envelope stationarity helpers.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Dict, List, Literal, Optional

import numpy as np

from sconcord.core.numerics import lanczos_extreme, solve_pd
from sconcord.core.oracle import OracleHandle, Vector
from sconcord.errors import AssumptionViolation, DomainError, SconcordError
from sconcord.model.schemas import IppmConfig, IppmOuterRecord, NewtonCgConfig
from sconcord.solvers.newton_cg import newton_cg_solve

logger = logging.getLogger(__name__)

IppmStatus = Literal["converged", "max_outer", "inner_failure"]


@dataclass
class ProxSubproblem:
    center: Vector
    oracle: OracleHandle


def prox_subproblem(objective: OracleHandle, center: Vector, mu: float) -> ProxSubproblem:
    """f_j(y) = f(y) + mu/2 ||y - z_j||^2."""
    z = np.array(center, dtype=float)
    dim = objective.dim
    proximal = OracleHandle(
        dim=dim,
        evaluate=lambda y: 0.5 * mu * float((y - z) @ (y - z)),
        gradient=lambda y: mu * (y - z),
        hessian=lambda y: mu * np.eye(dim),
        hvp=lambda y, v: mu * np.asarray(v, dtype=float),
        name="prox",
    )
    return ProxSubproblem(center=z, oracle=objective.plus(proximal, name=f"{objective.name}:prox"))


@dataclass
class IppmResult:
    point: Vector
    status: IppmStatus
    trace: List[IppmOuterRecord] = field(default_factory=list)
    hvp_count: int = 0
    outer_iterations: int = 0
    derived: Dict[str, float] = field(default_factory=dict)
    conditioning_log: List[str] = field(default_factory=list)
    message: Optional[str] = None


def _check_conditioning(
    sub: ProxSubproblem, point: Vector, bound: float, seed: int, log: List[str]
) -> None:
    # validation only: these products are not part of the HVP accounting
    H = sub.oracle.hessian(point)
    top = lanczos_extreme(H, "largest", fail_prob=0.0, seed=seed)
    bottom = lanczos_extreme(H, "smallest", fail_prob=0.0, seed=seed + 1, top_estimate=top.value)
    if bottom.value <= 0.0:
        cond = math.inf
    else:
        cond = top.value / bottom.value
    if cond > bound * bound:
        entry = f"cond {cond:.3e} exceeds beta^2 = {bound * bound:.3e}"
        log.append(entry)
        logger.warning("IPPM conditioning: %s", entry)


def ippm_solve(
    objective: OracleHandle, z0: Vector, config: IppmConfig, seed: int = 0
) -> IppmResult:
    z = np.array(z0, dtype=float)
    if not objective.in_domain(z):
        raise DomainError(f"{objective.name}: IPPM start outside the domain")
    derived = {
        "K": config.outer_bound,
        "inner_fail_prob": config.inner_fail_prob,
        "inner_beta": config.inner_beta,
        "inner_eps": config.inner_eps,
    }
    inner_cfg = NewtonCgConfig(
        kappa=config.kappa,
        eps0=config.eps,
        eps1=config.inner_eps,
        beta=config.inner_beta,
        fail_prob=config.inner_fail_prob,
        max_iters=config.inner_max_iters,
    )
    trace: List[IppmOuterRecord] = []
    conditioning: List[str] = []
    hvp_count = 0
    start = time.perf_counter_ns()
    f_z = objective.value(z)
    logger.info(
        "IPPM on %s: mu=%.3g ell=%.3g eps=%.1e K=%.3e",
        objective.name,
        config.mu,
        config.ell,
        config.eps,
        config.outer_bound,
    )
    initial = prox_subproblem(objective, z, config.mu)
    _check_conditioning(initial, z, config.beta, seed, conditioning)

    for j in range(config.max_outer):
        sub = prox_subproblem(objective, z, config.mu)
        inner = newton_cg_solve(sub.oracle, z, inner_cfg, seed=seed + 2 * j)
        hvp_count += inner.hvp_count
        z_next = inner.point
        f_next = objective.value(z_next)
        step = float(np.linalg.norm(z_next - z))
        trace.append(
            IppmOuterRecord(
                outer=j,
                f_value=f_z,
                prox_value=f_next + 0.5 * config.mu * step * step,
                step_norm=step,
                inner_iterations=inner.iterations,
                inner_certificate=inner.certificate,
                hvp_count=hvp_count,
                wall_nanos=time.perf_counter_ns() - start,
            )
        )
        if inner.certificate == "early_exit_at_x0":
            logger.info("IPPM converged after %d outer iterations (hvps=%d)", j, hvp_count)
            return IppmResult(z, "converged", trace, hvp_count, j, derived, conditioning)
        if not inner.succeeded:
            message = f"outer {j}: inner solver returned {inner.certificate}"
            logger.warning("IPPM stopped: %s", message)
            return IppmResult(
                z, "inner_failure", trace, hvp_count, j, derived, conditioning, message
            )
        _check_conditioning(sub, z_next, config.beta, seed + 2 * j + 1, conditioning)
        logger.debug("IPPM outer %d: f=%.10e step=%.3e", j, f_next, step)
        z, f_z = z_next, f_next

    logger.warning("IPPM reached max_outer=%d", config.max_outer)
    return IppmResult(
        z, "max_outer", trace, hvp_count, config.max_outer, derived, conditioning
    )


def nu_prox(objective: OracleHandle, mu: float, x: Vector) -> float:
    """nu_{f, mu/2 ||.||^2}(x) = sqrt(g^T (H + mu I)^{-1} g) by direct factorization."""
    g = objective.gradient(x)
    H = objective.hessian(x) + mu * np.eye(objective.dim)
    solved = solve_pd(H, g)
    if not solved.success:
        raise AssumptionViolation(f"{objective.name}: D^2 f + mu I not positive definite")
    return math.sqrt(max(float(g @ solved.solution), 0.0))


def nu_threshold_for_moreau(mu: float, ell: float, kappa: float, eps: float) -> float:
    """sqrt(mu - ell) eps / (mu + kappa sqrt(mu - ell) eps)."""
    if mu <= ell:
        raise DomainError(f"mu must exceed ell, got mu={mu}, ell={ell}")
    if eps <= 0.0:
        raise DomainError(f"eps must be positive, got {eps}")
    root = math.sqrt(mu - ell) * eps
    return root / (mu + kappa * root)


def moreau_grad_norm(
    objective: OracleHandle,
    ell: float,
    mu: float,
    x: Vector,
    inner_tol: float = 1e-10,
    kappa: float = 1.0,
    beta: Optional[float] = None,
    seed: int = 0,
) -> float:
    """
    ||grad f_{1/mu}(x)|| = mu ||x - argmin_y {f(y) + mu/2 ||y - x||^2}||, with
    the prox point computed by Newton-CG to decrement tolerance inner_tol.
    """
    if mu <= ell:
        raise DomainError(f"mu must exceed ell, got mu={mu}, ell={ell}")
    x = np.array(x, dtype=float)
    sub = prox_subproblem(objective, x, mu)
    if beta is None:
        eigenvalues = np.linalg.eigvalsh(sub.oracle.hessian(x))
        if eigenvalues[0] <= 0.0:
            raise AssumptionViolation("prox Hessian not positive definite at x")
        beta = max(2.0 * math.sqrt(eigenvalues[-1] / eigenvalues[0]), 2.0)
    config = NewtonCgConfig(
        kappa=kappa, eps0=inner_tol, eps1=inner_tol, beta=beta, fail_prob=0.0, max_iters=10_000
    )
    result = newton_cg_solve(sub.oracle, x, config, seed=seed)
    if not result.succeeded:
        raise SconcordError(f"prox subproblem failed: {result.certificate} ({result.message})")
    return mu * float(np.linalg.norm(x - result.point))
