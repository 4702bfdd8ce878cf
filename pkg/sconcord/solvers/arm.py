"""
Adaptive regularization method with accept/reject on the ratio of actual
to model-predicted decrease. The regularization weight sigma scales the
convex reference F; directions come from one of four options: a general
descent rule, preconditioned gradient, regularized Newton, or regularized
Newton with a switch to negative curvature.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, replace
from typing import List, Literal, Optional, Protocol, Union

import numpy as np

from sconcord.core.numerics import EigenEstimate, lanczos_extreme, solve_pd
from sconcord.core.oracle import ReferencePair, StepQuantities, Vector
from sconcord.core.scalar import ExtendedReal, gamma_f, scaled_omega, scaled_omega_star
from sconcord.errors import DomainError
from sconcord.model.schemas import (
    ArmConfig,
    LanczosSettings,
    SolveReport,
    SolveStatus,
    TraceRecord,
)
from sconcord.solvers.reporting import build_report, call_counts, running_min

logger = logging.getLogger(__name__)

DirectionKind = Literal["newton_like", "neg_curvature", "preconditioned"]

# Predicted decreases below this (relative to 1 + |f|) end the run as stalled
DIVISION_GUARD = 1e-15


# ---------------------------------------------------------------------------
# Models and step sizes
# ---------------------------------------------------------------------------


def model_value(rho: float, curv: float, kappa: float, t: float, f_x: float) -> ExtendedReal:
    """
    m(t) = f(x) - rho t + kappa^-2 omega_star(kappa t sqrt(curv)) for curv >= 0;
    m(0) = 0 when curv < 0 and +inf for t > 0.
    """
    if t < 0.0:
        raise DomainError(f"model_value needs t >= 0, got {t}")
    if curv < 0.0:
        return ExtendedReal.of(0.0) if t == 0.0 else ExtendedReal.infinity()
    return f_x - rho * t + scaled_omega_star(kappa, t * math.sqrt(curv))


def negcurv_model_value(
    delta: float, sig_delta_ref: float, kappa: float, kappa_ref: float, t: float, f_x: float
) -> ExtendedReal:
    """
    m(t) = f(x) - kappa_F^-2 omega(kappa_F t sqrt(sigma Delta))
               + kappa^-2 omega_star(kappa t sqrt(delta + sigma Delta)).
    """
    if t < 0.0:
        raise DomainError(f"negcurv_model_value needs t >= 0, got {t}")
    curv = delta + sig_delta_ref
    if curv < 0.0:
        return ExtendedReal.of(f_x) if t == 0.0 else ExtendedReal.infinity()
    gain = scaled_omega(kappa_ref, t * math.sqrt(max(sig_delta_ref, 0.0)))
    return (f_x - gain) + scaled_omega_star(kappa, t * math.sqrt(curv))


def step_first_option(rho: float, curv: float, kappa: float) -> float:
    """rho / (curv + kappa rho sqrt(curv)); +inf flags an unbounded model."""
    if rho < 0.0 or curv < 0.0:
        raise DomainError(f"step_first_option needs rho, curv >= 0, got {rho}, {curv}")
    if rho == 0.0:
        return 0.0
    if curv == 0.0:
        return math.inf
    root = math.sqrt(curv)
    return rho / (curv + kappa * rho * root)


def step_negcurv(delta: float, sig_delta_ref: float, kappa: float, kappa_ref: float) -> float:
    """Minimizer of the negative-curvature model along a unit eigenvector."""
    curv = delta + sig_delta_ref
    if curv <= 0.0:
        raise DomainError("negative-curvature step needs delta + sigma Delta > 0")
    a = math.sqrt(sig_delta_ref)
    b = math.sqrt(curv)
    denominator = a * b * (kappa_ref * b + kappa * a)
    if denominator == 0.0:
        return math.inf
    return -delta / denominator


# ---------------------------------------------------------------------------
# Directions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PointData:
    """Oracle information at an iterate, shared by every trial at that point."""

    x: Vector
    f: float
    gradient: Vector
    hess_objective: np.ndarray
    hess_reference: np.ndarray

    @classmethod
    def at(cls, pair: ReferencePair, x: Vector, f_x: Optional[float] = None) -> "PointData":
        return cls(
            x=x,
            f=pair.objective.value(x) if f_x is None else f_x,
            gradient=pair.objective.gradient(x),
            hess_objective=pair.objective.hessian(x),
            hess_reference=pair.reference.hessian(x),
        )


@dataclass(frozen=True)
class DirectionOutcome:
    d: Vector
    quantities: StepQuantities
    kind: DirectionKind
    lambda_min_est: Optional[EigenEstimate] = None
    step: float = 0.0
    curvature: float = 0.0
    nu: Optional[float] = None
    lambda_nc: Optional[float] = None
    stationarity: Optional[float] = None
    rejected: bool = False
    flagged: bool = False


def _rejected(kind: DirectionKind, dim: int) -> DirectionOutcome:
    nothing = StepQuantities(0.0, 0.0, 0.0, math.inf, math.inf)
    return DirectionOutcome(d=np.zeros(dim), quantities=nothing, kind=kind, rejected=True)


def direction_newton(
    pair: ReferencePair, x: Vector, sigma: float, point: Optional[PointData] = None
) -> DirectionOutcome:
    """d = -(D^2(f + sigma F))^{-1} grad f with t = 1 / (1 + kappa nu_{f, sigma F})."""
    p = point or PointData.at(pair, x)
    solved = solve_pd(p.hess_objective + sigma * p.hess_reference, p.gradient)
    if not solved.success:
        logger.debug("Regularized system indefinite at sigma=%.3e", sigma)
        return _rejected("newton_like", pair.dim)
    d = -solved.solution
    nu_sq = -float(p.gradient @ d)
    if nu_sq < -1e-12 * float(p.gradient @ p.gradient):
        return _rejected("newton_like", pair.dim)
    nu_sq = max(nu_sq, 0.0)
    nu = math.sqrt(nu_sq)
    delta = float(d @ p.hess_objective @ d)
    sig_delta_ref = sigma * float(d @ p.hess_reference @ d)
    t = 1.0 / (1.0 + pair.kappa * nu) if nu > 0.0 else 0.0
    return DirectionOutcome(
        d=d,
        quantities=StepQuantities(nu_sq, delta, sig_delta_ref, nu, t),
        kind="newton_like",
        step=t,
        curvature=nu_sq,
        nu=nu,
        stationarity=nu,
    )


def direction_negcurv(
    pair: ReferencePair,
    x: Vector,
    sigma: float,
    eps_h: float,
    eig_cfg: Optional[LanczosSettings] = None,
    point: Optional[PointData] = None,
) -> DirectionOutcome:
    """
    Regularized Newton direction unless lambda_min(D^2 f) < -lambda_nc, with
    lambda_nc = sigma sqrt(eps_h) D^2F[v, v]; then the unit eigenvector v,
    signed so that grad f^T d <= 0.
    """
    if pair.kappa_ref is None:
        raise ValueError("direction_negcurv requires kappa_ref on the pair")
    eig_cfg = eig_cfg or LanczosSettings()
    p = point or PointData.at(pair, x)
    estimate = lanczos_extreme(
        p.hess_objective,
        "smallest",
        rel_tol=eig_cfg.rel_tol,
        fail_prob=eig_cfg.fail_prob,
        max_iters=eig_cfg.max_iters,
        seed=eig_cfg.seed,
    )
    newton = direction_newton(pair, x, sigma, p)
    if not estimate.converged:
        logger.warning("Lanczos did not converge; falling back to the Newton branch")
        return replace(newton, lambda_min_est=estimate, flagged=True)

    v = estimate.vector
    ref_curv = float(v @ p.hess_reference @ v)
    lambda_nc = sigma * math.sqrt(eps_h) * ref_curv
    if estimate.value >= -lambda_nc:
        return replace(newton, lambda_min_est=estimate, lambda_nc=lambda_nc)

    d = v if float(p.gradient @ v) <= 0.0 else -v
    rho = -float(p.gradient @ d)
    delta = estimate.value
    sig_delta_ref = sigma * ref_curv
    curv = delta + sig_delta_ref
    quantities = StepQuantities.from_scalars(rho, delta, sig_delta_ref, pair.kappa)
    if curv <= 0.0:
        return DirectionOutcome(
            d=d,
            quantities=quantities,
            kind="neg_curvature",
            lambda_min_est=estimate,
            curvature=curv,
            nu=newton.nu,
            lambda_nc=lambda_nc,
            rejected=True,
        )
    return DirectionOutcome(
        d=d,
        quantities=quantities,
        kind="neg_curvature",
        lambda_min_est=estimate,
        step=step_negcurv(delta, sig_delta_ref, pair.kappa, pair.kappa_ref),
        curvature=curv,
        nu=newton.nu,
        lambda_nc=lambda_nc,
    )


class DirectionProvider(Protocol):
    """A descent rule for option='general'."""

    sigma_bar: Optional[float]

    def direction(self, pair: ReferencePair, point: PointData, sigma: float) -> Vector: ...


class PreconditionerProvider(Protocol):
    """Positive-definite preconditioners H_j for option='precond_gd'."""

    sigma_bar: Optional[float]

    def preconditioner(self, pair: ReferencePair, point: PointData, sigma: float) -> np.ndarray: ...


class GradientProvider:
    """Steepest descent, d = -grad f (H_j = I)."""

    sigma_bar: Optional[float] = 0.0

    def direction(self, pair: ReferencePair, point: PointData, sigma: float) -> Vector:
        return -point.gradient

    def preconditioner(self, pair: ReferencePair, point: PointData, sigma: float) -> np.ndarray:
        return np.eye(pair.dim)


class DiagonalPreconditioner:
    """H_j = diag(D^2(f + sigma F))^{-1}, with diagonal entries clipped to stay positive."""

    sigma_bar: Optional[float] = None

    def __init__(self, floor: float = 1e-8) -> None:
        self.floor = floor

    def preconditioner(self, pair: ReferencePair, point: PointData, sigma: float) -> np.ndarray:
        diagonal = np.diag(point.hess_objective + sigma * point.hess_reference).copy()
        floor = self.floor * max(float(np.max(np.abs(diagonal))), 1.0)
        return np.diag(1.0 / np.maximum(diagonal, floor))


def _first_option_outcome(
    pair: ReferencePair, point: PointData, sigma: float, d: Vector, kind: DirectionKind
) -> DirectionOutcome:
    rho = -float(point.gradient @ d)
    delta = float(d @ point.hess_objective @ d)
    sig_delta_ref = sigma * float(d @ point.hess_reference @ d)
    curv = delta + sig_delta_ref
    quantities = StepQuantities.from_scalars(rho, delta, sig_delta_ref, pair.kappa)
    # |eta| so that an ascent direction never passes the termination test
    stationarity = abs(quantities.eta) if curv > 0.0 else None
    if rho == 0.0:
        stationarity = 0.0
    if rho < 0.0 or curv < 0.0:
        # ascent direction or negative model curvature: t = 0 or an unbounded model
        return replace(_rejected(kind, pair.dim), stationarity=stationarity, curvature=curv)
    step = step_first_option(rho, curv, pair.kappa)
    return DirectionOutcome(
        d=d,
        quantities=quantities,
        kind=kind,
        step=step,
        curvature=curv,
        stationarity=stationarity,
        rejected=math.isinf(step),
    )


def direction_general(
    pair: ReferencePair, point: PointData, sigma: float, provider: DirectionProvider
) -> DirectionOutcome:
    d = np.asarray(provider.direction(pair, point, sigma), dtype=float)
    outcome = _first_option_outcome(pair, point, sigma, d, "preconditioned")
    return replace(outcome, nu=outcome.stationarity)


def direction_precond_gd(
    pair: ReferencePair, point: PointData, sigma: float, provider: PreconditionerProvider
) -> DirectionOutcome:
    H = np.asarray(provider.preconditioner(pair, point, sigma), dtype=float)
    d = -H @ point.gradient
    outcome = _first_option_outcome(pair, point, sigma, d, "preconditioned")
    measure = math.sqrt(max(-float(point.gradient @ d), 0.0))
    return replace(outcome, stationarity=measure, nu=measure)


# ---------------------------------------------------------------------------
# The accept/reject loop
# ---------------------------------------------------------------------------


def next_sigma(sigma: float, ratio: float, config: ArmConfig) -> float:
    """Three-way sigma update at the endpoint the policy selects."""
    aggressive = config.sigma_update_policy == "endpoint_aggressive"
    if ratio >= config.eta2:
        return max(config.sigma_min, config.gamma1 * sigma) if aggressive else sigma
    if ratio >= config.eta1:
        return sigma if aggressive else config.gamma2 * sigma
    return config.gamma2 * sigma if aggressive else config.gamma3 * sigma


def _is_terminal(outcome: DirectionOutcome, config: ArmConfig) -> bool:
    if outcome.flagged or outcome.stationarity is None:
        return False
    if config.option == "negcurv":
        return outcome.kind == "newton_like" and not outcome.rejected and (
            outcome.stationarity <= config.eps_g
        )
    if config.option == "newton" and outcome.rejected:
        return False
    return outcome.stationarity <= config.eps


def _model_at_step(
    outcome: DirectionOutcome, pair: ReferencePair, f_x: float
) -> ExtendedReal:
    q = outcome.quantities
    if outcome.kind == "neg_curvature":
        return negcurv_model_value(
            q.delta, q.delta_ref, pair.kappa, pair.kappa_ref or 0.0, outcome.step, f_x
        )
    return model_value(q.rho, outcome.curvature, pair.kappa, outcome.step, f_x)


class ArmSolver:
    """Runs the accept/reject loop for one ReferencePair and configuration."""

    def __init__(
        self,
        pair: ReferencePair,
        config: ArmConfig,
        direction_provider: Optional[Union[DirectionProvider, PreconditionerProvider]] = None,
    ) -> None:
        updates: dict[str, float] = {}
        if config.kappa is not None and config.kappa != pair.kappa:
            logger.warning("ARM kappa=%.3g overrides the pair's %.3g", config.kappa, pair.kappa)
            updates["kappa"] = config.kappa
        if config.kappa_ref is not None and config.kappa_ref != pair.kappa_ref:
            updates["kappa_ref"] = config.kappa_ref
        if updates:
            pair = replace(pair, **updates)
        self.pair = pair
        self.config = config
        if direction_provider is None:
            direction_provider = (
                DiagonalPreconditioner() if config.option == "precond_gd" else GradientProvider()
            )
        self.provider = direction_provider

    def _direction(self, point: PointData, sigma: float, iteration: int) -> DirectionOutcome:
        option = self.config.option
        if option == "newton":
            return direction_newton(self.pair, point.x, sigma, point)
        if option == "negcurv":
            eig_cfg = self.config.lanczos.model_copy(
                update={"seed": self.config.lanczos.seed + iteration}
            )
            return direction_negcurv(
                self.pair, point.x, sigma, self.config.eps_h, eig_cfg, point
            )
        provider = self.provider
        if option == "precond_gd":
            return direction_precond_gd(self.pair, point, sigma, provider)  # type: ignore[arg-type]
        return direction_general(self.pair, point, sigma, provider)  # type: ignore[arg-type]

    def solve(self, x0: Vector) -> SolveReport:
        cfg = self.config
        pair = self.pair
        oracle = pair.objective
        x = np.array(x0, dtype=float)
        if not oracle.in_domain(x):
            raise DomainError(f"{pair.name}: starting point outside the domain")

        point = PointData.at(pair, x)
        f_x = point.f
        sigma = cfg.sigma0
        trace: List[TraceRecord] = []
        nus: List[Optional[float]] = []
        status = SolveStatus.MAX_ITERS
        message: Optional[str] = None
        last_nu: Optional[float] = None
        start = time.perf_counter_ns()
        logger.info(
            "ARM(%s) on %s: dim=%d sigma0=%.3g kappa=%.3g f0=%.6e",
            cfg.option,
            pair.name,
            pair.dim,
            sigma,
            pair.kappa,
            f_x,
        )

        for iteration in range(cfg.max_iters):
            outcome = self._direction(point, sigma, iteration)
            last_nu = outcome.nu
            nus.append(outcome.nu)
            terminal = _is_terminal(outcome, cfg)
            ratio: Optional[float] = None
            predicted: Optional[float] = None
            accepted = False
            trial_x = x
            trial_f = f_x

            if not terminal:
                if outcome.rejected:
                    ratio = -math.inf
                else:
                    model = _model_at_step(outcome, pair, f_x)
                    predicted = f_x - float(model)
                    if predicted <= DIVISION_GUARD * (1.0 + abs(f_x)):
                        status = SolveStatus.STALLED
                        message = f"iteration {iteration}: predicted decrease {predicted:.3e}"
                    else:
                        trial_x = x + outcome.step * outcome.d
                        trial_f = oracle.value(trial_x)
                        if math.isinf(trial_f):
                            logger.warning(
                                "ARM iteration %d: trial point left the domain", iteration
                            )
                            ratio = -math.inf
                        else:
                            ratio = (f_x - trial_f) / predicted
                        accepted = ratio >= cfg.eta1

            if cfg.record_trace:
                estimate = outcome.lambda_min_est
                trace.append(
                    TraceRecord(
                        iter=iteration,
                        f_value=f_x,
                        nu=outcome.nu,
                        step_size=outcome.step if math.isfinite(outcome.step) else 0.0,
                        sigma=sigma,
                        ratio=ratio,
                        accepted=accepted if not terminal else None,
                        lambda_min_est=estimate.value if estimate is not None else None,
                        lambda_nc=outcome.lambda_nc,
                        model_decrease=predicted,
                        kind=outcome.kind,
                        flagged=outcome.flagged,
                        oracle_calls=call_counts(oracle),
                        wall_nanos=time.perf_counter_ns() - start,
                    )
                )
            logger.debug(
                "ARM iteration %d: f=%.10e sigma=%.3e kind=%s ratio=%s accepted=%s",
                iteration,
                f_x,
                sigma,
                outcome.kind,
                ratio,
                accepted,
            )
            if terminal:
                status = SolveStatus.CONVERGED
                break
            if status == SolveStatus.STALLED:
                logger.warning("ARM stalled: %s", message)
                break

            if accepted:
                x, f_x = trial_x, trial_f
                point = PointData.at(pair, x, f_x)
            sigma = next_sigma(sigma, ratio if ratio is not None else -math.inf, cfg)

        best_f = min([r.f_value for r in trace] + [f_x])
        logger.info(
            "ARM(%s) finished on %s: status=%s iterations=%d f=%.10e sigma=%.3e",
            cfg.option,
            pair.name,
            status.value,
            len(nus),
            f_x,
            sigma,
        )
        return build_report(
            method=f"arm_{cfg.option}",
            status=status,
            x=x,
            f_x=f_x,
            nu=last_nu,
            trace=trace,
            oracle=oracle,
            best_f=best_f,
            min_nu=running_min(nus),
            iterations=len(nus),
            message=message,
        )


def arm_solve(
    pair: ReferencePair,
    x0: Vector,
    config: Optional[ArmConfig] = None,
    direction_provider: Optional[Union[DirectionProvider, PreconditionerProvider]] = None,
) -> SolveReport:
    return ArmSolver(pair, config or ArmConfig(), direction_provider).solve(x0)


# ---------------------------------------------------------------------------
# Post hoc certificate checks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SuccessBound:
    successes: int
    bound: float
    decrease_floor: float

    @property
    def holds(self) -> bool:
        return self.successes <= self.bound


def arm_sigma_cap(report: SolveReport, config: ArmConfig, slack: float = 1e-12) -> bool:
    """max_j sigma_j <= max(sigma0, gamma3) (1 + slack)."""
    cap = max(config.sigma0, config.gamma3) * (1.0 + slack)
    return all(r.sigma is None or r.sigma <= cap for r in report.trace)


def _config_kappa(config: ArmConfig, kappa: Optional[float]) -> float:
    # an explicit config kappa wins, as it does inside ArmSolver
    resolved = config.kappa if config.kappa is not None else kappa
    if resolved is None:
        raise ValueError("kappa is unset: give it in the config or pass the pair's kappa")
    return resolved


def decrease_floor(
    config: ArmConfig,
    gamma: float,
    kappa_ref: Optional[float] = None,
    kappa: Optional[float] = None,
) -> float:
    """Per-success decrease floor of the configured option."""
    first_order = config.eps_g if config.option == "negcurv" else config.eps
    floor = first_order**2 / (2.0 * (1.0 + gamma))
    if config.option != "negcurv":
        return floor
    kappa_ref = config.kappa_ref if kappa_ref is None else kappa_ref
    total = _config_kappa(config, kappa) + (kappa_ref or 0.0)
    curvature = config.eps_h**1.5 / (6.0 * total**2)
    return min(curvature, floor)


def arm_success_bound(
    report: SolveReport,
    f0: float,
    lower_bound: float,
    config: ArmConfig,
    kappa: Optional[float] = None,
    kappa_ref: Optional[float] = None,
) -> SuccessBound:
    """
    |S_k| <= (f(x0) - lb) / (eta1 eps_tilde) + 1 recomputed from the trace.
    kappa and kappa_ref stand in for the pair's constants when the config
    leaves them unset.
    """
    kappa = _config_kappa(config, kappa)
    gap = max(f0 - lower_bound, 0.0)
    floor = decrease_floor(config, gamma_f(gap, kappa), kappa_ref, kappa)
    successes = sum(1 for r in report.trace if r.accepted)
    bound = gap / (config.eta1 * floor) + 1.0 if floor > 0.0 else math.inf
    return SuccessBound(successes=successes, bound=bound, decrease_floor=floor)
