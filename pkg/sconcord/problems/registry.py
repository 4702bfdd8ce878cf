"""
Problem construction from generator blocks, and the method/problem
compatibility matrix enforced before any run.
"""

from __future__ import annotations

import logging
from typing import Any, Dict, FrozenSet, Mapping, Optional

import numpy as np

from sconcord.core.oracle import ReferencePair, Vector
from sconcord.errors import IncompatibleRunError
from sconcord.model.schemas import MethodKind, ProblemKind
from sconcord.problems.demos import SADDLE_OPTIMAL_VALUE, log_barrier_demo, polynomial_saddle
from sconcord.problems.nmf import NmfInstance, make_nmf_kl, make_nmf_mse, nmf_oracles, nmf_start
from sconcord.problems.phase_retrieval import (
    PhaseRetrievalInstance,
    make_phase_retrieval,
    phase_oracles,
    phase_start,
)
from sconcord.problems.polynomial import polynomial_reference_fit, saddle_objective
from sconcord.problems.storage import DemoInstance, ProblemInstance, problem_of

logger = logging.getLogger(__name__)

_ARM = frozenset({MethodKind.ARM_NEWTON, MethodKind.ARM_NEGCURV, MethodKind.ARM_PRECOND_GD})

# newton_cg needs a convex self-concordant f; ippm needs a quadratic reference
COMPATIBILITY: Dict[ProblemKind, FrozenSet[MethodKind]] = {
    ProblemKind.NMF_MSE: _ARM | {MethodKind.RNM},
    ProblemKind.NMF_KL: _ARM | {MethodKind.RNM},
    ProblemKind.PHASE_RETRIEVAL: _ARM | {MethodKind.RNM, MethodKind.IPPM},
    ProblemKind.POLYNOMIAL_SADDLE: _ARM | {MethodKind.RNM},
    ProblemKind.LOG_BARRIER_DEMO: _ARM
    | {MethodKind.RNM, MethodKind.IPPM, MethodKind.NEWTON_CG},
}

DESK_SIZES: Dict[ProblemKind, Dict[str, Any]] = {
    ProblemKind.NMF_MSE: {"m": 20, "n": 10, "r": 5},
    ProblemKind.NMF_KL: {"m": 20, "n": 10, "r": 5, "noise": 0.01},
    ProblemKind.PHASE_RETRIEVAL: {"n": 4, "m": 12, "noise": 0.0},
    ProblemKind.POLYNOMIAL_SADDLE: {},
    ProblemKind.LOG_BARRIER_DEMO: {"n": 20, "quad_weight": 0.0, "ref_weight": 0.0},
}


def check_compatible(problem: ProblemKind, method: MethodKind) -> None:
    if method not in COMPATIBILITY[problem]:
        allowed = ", ".join(sorted(m.value for m in COMPATIBILITY[problem]))
        raise IncompatibleRunError(
            f"method {method.value} cannot run on {problem.value} (allowed: {allowed})"
        )


def generate(problem: ProblemKind, seed: int, params: Mapping[str, Any]) -> ProblemInstance:
    """Builds the instance for a generator block; missing sizes take the desk defaults."""
    merged = {**DESK_SIZES[problem], **dict(params)}
    unknown = set(merged) - set(DESK_SIZES[problem])
    if unknown:
        raise ValueError(f"unknown generator parameters for {problem.value}: {sorted(unknown)}")
    logger.info("Generating %s (seed %d): %s", problem.value, seed, merged)
    if problem == ProblemKind.NMF_MSE:
        return make_nmf_mse(int(merged["m"]), int(merged["n"]), int(merged["r"]), seed)
    if problem == ProblemKind.NMF_KL:
        return make_nmf_kl(
            int(merged["m"]), int(merged["n"]), int(merged["r"]), seed, float(merged["noise"])
        )
    if problem == ProblemKind.PHASE_RETRIEVAL:
        return make_phase_retrieval(
            int(merged["n"]), int(merged["m"]), seed, float(merged["noise"])
        )
    if problem == ProblemKind.POLYNOMIAL_SADDLE:
        fit = polynomial_reference_fit(saddle_objective(), p=2, seed=seed)
        return DemoInstance(
            problem=problem, seed=seed, params={"n": 2}, weights={"reference": fit.weight}
        )
    return DemoInstance(
        problem=problem,
        seed=seed,
        params={
            "n": int(merged["n"]),
            "quad_weight": float(merged["quad_weight"]),
            "ref_weight": float(merged["ref_weight"]),
        },
    )


def build_pair(instance: ProblemInstance) -> ReferencePair:
    if isinstance(instance, NmfInstance):
        return nmf_oracles(instance)
    if isinstance(instance, PhaseRetrievalInstance):
        return phase_oracles(instance)
    if instance.problem == ProblemKind.POLYNOMIAL_SADDLE:
        return polynomial_saddle(seed=instance.seed, weight=instance.weights.get("reference"))
    return log_barrier_demo(
        int(instance.params["n"]),
        quad_weight=float(instance.params.get("quad_weight", 0.0)),
        ref_weight=float(instance.params.get("ref_weight", 0.0)),
    )


def default_start(instance: ProblemInstance, seed: int) -> Vector:
    """Seeded interior start; the saddle problem starts at its saddle point."""
    if isinstance(instance, NmfInstance):
        return nmf_start(instance, seed)
    if isinstance(instance, PhaseRetrievalInstance):
        return phase_start(instance, seed)
    if instance.problem == ProblemKind.POLYNOMIAL_SADDLE:
        return np.zeros(2)
    rng = np.random.default_rng(seed + 1)
    return rng.uniform(0.5, 3.0, size=int(instance.params["n"]))


def weak_sc_modulus_of(instance: ProblemInstance) -> float:
    """ell of a (kappa, ell)-weakly self-concordant problem, for the proximal point method."""
    if isinstance(instance, PhaseRetrievalInstance):
        return instance.ell
    if problem_of(instance) == ProblemKind.LOG_BARRIER_DEMO:
        return float(instance.params.get("ref_weight", 0.0))  # type: ignore[union-attr]
    raise IncompatibleRunError(f"{problem_of(instance).value} is not weakly self-concordant")


def optimal_value(instance: ProblemInstance) -> Optional[float]:
    """Known optimal value for gap reporting, when the generator provides one."""
    if isinstance(instance, NmfInstance):
        return instance.optimal_value_hint
    if isinstance(instance, PhaseRetrievalInstance):
        return 0.0 if instance.noise == 0.0 else None
    if instance.problem == ProblemKind.POLYNOMIAL_SADDLE:
        return SADDLE_OPTIMAL_VALUE
    return float(instance.params["n"])
