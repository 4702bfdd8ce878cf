from __future__ import annotations

import math
from enum import Enum
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from sconcord.core.scalar import APPENDIX


class ProblemKind(str, Enum):
    NMF_MSE = "nmf_mse"
    NMF_KL = "nmf_kl"
    PHASE_RETRIEVAL = "phase_retrieval"
    POLYNOMIAL_SADDLE = "polynomial_saddle"
    LOG_BARRIER_DEMO = "log_barrier_demo"


class MethodKind(str, Enum):
    RNM = "rnm"
    ARM_NEWTON = "arm_newton"
    ARM_NEGCURV = "arm_negcurv"
    ARM_PRECOND_GD = "arm_precond_gd"
    IPPM = "ippm"
    NEWTON_CG = "newton_cg"


class SolveStatus(str, Enum):
    CONVERGED = "converged"
    MAX_ITERS = "max_iters"
    ASSUMPTION_VIOLATION = "assumption_violation"
    DOMAIN_REJECTION = "domain_rejection"
    STALLED = "stalled"
    ABORTED = "aborted"


# ---------------------------------------------------------------------------
# Solver configurations
# ---------------------------------------------------------------------------


class RnmConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    max_iters: int = Field(100, ge=1)
    tol_nu: float = Field(1e-8, ge=0.0)
    record_trace: bool = True


class LanczosSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    rel_tol: float = Field(1e-2, gt=0.0, lt=1.0)
    fail_prob: float = Field(1e-6, ge=0.0, lt=1.0)
    max_iters: Optional[int] = Field(None, ge=1)
    seed: int = 0


class ArmConfig(BaseModel):
    """Algorithm inputs; the defaults are the NMF hyperparameters."""

    model_config = ConfigDict(extra="forbid")

    sigma0: float = Field(1.0, gt=0.0)
    sigma_min: float = Field(1e-10, gt=0.0)
    eta1: float = 0.01
    eta2: float = 0.9
    gamma1: float = 0.5
    gamma2: float = 2.0
    gamma3: float = 2.0
    # None runs with the pair's kappa
    kappa: Optional[float] = Field(None, ge=0.0)
    kappa_ref: Optional[float] = Field(None, ge=0.0)
    eps: float = Field(1e-6, ge=0.0)
    eps_g: float = Field(1e-6, ge=0.0)
    eps_h: float = Field(1e-4, ge=0.0)
    option: Literal["general", "precond_gd", "newton", "negcurv"] = "newton"
    max_iters: int = Field(500, ge=1)
    sigma_update_policy: Literal["endpoint_aggressive", "endpoint_conservative"] = (
        "endpoint_aggressive"
    )
    lanczos: LanczosSettings = Field(default_factory=LanczosSettings)
    record_trace: bool = True

    @model_validator(mode="after")
    def _check_orderings(self) -> "ArmConfig":
        if self.sigma_min > self.sigma0:
            raise ValueError("sigma_min must not exceed sigma0")
        if not 0.0 < self.eta1 <= self.eta2 < 1.0:
            raise ValueError("require 0 < eta1 <= eta2 < 1")
        if not 0.0 < self.gamma1 < 1.0:
            raise ValueError("require 0 < gamma1 < 1")
        if not 1.0 < self.gamma2 <= self.gamma3:
            raise ValueError("require 1 < gamma2 <= gamma3")
        if self.option == "negcurv" and self.kappa_ref is None:
            raise ValueError("option 'negcurv' requires kappa_ref")
        return self


class NewtonCgConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kappa: float = Field(1.0, ge=0.0)
    eps0: float = Field(1e-3, gt=0.0)
    eps1: float = Field(1e-8, gt=0.0)
    beta: float = Field(10.0, gt=1.0)
    fail_prob: float = Field(0.01, ge=0.0, lt=1.0)
    max_iters: int = Field(1000, ge=1)
    hvp_only: bool = False


class IppmConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kappa: float = Field(1.0, ge=0.0)
    ell: float = Field(..., ge=0.0)
    mu: float
    eps: float = Field(1e-3, gt=0.0)
    beta: float = Field(10.0, gt=1.0)
    fail_prob: float = Field(0.01, ge=0.0, lt=1.0)
    gap_budget: float = Field(..., gt=0.0)
    max_outer: int = Field(10_000, ge=1)
    inner_max_iters: int = Field(1000, ge=1)

    @model_validator(mode="after")
    def _check_mu(self) -> "IppmConfig":
        if not self.mu > self.ell:
            raise ValueError("mu must exceed ell")
        return self

    @property
    def outer_bound(self) -> float:
        """K = 8 mu gap / ((mu - ell) eps^2)."""
        return 8.0 * self.mu * self.gap_budget / ((self.mu - self.ell) * self.eps**2)

    @property
    def inner_fail_prob(self) -> float:
        return self.fail_prob / (self.outer_bound + 2.0)

    @property
    def inner_beta(self) -> float:
        return APPENDIX.c3**2 * self.beta

    @property
    def inner_eps(self) -> float:
        a = APPENDIX.alpha_star
        return (math.sqrt((1.0 - a) / (1.0 + a)) - 0.5) * self.eps


# ---------------------------------------------------------------------------
# Traces and reports
# ---------------------------------------------------------------------------


class OracleCallCounts(BaseModel):
    value: int = 0
    gradient: int = 0
    hessian: int = 0
    hvp: int = 0


class TraceRecord(BaseModel):
    iter: int
    f_value: float
    nu: Optional[float] = Field(None, ge=0.0)
    step_size: float = Field(0.0, ge=0.0)
    sigma: Optional[float] = None
    ratio: Optional[float] = None
    accepted: Optional[bool] = None
    lambda_min_est: Optional[float] = None
    lambda_nc: Optional[float] = None
    model_decrease: Optional[float] = None
    kind: Optional[str] = None
    flagged: bool = False
    oracle_calls: OracleCallCounts = Field(default_factory=OracleCallCounts)
    wall_nanos: int = 0


class SolveReport(BaseModel):
    method: str
    status: SolveStatus
    final_point: List[float]
    final_f: float
    final_nu: Optional[float] = None
    best_f: float
    min_nu_so_far: Optional[float] = None
    iterations: int
    trace: List[TraceRecord] = Field(default_factory=list)
    oracle_calls: OracleCallCounts = Field(default_factory=OracleCallCounts)
    message: Optional[str] = None


class NewtonCgTraceRecord(BaseModel):
    k: int
    f_value: float
    rho: float
    delta: float
    step_size: float
    beta_k: float
    phase: Literal["global", "local", "exit"]
    hvp_count: int
    wall_nanos: int = 0


class IppmOuterRecord(BaseModel):
    outer: int
    f_value: float
    prox_value: float
    step_norm: float
    inner_iterations: int
    inner_certificate: str
    hvp_count: int
    wall_nanos: int = 0


# ---------------------------------------------------------------------------
# Harness
# ---------------------------------------------------------------------------


class RunSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    problem: ProblemKind
    method: MethodKind
    seed: int = 0
    solver: Dict[str, Any] = Field(default_factory=dict)
    generator: Dict[str, Any] = Field(default_factory=dict)
    instance_path: Optional[str] = None
    output_dir: Optional[str] = None


class BenchResult(BaseModel):
    run_id: str
    problem: ProblemKind
    method: MethodKind
    seed: int
    status: str
    final_f: float
    optimality_gap: Optional[float] = None
    iterations: int
    oracle_calls: OracleCallCounts
    hvp_count: int
    wall_nanos: int
    outer_iterations: Optional[int] = None


class RunReport(BenchResult):
    """The solve report written next to the trace CSV."""

    config: Dict[str, Any]
    artifact_version: str
    final_nu: Optional[float] = None
    message: Optional[str] = None


class BenchGrid(BaseModel):
    model_config = ConfigDict(extra="forbid")

    problem: ProblemKind
    methods: List[MethodKind]
    seeds: List[int] = Field(default_factory=lambda: [0, 1, 2, 3, 4])
    sizes: List[Dict[str, Any]] = Field(default_factory=lambda: [{}])
    solver: Dict[str, Dict[str, Any]] = Field(default_factory=dict)


class InstanceSidecar(BaseModel):
    """JSON metadata stored next to the matrices of a serialized instance."""

    format_version: int = 1
    problem: ProblemKind
    seed: int
    dims: Dict[str, int]
    params: Dict[str, Any] = Field(default_factory=dict)
    weights: Dict[str, float] = Field(default_factory=dict)
    hints: Dict[str, Optional[float]] = Field(default_factory=dict)
    matrices: List[str] = Field(default_factory=list)
    notes: List[str] = Field(default_factory=list)
