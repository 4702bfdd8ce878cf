from __future__ import annotations

import hashlib
import json
import logging
import math
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Dict, List, Optional

import jsonschema
import numpy as np
import pandas as pd

from sconcord import __version__
from sconcord.config import settings
from sconcord.core.oracle import ReferencePair, Vector
from sconcord.errors import AssumptionViolation, SconcordError
from sconcord.model.schemas import (
    ArmConfig,
    IppmConfig,
    MethodKind,
    NewtonCgConfig,
    OracleCallCounts,
    RnmConfig,
    RunReport,
    RunSpec,
    SolveReport,
)
from sconcord.problems.registry import (
    build_pair,
    check_compatible,
    default_start,
    optimal_value,
    weak_sc_modulus_of,
)
from sconcord.problems.storage import ProblemInstance, problem_of
from sconcord.service.instance_service import InstanceService
from sconcord.solvers.arm import arm_solve
from sconcord.solvers.ippm import IppmResult, ippm_solve, nu_prox
from sconcord.solvers.newton_cg import NewtonCgResult, lambda_f, newton_cg_solve
from sconcord.solvers.reporting import call_counts
from sconcord.solvers.rnm import rnm_solve

logger = logging.getLogger(__name__)

TRACE_COLUMNS = [
    "iter",
    "f",
    "nu",
    "sigma",
    "ratio",
    "accepted",
    "lambda_min_est",
    "step",
    "grad_calls",
    "hess_calls",
    "hvp_calls",
    "wall_nanos",
]
TRACE_SCHEMA_VERSION = 1
SUCCESS_STATUSES = frozenset({"converged", "early_exit_at_x0"})

_ARM_OPTIONS = {
    MethodKind.ARM_NEWTON: "newton",
    MethodKind.ARM_NEGCURV: "negcurv",
    MethodKind.ARM_PRECOND_GD: "precond_gd",
}
# ARM-newton iterations spent estimating the IPPM gap budget
GAP_PREPASS_ITERS = 50
GAP_FLOOR = 1e-12


def trace_fingerprint() -> str:
    digest = hashlib.sha256(
        f"v{TRACE_SCHEMA_VERSION}:{','.join(TRACE_COLUMNS)}".encode("utf-8")
    ).hexdigest()
    return f"# sconcord-trace v{TRACE_SCHEMA_VERSION} sha256:{digest[:16]}"


def read_trace(path: Path) -> pd.DataFrame:
    """Loads a trace CSV, checking the fingerprint line."""
    with Path(path).open("r", encoding="utf-8") as f:
        header = f.readline().rstrip("\n")
    if header != trace_fingerprint():
        raise SconcordError(f"{path}: unknown trace schema {header!r}")
    return pd.read_csv(path, skiprows=1)


def _report_schema() -> Dict[str, Any]:
    text = resources.files("sconcord").joinpath("data/report.schema.json").read_text("utf-8")
    return json.loads(text)


def validate_report(payload: Dict[str, Any]) -> None:
    try:
        jsonschema.validate(payload, _report_schema())
    except jsonschema.ValidationError as e:
        raise SconcordError(f"report does not match the shipped schema: {e.message}") from e


@dataclass
class MethodOutcome:
    status: str
    point: Vector
    final_f: float
    final_nu: Optional[float]
    iterations: int
    hvp_count: int
    oracle_calls: OracleCallCounts
    config: Dict[str, Any]
    rows: List[Dict[str, Any]] = field(default_factory=list)
    outer_iterations: Optional[int] = None
    message: Optional[str] = None
    solve_report: Optional[SolveReport] = None


@dataclass
class RunOutcome:
    report: RunReport
    trace: pd.DataFrame
    method: MethodOutcome
    report_path: Optional[Path] = None
    trace_path: Optional[Path] = None

    @property
    def succeeded(self) -> bool:
        return self.report.status in SUCCESS_STATUSES


def _solve_rows(report: SolveReport) -> List[Dict[str, Any]]:
    return [
        {
            "iter": r.iter,
            "f": r.f_value,
            "nu": r.nu,
            "sigma": r.sigma,
            "ratio": r.ratio,
            "accepted": r.accepted,
            "lambda_min_est": r.lambda_min_est,
            "step": r.step_size,
            "grad_calls": r.oracle_calls.gradient,
            "hess_calls": r.oracle_calls.hessian,
            "hvp_calls": r.oracle_calls.hvp,
            "wall_nanos": r.wall_nanos,
        }
        for r in report.trace
    ]


def _finite(value: Optional[float]) -> Optional[float]:
    if value is None or not math.isfinite(value):
        return None
    return float(value)


class RunService:
    """Runs one RunSpec end to end: instance, pair, solver, trace CSV and report JSON."""

    def __init__(self, instances: Optional[InstanceService] = None) -> None:
        self.instances = instances or InstanceService()

    # ---- method adapters ----
    def _run_rnm(self, pair: ReferencePair, x0: Vector, spec: RunSpec) -> MethodOutcome:
        config = RnmConfig(**spec.solver)
        report = rnm_solve(pair, x0, config)
        return self._from_solve_report(report, config.model_dump(mode="json"))

    def _run_arm(self, pair: ReferencePair, x0: Vector, spec: RunSpec) -> MethodOutcome:
        block: Dict[str, Any] = {"kappa": pair.kappa, "kappa_ref": pair.kappa_ref}
        block.update(spec.solver)
        block["option"] = _ARM_OPTIONS[spec.method]
        block.setdefault("lanczos", {"seed": spec.seed})
        config = ArmConfig(**block)
        report = arm_solve(pair, x0, config)
        return self._from_solve_report(report, config.model_dump(mode="json"))

    def _from_solve_report(self, report: SolveReport, config: Dict[str, Any]) -> MethodOutcome:
        return MethodOutcome(
            status=report.status.value,
            point=np.asarray(report.final_point),
            final_f=report.final_f,
            final_nu=report.final_nu,
            iterations=report.iterations,
            hvp_count=report.oracle_calls.hvp,
            oracle_calls=report.oracle_calls,
            config=config,
            rows=_solve_rows(report),
            message=report.message,
            solve_report=report,
        )

    def _run_newton_cg(self, pair: ReferencePair, x0: Vector, spec: RunSpec) -> MethodOutcome:
        config = NewtonCgConfig(**{"kappa": pair.kappa, **spec.solver})
        result: NewtonCgResult = newton_cg_solve(pair.objective, x0, config, seed=spec.seed)
        try:
            final_nu: Optional[float] = lambda_f(pair.objective, result.point)
        except AssumptionViolation as e:
            logger.warning("Newton-CG certificate not recomputed: %s", e)
            final_nu = None
        rows = [
            {
                "iter": r.k,
                "f": r.f_value,
                "nu": math.sqrt(max(r.rho, 0.0)),
                "step": r.step_size,
                "hvp_calls": r.hvp_count,
                "wall_nanos": r.wall_nanos,
            }
            for r in result.trace
        ]
        return MethodOutcome(
            status=result.certificate,
            point=result.point,
            final_f=pair.objective.value(result.point),
            final_nu=final_nu,
            iterations=result.iterations,
            hvp_count=result.hvp_count,
            oracle_calls=call_counts(pair.objective),
            config=config.model_dump(mode="json"),
            rows=rows,
            message=result.message,
        )

    def _gap_prepass(self, pair: ReferencePair, x0: Vector, seed: int) -> float:
        config = ArmConfig(
            kappa=pair.kappa,
            kappa_ref=pair.kappa_ref,
            max_iters=GAP_PREPASS_ITERS,
            record_trace=False,
            lanczos={"seed": seed},
        )
        report = arm_solve(pair, x0, config)
        best = report.final_f
        if pair.lower_bound_hint is not None:
            best = min(best, pair.lower_bound_hint)
        gap = max(pair.objective.value(x0) - best, GAP_FLOOR)
        logger.info(
            "IPPM gap budget from a %d-iteration ARM pre-pass: %.6e", report.iterations, gap
        )
        return gap

    @staticmethod
    def _prox_beta(pair: ReferencePair, x0: Vector, mu: float) -> float:
        eigenvalues = np.linalg.eigvalsh(pair.objective.hessian(x0) + mu * np.eye(pair.dim))
        if eigenvalues[0] <= 0.0:
            return 10.0
        return max(2.0 * math.sqrt(eigenvalues[-1] / eigenvalues[0]), 2.0)

    def _run_ippm(
        self, pair: ReferencePair, x0: Vector, spec: RunSpec, instance: ProblemInstance
    ) -> MethodOutcome:
        ell = weak_sc_modulus_of(instance)
        block: Dict[str, Any] = dict(spec.solver)
        block.setdefault("kappa", pair.kappa)
        block.setdefault("ell", ell)
        block.setdefault("mu", 2.0 * ell if ell > 0.0 else 1.0)
        if "gap_budget" not in block:
            block["gap_budget"] = self._gap_prepass(pair, x0, spec.seed)
        if "beta" not in block:
            block["beta"] = self._prox_beta(pair, x0, block["mu"])
        pair.objective.reset_calls()
        config = IppmConfig(**block)
        result: IppmResult = ippm_solve(pair.objective, x0, config, seed=spec.seed)
        try:
            final_nu: Optional[float] = nu_prox(pair.objective, config.mu, result.point)
        except AssumptionViolation as e:
            logger.warning("IPPM certificate not recomputed: %s", e)
            final_nu = None
        rows = [
            {
                "iter": r.outer,
                "f": r.f_value,
                "step": r.step_norm,
                "hvp_calls": r.hvp_count,
                "wall_nanos": r.wall_nanos,
            }
            for r in result.trace
        ]
        echo = config.model_dump(mode="json")
        echo["derived"] = result.derived
        return MethodOutcome(
            status=result.status,
            point=result.point,
            final_f=pair.objective.value(result.point),
            final_nu=final_nu,
            iterations=result.outer_iterations,
            hvp_count=result.hvp_count,
            oracle_calls=call_counts(pair.objective),
            config=echo,
            rows=rows,
            outer_iterations=result.outer_iterations,
            message=result.message,
        )

    # ---- orchestration ----
    def resolve_instance(self, spec: RunSpec) -> ProblemInstance:
        if spec.instance_path:
            instance = self.instances.load(Path(spec.instance_path))
            if problem_of(instance) != spec.problem:
                raise SconcordError(
                    f"instance at {spec.instance_path} is {problem_of(instance).value}, "
                    f"not {spec.problem.value}"
                )
            return instance
        return self.instances.build(spec.problem, spec.seed, spec.generator)

    def run(
        self,
        spec: RunSpec,
        instance: Optional[ProblemInstance] = None,
        write: bool = True,
    ) -> RunOutcome:
        check_compatible(spec.problem, spec.method)
        instance = instance if instance is not None else self.resolve_instance(spec)
        pair = build_pair(instance)
        x0 = default_start(instance, spec.seed)
        run_id = f"{spec.problem.value}-{spec.method.value}-seed{spec.seed}"
        logger.info("Run %s: dim=%d", run_id, pair.dim)

        start = time.perf_counter_ns()
        if spec.method == MethodKind.RNM:
            outcome = self._run_rnm(pair, x0, spec)
        elif spec.method in _ARM_OPTIONS:
            outcome = self._run_arm(pair, x0, spec)
        elif spec.method == MethodKind.NEWTON_CG:
            outcome = self._run_newton_cg(pair, x0, spec)
        else:
            outcome = self._run_ippm(pair, x0, spec, instance)
        wall = time.perf_counter_ns() - start

        f_star = optimal_value(instance)
        gap = None
        if f_star is not None and math.isfinite(outcome.final_f):
            gap = outcome.final_f - f_star
        report = RunReport(
            run_id=run_id,
            problem=spec.problem,
            method=spec.method,
            seed=spec.seed,
            status=outcome.status,
            final_f=outcome.final_f,
            optimality_gap=gap,
            iterations=outcome.iterations,
            oracle_calls=outcome.oracle_calls,
            hvp_count=outcome.hvp_count,
            wall_nanos=wall,
            outer_iterations=outcome.outer_iterations,
            config=outcome.config,
            artifact_version=__version__,
            final_nu=_finite(outcome.final_nu),
            message=outcome.message,
        )
        trace = pd.DataFrame(outcome.rows, columns=TRACE_COLUMNS)
        result = RunOutcome(report=report, trace=trace, method=outcome)
        logger.info(
            "Run %s finished: status=%s f=%.10e gap=%s",
            run_id,
            report.status,
            outcome.final_f,
            f"{gap:.3e}" if gap is not None else "n/a",
        )
        if write:
            out_dir = settings.SCONCORD_OUTPUT_DIR / run_id
            if spec.output_dir:
                out_dir = Path(spec.output_dir)
            result.report_path, result.trace_path = self.write(report, trace, out_dir)
        return result

    def write(self, report: RunReport, trace: pd.DataFrame, out_dir: Path) -> tuple[Path, Path]:
        out_dir.mkdir(parents=True, exist_ok=True)
        payload = json.loads(report.model_dump_json())
        validate_report(payload)
        report_path = out_dir / "report.json"
        report_path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
        trace_path = out_dir / "trace.csv"
        with trace_path.open("w", encoding="utf-8", newline="") as f:
            f.write(trace_fingerprint() + "\n")
            trace.to_csv(f, index=False, na_rep="")
        logger.info("Wrote %s and %s", report_path, trace_path)
        return report_path, trace_path
