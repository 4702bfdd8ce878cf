import math

import numpy as np
import pytest

from sconcord.core.oracle import OracleHandle, ReferencePair, zero_oracle
from sconcord.errors import AssumptionViolation, DomainError
from sconcord.model.schemas import RnmConfig, SolveStatus
from sconcord.problems.demos import log_barrier_demo
from sconcord.problems.polynomial import saddle_objective
from sconcord.solvers.rnm import (
    q_linear_ratios,
    regularized_decrement,
    rnm_solve,
    rnm_step,
    rnm_theorem_bound,
)


def _neg_log_pair() -> ReferencePair:
    objective = OracleHandle(
        dim=1,
        evaluate=lambda x: -float(np.log(x[0])),
        gradient=lambda x: -1.0 / x,
        hessian=lambda x: np.diag(1.0 / (x * x)),
        in_domain=lambda x: bool(x[0] > 0.0),
        name="neg_log",
    )
    return ReferencePair(objective, zero_oracle(1), kappa=1.0, kappa_ref=0.0)


def test_regularized_decrement_of_neg_log():
    d, nu = regularized_decrement(np.array([-0.5]), np.array([[0.25]]), np.zeros((1, 1)))
    np.testing.assert_allclose(d, [2.0])
    assert nu == pytest.approx(1.0)


def test_regularized_decrement_needs_positive_definite_sum():
    with pytest.raises(AssumptionViolation):
        regularized_decrement(np.ones(2), np.diag([1.0, -1.0]), np.zeros((2, 2)))


def test_damped_step_of_neg_log():
    step = rnm_step(_neg_log_pair(), np.array([2.0]))
    assert step.nu == pytest.approx(1.0)
    np.testing.assert_allclose(step.x_next, [3.0])
    assert step.quantities.t_bar == pytest.approx(0.5)


def test_undamped_step_when_kappa_is_zero(half_norm_pair):
    step = rnm_step(half_norm_pair, np.array([1.0, 0.0]))
    assert step.nu == pytest.approx(1.0 / math.sqrt(2.0))
    np.testing.assert_allclose(step.x_next, [0.5, 0.0])


def test_rnm_on_log_barrier(barrier_pair):
    x0 = np.array([10.0, 0.1, 3.0, 0.5, 2.0])
    report = rnm_solve(barrier_pair, x0, RnmConfig(max_iters=100, tol_nu=1e-10))
    assert report.status == SolveStatus.CONVERGED
    assert report.final_f == pytest.approx(5.0, abs=1e-9)
    np.testing.assert_allclose(report.final_point, np.ones(5), atol=1e-5)
    values = [r.f_value for r in report.trace]
    assert all(b <= a + 1e-12 for a, b in zip(values, values[1:]))
    assert all(r.accepted for r in report.trace)
    assert report.oracle_calls.hessian == len(report.trace)


def test_rnm_decrement_bound_holds_on_every_prefix(barrier_pair):
    x0 = np.array([10.0, 0.1, 3.0, 0.5, 2.0])
    report = rnm_solve(barrier_pair, x0)
    check = rnm_theorem_bound(report, lower_bound=5.0, kappa=1.0)
    assert check.holds
    assert len(check.prefix_holds) == len(report.trace)


def test_rnm_is_eventually_superlinear(barrier_pair):
    report = rnm_solve(barrier_pair, np.full(5, 3.0), RnmConfig(tol_nu=1e-12))
    ratios = q_linear_ratios(report, f_star=5.0)
    assert ratios.size >= 2
    assert ratios[-1] < 0.1


def test_rnm_reports_indefinite_hessian():
    pair = ReferencePair(saddle_objective(), zero_oracle(2), kappa=1.0)
    report = rnm_solve(pair, np.zeros(2))
    assert report.status == SolveStatus.ASSUMPTION_VIOLATION
    assert report.iterations == 0
    assert report.message


def test_rnm_rejects_start_outside_domain(barrier_pair):
    with pytest.raises(DomainError):
        rnm_solve(barrier_pair, -np.ones(5))


def test_rnm_stops_at_max_iters():
    pair = log_barrier_demo(2)
    report = rnm_solve(pair, np.array([1e3, 1e-3]), RnmConfig(max_iters=1, tol_nu=0.0))
    assert report.status == SolveStatus.MAX_ITERS
    assert report.iterations == 1


def test_rnm_theorem_bound_needs_a_trace(barrier_pair):
    report = rnm_solve(barrier_pair, np.ones(5), RnmConfig(record_trace=False))
    with pytest.raises(ValueError):
        rnm_theorem_bound(report, lower_bound=5.0, kappa=1.0)
