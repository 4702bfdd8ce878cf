import math

import numpy as np
import pytest

from sconcord.core.oracle import OracleHandle, quadratic_oracle
from sconcord.core.scalar import APPENDIX, omega
from sconcord.errors import AssumptionViolation, DomainError
from sconcord.model.schemas import NewtonCgConfig
from sconcord.problems.demos import log_barrier_objective
from sconcord.solvers.newton_cg import default_max_iters, lambda_f, newton_cg_solve

X0 = np.array([2.0, 0.5, 1.5, 3.0, 0.8])


def test_lambda_f_of_log_barrier():
    assert lambda_f(log_barrier_objective(2), np.array([2.0, 2.0])) == pytest.approx(
        math.sqrt(2.0)
    )


def test_lambda_f_needs_positive_definite_hessian():
    with pytest.raises(AssumptionViolation):
        lambda_f(quadratic_oracle(np.diag([1.0, -1.0])), np.ones(2))


def test_default_max_iters():
    assert default_max_iters(0.0, 1e-8, 10.0) == 2
    assert default_max_iters(1.0, 1e-8, 10.0) > default_max_iters(1.0, 1e-8, 1.0)


def test_newton_cg_on_log_barrier():
    oracle = log_barrier_objective(5)
    result = newton_cg_solve(oracle, X0, NewtonCgConfig(eps1=1e-8), seed=0)
    assert result.certificate == "converged"
    assert result.succeeded
    np.testing.assert_allclose(result.point, np.ones(5), atol=1e-6)
    assert lambda_f(oracle, result.point) <= 1e-7
    assert result.hvp_count > 0
    values = [r.f_value for r in result.trace]
    assert all(b <= a + 1e-12 for a, b in zip(values, values[1:]))
    assert result.trace[-1].phase == "exit"
    assert result.state.k_star_reached


def test_newton_cg_with_products_only():
    oracle = log_barrier_objective(5)
    result = newton_cg_solve(oracle, X0, NewtonCgConfig(hvp_only=True), seed=0)
    assert result.certificate == "converged"
    assert oracle.calls.hessian == 0
    assert oracle.calls.hvp >= result.hvp_count


def test_early_exit_at_minimizer():
    result = newton_cg_solve(log_barrier_objective(3), np.ones(3), NewtonCgConfig())
    assert result.certificate == "early_exit_at_x0"
    assert result.iterations == 0
    np.testing.assert_array_equal(result.point, np.ones(3))


def test_quadratic_with_zero_kappa_is_solved_directly(bare_quadratic_pair):
    oracle = bare_quadratic_pair.objective
    result = newton_cg_solve(oracle, np.zeros(3), NewtonCgConfig(kappa=0.0))
    assert result.certificate == "converged"
    assert result.iterations == 1
    A = np.array([[3.0, 1.0, 0.0], [1.0, 2.0, 0.5], [0.0, 0.5, 1.5]])
    np.testing.assert_allclose(result.point, np.linalg.solve(A, [-1.0, 2.0, -0.5]))


def test_indefinite_hessian_aborts():
    result = newton_cg_solve(quadratic_oracle(np.diag([1.0, -1.0])), np.ones(2), NewtonCgConfig())
    assert result.certificate == "aborted"
    assert not result.succeeded
    assert result.message


def test_newton_cg_rejects_start_outside_domain():
    with pytest.raises(DomainError):
        newton_cg_solve(log_barrier_objective(2), np.array([-1.0, 1.0]), NewtonCgConfig())


def test_newton_cg_respects_max_iters():
    result = newton_cg_solve(
        log_barrier_objective(2), np.array([50.0, 0.02]), NewtonCgConfig(max_iters=1)
    )
    assert result.certificate == "max_iters"
    assert result.iterations == 1


def _recording(oracle):
    """Wraps an oracle so every gradient evaluation records its point."""
    points = []

    def gradient(x):
        points.append(np.array(x, dtype=float))
        return oracle.gradient(x)

    wrapped = OracleHandle(
        dim=oracle.dim,
        evaluate=oracle.value,
        gradient=gradient,
        hessian=oracle.hessian,
        hvp=oracle.hvp,
        in_domain=oracle.in_domain,
        name=oracle.name,
    )
    return wrapped, points


def _barrier_run_holds(seed, n=20, kappa=1.0, eps1=1e-8):
    """Runs Newton-CG on the n-dim barrier and checks every per-iteration guarantee."""
    oracle = log_barrier_objective(n)
    x0 = np.random.default_rng(seed).uniform(0.2, 5.0, n)
    wrapped, points = _recording(oracle)
    config = NewtonCgConfig(kappa=kappa, eps1=eps1, beta=2.0 * x0.max() / x0.min())
    result = newton_cg_solve(wrapped, x0, config, seed=seed)
    if result.certificate != "converged" or lambda_f(oracle, result.point) > eps1:
        return False
    trace = result.trace
    if len(points) != len(trace):
        return False
    alpha = APPENDIX.alpha_star
    for k, row in enumerate(trace):
        decrement_sq = lambda_f(oracle, points[k]) ** 2
        slack = 1e-9 * decrement_sq + 1e-30
        if not (1 - alpha) * decrement_sq - slack <= row.rho <= (1 + alpha) * decrement_sq + slack:
            return False
    for row, after in zip(trace, trace[1:]):
        decrease = row.f_value - after.f_value
        if row.phase == "local" and after.rho > APPENDIX.c2 * row.rho + 1e-15:
            return False
        if row.phase == "global":
            if decrease < omega(APPENDIX.r3) / kappa**2 - 1e-9:
                return False
            growth = math.log(after.beta_k) - math.log(row.beta_k)
            if growth > APPENDIX.c1 * kappa**2 * decrease + 1e-9:
                return False
    return True


def test_barrier_run_meets_iteration_guarantees():
    assert _barrier_run_holds(seed=0)


def test_barrier_run_has_both_phases():
    oracle = log_barrier_objective(20)
    x0 = np.random.default_rng(0).uniform(0.2, 5.0, 20)
    config = NewtonCgConfig(eps1=1e-8, beta=2.0 * x0.max() / x0.min())
    result = newton_cg_solve(oracle, x0, config, seed=0)
    phases = {row.phase for row in result.trace}
    assert phases == {"global", "local", "exit"}


@pytest.mark.slow
def test_barrier_guarantees_across_seeds():
    held = sum(_barrier_run_holds(seed) for seed in range(100))
    assert held >= 95
