import math

import numpy as np
import pytest
from pydantic import ValidationError

from sconcord.core.oracle import quadratic_oracle
from sconcord.errors import DomainError
from sconcord.model.schemas import IppmConfig
from sconcord.problems.demos import log_barrier_objective
from sconcord.problems.phase_retrieval import phase_objective
from sconcord.solvers.ippm import (
    ippm_solve,
    moreau_grad_norm,
    nu_prox,
    nu_threshold_for_moreau,
    prox_subproblem,
)


def test_prox_subproblem_value():
    objective = log_barrier_objective(2)
    sub = prox_subproblem(objective, np.array([1.0, 1.0]), mu=4.0)
    y = np.array([2.0, 0.5])
    expected = objective.value(y) + 2.0 * float((y - 1.0) @ (y - 1.0))
    assert sub.oracle.value(y) == pytest.approx(expected)
    np.testing.assert_allclose(sub.oracle.hessian(y), objective.hessian(y) + 4.0 * np.eye(2))


def test_nu_threshold_for_moreau():
    assert nu_threshold_for_moreau(2.0, 1.0, 1.0, 0.1) == pytest.approx(0.047619, abs=1e-6)


@pytest.mark.parametrize("mu, ell, eps", [(1.0, 1.0, 0.1), (0.5, 1.0, 0.1), (2.0, 1.0, 0.0)])
def test_nu_threshold_rejects_bad_arguments(mu, ell, eps):
    with pytest.raises(DomainError):
        nu_threshold_for_moreau(mu, ell, 1.0, eps)


def test_nu_prox_of_quadratic():
    x = np.array([3.0, 4.0])
    assert nu_prox(quadratic_oracle(np.eye(2)), 1.0, x) == pytest.approx(5.0 / math.sqrt(2.0))


def test_moreau_gradient_of_quadratic():
    x = np.array([3.0, 4.0])
    value = moreau_grad_norm(quadratic_oracle(np.eye(2)), ell=0.0, mu=1.0, x=x)
    assert value == pytest.approx(2.5, rel=1e-8)


def test_moreau_gradient_needs_mu_above_ell():
    with pytest.raises(DomainError):
        moreau_grad_norm(quadratic_oracle(np.eye(2)), ell=1.0, mu=1.0, x=np.ones(2))


def test_ippm_config_derived_quantities():
    config = IppmConfig(ell=1.0, mu=2.0, eps=0.1, gap_budget=1.0, fail_prob=0.01)
    assert config.outer_bound == pytest.approx(1600.0)
    assert config.inner_fail_prob == pytest.approx(0.01 / 1602.0)
    assert 0.0 < config.inner_eps < 0.05
    with pytest.raises(ValidationError):
        IppmConfig(ell=1.0, mu=1.0, gap_budget=1.0)


def test_ippm_from_the_minimizer():
    config = IppmConfig(ell=0.0, mu=1.0, gap_budget=1.0)
    result = ippm_solve(log_barrier_objective(3), np.ones(3), config)
    assert result.status == "converged"
    assert result.outer_iterations == 0
    assert result.conditioning_log == []
    assert result.derived["K"] == pytest.approx(config.outer_bound)


def test_ippm_converges_on_log_barrier():
    objective = log_barrier_objective(3)
    z0 = np.array([2.0, 0.5, 1.5])
    config = IppmConfig(ell=0.0, mu=1.0, eps=1e-3, gap_budget=objective.value(z0) - 3.0)
    result = ippm_solve(objective, z0, config)
    assert result.status == "converged"
    assert result.outer_iterations <= math.floor(config.outer_bound) + 2
    assert objective.value(result.point) <= objective.value(z0)
    values = [r.f_value for r in result.trace]
    assert all(b <= a + 1e-10 for a, b in zip(values, values[1:]))
    assert result.hvp_count > 0


def test_ippm_stops_at_max_outer():
    config = IppmConfig(ell=0.0, mu=1.0, gap_budget=1.0, max_outer=1)
    result = ippm_solve(log_barrier_objective(3), np.array([2.0, 0.5, 1.5]), config)
    assert result.status == "max_outer"
    assert result.outer_iterations == 1
    assert len(result.trace) == 1


def test_ippm_rejects_start_outside_domain():
    config = IppmConfig(ell=0.0, mu=1.0, gap_budget=1.0)
    with pytest.raises(DomainError):
        ippm_solve(log_barrier_objective(2), np.array([0.0, 1.0]), config)


def test_ippm_prox_value_does_not_exceed_f():
    objective = log_barrier_objective(3)
    z0 = np.array([2.0, 0.5, 1.5])
    config = IppmConfig(ell=0.0, mu=1.0, eps=1e-3, gap_budget=objective.value(z0) - 3.0)
    result = ippm_solve(objective, z0, config)
    assert result.trace
    for record in result.trace:
        assert record.prox_value <= record.f_value + 1e-10 * (1.0 + abs(record.f_value))


def _small_nu_points(objective, mu, threshold, center, seed):
    rng = np.random.default_rng(seed)
    points = []
    for scale in np.logspace(-5, -1, 40):
        x = center + scale * rng.standard_normal(objective.dim)
        if objective.in_domain(x) and nu_prox(objective, mu, x) <= threshold:
            points.append(x)
    return points


@pytest.mark.parametrize(
    "objective, ell, mu, kappa, center",
    [
        (log_barrier_objective(3), 0.0, 1.0, 1.0, np.ones(3)),
        (quadratic_oracle(np.diag([1.0, -0.5])), 0.5, 2.0, 0.0, np.zeros(2)),
    ],
)
def test_small_prox_decrement_bounds_moreau_gradient(objective, ell, mu, kappa, center):
    eps = 1e-2
    threshold = nu_threshold_for_moreau(mu, ell, kappa, eps)
    points = _small_nu_points(objective, mu, threshold, center, seed=3)
    assert len(points) >= 5
    for x in points:
        assert moreau_grad_norm(objective, ell=ell, mu=mu, x=x, kappa=kappa) <= eps * (1 + 1e-3)


@pytest.mark.slow
def test_small_prox_decrement_bounds_moreau_gradient_on_phase_retrieval(desk_phase):
    objective = phase_objective(desk_phase)
    ell = desk_phase.ell
    mu, eps = 2.0 * ell, 1e-2
    threshold = nu_threshold_for_moreau(mu, ell, desk_phase.kappa, eps)
    center = desk_phase.signal
    points = _small_nu_points(objective, mu, threshold, center, seed=5)
    assert points
    for x in points:
        norm = moreau_grad_norm(objective, ell=ell, mu=mu, x=x, kappa=desk_phase.kappa)
        assert norm <= eps * (1 + 1e-3)
