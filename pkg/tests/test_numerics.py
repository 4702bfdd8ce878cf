import math

import numpy as np
import pytest

from sconcord.core.numerics import (
    CountingOperator,
    cg_inverse,
    cg_iteration_count,
    lanczos_budget,
    lanczos_extreme,
    solve_pd,
    sqrt_cond,
)


def _spd(rng: np.random.Generator, dim: int, cond: float) -> tuple[np.ndarray, np.ndarray]:
    Q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    eigenvalues = np.exp(rng.uniform(0.0, math.log(cond), dim))
    H = (Q * eigenvalues) @ Q.T
    return 0.5 * (H + H.T), eigenvalues


def test_solve_pd_matches_dense_solve(rng):
    H, _ = _spd(rng, 20, 1e4)
    g = rng.standard_normal(20)
    result = solve_pd(H, g)
    assert result.success
    assert result.smallest_pivot > 0.0
    np.testing.assert_allclose(result.solution, np.linalg.solve(H, g), rtol=1e-8)


def test_solve_pd_reports_indefinite_matrix():
    result = solve_pd(np.diag([1.0, -1.0, 2.0]), np.ones(3))
    assert not result.success
    assert result.smallest_pivot < 0.0


def test_solve_pd_reports_singular_matrix():
    result = solve_pd(np.diag([1.0, 0.0]), np.ones(2))
    assert not result.success


def test_solve_pd_rejects_shape_mismatch():
    with pytest.raises(ValueError):
        solve_pd(np.eye(3), np.ones(2))


@pytest.mark.parametrize(
    "n, rel_tol, fail_prob, max_iters, expected",
    [
        (10, 1.0 / 3.0, 1e-6, None, 10),
        (10_000, 1.0 / 3.0, 0.0, 7, 7),
        (10_000, 1.0 / 3.0, 0.0, None, 10_000),
    ],
)
def test_lanczos_budget(n, rel_tol, fail_prob, max_iters, expected):
    assert lanczos_budget(n, rel_tol, fail_prob, max_iters) == expected


def test_lanczos_budget_grows_with_precision():
    assert lanczos_budget(10**6, 1e-4, 1e-6, None) > lanczos_budget(10**6, 1e-2, 1e-6, None)


def test_lanczos_is_exact_on_small_diagonal():
    A = np.diag([1.0, 3.0, -2.0, 5.0, 0.5])
    top = lanczos_extreme(A, "largest", rel_tol=1e-12, seed=1)
    bottom = lanczos_extreme(A, "smallest", rel_tol=1e-12, seed=2)
    assert top.value == pytest.approx(5.0, rel=1e-8)
    assert bottom.value == pytest.approx(-2.0, abs=1e-8)
    assert abs(bottom.vector[2]) == pytest.approx(1.0, abs=1e-6)


def test_lanczos_largest_within_tolerance(rng):
    H, eigenvalues = _spd(rng, 200, 1e3)
    estimate = lanczos_extreme(H, "largest", rel_tol=1e-2, seed=3)
    top = eigenvalues.max()
    assert estimate.value <= top * (1.0 + 1e-12)
    assert estimate.value >= (1.0 - 1e-2) * top


def test_lanczos_smallest_with_top_estimate(rng):
    H, eigenvalues = _spd(rng, 60, 10.0)
    estimate = lanczos_extreme(
        H, "smallest", rel_tol=1e-3, fail_prob=0.0, seed=4, top_estimate=eigenvalues.max()
    )
    assert estimate.value == pytest.approx(eigenvalues.min(), rel=1e-6)


def test_lanczos_rejects_unknown_mode():
    with pytest.raises(ValueError):
        lanczos_extreme(np.eye(2), "middle")  # type: ignore[arg-type]


def test_sqrt_cond_brackets_the_condition_number():
    estimate = sqrt_cond(np.diag([1.0, 100.0]), fail_prob=1e-6, beta_bound=20.0)
    assert 10.0 <= estimate <= 20.0


def test_sqrt_cond_of_indefinite_matrix_is_infinite():
    assert sqrt_cond(np.diag([1.0, -1.0]), fail_prob=1e-6, beta_bound=10.0) == math.inf


@pytest.mark.parametrize(
    "n, beta, alpha, expected",
    [
        (100, 10.0, 1e-4, 50),
        (5, 2.0, 1e-4, 5),
        (7, math.inf, 1e-4, 7),
        (8, 5.39e16, 1e-4, 8),
        (8, 1e300, 1e-4, 8),
        (50, 1.0 + 1e-12, 1e-4, 1),
    ],
)
def test_cg_iteration_count(n, beta, alpha, expected):
    assert cg_iteration_count(n, beta, alpha) == expected


@pytest.mark.parametrize("beta, alpha", [(1.0, 0.1), (0.5, 0.1), (2.0, 0.0), (2.0, 1.0)])
def test_cg_iteration_count_rejects_bad_arguments(beta, alpha):
    with pytest.raises(ValueError):
        cg_iteration_count(10, beta, alpha)


def test_cg_inverse_energy_sandwich(rng):
    alpha = 1e-4
    for _ in range(20):
        H, eigenvalues = _spd(rng, 100, 1e2)
        g = rng.standard_normal(100)
        beta = math.sqrt(eigenvalues.max() / eigenvalues.min())
        h = cg_inverse(H, g, beta, alpha)
        energy = float(g @ np.linalg.solve(H, g))
        assert (1.0 - alpha) * energy <= float(h @ g) <= (1.0 + alpha) * energy


def test_cg_inverse_uses_the_prescribed_budget(rng):
    H, eigenvalues = _spd(rng, 100, 1e2)
    counted = CountingOperator(H)
    beta = math.sqrt(eigenvalues.max() / eigenvalues.min())
    cg_inverse(counted, rng.standard_normal(100), beta, 1e-4)
    assert counted.matvecs <= cg_iteration_count(100, beta, 1e-4)
