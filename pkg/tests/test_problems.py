import math

import numpy as np
import pytest

from sconcord.core.oracle import check_derivatives, check_self_concordance, zero_oracle
from sconcord.problems.demos import (
    SADDLE_OPTIMAL_VALUE,
    log_barrier_demo,
    polynomial_saddle,
)
from sconcord.problems.nmf import (
    make_nmf_kl,
    make_nmf_mse,
    nmf_barrier_objective,
    nmf_loss,
    nmf_oracles,
    nmf_start,
)
from sconcord.problems.phase_retrieval import (
    PHASE_KAPPA,
    make_phase_retrieval,
    phase_objective,
    phase_oracles,
    phase_start,
    weak_sc_modulus,
)
from sconcord.problems.polynomial import (
    polynomial_reference,
    polynomial_reference_fit,
    polynomial_sc_constant,
    saddle_objective,
)
from sconcord.problems.smooth_abs import SmoothAbs, smooth_abs_eval, smooth_abs_oracle


# ---- smooth absolute value ----
def test_smooth_abs_at_zero():
    value, first, second, third = smooth_abs_eval(4.0, 0.0)
    assert float(value) == pytest.approx(2.0 * math.log(2.0) / 4.0)
    assert float(first) == 0.0
    assert float(second) == pytest.approx(2.0)
    assert float(third) == 0.0


def test_smooth_abs_approaches_abs():
    h = SmoothAbs(10.0)
    np.testing.assert_allclose(h.value([-10.0, 10.0]), [10.0, 10.0], rtol=1e-12)
    np.testing.assert_allclose(h.first([-10.0, 10.0]), [-1.0, 1.0], atol=1e-12)
    assert np.all(np.isfinite(h.value([1e4, -1e4])))


def test_smooth_abs_third_derivative_bound():
    h = SmoothAbs(3.0)
    x = np.linspace(-5.0, 5.0, 201)
    assert np.all(np.abs(h.third(x)) <= 3.0 * h.second(x) + 1e-15)


def test_smooth_abs_oracle_derivatives(rng):
    oracle = smooth_abs_oracle(4, alpha=5.0, weight=0.5)
    assert check_derivatives(oracle, rng.standard_normal(4), n_dirs=5).passed(1e-6)


def test_smooth_abs_rejects_nonpositive_alpha():
    with pytest.raises(ValueError):
        SmoothAbs(0.0)


# ---- polynomial references ----
def test_polynomial_sc_constant_for_quartic():
    assert polynomial_sc_constant(2) == pytest.approx(1.0 / 3.0, rel=1e-3)


def test_polynomial_sc_constant_needs_degree_two():
    with pytest.raises(ValueError):
        polynomial_sc_constant(1)


def test_polynomial_reference_derivatives(rng):
    reference = polynomial_reference(3, 3, weight=0.5)
    x = rng.standard_normal(3)
    assert reference.value(x) == pytest.approx(0.5 * (float(x @ x) + 1.0) ** 3)
    assert check_derivatives(reference, x, n_dirs=5).passed(1e-5)
    np.testing.assert_allclose(reference.hvp(x, x), reference.hessian(x) @ x)


def test_fit_for_zero_objective_covers_the_reference_constant():
    fit = polynomial_reference_fit(zero_oracle(2), p=2, seed=0)
    assert 0.0 < fit.weight <= 0.25
    assert fit.kappa_ref == pytest.approx(polynomial_sc_constant(2) / math.sqrt(fit.weight))
    assert fit.p == 2


def test_fitted_saddle_reference_passes_held_out_check():
    pair = polynomial_saddle(seed=0)
    assert pair.lower_bound_hint == SADDLE_OPTIMAL_VALUE
    report = check_self_concordance(pair, n_points=200, n_dirs=5, seed=12345)
    assert report.passed


def test_saddle_with_given_weight():
    pair = polynomial_saddle(weight=1.0)
    assert pair.kappa_ref == pytest.approx(polynomial_sc_constant(2))
    assert pair.objective.value(np.array([0.0, 1.0 / math.sqrt(2.0)])) == pytest.approx(-0.25)
    np.testing.assert_allclose(saddle_objective().gradient(np.zeros(2)), [0.0, 0.0])


# ---- NMF ----
def test_nmf_mse_hint_is_the_tail_energy(small_nmf_mse):
    inst = small_nmf_mse
    tail = np.linalg.svd(inst.z_matrix, compute_uv=False)[inst.r :]
    expected = 0.5 * float(tail @ tail) / (inst.m * inst.n)
    assert inst.optimal_value_hint == pytest.approx(expected, rel=1e-8)
    assert nmf_loss(inst).value(inst.planted_point()) == pytest.approx(expected, rel=1e-8)


def test_nmf_mse_reference_is_fitted(small_nmf_mse):
    inst = small_nmf_mse
    assert inst.barrier_weight == inst.quartic_weight > 0.0
    assert inst.notes
    pair = nmf_oracles(inst)
    assert pair.dim == 6 * 2 + 2 * 4
    assert pair.kappa_ref == pytest.approx(1.0 / math.sqrt(inst.barrier_weight))


def _min_eigenvalues(pair, n_points, seed):
    rng = np.random.default_rng(seed)
    g = pair.combined()
    return [
        float(np.linalg.eigvalsh(g.hessian(pair.sampler(rng)))[0]) for _ in range(n_points)
    ]


def test_fitted_nmf_mse_pair_is_positive_definite(small_nmf_mse):
    pair = nmf_oracles(small_nmf_mse)
    assert min(_min_eigenvalues(pair, 20, seed=99)) > 0.0
    report = check_self_concordance(pair, n_points=5, n_dirs=5, seed=7)
    assert report.assumption_violations == 0
    assert report.min_curvature > 0.0


@pytest.mark.slow
def test_desk_nmf_mse_pair_is_positive_definite():
    pair = nmf_oracles(make_nmf_mse(20, 10, 5, seed=0))
    assert min(_min_eigenvalues(pair, 10, seed=0)) > 0.0


def test_nmf_full_rank_has_zero_hint():
    inst = make_nmf_mse(4, 4, 4, seed=1, fit_reference=False)
    assert inst.optimal_value_hint == 0.0
    np.testing.assert_array_equal(inst.z_matrix, inst.x_hat @ inst.y_hat)


@pytest.mark.parametrize("m, n, r", [(4, 3, 4), (0, 3, 1), (3, 3, 0)])
def test_nmf_rejects_bad_sizes(m, n, r):
    with pytest.raises(ValueError):
        make_nmf_mse(m, n, r, seed=0, fit_reference=False)


def test_nmf_derivatives(small_nmf_mse, small_nmf_kl):
    for inst in (small_nmf_mse, small_nmf_kl):
        pair = nmf_oracles(inst)
        x = nmf_start(inst, seed=3)
        assert check_derivatives(pair.objective, x, n_dirs=5).passed(1e-5)
        assert check_derivatives(pair.reference, x, n_dirs=5).passed(1e-5)


def test_nmf_kl_planted_point_without_noise():
    inst = make_nmf_kl(5, 4, 2, seed=2, noise=0.0, fit_reference=False)
    loss = nmf_loss(inst)
    x = inst.planted_point()
    assert inst.optimal_value_hint == 0.0
    assert loss.value(x) == pytest.approx(0.0, abs=1e-12)
    np.testing.assert_allclose(loss.gradient(x), 0.0, atol=1e-12)


def test_nmf_kl_reference(small_nmf_kl):
    inst = small_nmf_kl
    assert inst.optimal_value_hint is None
    assert inst.barrier_weight == 4.0
    assert inst.quartic_weight > 0.0
    pair = nmf_oracles(inst)
    assert pair.lower_bound_hint == 0.0
    assert pair.kappa_ref >= 1.0 / math.sqrt(4.0 * min(inst.m, inst.n))


def test_nmf_kl_rejects_negative_noise():
    with pytest.raises(ValueError):
        make_nmf_kl(4, 4, 2, seed=0, noise=-0.1, fit_reference=False)


def test_nmf_barrier_objective(small_nmf_mse):
    inst = small_nmf_mse
    x = nmf_start(inst, seed=0)
    barred = nmf_barrier_objective(inst, 0.1)
    expected = nmf_loss(inst).value(x) - 0.1 * float(np.sum(np.log(x)))
    assert barred.value(x) == pytest.approx(expected)
    with pytest.raises(ValueError):
        nmf_barrier_objective(inst, -1.0)


def test_nmf_start_is_interior_and_seeded(small_nmf_mse):
    a = nmf_start(small_nmf_mse, seed=4)
    b = nmf_start(small_nmf_mse, seed=4)
    np.testing.assert_array_equal(a, b)
    assert np.all((a >= 0.1) & (a <= 1.0))


# ---- phase retrieval ----
def test_phase_planted_signal_is_a_global_minimizer(desk_phase):
    objective = phase_objective(desk_phase)
    assert objective.value(desk_phase.signal) == pytest.approx(0.0, abs=1e-20)
    np.testing.assert_allclose(objective.gradient(desk_phase.signal), 0.0, atol=1e-12)


def test_phase_pair(desk_phase):
    pair = phase_oracles(desk_phase)
    assert pair.kappa == PHASE_KAPPA
    assert pair.dim == 8
    expected = weak_sc_modulus(
        desk_phase.sensing_real, desk_phase.sensing_imag, desk_phase.targets
    )
    assert desk_phase.ell == pytest.approx(expected)
    np.testing.assert_allclose(pair.reference.hessian(np.zeros(8)), desk_phase.ell * np.eye(8))


def test_phase_derivatives(desk_phase):
    objective = phase_objective(desk_phase)
    x = phase_start(desk_phase, seed=0)
    assert check_derivatives(objective, x, n_dirs=5).passed(1e-5)
    v = np.arange(8.0)
    np.testing.assert_allclose(objective.hvp(x, v), objective.hessian(x) @ v, rtol=1e-10)


@pytest.mark.slow
def test_phase_pair_is_weakly_self_concordant(desk_phase):
    assert check_self_concordance(phase_oracles(desk_phase), n_points=20, seed=1).passed


def test_phase_noise_keeps_targets_nonnegative():
    inst = make_phase_retrieval(3, 9, seed=5, noise=5.0)
    assert np.all(inst.targets >= 0.0)


@pytest.mark.parametrize("n, m, noise", [(0, 5, 0.0), (3, 0, 0.0), (3, 5, -1.0)])
def test_phase_rejects_bad_arguments(n, m, noise):
    with pytest.raises(ValueError):
        make_phase_retrieval(n, m, seed=0, noise=noise)


# ---- demos ----
def test_log_barrier_demo_reference():
    pair = log_barrier_demo(3, ref_weight=2.0)
    assert pair.reference.value(np.ones(3)) == pytest.approx(3.0)
    assert pair.objective.value(np.ones(3)) == pytest.approx(3.0)
    assert pair.lower_bound_hint == 3.0
