import numpy as np
import pytest

from sconcord.errors import IncompatibleRunError
from sconcord.model.schemas import MethodKind, ProblemKind
from sconcord.problems.nmf import make_nmf_mse
from sconcord.problems.registry import (
    COMPATIBILITY,
    DESK_SIZES,
    build_pair,
    check_compatible,
    default_start,
    generate,
    optimal_value,
    weak_sc_modulus_of,
)


def test_every_problem_has_desk_sizes_and_methods():
    assert set(COMPATIBILITY) == set(ProblemKind) == set(DESK_SIZES)
    for methods in COMPATIBILITY.values():
        assert MethodKind.ARM_NEWTON in methods


@pytest.mark.parametrize(
    "problem, method",
    [
        (ProblemKind.NMF_MSE, MethodKind.NEWTON_CG),
        (ProblemKind.NMF_KL, MethodKind.IPPM),
        (ProblemKind.POLYNOMIAL_SADDLE, MethodKind.NEWTON_CG),
        (ProblemKind.PHASE_RETRIEVAL, MethodKind.NEWTON_CG),
    ],
)
def test_incompatible_pairs(problem, method):
    with pytest.raises(IncompatibleRunError):
        check_compatible(problem, method)


def test_compatible_pair():
    check_compatible(ProblemKind.LOG_BARRIER_DEMO, MethodKind.NEWTON_CG)
    check_compatible(ProblemKind.PHASE_RETRIEVAL, MethodKind.IPPM)


def test_unknown_generator_parameter():
    with pytest.raises(ValueError, match="unknown generator parameters"):
        generate(ProblemKind.LOG_BARRIER_DEMO, 0, {"rank": 3})


def test_log_barrier_defaults():
    instance = generate(ProblemKind.LOG_BARRIER_DEMO, 1, {})
    pair = build_pair(instance)
    assert pair.dim == 20
    assert optimal_value(instance) == 20.0
    x0 = default_start(instance, seed=1)
    assert pair.objective.in_domain(x0)
    np.testing.assert_array_equal(x0, default_start(instance, seed=1))
    assert weak_sc_modulus_of(instance) == 0.0


def test_phase_retrieval_from_generator_block():
    instance = generate(ProblemKind.PHASE_RETRIEVAL, 2, {"n": 3, "m": 9})
    pair = build_pair(instance)
    assert pair.dim == 6
    assert weak_sc_modulus_of(instance) == instance.ell
    assert optimal_value(instance) == 0.0
    assert default_start(instance, seed=2).shape == (6,)


def test_saddle_starts_at_the_saddle():
    instance = generate(ProblemKind.POLYNOMIAL_SADDLE, 0, {})
    pair = build_pair(instance)
    np.testing.assert_array_equal(default_start(instance, seed=5), np.zeros(2))
    assert optimal_value(instance) == -0.25
    assert pair.reference.value(np.zeros(2)) == pytest.approx(instance.weights["reference"])


def test_nmf_is_not_weakly_self_concordant():
    with pytest.raises(IncompatibleRunError):
        weak_sc_modulus_of(make_nmf_mse(4, 3, 2, seed=0, fit_reference=False))
