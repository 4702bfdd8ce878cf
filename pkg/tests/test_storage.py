import json

import numpy as np
import pytest

from sconcord.errors import InstanceFormatError
from sconcord.model.schemas import ProblemKind
from sconcord.problems.nmf import make_nmf_kl, make_nmf_mse
from sconcord.problems.phase_retrieval import make_phase_retrieval
from sconcord.problems.storage import (
    DemoInstance,
    load_instance,
    matrix_path,
    problem_of,
    save_instance,
    sidecar_path,
)


@pytest.fixture
def nmf_instance():
    return make_nmf_mse(5, 4, 2, seed=3, fit_reference=False)


def test_nmf_files_and_reload(tmp_path, nmf_instance):
    stem = tmp_path / "inst" / "nmf"
    path = save_instance(nmf_instance, stem)
    assert path == sidecar_path(stem)
    for name in ("z", "x_hat", "y_hat"):
        assert matrix_path(stem, name).is_file()

    loaded = load_instance(path)
    assert problem_of(loaded) == ProblemKind.NMF_MSE
    np.testing.assert_array_equal(loaded.z_matrix, nmf_instance.z_matrix)
    np.testing.assert_array_equal(loaded.x_hat, nmf_instance.x_hat)
    assert (loaded.m, loaded.n, loaded.r) == (5, 4, 2)
    assert loaded.optimal_value_hint == nmf_instance.optimal_value_hint


def test_load_accepts_the_bare_stem(tmp_path):
    inst = make_phase_retrieval(3, 7, seed=1)
    save_instance(inst, tmp_path / "phase")
    loaded = load_instance(tmp_path / "phase")
    np.testing.assert_array_equal(loaded.targets, inst.targets)
    np.testing.assert_array_equal(loaded.signal, inst.signal)
    assert loaded.ell == inst.ell


def test_kl_hint_survives_as_null(tmp_path):
    inst = make_nmf_kl(4, 3, 2, seed=0, noise=0.05, fit_reference=False)
    path = save_instance(inst, tmp_path / "kl")
    assert json.loads(path.read_text())["hints"]["optimal_value"] is None
    assert load_instance(path).optimal_value_hint is None


def test_regeneration_is_byte_identical(tmp_path):
    first = save_instance(make_nmf_mse(5, 4, 2, seed=9, fit_reference=False), tmp_path / "a")
    second = save_instance(make_nmf_mse(5, 4, 2, seed=9, fit_reference=False), tmp_path / "b")
    assert first.read_bytes() == second.read_bytes()
    for name in ("z", "x_hat", "y_hat"):
        assert (
            matrix_path(tmp_path / "a", name).read_bytes()
            == matrix_path(tmp_path / "b", name).read_bytes()
        )


def test_demo_instance_has_no_matrices(tmp_path):
    demo = DemoInstance(
        problem=ProblemKind.LOG_BARRIER_DEMO,
        seed=2,
        params={"n": 4, "quad_weight": 0.0, "ref_weight": 1.0},
    )
    path = save_instance(demo, tmp_path / "demo")
    assert sorted(p.name for p in tmp_path.iterdir()) == ["demo.json"]
    assert load_instance(path) == demo


def test_missing_matrix_file(tmp_path, nmf_instance):
    path = save_instance(nmf_instance, tmp_path / "nmf")
    matrix_path(tmp_path / "nmf", "z").unlink()
    with pytest.raises(InstanceFormatError, match="missing matrix"):
        load_instance(path)


def test_unknown_format_version(tmp_path, nmf_instance):
    path = save_instance(nmf_instance, tmp_path / "nmf")
    payload = json.loads(path.read_text())
    payload["format_version"] = 99
    path.write_text(json.dumps(payload))
    with pytest.raises(InstanceFormatError, match="format version"):
        load_instance(path)


def test_malformed_sidecar(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    with pytest.raises(InstanceFormatError):
        load_instance(path)


def test_sidecar_missing_a_weight(tmp_path, nmf_instance):
    path = save_instance(nmf_instance, tmp_path / "nmf")
    payload = json.loads(path.read_text())
    del payload["weights"]["barrier"]
    path.write_text(json.dumps(payload))
    with pytest.raises(InstanceFormatError):
        load_instance(path)


def test_missing_sidecar(tmp_path):
    with pytest.raises(InstanceFormatError):
        load_instance(tmp_path / "nothing")
