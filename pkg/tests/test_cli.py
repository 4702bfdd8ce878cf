import json

import pytest
from typer.testing import CliRunner

from sconcord.cli.main import app

runner = CliRunner()


def test_help():
    result = runner.invoke(app, ["--help"])
    assert result.exit_code == 0
    for command in ("gen", "solve", "verify", "bench"):
        assert command in result.output


def test_gen_writes_instance(tmp_path):
    stem = tmp_path / "inst" / "barrier"
    result = runner.invoke(app, ["gen", "log_barrier_demo", "--param", "n=4", "--out", str(stem)])
    assert result.exit_code == 0, result.output
    sidecar = json.loads((tmp_path / "inst" / "barrier.json").read_text())
    assert sidecar["params"]["n"] == 4
    assert sidecar["problem"] == "log_barrier_demo"


def test_gen_records_the_optimal_value_hint(tmp_path):
    stem = tmp_path / "nmf"
    result = runner.invoke(
        app, ["gen", "nmf_mse", "--m", "6", "--n", "4", "--r", "2", "--out", str(stem)]
    )
    assert result.exit_code == 0, result.output
    sidecar = json.loads((tmp_path / "nmf.json").read_text())
    assert sidecar["hints"]["optimal_value"] >= 0.0
    assert (tmp_path / "nmf.z.npy").is_file()


@pytest.mark.parametrize(
    "args",
    [
        ["gen", "nmf_mse", "--m", "5", "--n", "4", "--r", "9"],
        ["gen", "log_barrier_demo", "--param", "bogus=1"],
        ["gen", "log_barrier_demo", "--param", "n"],
        ["gen", "not_a_problem"],
    ],
)
def test_gen_usage_errors(args, tmp_path):
    result = runner.invoke(app, args + ["--out", str(tmp_path / "x")])
    assert result.exit_code == 2


def test_solve_success(tmp_path):
    out = tmp_path / "run"
    result = runner.invoke(
        app, ["solve", "log_barrier_demo", "rnm", "--param", "n=4", "--out", str(out)]
    )
    assert result.exit_code == 0, result.output
    report = json.loads((out / "report.json").read_text())
    assert report["status"] == "converged"
    assert (out / "trace.csv").read_text().startswith("# sconcord-trace")


def test_solve_from_stored_instance(tmp_path):
    stem = tmp_path / "barrier"
    runner.invoke(app, ["gen", "log_barrier_demo", "--param", "n=3", "--out", str(stem)])
    result = runner.invoke(
        app,
        [
            "solve",
            "log_barrier_demo",
            "newton_cg",
            "--instance",
            str(stem),
            "--out",
            str(tmp_path / "run"),
            "--deterministic",
        ],
    )
    assert result.exit_code == 0, result.output


def test_solve_unsuccessful_status_exits_one(tmp_path):
    config = tmp_path / "rnm.json"
    config.write_text(json.dumps({"max_iters": 1, "tol_nu": 0.0}))
    result = runner.invoke(
        app,
        [
            "solve",
            "log_barrier_demo",
            "rnm",
            "--config",
            str(config),
            "--out",
            str(tmp_path / "run"),
        ],
    )
    assert result.exit_code == 1
    assert (tmp_path / "run" / "report.json").is_file()


def test_solve_incompatible_pair_is_a_usage_error(tmp_path):
    result = runner.invoke(app, ["solve", "nmf_mse", "newton_cg", "--out", str(tmp_path)])
    assert result.exit_code == 2


def test_solve_unknown_config_key_is_a_usage_error(tmp_path):
    config = tmp_path / "rnm.json"
    config.write_text(json.dumps({"iterations": 3}))
    result = runner.invoke(
        app, ["solve", "log_barrier_demo", "rnm", "--config", str(config), "--out", str(tmp_path)]
    )
    assert result.exit_code == 2


def test_solve_missing_instance_is_a_usage_error(tmp_path):
    result = runner.invoke(
        app, ["solve", "log_barrier_demo", "rnm", "--instance", str(tmp_path / "none")]
    )
    assert result.exit_code == 2


def test_verify_scalar_identities():
    result = runner.invoke(app, ["verify", "scalar_identities"])
    assert result.exit_code == 0, result.output
    assert "local_contraction" in result.output


def test_verify_unknown_scope():
    assert runner.invoke(app, ["verify", "everything"]).exit_code == 2


def test_bench_from_options(tmp_path):
    result = runner.invoke(
        app,
        [
            "bench",
            "--problem",
            "log_barrier_demo",
            "--method",
            "rnm",
            "--method",
            "arm_newton",
            "--seeds",
            "2",
            "--out",
            str(tmp_path),
            "--deterministic",
        ],
    )
    assert result.exit_code == 0, result.output
    assert (tmp_path / "bench_runs.csv").is_file()
    assert (tmp_path / "bench_aggregate.csv").is_file()


def test_bench_from_grid_file(tmp_path):
    grid = tmp_path / "grid.json"
    grid.write_text(
        json.dumps(
            {
                "problem": "log_barrier_demo",
                "methods": ["rnm"],
                "seeds": [0],
                "sizes": [{"n": 2}, {"n": 4}],
            }
        )
    )
    result = runner.invoke(app, ["bench", "--grid", str(grid), "--out", str(tmp_path / "b")])
    assert result.exit_code == 0, result.output


def test_bench_needs_a_grid_or_a_problem():
    assert runner.invoke(app, ["bench"]).exit_code == 2
