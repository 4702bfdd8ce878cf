from pathlib import Path

import pytest

from sconcord.config import DEFAULT_THREADS, get_runtime_settings


def test_defaults(monkeypatch):
    for name in ("SCONCORD_THREADS", "SCONCORD_LOG_LEVEL", "SCONCORD_OUTPUT_DIR"):
        monkeypatch.delenv(name, raising=False)
    settings = get_runtime_settings()
    assert settings.SCONCORD_THREADS == DEFAULT_THREADS
    assert settings.SCONCORD_LOG_LEVEL == "INFO"
    assert settings.SCONCORD_OUTPUT_DIR == Path("runs")


def test_environment_overrides(monkeypatch, tmp_path):
    monkeypatch.setenv("SCONCORD_THREADS", "4")
    monkeypatch.setenv("SCONCORD_LOG_LEVEL", "debug")
    monkeypatch.setenv("SCONCORD_OUTPUT_DIR", str(tmp_path))
    settings = get_runtime_settings()
    assert settings.SCONCORD_THREADS == 4
    assert settings.SCONCORD_LOG_LEVEL == "DEBUG"
    assert settings.SCONCORD_OUTPUT_DIR == tmp_path


@pytest.mark.parametrize("raw", ["0", "-2", "many"])
def test_bad_thread_count(monkeypatch, raw):
    monkeypatch.setenv("SCONCORD_THREADS", raw)
    with pytest.raises(ValueError):
        get_runtime_settings()
