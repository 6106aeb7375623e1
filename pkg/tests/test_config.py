import importlib
import os
import sys

import pytest

sys.path.append(os.path.dirname(os.path.dirname(__file__)))

import config as config_module

ENV_KEYS = ("PERC_ESCAPE_MARGIN", "PERC_CI_LEVEL", "PERC_RENDER_SVG", "PERC_WORKERS", "PERC_DEFAULT_P")


@pytest.fixture(autouse=True)
def reset_config(monkeypatch):
    yield
    for key in ENV_KEYS:
        monkeypatch.delenv(key, raising=False)
    importlib.reload(config_module)


def _reload_config(monkeypatch, **env):
    for key, value in env.items():
        if value is None:
            monkeypatch.delenv(key, raising=False)
        else:
            monkeypatch.setenv(key, value)
    return importlib.reload(config_module)


def test_escape_margin_uses_default_when_empty(monkeypatch):
    config = _reload_config(monkeypatch, PERC_ESCAPE_MARGIN="")
    assert config.Config.ESCAPE_MARGIN == 64


def test_escape_margin_clamped_to_one(monkeypatch):
    config = _reload_config(monkeypatch, PERC_ESCAPE_MARGIN="-5")
    assert config.Config.ESCAPE_MARGIN == 1


def test_escape_margin_accepts_positive_values(monkeypatch):
    config = _reload_config(monkeypatch, PERC_ESCAPE_MARGIN="8")
    assert config.Config.ESCAPE_MARGIN == 8


def test_ci_level_clamped(monkeypatch):
    config = _reload_config(monkeypatch, PERC_CI_LEVEL="2")
    assert config.Config.CI_LEVEL == 0.999


def test_invalid_float_falls_back_to_default(monkeypatch):
    config = _reload_config(monkeypatch, PERC_DEFAULT_P="abc")
    assert config.Config.DEFAULT_P == 0.7


def test_render_flag_parsing(monkeypatch):
    config = _reload_config(monkeypatch, PERC_RENDER_SVG="yes")
    assert config.Config.RENDER_SVG is True
    config = _reload_config(monkeypatch, PERC_RENDER_SVG="0")
    assert config.Config.RENDER_SVG is False


def test_workers_never_below_one(monkeypatch):
    config = _reload_config(monkeypatch, PERC_WORKERS="0")
    assert config.Config.WORKERS == 1
