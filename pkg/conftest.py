"""Shared pytest fixtures"""
import numpy as np
import pytest

import polysketch.config as config_module


@pytest.fixture(autouse=True)
def default_config(monkeypatch, tmp_path):
    """Every test starts from the built-in defaults (an empty config.ini)"""
    monkeypatch.delenv(config_module.CONFIG_ENV_VAR, raising=False)
    empty = tmp_path / "defaults.ini"
    empty.write_text("")
    monkeypatch.setattr(config_module, '_config', config_module.Config(str(empty)))
    yield
    monkeypatch.setattr(config_module, '_config', None)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
