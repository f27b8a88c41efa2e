"""
Tests for the run configuration
"""
import pytest

from fastvg.common import ConfigError
from fastvg.config import RunConfig


def test_defaults():
    config = RunConfig()
    assert config["seed"] == 0
    assert config["distill.lambda_fm"] == 2.0
    assert config["distill.lambda_dist"] == 45.0
    assert config["convert.k"] == 30
    assert config["convert.s_k"] == 950
    assert "schedule.T" in config


def test_update_coercion():
    config = RunConfig({"seed": "42", "teacher.lr": "1e-3", "corpus.strict": "yes", "distill.variant": " adv "})
    assert config["seed"] == 42
    assert config["teacher.lr"] == pytest.approx(1e-3)
    assert config["corpus.strict"] is True
    assert config["distill.variant"] == "adv"
    config.update({"corpus.strict": "off", "vocoder.epochs": 3.0})
    assert config["corpus.strict"] is False
    assert config["vocoder.epochs"] == 3


@pytest.mark.parametrize("params", [{"unknown.key": 1}, {"seed": "1.5"}, {"seed": "abc"}, {"corpus.strict": "maybe"}])
def test_invalid_values(params):
    with pytest.raises(ConfigError):
        RunConfig(params)


def test_section():
    section = RunConfig().section("vocoder")
    assert section == {"epochs": 30, "batch_size": 16, "lr": 2e-4, "crop": 32}


def test_config_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# a run\nseed = 3  # inline comment\n\npreset=tiny\nfeatures.n_mels = 8\n")
    config = RunConfig.from_file(path)
    assert config["seed"] == 3
    assert config["preset"] == "tiny"
    assert config["features.n_mels"] == 8

    path.write_text("seed 3\n")
    with pytest.raises(ConfigError, match=":1:"):
        RunConfig.from_file(path)


def test_write_resolved(tmp_path):
    config = RunConfig({"seed": 5})
    path = config.write_resolved(tmp_path)
    assert path.name == "config.resolved.txt"
    again = RunConfig.from_file(path)
    assert again.parameters == config.parameters
