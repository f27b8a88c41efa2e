"""
Tests for the checkpoint container
"""
import json
from dataclasses import replace

import numpy as np
import pytest
import torch

from fastvg.checkpoint import FORMAT_VERSION, ModelBundle, load_checkpoint, save_checkpoint
from fastvg.common import DataError, ShapeError
from fastvg.features import FeatureStats
from fastvg.networks import build, state_hash

# pylint: disable=redefined-outer-name


@pytest.fixture
def teacher_modules(tiny_preset):
    return {
        "predictor": build("predictor", tiny_preset, seed=0),
        "speaker_encoder": build("speaker_encoder", tiny_preset, seed=1),
        "content_encoder": build("content_encoder", tiny_preset, seed=2),
    }


@pytest.fixture
def teacher_path(tmp_path, tiny_preset, teacher_modules, schedule):
    stats = FeatureStats(np.linspace(-1, 1, 8), np.full(8, 2.0))
    return save_checkpoint(
        tmp_path / "teacher.pt",
        "teacher",
        tiny_preset,
        teacher_modules,
        schedule=schedule,
        stats=stats,
        config={"seed": 0},
        metadata={"final_epoch_loss": np.float64(0.25), "steps": np.int64(3)},
    )


def test_save_and_load(teacher_path, teacher_modules, tiny_preset, schedule):
    ckpt = load_checkpoint(teacher_path, kind="teacher")
    assert ckpt.kind == "teacher"
    assert ckpt.preset == tiny_preset
    assert ckpt.components() == ["content_encoder", "predictor", "speaker_encoder"]
    np.testing.assert_array_equal(ckpt.schedule.beta, schedule.beta)
    np.testing.assert_allclose(ckpt.stats.std, 2.0)
    assert ckpt.metadata == {"final_epoch_loss": 0.25, "steps": 3}
    assert ckpt.config == {"seed": 0}
    for name, module in teacher_modules.items():
        assert state_hash(ckpt.module(name)) == state_hash(module)

    sidecar = json.loads(teacher_path.with_suffix(".json").read_text())
    assert sidecar["format_version"] == FORMAT_VERSION
    assert sidecar["components"]["predictor"]["sha256"] == state_hash(teacher_modules["predictor"])
    assert not teacher_path.with_name("teacher.pt.tmp").exists()


def test_model_bundle(teacher_path, teacher_modules, tiny_preset):
    """The restored predictor gives the same output as the saved one"""
    bundle = ModelBundle.load(teacher_path)
    x = torch.randn(1, tiny_preset.n_mels, 12)
    s = torch.randn(1, tiny_preset.speaker_dim)
    p = torch.randn(1, tiny_preset.content_dim, 12)
    with torch.no_grad():
        torch.testing.assert_close(bundle.predictor(x, 300, s, p), teacher_modules["predictor"](x, 300, s, p))
    assert not bundle.predictor.training


def test_wrong_kind(teacher_path, tmp_path, tiny_preset):
    with pytest.raises(DataError, match="expected vocoder"):
        load_checkpoint(teacher_path, kind="vocoder")
    path = save_checkpoint(tmp_path / "vocoder.pt", "vocoder", tiny_preset, {"vocoder": build("vocoder", tiny_preset, seed=0)})
    with pytest.raises(DataError):
        ModelBundle.load(path)
    with pytest.raises(DataError):
        save_checkpoint(tmp_path / "x.pt", "optimizer", tiny_preset, {})


def test_missing_and_corrupt(tmp_path, teacher_path):
    with pytest.raises(DataError, match="Missing"):
        load_checkpoint(tmp_path / "none.pt")
    (tmp_path / "junk.pt").write_bytes(b"junk")
    with pytest.raises(DataError):
        load_checkpoint(tmp_path / "junk.pt")

    payload = torch.load(teacher_path, weights_only=True)
    payload["format_version"] = FORMAT_VERSION + 1
    torch.save(payload, tmp_path / "future.pt")
    with pytest.raises(DataError, match="format version"):
        load_checkpoint(tmp_path / "future.pt")


def test_shape_mismatch(tmp_path, teacher_path):
    payload = torch.load(teacher_path, weights_only=True)
    key = next(iter(payload["manifest"]))
    payload["manifest"][key] = [1, 2, 3, 4, 5]
    torch.save(payload, tmp_path / "bad.pt")
    with pytest.raises(ShapeError):
        load_checkpoint(tmp_path / "bad.pt")

    ckpt = load_checkpoint(teacher_path)
    ckpt.preset = replace(ckpt.preset, hidden=8)
    with pytest.raises(ShapeError):
        ckpt.module("predictor")
    with pytest.raises(DataError):
        ckpt.state_dict("discriminator")
