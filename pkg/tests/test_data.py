"""
Tests for feature extraction over a manifest and batching
"""
import numpy as np
import pytest

from fastvg.common import DataError, ShapeError
from fastvg.features import FeatureConfig
from fastvg.training.data import (
    INDEX_COLUMNS,
    FeatureSet,
    aligned_wav_segment,
    batch_indices,
    crop_batch,
    mel_batch,
    random_crop,
)


def test_feature_set(tiny_features, tiny_corpus):
    assert list(tiny_features.index.columns) == INDEX_COLUMNS
    assert len(tiny_features) == 12
    train = tiny_features.utterances("train")
    heldout = tiny_features.utterances("heldout")
    assert len(train) == 3 * 2
    assert len(train) + len(heldout) == 12
    assert all(tiny_corpus.split(utt) == "train" for utt in train)
    assert tiny_features.speaker_of("spk01_txt00") == "spk01"
    with pytest.raises(DataError):
        tiny_features.row("spk99_txt00")


def test_feature_values(tiny_features, tiny_cfg):
    utt = "spk00_txt00"
    raw = tiny_features.raw_mel(utt)
    assert raw.n_mels == 8
    assert raw.frames == tiny_features.row(utt)["frames"]
    assert raw.frames == tiny_cfg.n_frames(tiny_features.wav(utt).size)
    mel = tiny_features.mel(utt)
    assert mel.dtype == np.float32
    assert mel.shape == raw.data.shape
    assert tiny_features.mel(utt) is mel


def test_train_statistics(tiny_features):
    """Statistics cover the training split only"""
    train = np.concatenate([tiny_features.mel(utt) for utt in tiny_features.utterances("train")])
    np.testing.assert_allclose(train.mean(axis=0), 0.0, atol=1e-4)


def test_load_feature_set(tiny_features, tiny_cfg, tmp_path):
    loaded = FeatureSet.load(tiny_features.directory, tiny_cfg)
    assert loaded.utterances() == tiny_features.utterances()
    np.testing.assert_array_equal(loaded.stats.mean, tiny_features.stats.mean)
    with pytest.raises(ShapeError):
        FeatureSet.load(tiny_features.directory, FeatureConfig())
    with pytest.raises(DataError):
        FeatureSet.load(tmp_path)


def test_random_crop():
    rng = np.random.default_rng(0)
    mel = np.arange(20.0).reshape(10, 2)
    crop, start = random_crop(mel, 4, rng)
    assert crop.shape == (4, 2)
    np.testing.assert_array_equal(crop, mel[start : start + 4])
    padded, start = random_crop(mel[:3], 5, rng)
    assert start == 0
    np.testing.assert_array_equal(padded[3:], np.stack([mel[2], mel[2]]))


def test_batching(tiny_features):
    rng = np.random.default_rng(0)
    batches = batch_indices(7, 3, rng)
    assert [len(b) for b in batches] == [3, 3, 1]
    assert sorted(np.concatenate(batches).tolist()) == list(range(7))
    with pytest.raises(DataError):
        batch_indices(0, 3, rng)

    x = crop_batch(tiny_features, tiny_features.utterances("train")[:2], 16, rng)
    assert tuple(x.shape) == (2, 8, 16)
    assert tuple(mel_batch([np.zeros((4, 3))]).shape) == (1, 3, 4)


def test_aligned_wav_segment():
    wav = np.arange(10.0)
    np.testing.assert_array_equal(aligned_wav_segment(wav, 1, 2, 3), [3.0, 4.0, 5.0, 6.0, 7.0, 8.0])
    np.testing.assert_array_equal(aligned_wav_segment(wav, 3, 2, 3), [9.0, 0.0, 0.0, 0.0, 0.0, 0.0])
