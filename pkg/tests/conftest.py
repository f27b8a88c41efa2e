"""
Test fixtures
"""

import os
import tempfile
from pathlib import Path

import pytest

from fastvg.checkpoint import ModelBundle
from fastvg.corpus import generate_corpus
from fastvg.features import FeatureConfig
from fastvg.networks import build, freeze
from fastvg.networks.presets import get_preset
from fastvg.schedule import build_cosine_schedule
from fastvg.training.data import extract_features

# pylint: disable=redefined-outer-name

TINY_SPEAKERS = 4
TINY_SCRIPTS = 3


@pytest.fixture
def temp_workdir():
    """Fixture for going into a temporary directory"""
    tempdir = tempfile.mkdtemp()
    current_dir = os.getcwd()
    os.chdir(tempdir)
    yield Path(tempdir)
    os.chdir(current_dir)


@pytest.fixture(scope="session")
def tiny_preset():
    return get_preset("tiny")


@pytest.fixture(scope="session")
def tiny_cfg():
    """Feature settings matching the tiny preset"""
    return FeatureConfig(n_mels=8)


@pytest.fixture(scope="session")
def schedule():
    return build_cosine_schedule(1000)


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory, tiny_cfg):
    """A rendered 4 speaker x 3 script corpus, the last speaker and script held out"""
    out = tmp_path_factory.mktemp("corpus")
    corpus = generate_corpus(
        out,
        n_speakers=TINY_SPEAKERS,
        n_scripts=TINY_SCRIPTS,
        seed=0,
        cfg=tiny_cfg,
        heldout_speakers=1,
        heldout_scripts=1,
        progress=False,
    )
    return out, corpus


@pytest.fixture(scope="session")
def tiny_corpus(corpus_dir):
    return corpus_dir[1]


@pytest.fixture(scope="session")
def tiny_features(corpus_dir, tmp_path_factory, tiny_cfg):
    """Extracted 8-bin features of the tiny corpus"""
    out, corpus = corpus_dir
    return extract_features(out / "manifest.tsv", tmp_path_factory.mktemp("features"), tiny_cfg, split_fn=corpus.split, progress=False)


@pytest.fixture(scope="session")
def tiny_bundle(tiny_preset, tiny_features, schedule):
    """Untrained tiny networks with the schedule and statistics of the tiny features"""
    return ModelBundle(
        predictor=freeze(build("predictor", tiny_preset, seed=1)),
        speaker_encoder=freeze(build("speaker_encoder", tiny_preset, seed=2)),
        content_encoder=freeze(build("content_encoder", tiny_preset, seed=3)),
        schedule=schedule,
        stats=tiny_features.stats,
        preset=tiny_preset,
    )
