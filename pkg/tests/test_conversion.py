"""
Tests for K-step and one-step conversion and the initial state sweep
"""
import numpy as np
import pytest

from fastvg.common import ParameterError
from fastvg.conversion import ConversionRequest, convert_fast, convert_multistep, sweep_initial_state
from fastvg.features import normalize
from fastvg.utils import parse_grid

# pylint: disable=redefined-outer-name


class FixedVerifier:
    """Accepts half of the trials"""

    def __init__(self):
        self.calls = 0

    def accept_rate(self, converted, references):
        assert len(converted) == len(references)
        self.calls += 1
        return 50.0


@pytest.fixture
def mels(tiny_features):
    """Source, target reference and oracle, cropped to 40 frames"""
    return (
        tiny_features.raw_mel("spk00_txt02").crop(40),
        tiny_features.raw_mel("spk01_txt00").crop(40),
        tiny_features.raw_mel("spk01_txt02").crop(40),
    )


@pytest.mark.parametrize("k", [1, 6, 30])
def test_predictor_calls(tiny_bundle, mels, k):
    result = convert_multistep(ConversionRequest(mels[0], mels[1], k=k), tiny_bundle)
    assert result.predictor_calls == k
    assert len(result.steps) == k
    assert result.steps[-1] == 950
    assert result.mel.data.shape == mels[0].data.shape
    assert not result.mel.normalized
    assert np.all(np.isfinite(result.mel.data))
    assert result.total_time >= result.wall_time > 0


def test_subsequence_of_conversion(tiny_bundle, mels):
    result = convert_multistep(ConversionRequest(mels[0], mels[1], k=6), tiny_bundle)
    assert result.steps == (50, 230, 410, 590, 770, 950)


def test_deterministic(tiny_bundle, mels):
    req = ConversionRequest(mels[0], mels[1], k=6, seed=4)
    first = convert_multistep(req, tiny_bundle)
    second = convert_multistep(req, tiny_bundle)
    np.testing.assert_array_equal(first.mel.data, second.mel.data)
    other = convert_multistep(ConversionRequest(mels[0], mels[1], k=6, seed=5), tiny_bundle)
    assert not np.array_equal(first.mel.data, other.mel.data)


def test_initial_states(tiny_bundle, mels):
    clean = convert_multistep(ConversionRequest(mels[0], mels[1], k=1, init_mode="clean_source"), tiny_bundle)
    np.testing.assert_allclose(clean.initial_state, normalize(mels[0], tiny_bundle.stats).data, atol=1e-5)
    diffused = convert_multistep(ConversionRequest(mels[0], mels[1], k=1, init_mode="diffused_source"), tiny_bundle)
    noise = convert_multistep(ConversionRequest(mels[0], mels[1], k=1, init_mode="pure_noise"), tiny_bundle)
    assert not np.allclose(diffused.initial_state, clean.initial_state)
    assert not np.allclose(noise.initial_state, diffused.initial_state)


def test_fast_path_matches_one_step(tiny_bundle, mels):
    """One-step conversion is the K = 1 multi-step path from the diffused source"""
    req = ConversionRequest(mels[0], mels[1], seed=2)
    fast = convert_fast(req, tiny_bundle)
    reference = convert_multistep(ConversionRequest(mels[0], mels[1], k=1, endpoints=(950, 950), init_mode="diffused_source", seed=2), tiny_bundle)
    assert fast.predictor_calls == 1
    assert fast.steps == (950,)
    np.testing.assert_array_equal(fast.mel.data, reference.mel.data)
    assert convert_fast(req, tiny_bundle, s_k=500).steps == (500,)


def test_request_validation(mels):
    with pytest.raises(ParameterError):
        ConversionRequest(mels[0], mels[1], init_mode="random")
    with pytest.raises(ParameterError):
        ConversionRequest(mels[0], mels[1], k=0)


def test_sweep_grid(tiny_bundle, mels):
    """The default grid gives one row per S_K and mode"""
    verifier = FixedVerifier()
    grid = parse_grid("50:1000:50")
    pairs = [tuple(m.crop(12) for m in mels)]
    table = sweep_initial_state(pairs, grid, ["clean_source", "diffused_source"], tiny_bundle, verifier, progress=False)
    assert len(table) == 40
    assert list(table.columns) == ["S_K", "mode", "quality_proxy", "sva_proxy"]
    assert verifier.calls == 40
    assert set(table["mode"]) == {"clean_source", "diffused_source"}
    assert np.all((table["quality_proxy"] > 0) & (table["quality_proxy"] <= 1))
    assert np.all(table["sva_proxy"] == 50.0)


def test_sweep_validation(tiny_bundle, mels):
    with pytest.raises(ParameterError):
        sweep_initial_state([mels], [], ["clean_source"], tiny_bundle, FixedVerifier(), progress=False)
    with pytest.raises(ParameterError):
        sweep_initial_state([mels], [100], ["pure_noise"], tiny_bundle, FixedVerifier(), progress=False)
