"""
Tests for the objective proxies and the cost report
"""
import numpy as np
import pytest

from fastvg.common import DataError, ShapeError
from fastvg.evaluation import (
    COST_COLUMNS,
    METRIC_COLUMNS,
    EvalReport,
    SpeakerVerifier,
    SystemScores,
    build_eval_pairs,
    calibrate_eer,
    calibration_mels,
    cost_report,
    evaluate_system,
    mel_distance,
    sva_proxy,
)
from fastvg.features import MelSpectrogram

# pylint: disable=redefined-outer-name


def scores(name, k, mel_time, total_time):
    return SystemScores(name, k, 1.0, 1.0, 0.5, 50.0, 0.1, k, mel_time, total_time)


def test_mel_distance():
    a = MelSpectrogram(np.zeros((10, 4)))
    b = MelSpectrogram(np.ones((12, 4)))
    assert mel_distance(a, a) == (0.0, 0.0)
    l1, lsd = mel_distance(a, b)
    assert l1 == pytest.approx(1.0)
    assert lsd == pytest.approx(1.0)
    with pytest.raises(ShapeError):
        mel_distance(a, MelSpectrogram(np.zeros((10, 3))))


def test_calibrate_eer():
    threshold, eer = calibrate_eer([0.9, 0.8, 0.85], [0.1, 0.2, 0.3])
    assert threshold == pytest.approx(0.8)
    assert eer == 0.0
    _, eer = calibrate_eer([0.2, 0.4, 0.6, 0.8], [0.3, 0.5, 0.7, 0.9])
    assert 0.0 < eer < 1.0
    with pytest.raises(DataError):
        calibrate_eer([], [0.1])


def test_sva_proxy():
    trials = [0.1, 0.2, 0.3, 0.6, 0.7, 0.8, 0.9, 0.5, 0.55, 0.95]
    assert sva_proxy(trials, 0.5) == pytest.approx(70.0)
    with pytest.raises(DataError, match="at least 10"):
        sva_proxy(trials[:9], 0.5)


def test_eval_pairs(tiny_features, tiny_corpus):
    pairs = build_eval_pairs(tiny_features, tiny_corpus)
    # One held-out script, every speaker to every other speaker
    assert len(pairs) == 4 * 3
    for pair in pairs:
        src_speaker, content = tiny_corpus.split_utterance_id(pair.source)
        assert content == "txt02"
        assert pair.target_speaker != src_speaker
        assert pair.reference == f"{pair.target_speaker}_txt00"
        assert pair.oracle == f"{pair.target_speaker}_txt02"
    subset = build_eval_pairs(tiny_features, tiny_corpus, max_pairs=5, seed=1)
    assert len(subset) == 5
    assert subset == build_eval_pairs(tiny_features, tiny_corpus, max_pairs=5, seed=1)


def test_calibration_mels(tiny_features, tiny_corpus):
    grouped = calibration_mels(tiny_features, tiny_corpus)
    assert sorted(grouped) == ["spk00", "spk01", "spk02", "spk03"]
    assert all(len(mels) == 2 for mels in grouped.values())


def test_verifier(tiny_features, tiny_corpus, tiny_bundle):
    verifier = SpeakerVerifier(tiny_bundle.speaker_encoder, tiny_bundle.stats)
    mel = tiny_features.raw_mel("spk00_txt00")
    assert verifier.score(mel, mel) == pytest.approx(1.0, abs=1e-5)
    with pytest.raises(DataError, match="calibrated"):
        verifier.accept_rate([mel] * 10, [mel] * 10)
    threshold, eer = verifier.calibrate(calibration_mels(tiny_features, tiny_corpus))
    assert -1.0 <= threshold <= 1.0
    assert 0.0 <= eer <= 1.0


def test_cost_report():
    systems = [scores("VoiceGrad-30", 30, 3.0, 6.0), scores("VoiceGrad-1", 1, 0.1, 0.2), scores("FastVoiceGrad", 1, 0.1, 3.0)]
    table = cost_report(systems)
    assert list(table.columns) == COST_COLUMNS
    assert list(table["mel_speedup"]) == pytest.approx([1.0, 30.0, 30.0])
    assert list(table["total_speedup"]) == pytest.approx([1.0, 30.0, 2.0])
    # Without a 30-step system the slowest one is the baseline
    assert list(cost_report(systems[1:])["mel_speedup"]) == pytest.approx([1.0, 1.0])
    with pytest.raises(DataError):
        cost_report([])


def test_report(tmp_path):
    report = EvalReport([scores("VoiceGrad-30", 30, 3.0, 6.0), scores("FastVoiceGrad", 1, 0.1, 0.2)])
    assert list(report.metrics().columns) == METRIC_COLUMNS
    assert "FastVoiceGrad" in report.summary()
    report.write(tmp_path)
    assert (tmp_path / "metrics.csv").is_file()
    assert (tmp_path / "cost.csv").is_file()


def test_evaluate_system(tiny_features, tiny_corpus, tiny_bundle):
    pairs = build_eval_pairs(tiny_features, tiny_corpus)
    verifier = SpeakerVerifier(tiny_bundle.speaker_encoder, tiny_bundle.stats)
    verifier.calibrate(calibration_mels(tiny_features, tiny_corpus))
    result = evaluate_system("one-step", pairs, tiny_features, tiny_bundle, verifier, one_step=True, progress=False)
    assert result.k == 1
    assert result.predictor_calls == 1
    assert 0.0 <= result.sva_proxy <= 100.0
    assert np.isfinite(result.mel_l1)
    assert np.isfinite(result.lsd)
    assert -1.0 <= result.speaker_cosine <= 1.0
    again = evaluate_system("one-step", pairs, tiny_features, tiny_bundle, verifier, one_step=True, progress=False)
    assert again.mel_l1 == result.mel_l1
