"""
Objective proxies of conversion quality and the cost accounting of the systems
"""
import logging
import time
from dataclasses import asdict, dataclass, field
from typing import List

import numpy as np
import pandas as pd
import torch
from tabulate import tabulate
from tqdm import tqdm

from fastvg.common import DataError, ShapeError
from fastvg.conversion import ConversionRequest, convert_fast, convert_multistep
from fastvg.features import MelSpectrogram, normalize
from fastvg.networks import as_batch
from fastvg.utils import derive_seed, numpy_rng

logger = logging.getLogger(__name__)

MIN_TRIALS = 10
METRIC_COLUMNS = ["system", "mel_l1", "lsd", "speaker_cosine", "sva_proxy", "content_distance", "predictor_calls"]
COST_COLUMNS = ["system", "k", "predictor_calls", "mel_time", "total_time", "mel_speedup", "total_speedup"]
SUMMARY_HEADERS = ["system", "MEL-L1", "LSD", "SPK-COS", "SVA-proxy [%]", "CONTENT-DIST", "calls"]


def _data(mel):
    return np.asarray(getattr(mel, "data", mel), dtype=np.float64)


def mel_distance(a, b):
    """
    (mean absolute difference, log-spectral distance) of two log-mels after
    cropping to the common number of frames.

    The LSD is the frame average of the per-frame root mean square difference,
    in natural-log units.
    """
    a, b = _data(a), _data(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ShapeError(f"Cannot compare mels of shapes {a.shape} and {b.shape}")
    frames = min(a.shape[0], b.shape[0])
    if frames == 0:
        raise ShapeError("Mels have no overlapping frames")
    diff = a[:frames] - b[:frames]
    return float(np.mean(np.abs(diff))), float(np.mean(np.sqrt(np.mean(diff**2, axis=1))))


def cosine(a, b):
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b) + 1e-12))


def calibrate_eer(genuine, impostor):
    """
    Threshold at the equal error rate.

    Accept when score >= threshold. Returns (threshold, eer) with the EER as a
    fraction.
    """
    genuine = np.asarray(genuine, dtype=np.float64)
    impostor = np.asarray(impostor, dtype=np.float64)
    if genuine.size == 0 or impostor.size == 0:
        raise DataError("Calibration needs genuine and impostor trials")
    candidates = np.unique(np.concatenate([genuine, impostor]))
    frr = np.array([np.mean(genuine < th) for th in candidates])
    far = np.array([np.mean(impostor >= th) for th in candidates])
    best = int(np.argmin(np.abs(far - frr)))
    return float(candidates[best]), float((far[best] + frr[best]) / 2)


def sva_proxy(scores, threshold):
    """Percentage of trials with a cosine score at or above the threshold"""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size < MIN_TRIALS:
        raise DataError(f"Refusing a verification rate over {scores.size} trials (at least {MIN_TRIALS} needed)")
    return float(100.0 * np.mean(scores >= threshold))


class SpeakerVerifier:
    """Frozen speaker encoder with an EER-calibrated acceptance threshold"""

    def __init__(self, speaker_encoder, stats, threshold=None):
        self.speaker_encoder = speaker_encoder
        self.stats = stats
        self.threshold = threshold
        self.eer = None

    def embed(self, mel: MelSpectrogram):
        with torch.no_grad():
            return self.speaker_encoder(as_batch(normalize(mel, self.stats)))[0].numpy().astype(np.float64)

    def score(self, a, b):
        return cosine(self.embed(a), self.embed(b))

    def calibrate(self, mels_by_speaker):
        """
        Calibrate on genuine (same speaker) and impostor (different speakers)
        pairs of reference utterances
        """
        embeddings = {spk: [self.embed(m) for m in mels] for spk, mels in sorted(mels_by_speaker.items())}
        speakers = list(embeddings)
        genuine, impostor = [], []
        for i, spk in enumerate(speakers):
            vecs = embeddings[spk]
            genuine.extend(cosine(vecs[a], vecs[b]) for a in range(len(vecs)) for b in range(a + 1, len(vecs)))
            for other in speakers[i + 1 :]:
                impostor.extend(cosine(u, v) for u in vecs for v in embeddings[other])
        self.threshold, self.eer = calibrate_eer(genuine, impostor)
        logger.info(f"Verification threshold {self.threshold:.4f} at EER {100 * self.eer:.1f}% ({len(genuine)} genuine, {len(impostor)} impostor trials)")
        return self.threshold, self.eer

    def accept_rate(self, converted, references):
        if self.threshold is None:
            raise DataError("The verifier has not been calibrated")
        return sva_proxy([self.score(c, r) for c, r in zip(converted, references)], self.threshold)


@dataclass
class EvalPair:
    """Source utterance, target speaker, its one-shot reference and the oracle conversion"""

    source: str
    target_speaker: str
    reference: str
    oracle: str


def build_eval_pairs(feature_set, corpus, max_pairs=0, seed=0):
    """
    Held-out scripts spoken by every speaker, converted to every other speaker.

    The reference of a target speaker is its utterance of the first training
    script; the oracle is the target speaker rendering the source script.
    """
    train_scripts = [s.content_id for s in corpus.scripts if s.content_id not in corpus.heldout_scripts]
    if not corpus.heldout_scripts or not train_scripts:
        raise DataError("Evaluation needs held-out scripts and training scripts")
    reference_script = train_scripts[0]
    available = set(feature_set.utterances())
    pairs = []
    for content_id in corpus.heldout_scripts:
        for src in corpus.speakers:
            for tgt in corpus.speakers:
                if tgt.speaker_id == src.speaker_id:
                    continue
                pair = EvalPair(
                    source=corpus.utterance_id(src.speaker_id, content_id),
                    target_speaker=tgt.speaker_id,
                    reference=corpus.utterance_id(tgt.speaker_id, reference_script),
                    oracle=corpus.utterance_id(tgt.speaker_id, content_id),
                )
                if {pair.source, pair.reference, pair.oracle} <= available:
                    pairs.append(pair)
    if max_pairs and len(pairs) > max_pairs:
        keep = np.sort(numpy_rng(seed, "evaluate", "pairs").choice(len(pairs), size=max_pairs, replace=False))
        pairs = [pairs[i] for i in keep]
    if not pairs:
        raise DataError("No evaluation pairs found in the feature set")
    return pairs


def calibration_mels(feature_set, corpus):
    """Training-script utterances grouped by speaker, disjoint from the converted outputs"""
    grouped = {}
    for utt in feature_set.utterances():
        speaker_id, content_id = corpus.split_utterance_id(utt)
        if content_id not in corpus.heldout_scripts:
            grouped.setdefault(speaker_id, []).append(feature_set.raw_mel(utt))
    return grouped


def content_distance(a, b, content_encoder, stats):
    """Mean absolute difference of the content embeddings of two mels"""
    with torch.no_grad():
        pa = content_encoder(as_batch(normalize(a, stats)))[0].numpy()
        pb = content_encoder(as_batch(normalize(b, stats)))[0].numpy()
    frames = min(pa.shape[-1], pb.shape[-1])
    return float(np.mean(np.abs(pa[:, :frames] - pb[:, :frames])))


@dataclass
class SystemScores:
    system: str
    k: int
    mel_l1: float
    lsd: float
    speaker_cosine: float
    sva_proxy: float
    content_distance: float
    predictor_calls: int
    mel_time: float
    total_time: float


@dataclass
class EvalReport:
    """Scores of every evaluated system"""

    systems: List[SystemScores] = field(default_factory=list)

    def metrics(self):
        """Deterministic metrics, no timings"""
        frame = pd.DataFrame([asdict(s) for s in self.systems])
        return frame[METRIC_COLUMNS]

    def cost(self):
        return cost_report(self.systems)

    def summary(self):
        rows = [
            [s.system, s.mel_l1, s.lsd, s.speaker_cosine, s.sva_proxy, s.content_distance, s.predictor_calls] for s in self.systems
        ]
        return tabulate(rows, headers=SUMMARY_HEADERS, floatfmt=".4f")

    def write(self, directory):
        self.metrics().to_csv(f"{directory}/metrics.csv", index=False, float_format="%.6f")
        self.cost().to_csv(f"{directory}/cost.csv", index=False)


def cost_report(systems):
    """
    Predictor calls and wall times with the speedup relative to the K = 30 system
    (the slowest system when there is none)
    """
    frame = pd.DataFrame([asdict(s) for s in systems])
    if frame.empty:
        raise DataError("No systems to report on")
    baseline = frame[frame["k"] == 30]
    base = baseline.iloc[0] if not baseline.empty else frame.loc[frame["mel_time"].idxmax()]
    frame["mel_speedup"] = base["mel_time"] / frame["mel_time"]
    frame["total_speedup"] = base["total_time"] / frame["total_time"]
    return frame[COST_COLUMNS]


def evaluate_system(name, pairs, feature_set, model, verifier, k=30, endpoints=(50, 950), init_mode="clean_source", one_step=False, seed=0, vocoder=None, progress=True):
    """
    Convert every pair with one system and average the proxies.

    `one_step` routes through `convert_fast` at endpoints[1]. With a vocoder
    the total time includes the waveform synthesis.
    """
    l1, lsd, cos, contents, converted, references = [], [], [], [], [], []
    calls, mel_time, total_time = 0, 0.0, 0.0
    for index, pair in enumerate(tqdm(pairs, disable=not progress, desc=name)):
        source = feature_set.raw_mel(pair.source)
        reference = feature_set.raw_mel(pair.reference)
        oracle = feature_set.raw_mel(pair.oracle)
        req = ConversionRequest(source, reference, k=k, endpoints=endpoints, init_mode=init_mode, seed=derive_seed(seed, "evaluate", index))
        result = convert_fast(req, model) if one_step else convert_multistep(req, model)
        total = result.total_time
        if vocoder is not None:
            start = time.perf_counter()
            with torch.no_grad():
                vocoder(torch.from_numpy(result.normalized.T.astype(np.float32)).unsqueeze(0))
            total += time.perf_counter() - start
        d_l1, d_lsd = mel_distance(result.mel, oracle)
        l1.append(d_l1)
        lsd.append(d_lsd)
        cos.append(verifier.score(result.mel, reference))
        contents.append(content_distance(result.mel, source, model.content_encoder, model.stats))
        converted.append(result.mel)
        references.append(reference)
        calls = max(calls, result.predictor_calls)
        mel_time += result.wall_time
        total_time += total
    return SystemScores(
        system=name,
        k=1 if one_step else int(k),
        mel_l1=float(np.mean(l1)),
        lsd=float(np.mean(lsd)),
        speaker_cosine=float(np.mean(cos)),
        sva_proxy=sva_proxy(cos, verifier.threshold),
        content_distance=float(np.mean(contents)),
        predictor_calls=calls,
        mel_time=mel_time,
        total_time=total_time,
    )
