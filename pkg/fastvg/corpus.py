"""
Synthetic multi-speaker corpus with known conversion ground truth.

Every (speaker, script) pair is rendered by a harmonic source-filter
synthesizer: a band-limited pulse train following the script's pitch
contour, mixed with breath noise and passed through a cascade of three
formant resonators whose targets come from the script's vowel sequence
scaled by the speaker's vocal tract. Rendering the same script with another
speaker therefore gives the ideal conversion output.
"""
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Tuple

import numpy as np
import pandas as pd
from monty.serialization import dumpfn, loadfn
from scipy.signal import lfilter
from tqdm import tqdm

from fastvg.common import DataError, ParameterError
from fastvg.features import FeatureConfig, MelSpectrogram, mel_basis, mel_spectrogram, write_manifest, write_wav
from fastvg.utils import numpy_rng

logger = logging.getLogger(__name__)

# Relative formant multipliers of the vowel-like targets
VOWELS = np.array(
    [
        [1.00, 1.00, 1.00],
        [0.70, 1.40, 1.10],
        [1.30, 0.80, 0.95],
        [0.60, 0.65, 0.90],
        [1.15, 1.50, 1.15],
        [0.85, 0.55, 1.05],
    ]
)
CONTOURS = ("flat", "rise", "fall", "arch")
F0_LIMITS = (90.0, 300.0)
F1_LIMITS = (300.0, 900.0)
SEGMENT_DURATION = (0.15, 0.45)
TOTAL_DURATION = (1.0, 4.0)
FADE_SECONDS = 0.02


@dataclass(frozen=True)
class SyntheticSpeaker:
    """Source and vocal tract parameters of one synthetic voice"""

    speaker_id: str
    f0_base: float
    f0_range: float
    formants: Tuple[float, float, float]
    bandwidths: Tuple[float, float, float]
    breathiness: float

    def __post_init__(self):
        if not self.f0_base > 0:
            raise ParameterError("f0_base must be positive")
        if not all(a < b for a, b in zip(self.formants, self.formants[1:])):
            raise ParameterError(f"Formants must be strictly increasing, got {self.formants}")
        if not 0 <= self.breathiness < 1:
            raise ParameterError("breathiness must lie in [0, 1)")


@dataclass(frozen=True)
class Segment:
    """A phoneme-like unit: duration (s), pitch contour shape and vowel target"""

    duration: float
    contour: str
    vowel: int


@dataclass(frozen=True)
class ContentScript:
    content_id: str
    segments: Tuple[Segment, ...]

    def __post_init__(self):
        if len(self.segments) < 3:
            raise ParameterError("A script needs at least 3 segments")
        if not TOTAL_DURATION[0] <= self.duration <= TOTAL_DURATION[1]:
            raise ParameterError(f"Script duration {self.duration:.3f}s outside {TOTAL_DURATION}")

    @property
    def duration(self):
        return sum(seg.duration for seg in self.segments)


def make_speaker(speaker_id, rng):
    """Draw the parameters of a speaker from a seeded generator"""
    f0_base = rng.uniform(*F0_LIMITS)
    f1 = rng.uniform(*F1_LIMITS)
    f2 = f1 + rng.uniform(700.0, 1300.0)
    f3 = f2 + rng.uniform(600.0, 1000.0)
    return SyntheticSpeaker(
        speaker_id=speaker_id,
        f0_base=float(f0_base),
        f0_range=float(f0_base * rng.uniform(0.05, 0.2)),
        formants=(float(f1), float(f2), float(f3)),
        bandwidths=(float(rng.uniform(60, 100)), float(rng.uniform(80, 140)), float(rng.uniform(120, 200))),
        breathiness=float(rng.uniform(0.0, 0.3)),
    )


def make_script(content_id, rng, sample_rate=22050):
    """Draw a segment sequence; durations are whole samples and the total lies in [1, 4] s"""
    n_segments = int(rng.integers(4, 9))
    durations = rng.uniform(*SEGMENT_DURATION, size=n_segments)
    total = durations.sum()
    # Margins keep the total inside the limits after rounding up to whole samples
    if total < TOTAL_DURATION[0] + 0.05:
        durations *= (TOTAL_DURATION[0] + 0.05) / total
    elif total > TOTAL_DURATION[1] - 0.05:
        durations *= (TOTAL_DURATION[1] - 0.05) / total
    samples = np.ceil(durations * sample_rate).astype(int)
    segments = tuple(
        Segment(duration=float(n / sample_rate), contour=str(rng.choice(CONTOURS)), vowel=int(rng.integers(len(VOWELS))))
        for n in samples
    )
    return ContentScript(content_id=content_id, segments=segments)


def contour_shape(name, tau):
    """Normalised pitch deviation in [-1, 1] over the segment time tau in [0, 1]"""
    if name == "flat":
        return np.zeros_like(tau)
    if name == "rise":
        return 2.0 * tau - 1.0
    if name == "fall":
        return 1.0 - 2.0 * tau
    if name == "arch":
        return 2.0 * np.sin(np.pi * tau) - 1.0
    raise ParameterError(f"Unknown contour {name}")


def segment_samples(script: ContentScript, sample_rate):
    return [int(round(seg.duration * sample_rate)) for seg in script.segments]


def expected_f0(speaker: SyntheticSpeaker, script: ContentScript, sample_rate=22050):
    """Per-sample f0 (Hz) of the rendering: f0_base + f0_range * contour"""
    tracks = []
    for seg, n in zip(script.segments, segment_samples(script, sample_rate)):
        tau = np.arange(n) / max(n - 1, 1)
        tracks.append(speaker.f0_base + speaker.f0_range * contour_shape(seg.contour, tau))
    return np.concatenate(tracks)


def resonator_coefficients(freq, bandwidth, sample_rate):
    """Two-pole digital resonator with unity gain at DC"""
    period = 1.0 / sample_rate
    c = -np.exp(-2.0 * np.pi * bandwidth * period)
    b = 2.0 * np.exp(-np.pi * bandwidth * period) * np.cos(2.0 * np.pi * freq * period)
    a = 1.0 - b - c
    return np.array([a]), np.array([1.0, -b, -c])


def render(speaker: SyntheticSpeaker, script: ContentScript, sample_rate=22050, rng=None):
    """Render one utterance; `rng` drives the breath noise"""
    if rng is None:
        rng = np.random.default_rng(0)
    f0 = expected_f0(speaker, script, sample_rate)
    phase = 2.0 * np.pi * np.cumsum(f0) / sample_rate
    nyquist = 0.45 * sample_rate
    source = np.zeros_like(phase)
    for harmonic in range(1, int(nyquist // F0_LIMITS[0]) + 1):
        mask = harmonic * f0 < nyquist
        if not mask.any():
            break
        source += mask * np.sin(harmonic * phase) / harmonic
    source /= np.max(np.abs(source)) + 1e-12
    noise = rng.standard_normal(source.size) * 0.3
    excitation = (1.0 - speaker.breathiness) * source + speaker.breathiness * noise

    output = []
    states = [np.zeros(2) for _ in range(3)]
    start = 0
    for seg, n in zip(script.segments, segment_samples(script, sample_rate)):
        chunk = excitation[start : start + n]
        targets = np.minimum(np.asarray(speaker.formants) * VOWELS[seg.vowel], nyquist)
        for i, (freq, bandwidth) in enumerate(zip(targets, speaker.bandwidths)):
            b, a = resonator_coefficients(freq, bandwidth, sample_rate)
            chunk, states[i] = lfilter(b, a, chunk, zi=states[i])
        output.append(chunk)
        start += n
    wav = np.concatenate(output)

    fade = int(FADE_SECONDS * sample_rate)
    ramp = 0.5 - 0.5 * np.cos(np.pi * np.arange(fade) / fade)
    wav[:fade] *= ramp
    wav[-fade:] *= ramp[::-1]
    return 0.5 * wav / (np.max(np.abs(wav)) + 1e-12)


@dataclass
class Corpus:
    """Speakers, scripts and the held-out split of a synthetic corpus"""

    seed: int
    sample_rate: int
    speakers: List[SyntheticSpeaker]
    scripts: List[ContentScript]
    heldout_speakers: List[str] = field(default_factory=list)
    heldout_scripts: List[str] = field(default_factory=list)
    separability: float = float("nan")

    @staticmethod
    def utterance_id(speaker_id, content_id):
        return f"{speaker_id}_{content_id}"

    @staticmethod
    def split_utterance_id(utterance_id):
        speaker_id, content_id = utterance_id.split("_", 1)
        return speaker_id, content_id

    def speaker(self, speaker_id):
        for spk in self.speakers:
            if spk.speaker_id == speaker_id:
                return spk
        raise DataError(f"Unknown speaker id: {speaker_id}")

    def script(self, content_id):
        for scr in self.scripts:
            if scr.content_id == content_id:
                return scr
        raise DataError(f"Unknown content id: {content_id}")

    def render(self, speaker_id, content_id):
        """Deterministic rendering of a (speaker, script) pair"""
        rng = numpy_rng(self.seed, "render", speaker_id, content_id)
        return render(self.speaker(speaker_id), self.script(content_id), self.sample_rate, rng)

    def split(self, utterance_id):
        """`train` unless the speaker or the script is held out"""
        speaker_id, content_id = self.split_utterance_id(utterance_id)
        if speaker_id in self.heldout_speakers or content_id in self.heldout_scripts:
            return "heldout"
        return "train"

    def as_dict(self):
        return {
            "seed": self.seed,
            "sample_rate": self.sample_rate,
            "speakers": [asdict(s) for s in self.speakers],
            "scripts": [asdict(s) for s in self.scripts],
            "heldout_speakers": list(self.heldout_speakers),
            "heldout_scripts": list(self.heldout_scripts),
            "separability": self.separability,
        }

    @classmethod
    def from_dict(cls, data):
        speakers = [
            SyntheticSpeaker(**{**s, "formants": tuple(s["formants"]), "bandwidths": tuple(s["bandwidths"])}) for s in data["speakers"]
        ]
        scripts = [
            ContentScript(content_id=s["content_id"], segments=tuple(Segment(**seg) for seg in s["segments"])) for s in data["scripts"]
        ]
        return cls(
            seed=int(data["seed"]),
            sample_rate=int(data["sample_rate"]),
            speakers=speakers,
            scripts=scripts,
            heldout_speakers=list(data.get("heldout_speakers", [])),
            heldout_scripts=list(data.get("heldout_scripts", [])),
            separability=float(data.get("separability", float("nan"))),
        )

    def save(self, path):
        dumpfn(self.as_dict(), str(path), indent=1)

    @classmethod
    def load(cls, path):
        path = Path(path)
        if not path.is_file():
            raise DataError(f"Missing corpus description: {path}")
        return cls.from_dict(loadfn(str(path)))


def build_corpus(n_speakers, n_scripts, seed, sample_rate=22050, heldout_speakers=2, heldout_scripts=2):
    """Draw speakers and scripts; the last ones are held out for unseen-to-unseen evaluation"""
    if n_speakers < 2:
        raise ParameterError("At least two speakers are needed")
    if n_scripts < 1:
        raise ParameterError("At least one script is needed")
    if heldout_speakers >= n_speakers or heldout_scripts >= n_scripts:
        raise ParameterError("The held-out split must leave training speakers and scripts")
    spk_rng = numpy_rng(seed, "speakers")
    scr_rng = numpy_rng(seed, "scripts")
    speakers = [make_speaker(f"spk{i:02d}", spk_rng) for i in range(n_speakers)]
    scripts = [make_script(f"txt{i:02d}", scr_rng, sample_rate) for i in range(n_scripts)]
    return Corpus(
        seed=int(seed),
        sample_rate=int(sample_rate),
        speakers=speakers,
        scripts=scripts,
        heldout_speakers=[s.speaker_id for s in speakers[n_speakers - heldout_speakers :]] if heldout_speakers else [],
        heldout_scripts=[s.content_id for s in scripts[n_scripts - heldout_scripts :]] if heldout_scripts else [],
    )


def formant_statistic(mel: MelSpectrogram, cfg: FeatureConfig, band=(200.0, 4000.0)):
    """Time-averaged log-mel over the bins whose centre lies in the formant band"""
    basis = mel_basis(cfg)
    freqs = np.linspace(0, cfg.sample_rate / 2, basis.shape[1])
    centres = (basis * freqs).sum(axis=1) / np.maximum(basis.sum(axis=1), 1e-12)
    mask = (centres >= band[0]) & (centres <= band[1])
    return np.asarray(mel.data)[:, mask].mean(axis=0)


def pairwise_discrimination(stats_by_speaker):
    """
    Mean leave-one-out nearest-centroid accuracy over all speaker pairs.

    `stats_by_speaker` maps a speaker id to an [utterances x dims] array.
    """
    ids = sorted(stats_by_speaker)
    scores = []
    for i, spk_a in enumerate(ids):
        for spk_b in ids[i + 1 :]:
            correct, total = 0, 0
            for own, other in ((spk_a, spk_b), (spk_b, spk_a)):
                own_stats = stats_by_speaker[own]
                other_centre = stats_by_speaker[other].mean(axis=0)
                for j in range(own_stats.shape[0]):
                    rest = np.delete(own_stats, j, axis=0)
                    own_centre = rest.mean(axis=0) if rest.size else own_stats[j]
                    d_own = np.linalg.norm(own_stats[j] - own_centre)
                    d_other = np.linalg.norm(own_stats[j] - other_centre)
                    correct += int(d_own < d_other)
                    total += 1
            scores.append(correct / total)
    return float(np.mean(scores)) if scores else float("nan")


def generate_corpus(
    out_dir,
    n_speakers=10,
    n_scripts=20,
    seed=0,
    cfg: FeatureConfig = FeatureConfig(),
    heldout_speakers=2,
    heldout_scripts=2,
    strict=False,
    min_separability=0.9,
    progress=True,
):
    """
    Render every (speaker, script) pair and write the manifest, the oracle
    pair sidecar and `corpus.json`. Same seed gives a bit-identical corpus.
    """
    out_dir = Path(out_dir)
    wav_dir = out_dir / "wavs"
    wav_dir.mkdir(parents=True, exist_ok=True)
    corpus = build_corpus(n_speakers, n_scripts, seed, cfg.sample_rate, heldout_speakers, heldout_scripts)

    records = []
    stats = {}
    pairs = [(spk.speaker_id, scr.content_id) for spk in corpus.speakers for scr in corpus.scripts]
    for speaker_id, content_id in tqdm(pairs, disable=not progress, desc="Rendering"):
        utt = corpus.utterance_id(speaker_id, content_id)
        wav = corpus.render(speaker_id, content_id)
        path = wav_dir / f"{utt}.wav"
        write_wav(path, wav, cfg.sample_rate)
        records.append({"utterance_id": utt, "speaker_id": speaker_id, "wav_path": f"wavs/{utt}.wav"})
        stats.setdefault(speaker_id, []).append(formant_statistic(mel_spectrogram(wav, cfg), cfg))

    corpus.separability = pairwise_discrimination({key: np.stack(value) for key, value in stats.items()})
    logger.info(f"Speaker separability (pairwise nearest-centroid accuracy): {corpus.separability:.3f}")
    if not corpus.separability > min_separability:
        message = f"Synthetic speakers are not separable enough: {corpus.separability:.3f} <= {min_separability}"
        if strict:
            raise DataError(message)
        logger.warning(message)

    manifest = pd.DataFrame(records)
    write_manifest(out_dir / "manifest.tsv", manifest)
    oracle = [
        {
            "source_utterance": corpus.utterance_id(src.speaker_id, scr.content_id),
            "target_speaker": tgt.speaker_id,
            "oracle_utterance": corpus.utterance_id(tgt.speaker_id, scr.content_id),
        }
        for scr in corpus.scripts
        for src in corpus.speakers
        for tgt in corpus.speakers
        if tgt.speaker_id != src.speaker_id
    ]
    pd.DataFrame(oracle).to_csv(out_dir / "oracle_pairs.tsv", sep="\t", index=False)
    corpus.save(out_dir / "corpus.json")
    logger.info(f"Rendered {len(records)} utterances into {out_dir}")
    return corpus


def oracle_target(corpus: Corpus, src_content_id, tgt_speaker_id, cfg: FeatureConfig = FeatureConfig()):
    """Mel of the target speaker rendering the source content - the ideal conversion output"""
    wav = corpus.render(tgt_speaker_id, src_content_id)
    return mel_spectrogram(wav, cfg)
