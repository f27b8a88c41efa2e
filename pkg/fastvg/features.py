"""
Waveform I/O and log-mel feature extraction.

Code namings:
  wav  - raw waveform, 1D float array in [-1, 1]
  mel  - log-mel spectrogram, [frames x n_mels]
  stats - per-bin mean/std used for normalisation
"""
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import librosa
import numpy as np
import pandas as pd
import soundfile as sf

from fastvg.common import AudioFormatError, DataError, ParameterError, ShapeError

logger = logging.getLogger(__name__)

MEL_MAGIC = b"FVGMEL01"
MANIFEST_COLUMNS = ["utterance_id", "speaker_id", "wav_path"]


@dataclass(frozen=True)
class FeatureConfig:
    """STFT and mel filterbank settings"""

    sample_rate: int = 22050
    fft_size: int = 1024
    hop: int = 256
    win: int = 1024
    n_mels: int = 80
    log_floor: float = 1e-5

    def __post_init__(self):
        if not self.hop <= self.win <= self.fft_size:
            raise ParameterError(f"Need hop <= win <= fft_size, got {self.hop}, {self.win}, {self.fft_size}")
        if self.n_mels < 1:
            raise ParameterError("n_mels must be at least 1")
        if not self.log_floor > 0:
            raise ParameterError("log_floor must be positive")

    @property
    def frame_rate(self):
        return self.sample_rate / self.hop

    @property
    def fmax(self):
        return self.sample_rate / 2.0

    def n_frames(self, length):
        """Number of frames for a waveform of `length` samples (reflection padded by win/2)"""
        padded = length + 2 * (self.win // 2)
        return 1 + (padded - self.fft_size) // self.hop

    @classmethod
    def from_run_config(cls, config):
        return cls(**config.section("features"))


@dataclass
class FeatureStats:
    """Per-bin normalisation statistics computed on the training corpus"""

    mean: np.ndarray
    std: np.ndarray

    MIN_STD = 1e-4

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.maximum(np.asarray(self.std, dtype=np.float64), self.MIN_STD)
        if self.mean.shape != self.std.shape or self.mean.ndim != 1:
            raise ShapeError("mean and std must be vectors of equal length")

    @classmethod
    def identity(cls, n_mels=80):
        return cls(np.zeros(n_mels), np.ones(n_mels))

    def save(self, path):
        np.savez(path, mean=self.mean, std=self.std)

    @classmethod
    def load(cls, path):
        path = Path(path)
        if not path.is_file():
            raise DataError(f"Missing normalisation statistics: {path}")
        with np.load(path) as data:
            return cls(data["mean"], data["std"])


@dataclass
class MelSpectrogram:
    """A [frames x n_mels] log-mel matrix"""

    data: np.ndarray
    frame_rate: float = 22050 / 256
    normalized: bool = field(default=False)

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 2 or self.data.shape[0] < 1:
            raise ShapeError(f"Mel spectrogram must be [frames x bins] with frames >= 1, got {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise DataError("Mel spectrogram contains non-finite values")

    @property
    def frames(self):
        return self.data.shape[0]

    @property
    def n_mels(self):
        return self.data.shape[1]

    def crop(self, frames):
        return MelSpectrogram(self.data[:frames], self.frame_rate, self.normalized)


def load_wav(path, sample_rate=22050):
    """
    Read a PCM WAV file as a mono float waveform at `sample_rate`.

    Multi-channel files are averaged, other sample rates are resampled.
    """
    path = Path(path)
    try:
        info = sf.info(str(path))
    except RuntimeError as error:
        raise AudioFormatError(f"Cannot read audio file {path}: {error}") from error
    if info.format not in ("WAV", "WAVEX") or not info.subtype.startswith("PCM"):
        raise AudioFormatError(f"{path} is not a PCM WAV file ({info.format}/{info.subtype})")
    wav, rate = sf.read(str(path), dtype="float64", always_2d=True)
    wav = wav.mean(axis=1)
    if rate != sample_rate:
        logger.debug(f"Resampling {path} from {rate} Hz to {sample_rate} Hz")
        wav = librosa.resample(wav, orig_sr=rate, target_sr=sample_rate)
    return np.clip(wav, -1.0, 1.0)


def write_wav(path, wav, sample_rate=22050):
    """Write a mono waveform as 16-bit PCM"""
    wav = np.clip(np.asarray(wav, dtype=np.float64), -1.0, 1.0)
    sf.write(str(path), wav, sample_rate, subtype="PCM_16")


_MEL_BASIS = {}


def mel_basis(cfg: FeatureConfig):
    """Slaney-style area normalised mel filterbank, 0 Hz to Nyquist"""
    key = (cfg.sample_rate, cfg.fft_size, cfg.n_mels)
    if key not in _MEL_BASIS:
        _MEL_BASIS[key] = librosa.filters.mel(
            sr=cfg.sample_rate, n_fft=cfg.fft_size, n_mels=cfg.n_mels, fmin=0.0, fmax=cfg.fmax, htk=False, norm="slaney"
        ).astype(np.float64)
    return _MEL_BASIS[key]


def power_spectrogram(wav, cfg: FeatureConfig):
    """|STFT|² of the reflection padded waveform, shape [fft_size/2+1 x frames]"""
    wav = np.asarray(wav, dtype=np.float64)
    if wav.ndim != 1:
        raise ShapeError(f"Waveform must be 1D, got shape {wav.shape}")
    if wav.size < cfg.win:
        raise ShapeError(f"Waveform of {wav.size} samples is shorter than the window ({cfg.win})")
    pad = cfg.win // 2
    padded = np.pad(wav, (pad, pad), mode="reflect")
    spec = librosa.stft(padded, n_fft=cfg.fft_size, hop_length=cfg.hop, win_length=cfg.win, window="hann", center=False)
    return np.abs(spec) ** 2


def mel_spectrogram(wav, cfg: FeatureConfig = FeatureConfig()):
    """Natural-log mel power spectrogram clamped at `log_floor`"""
    power = power_spectrogram(wav, cfg)
    mel = mel_basis(cfg) @ power
    logmel = np.log(np.maximum(mel, cfg.log_floor)).T
    return MelSpectrogram(np.ascontiguousarray(logmel), frame_rate=cfg.frame_rate)


def compute_stats(mels):
    """Per-bin mean and std over all frames of a list of (unnormalised) mels"""
    if not mels:
        raise DataError("Cannot compute statistics over an empty corpus")
    stacked = np.concatenate([np.asarray(m.data, dtype=np.float64) for m in mels], axis=0)
    return FeatureStats(stacked.mean(axis=0), stacked.std(axis=0))


def normalize(mel: MelSpectrogram, stats: FeatureStats):
    if stats is None:
        raise DataError("Normalisation statistics are required")
    if mel.n_mels != stats.mean.size:
        raise ShapeError(f"Mel has {mel.n_mels} bins but stats have {stats.mean.size}")
    data = (np.asarray(mel.data, dtype=np.float64) - stats.mean) / stats.std
    return MelSpectrogram(data, mel.frame_rate, normalized=True)


def denormalize(mel: MelSpectrogram, stats: FeatureStats):
    if stats is None:
        raise DataError("Normalisation statistics are required")
    if mel.n_mels != stats.mean.size:
        raise ShapeError(f"Mel has {mel.n_mels} bins but stats have {stats.mean.size}")
    data = np.asarray(mel.data, dtype=np.float64) * stats.std + stats.mean
    return MelSpectrogram(data, mel.frame_rate, normalized=False)


def mel_invert_diagnostic(mel: MelSpectrogram, cfg: FeatureConfig = FeatureConfig(), n_iter=32):
    """
    Rough waveform from an unnormalised log-mel: mel pseudo-inverse followed by
    Griffin-Lim phase recovery. For listening/debugging only.
    """
    if mel.n_mels != cfg.n_mels:
        raise ShapeError(f"Mel has {mel.n_mels} bins, config expects {cfg.n_mels}")
    power = np.maximum(np.exp(np.asarray(mel.data, dtype=np.float64)) - cfg.log_floor, 0.0).T
    length = mel.frames * cfg.hop
    if not np.any(power > 0):
        return np.zeros(length)
    magnitude = librosa.feature.inverse.mel_to_stft(
        power, sr=cfg.sample_rate, n_fft=cfg.fft_size, power=2.0, fmin=0.0, fmax=cfg.fmax, htk=False, norm="slaney"
    )
    wav = librosa.griffinlim(
        magnitude,
        n_iter=n_iter,
        hop_length=cfg.hop,
        win_length=cfg.win,
        n_fft=cfg.fft_size,
        window="hann",
        center=True,
        length=length,
        random_state=0,
    )
    return np.clip(wav, -1.0, 1.0)


def write_mel(path, mel: MelSpectrogram):
    """Mel matrix file: magic, (frames, bins) as uint32 little endian, row-major float32"""
    data = np.ascontiguousarray(mel.data, dtype="<f4")
    with open(path, "wb") as handle:
        handle.write(MEL_MAGIC)
        handle.write(struct.pack("<II", data.shape[0], data.shape[1]))
        handle.write(data.tobytes(order="C"))


def read_mel(path, frame_rate=22050 / 256, normalized=False):
    path = Path(path)
    if not path.is_file():
        raise DataError(f"Missing mel file: {path}")
    raw = path.read_bytes()
    header = len(MEL_MAGIC) + 8
    if len(raw) < header or raw[: len(MEL_MAGIC)] != MEL_MAGIC:
        raise DataError(f"{path} is not a mel matrix file")
    frames, bins = struct.unpack("<II", raw[len(MEL_MAGIC) : header])
    body = raw[header:]
    if len(body) != frames * bins * 4:
        raise DataError(f"{path}: expected {frames}x{bins} floats, found {len(body) // 4}")
    data = np.frombuffer(body, dtype="<f4").reshape(frames, bins).astype(np.float64)
    return MelSpectrogram(data, frame_rate, normalized)


def read_manifest(path):
    """Tab separated `utterance_id, speaker_id, wav_path`; relative paths resolve against the manifest"""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"Missing manifest: {path}")
    frame = pd.read_csv(path, sep="\t", header=None, names=MANIFEST_COLUMNS, dtype=str, comment="#")
    if frame.isnull().values.any():
        raise DataError(f"Malformed manifest {path}: every line needs three tab separated fields")
    frame["wav_path"] = [str(p if Path(p).is_absolute() else path.parent / p) for p in frame["wav_path"]]
    return frame


def write_manifest(path, frame):
    frame[MANIFEST_COLUMNS].to_csv(path, sep="\t", header=False, index=False)
