"""
Feature extraction over a manifest and batching of normalised mel crops
"""
import logging
from pathlib import Path

import numpy as np
import pandas as pd
import torch
from tqdm import tqdm

from fastvg.common import DataError, ShapeError
from fastvg.features import (
    FeatureConfig,
    FeatureStats,
    compute_stats,
    load_wav,
    mel_spectrogram,
    normalize,
    read_manifest,
    read_mel,
    write_mel,
)

logger = logging.getLogger(__name__)

INDEX_COLUMNS = ["utterance_id", "speaker_id", "split", "frames", "mel_path", "wav_path"]


class FeatureSet:
    """
    Extracted features of a corpus: the index table, the normalisation
    statistics and lazily loaded normalised mels.

    The folder structure looks like:

      features
      |- mels/<utterance_id>.mel
      |- index.tsv
      |- stats.npz
    """

    def __init__(self, directory, index, stats: FeatureStats, cfg: FeatureConfig = FeatureConfig()):
        self.directory = Path(directory)
        self.index = index.reset_index(drop=True)
        self.stats = stats
        self.cfg = cfg
        self._cache = {}

    @classmethod
    def load(cls, directory, cfg: FeatureConfig = FeatureConfig()):
        directory = Path(directory)
        index_path = directory / "index.tsv"
        if not index_path.is_file():
            raise DataError(f"Missing prerequisite feature index: {index_path}")
        index = pd.read_csv(index_path, sep="\t", dtype={"utterance_id": str, "speaker_id": str, "split": str})
        missing = set(INDEX_COLUMNS) - set(index.columns)
        if missing:
            raise DataError(f"{index_path} lacks columns {sorted(missing)}")
        stats = FeatureStats.load(directory / "stats.npz")
        if stats.mean.size != cfg.n_mels:
            raise ShapeError(f"Statistics have {stats.mean.size} bins, configuration expects {cfg.n_mels}")
        return cls(directory, index, stats, cfg)

    def __len__(self):
        return len(self.index)

    def utterances(self, split=None):
        """Utterance ids, optionally restricted to a split, in index order"""
        frame = self.index if split is None else self.index[self.index["split"] == split]
        return list(frame["utterance_id"])

    def row(self, utterance_id):
        match = self.index[self.index["utterance_id"] == utterance_id]
        if match.empty:
            raise DataError(f"Unknown utterance {utterance_id}")
        return match.iloc[0]

    def speaker_of(self, utterance_id):
        return self.row(utterance_id)["speaker_id"]

    def raw_mel(self, utterance_id):
        """The unnormalised log-mel of an utterance"""
        return read_mel(self.directory / self.row(utterance_id)["mel_path"], frame_rate=self.cfg.frame_rate)

    def mel(self, utterance_id):
        """Normalised [frames x n_mels] float32 array"""
        if utterance_id not in self._cache:
            data = normalize(self.raw_mel(utterance_id), self.stats).data
            self._cache[utterance_id] = np.ascontiguousarray(data, dtype=np.float32)
        return self._cache[utterance_id]

    def wav(self, utterance_id):
        return load_wav(self.row(utterance_id)["wav_path"], self.cfg.sample_rate)


def extract_features(manifest_path, out_dir, cfg: FeatureConfig = FeatureConfig(), split_fn=None, progress=True):
    """
    Compute log-mels of every utterance of a manifest.

    `split_fn(utterance_id)` gives the split of each utterance (everything is
    `train` when omitted). Statistics use the training split only.
    """
    out_dir = Path(out_dir)
    mel_dir = out_dir / "mels"
    mel_dir.mkdir(parents=True, exist_ok=True)
    manifest = read_manifest(manifest_path)
    if manifest.empty:
        raise DataError(f"Manifest {manifest_path} lists no utterances")

    records = []
    train_mels = []
    for row in tqdm(manifest.itertuples(index=False), total=len(manifest), disable=not progress, desc="Features"):
        mel = mel_spectrogram(load_wav(row.wav_path, cfg.sample_rate), cfg)
        write_mel(mel_dir / f"{row.utterance_id}.mel", mel)
        split = split_fn(row.utterance_id) if split_fn else "train"
        if split == "train":
            train_mels.append(mel)
        records.append(
            {
                "utterance_id": row.utterance_id,
                "speaker_id": row.speaker_id,
                "split": split,
                "frames": mel.frames,
                "mel_path": f"mels/{row.utterance_id}.mel",
                "wav_path": str(Path(row.wav_path).resolve()),
            }
        )
    if not train_mels:
        raise DataError("No training utterances to compute normalisation statistics on")
    stats = compute_stats(train_mels)
    stats.save(out_dir / "stats.npz")
    index = pd.DataFrame(records, columns=INDEX_COLUMNS)
    index.to_csv(out_dir / "index.tsv", sep="\t", index=False)
    logger.info(f"Extracted features of {len(index)} utterances ({len(train_mels)} for training) into {out_dir}")
    return FeatureSet(out_dir, index, stats, cfg)


def random_crop(mel, crop, rng):
    """
    A `crop`-frame window of a [frames x n_mels] array and its first frame.

    Shorter inputs are padded by repeating the last frame.
    """
    frames = mel.shape[0]
    if frames <= crop:
        return np.pad(mel, ((0, crop - frames), (0, 0)), mode="edge"), 0
    start = int(rng.integers(0, frames - crop + 1))
    return mel[start : start + crop], start


def batch_indices(n_items, batch_size, rng):
    """Shuffled batches of indices; the last one may be smaller"""
    if n_items < 1:
        raise DataError("No training items")
    order = rng.permutation(n_items)
    return [order[i : i + batch_size] for i in range(0, n_items, batch_size)]


def mel_batch(arrays):
    """Stack [crop x n_mels] arrays into a channel-first float32 tensor [B, n_mels, crop]"""
    return torch.from_numpy(np.stack([a.T for a in arrays]).astype(np.float32))


def crop_batch(feature_set: FeatureSet, utterances, crop, rng):
    return mel_batch([random_crop(feature_set.mel(utt), crop, rng)[0] for utt in utterances])


def aligned_wav_segment(wav, start, crop, hop):
    """Samples [start·hop, (start+crop)·hop), zero padded at the end"""
    segment = wav[start * hop : (start + crop) * hop]
    return np.pad(segment, (0, crop * hop - segment.size))
