"""
Vocoder pretraining with the multi-resolution STFT loss
"""
import logging
import time
from dataclasses import dataclass

import numpy as np
import pandas as pd
import torch
from tqdm import trange

from fastvg.common import DataError, NumericError
from fastvg.networks import build, freeze
from fastvg.networks.vocoder import Vocoder, stft_loss
from fastvg.training.data import FeatureSet, aligned_wav_segment, batch_indices, mel_batch, random_crop
from fastvg.utils import derive_seed, numpy_rng

logger = logging.getLogger(__name__)

N_VALIDATION = 8


@dataclass
class VocoderResult:
    vocoder: Vocoder
    history: pd.DataFrame
    initial_val_loss: float
    final_val_loss: float

    @property
    def reduction(self):
        """Relative reduction of the validation loss, 1 - final/initial"""
        return 1.0 - self.final_val_loss / self.initial_val_loss


class WavCache:
    """Waveforms of a feature set, loaded once"""

    def __init__(self, feature_set: FeatureSet):
        self.feature_set = feature_set
        self._wavs = {}

    def __call__(self, utterance_id):
        if utterance_id not in self._wavs:
            self._wavs[utterance_id] = self.feature_set.wav(utterance_id)
        return self._wavs[utterance_id]


def paired_batch(feature_set, wavs, utterances, crop, rng):
    """Normalised mel crops [B, n_mels, crop] with their aligned waveform segments [B, crop·hop]"""
    hop = feature_set.cfg.hop
    mels, segments = [], []
    for utt in utterances:
        mel, start = random_crop(feature_set.mel(utt), crop, rng)
        mels.append(mel)
        segments.append(aligned_wav_segment(wavs(utt), start, crop, hop))
    return mel_batch(mels), torch.from_numpy(np.stack(segments).astype(np.float32))


def validation_loss(vocoder, batch):
    mel, wav = batch
    with torch.no_grad():
        return float(stft_loss(wav, vocoder(mel)).item())


def train_vocoder(feature_set: FeatureSet, preset, epochs=30, batch_size=16, lr=2e-4, crop=32, seed=0, progress=True):
    """
    Fit the vocoder on (mel crop, waveform segment) pairs and freeze it.

    The validation batch is drawn once from held-out utterances (the last
    training utterances when there are none) so that the initial and final
    losses are comparable.
    """
    train = feature_set.utterances("train")
    heldout = feature_set.utterances("heldout") or train[-N_VALIDATION:]
    if not train:
        raise DataError("No training utterances for the vocoder")
    wavs = WavCache(feature_set)
    vocoder = build("vocoder", preset, seed=derive_seed(seed, "vocoder", "init"), hop=feature_set.cfg.hop)
    optimizer = torch.optim.Adam(vocoder.parameters(), lr=lr, betas=(0.8, 0.99))
    rng = numpy_rng(seed, "vocoder", "batches")
    val_batch = paired_batch(feature_set, wavs, heldout[:N_VALIDATION], crop, numpy_rng(seed, "vocoder", "validation"))

    initial = validation_loss(vocoder, val_batch)
    logger.info(f"Vocoder validation loss at initialisation: {initial:.4f}")
    records = []
    start = time.perf_counter()
    for epoch in trange(1, epochs + 1, disable=not progress, desc="Vocoder"):
        losses = []
        for indices in batch_indices(len(train), batch_size, rng):
            mel, wav = paired_batch(feature_set, wavs, [train[i] for i in indices], crop, rng)
            loss = stft_loss(wav, vocoder(mel))
            if not torch.isfinite(loss):
                raise NumericError(f"Vocoder loss diverged at epoch {epoch}: {loss.item()}")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            losses.append(loss.item())
        val = validation_loss(vocoder, val_batch)
        records.append({"epoch": epoch, "mean_loss": float(np.mean(losses)), "val_loss": val, "wall_time": time.perf_counter() - start})
        logger.info(f"Vocoder epoch {epoch}: train {records[-1]['mean_loss']:.4f}, validation {val:.4f}")

    final = validation_loss(vocoder, val_batch)
    result = VocoderResult(freeze(vocoder), pd.DataFrame(records, columns=["epoch", "mean_loss", "val_loss", "wall_time"]), initial, final)
    logger.info(f"Vocoder validation loss {initial:.4f} -> {final:.4f} ({100 * result.reduction:.1f}% reduction)")
    return result
