"""
Training of the multi-step (teacher) noise predictor with the DDPM objective
"""
import logging
import time
from dataclasses import dataclass

import numpy as np
import pandas as pd
import torch
from tqdm import trange

from fastvg.common import NumericError
from fastvg.networks import build
from fastvg.networks.encoders import ContentEncoder, SpeakerEncoder, encode_content, encode_speaker
from fastvg.networks.noise_predictor import NoisePredictor, predict_noise
from fastvg.schedule import NoiseSchedule, forward_diffuse
from fastvg.training.data import FeatureSet, batch_indices, crop_batch
from fastvg.utils import derive_seed, numpy_rng

logger = logging.getLogger(__name__)


def _check_finite(**tensors):
    for name, value in tensors.items():
        if not torch.isfinite(value).all():
            raise NumericError(f"Non-finite values in {name}")


def ddpm_loss(x0, t, eps, s, p, predictor, sched: NoiseSchedule):
    """
    L1 distance between the injected noise and its prediction at step t.

    `predictor(x_t, t, s, p)` may be any callable; `t` is a step or a
    per-example tensor of steps.
    """
    _check_finite(x0=x0, eps=eps, s=s, p=p)
    x_t = forward_diffuse(x0, t, eps, sched)
    return torch.mean(torch.abs(eps - predict_noise(x_t, t, s, p, predictor)))


def sample_steps(batch_size, T, generator):
    """Per-example steps drawn uniformly from 1..T"""
    return torch.randint(1, T + 1, (batch_size,), generator=generator)


@dataclass
class TeacherResult:
    predictor: NoisePredictor
    speaker_encoder: SpeakerEncoder
    history: pd.DataFrame
    step_counts: np.ndarray  # draws of each t over all epochs, index t-1


def train_teacher(
    feature_set: FeatureSet,
    content_encoder: ContentEncoder,
    preset,
    sched: NoiseSchedule,
    epochs=30,
    batch_size=32,
    lr=2e-4,
    beta1=0.9,
    beta2=0.999,
    crop=128,
    seed=0,
    progress=True,
):
    """
    Minimise the DDPM loss over the noise predictor and the speaker encoder.

    Conditioning is extracted from the same crop as x0. The content encoder
    is frozen. The same seed gives the same loss trajectory.
    """
    predictor = build("predictor", preset, seed=derive_seed(seed, "teacher", "init"))
    speaker_encoder = build("speaker_encoder", preset, seed=derive_seed(seed, "speaker", "init"))
    params = list(predictor.parameters()) + list(speaker_encoder.parameters())
    optimizer = torch.optim.Adam(params, lr=lr, betas=(beta1, beta2))
    rng = numpy_rng(seed, "teacher", "batches")
    generator = torch.Generator().manual_seed(derive_seed(seed, "teacher", "noise"))
    utterances = feature_set.utterances("train")
    counts = np.zeros(sched.T, dtype=np.int64)

    records = []
    start = time.perf_counter()
    for epoch in trange(1, epochs + 1, disable=not progress, desc="Teacher"):
        losses = []
        for step, indices in enumerate(batch_indices(len(utterances), batch_size, rng)):
            x0 = crop_batch(feature_set, [utterances[i] for i in indices], crop, rng)
            t = sample_steps(x0.shape[0], sched.T, generator)
            eps = torch.randn(x0.shape, generator=generator)
            with torch.no_grad():
                p = encode_content(x0, content_encoder)
            s = encode_speaker(x0, speaker_encoder)
            loss = ddpm_loss(x0, t, eps, s, p, predictor, sched)
            if not torch.isfinite(loss):
                raise NumericError(
                    f"Teacher training diverged at epoch {epoch}, batch {step}: loss {loss.item()}"
                    f" (previous batch {losses[-1] if losses else 'n/a'})"
                )
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            np.add.at(counts, t.numpy() - 1, 1)
            losses.append(loss.item())
            logger.debug(f"Teacher epoch {epoch} batch {step}: loss {losses[-1]:.5f}")
        records.append({"epoch": epoch, "mean_loss": float(np.mean(losses)), "wall_time": time.perf_counter() - start})
        logger.info(f"Teacher epoch {epoch}: mean loss {records[-1]['mean_loss']:.4f}")

    predictor.eval()
    speaker_encoder.eval()
    history = pd.DataFrame(records, columns=["epoch", "mean_loss", "wall_time"])
    return TeacherResult(predictor, speaker_encoder, history, counts)
