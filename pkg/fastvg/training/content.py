"""
Pretraining of the frame-level content autoencoder
"""
import logging
import time

import numpy as np
import pandas as pd
import torch
from tqdm import trange

from fastvg.common import NumericError
from fastvg.networks import build, freeze
from fastvg.training.data import FeatureSet, batch_indices, crop_batch
from fastvg.utils import derive_seed, numpy_rng

logger = logging.getLogger(__name__)


def train_content_encoder(feature_set: FeatureSet, preset, epochs=10, batch_size=32, lr=1e-3, crop=128, seed=0, progress=True):
    """
    Train the content autoencoder with an L1 reconstruction loss and freeze it.

    Returns the frozen encoder and the per-epoch history (epoch, mean_loss, wall_time).
    """
    encoder = build("content_encoder", preset, seed=derive_seed(seed, "content", "init"))
    optimizer = torch.optim.Adam(encoder.parameters(), lr=lr)
    rng = numpy_rng(seed, "content", "batches")
    utterances = feature_set.utterances("train")

    records = []
    start = time.perf_counter()
    for epoch in trange(1, epochs + 1, disable=not progress, desc="Content"):
        losses = []
        for indices in batch_indices(len(utterances), batch_size, rng):
            x = crop_batch(feature_set, [utterances[i] for i in indices], crop, rng)
            loss = encoder.reconstruction_loss(x)
            if not torch.isfinite(loss):
                raise NumericError(f"Content encoder loss diverged at epoch {epoch}: {loss.item()}")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            losses.append(loss.item())
        records.append({"epoch": epoch, "mean_loss": float(np.mean(losses)), "wall_time": time.perf_counter() - start})
        logger.info(f"Content epoch {epoch}: reconstruction loss {records[-1]['mean_loss']:.4f}")
    return freeze(encoder), pd.DataFrame(records, columns=["epoch", "mean_loss", "wall_time"])
