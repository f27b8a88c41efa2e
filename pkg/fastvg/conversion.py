"""
Voice conversion by reverse diffusion: the K-step path, the one-step path and
the sweep over the initial state
"""
import logging
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np
import pandas as pd
import torch
from tqdm import tqdm

from fastvg.checkpoint import ModelBundle
from fastvg.common import ParameterError
from fastvg.features import MelSpectrogram, denormalize, normalize
from fastvg.networks import as_batch, from_batch
from fastvg.networks.encoders import encode_content, encode_speaker
from fastvg.schedule import build_subsequence, forward_diffuse, reverse_step
from fastvg.utils import derive_seed

logger = logging.getLogger(__name__)

INIT_MODES = ("clean_source", "diffused_source", "pure_noise")


@dataclass
class ConversionRequest:
    """
    One conversion: unnormalised source and target reference log-mels, the
    number of reverse steps, the subsequence endpoints (S_1, S_K), the
    initial state and the seed of the injected noise
    """

    source: MelSpectrogram
    target: MelSpectrogram
    k: int = 30
    endpoints: tuple = (50, 950)
    init_mode: str = "clean_source"
    seed: int = 0

    def __post_init__(self):
        if self.init_mode not in INIT_MODES:
            raise ParameterError(f"Unknown initial state {self.init_mode}, choose from {INIT_MODES}")
        if int(self.k) < 1:
            raise ParameterError(f"K must be at least 1, got {self.k}")


@dataclass
class ConversionResult:
    mel: MelSpectrogram  # unnormalised
    normalized: np.ndarray  # [frames x n_mels] in model space
    initial_state: np.ndarray  # [frames x n_mels] state before the first reverse step
    predictor_calls: int
    wall_time: float  # reverse diffusion only
    total_time: float  # conditioning extraction included
    steps: tuple = ()


class CallCounter:
    """Wraps a noise predictor and counts its evaluations"""

    def __init__(self, predictor):
        self.predictor = predictor
        self.calls = 0

    def __call__(self, x, t, s, p):
        self.calls += 1
        return self.predictor(x, t, s, p)


def initial_state(x0, mode, s_k, sched, generator):
    """x_{S_K} for each initial state mode"""
    if mode == "clean_source":
        return x0.clone()
    if mode == "diffused_source":
        eps = torch.randn(x0.shape, generator=generator, dtype=x0.dtype)
        return forward_diffuse(x0, s_k, eps, sched)
    if mode == "pure_noise":
        return torch.randn(x0.shape, generator=generator, dtype=x0.dtype)
    raise ParameterError(f"Unknown initial state {mode}, choose from {INIT_MODES}")


def reverse_diffusion(x, s, p, predictor, sub, generator):
    """Run k = K..1 with fresh z except z = 0 at the final step"""
    for k in range(sub.K, 0, -1):
        s_k = int(sub.S[k - 1])
        eps_hat = predictor(x, s_k, s, p)
        z = torch.randn(x.shape, generator=generator, dtype=x.dtype) if k > 1 else torch.zeros_like(x)
        x = reverse_step(x, k, eps_hat, z, sub)
    return x


def convert_multistep(req: ConversionRequest, model: ModelBundle):
    """
    K-step conversion with s from the target reference and p from the source.

    Deterministic given the request (including its seed).
    """
    start = time.perf_counter()
    sub = build_subsequence(int(req.k), req.endpoints, model.schedule)
    generator = torch.Generator().manual_seed(derive_seed(req.seed, "convert"))
    counter = CallCounter(model.predictor)
    with torch.no_grad():
        x0 = as_batch(normalize(req.source, model.stats))
        reference = as_batch(normalize(req.target, model.stats))
        s_tgt = encode_speaker(reference, model.speaker_encoder)
        p_src = encode_content(x0, model.content_encoder)
        loop_start = time.perf_counter()
        x = initial_state(x0, req.init_mode, int(sub.S[-1]), model.schedule, generator)
        x_init = from_batch(x)
        x = reverse_diffusion(x, s_tgt, p_src, counter, sub, generator)
        wall = time.perf_counter() - loop_start
    normalized = from_batch(x)
    mel = denormalize(MelSpectrogram(normalized, req.source.frame_rate, normalized=True), model.stats)
    logger.debug(f"Converted {req.source.frames} frames with K={sub.K} ({counter.calls} predictor calls) in {wall:.4f} s")
    return ConversionResult(
        mel=mel,
        normalized=normalized,
        initial_state=x_init,
        predictor_calls=counter.calls,
        wall_time=wall,
        total_time=time.perf_counter() - start,
        steps=tuple(int(v) for v in sub.S),
    )


def convert_fast(req: ConversionRequest, student: ModelBundle, s_k: Optional[int] = None):
    """
    One-step conversion from the diffused source at S_K (950 by default).

    Identical to `convert_multistep` with K = 1 and the diffused-source
    initial state on the same seed.
    """
    s_k = int(req.endpoints[1] if s_k is None else s_k)
    one_step = ConversionRequest(req.source, req.target, k=1, endpoints=(s_k, s_k), init_mode="diffused_source", seed=req.seed)
    return convert_multistep(one_step, student)


def sweep_initial_state(pairs, grid, modes, model: ModelBundle, verifier, seed=0, progress=True):
    """
    One-step (K = 1) conversion over a grid of S_K for each initial state mode.

    `pairs` holds (source, target reference, oracle) unnormalised mels;
    `verifier.accept_rate(converted, references)` gives the speaker
    verification proxy in percent. In the diffused mode S_K = T starts from
    pure noise. Returns a table with columns S_K, mode, quality_proxy, sva_proxy.
    """
    grid = [int(g) for g in grid]
    if not grid:
        raise ParameterError("Empty S_K grid")
    for mode in modes:
        if mode not in ("clean_source", "diffused_source"):
            raise ParameterError(f"Sweep modes are clean_source and diffused_source, got {mode}")
    from fastvg.evaluation import mel_distance

    rows = []
    combos = [(s_k, mode) for mode in modes for s_k in grid]
    for s_k, mode in tqdm(combos, disable=not progress, desc="Sweep"):
        init = "pure_noise" if (mode == "diffused_source" and s_k == model.schedule.T) else mode
        converted, references, distances = [], [], []
        for index, (source, target, oracle) in enumerate(pairs):
            req = ConversionRequest(source, target, k=1, endpoints=(s_k, s_k), init_mode=init, seed=derive_seed(seed, "sweep", index))
            result = convert_multistep(req, model)
            converted.append(result.mel)
            references.append(target)
            distances.append(mel_distance(result.mel, oracle)[0])
        rows.append(
            {
                "S_K": s_k,
                "mode": mode,
                "quality_proxy": 1.0 / (1.0 + float(np.mean(distances))),
                "sva_proxy": verifier.accept_rate(converted, references),
            }
        )
        logger.info(f"S_K={s_k} {mode}: quality {rows[-1]['quality_proxy']:.4f}, SVA proxy {rows[-1]['sva_proxy']:.1f}%")
    return pd.DataFrame(rows, columns=["S_K", "mode", "quality_proxy", "sva_proxy"])
