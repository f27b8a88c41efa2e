"""
Adversarial conditional diffusion distillation of the teacher into a one-step student

Code namings:
  x0        - clean (normalised) mel batch [B, n_mels, L]
  x_theta   - one-step student prediction from x_{S_K}
  x_phi     - teacher one-step prediction from the t-step diffused, detached x_theta
  V, D      - frozen vocoder and multi-resolution discriminator
"""
import copy
import logging
import time
from dataclasses import dataclass, field

import pandas as pd
import torch
from tqdm import trange

from fastvg.common import ContractViolation, NumericError, ParameterError, ShapeError
from fastvg.networks import build, freeze, is_frozen, state_hash
from fastvg.networks.discriminator import MultiResolutionDiscriminator, discriminate
from fastvg.networks.encoders import encode_content, encode_speaker
from fastvg.networks.noise_predictor import NoisePredictor, predict_noise
from fastvg.networks.vocoder import vocode
from fastvg.schedule import (
    NoiseSchedule,
    build_subsequence,
    denoise_mean,
    distillation_weight,
    forward_diffuse,
    posterior_mean,
    predict_start,
)
from fastvg.training.data import FeatureSet, batch_indices, crop_batch
from fastvg.training.teacher import sample_steps
from fastvg.utils import derive_seed, numpy_rng

logger = logging.getLogger(__name__)

HISTORY_COLUMNS = ["step", "adv_g", "adv_d", "fm", "dist", "total_g"]
VARIANTS = ("full", "adv", "dist")
TEACHER_MEANS = ("x0", "posterior")
COLLAPSE_THRESHOLD = 1e-4
COLLAPSE_STEPS = 100


def student_generate(x0, s, p, student, sched: NoiseSchedule, s_k, eps):
    """
    One-step prediction x_theta = μ_θ(x_{S_K}, S_K, s, p) with
    x_{S_K} = forward_diffuse(x0, S_K, eps). Returns (x_theta, x_{S_K}).
    """
    sub = build_subsequence(1, (s_k, s_k), sched)
    x_sk = forward_diffuse(x0, s_k, eps, sched)
    eps_hat = predict_noise(x_sk, s_k, s, p, student)
    return denoise_mean(x_sk, eps_hat, 1, sub), x_sk


def lsgan_d_loss(real_scores, fake_scores):
    """E[(D(real) - 1)²] + E[D(fake)²], averaged over resolutions"""
    if len(real_scores) != len(fake_scores):
        raise ShapeError("Real and fake branches have different numbers of resolutions")
    terms = [torch.mean((1 - r) ** 2) + torch.mean(f**2) for r, f in zip(real_scores, fake_scores)]
    return sum(terms) / len(terms)


def lsgan_g_loss(fake_scores):
    """E[(D(fake) - 1)²], averaged over resolutions"""
    terms = [torch.mean((1 - f) ** 2) for f in fake_scores]
    return sum(terms) / len(terms)


def feature_matching(real_fmaps, fake_fmaps):
    """
    Σ_l (1/N_l)‖D_l(real) - D_l(fake)‖₁ per resolution (batch averaged),
    averaged over resolutions
    """
    if len(real_fmaps) != len(fake_fmaps):
        raise ShapeError("Real and fake branches have different numbers of resolutions")
    totals = []
    for real, fake in zip(real_fmaps, fake_fmaps):
        if len(real) != len(fake):
            raise ShapeError(f"Feature layer count mismatch: {len(real)} vs {len(fake)}")
        totals.append(sum(torch.mean(torch.abs(r - f)) for r, f in zip(real, fake)))
    return sum(totals) / len(totals)


def adv_loss_d(real_mel, x_theta, disc, vocoder):
    """Discriminator loss on vocoded real and (detached) student mels"""
    with torch.no_grad():
        real_wav = vocoder(real_mel)
        fake_wav = vocoder(x_theta.detach())
    real_scores, _ = disc(real_wav)
    fake_scores, _ = disc(fake_wav)
    return lsgan_d_loss(real_scores, fake_scores)


def adv_loss_g(x_theta, disc, vocoder):
    fake_scores, _ = disc(vocoder(x_theta))
    return lsgan_g_loss(fake_scores)


def fm_loss(real_mel, x_theta, disc, vocoder):
    with torch.no_grad():
        _, real_fmaps = disc(vocoder(real_mel))
    _, fake_fmaps = disc(vocoder(x_theta))
    return feature_matching(real_fmaps, fake_fmaps)


def teacher_prediction(x_t, t, s, p, teacher, sched: NoiseSchedule, mean="x0"):
    """x_phi under no gradient, in the x0-prediction or the raw posterior-mean form"""
    if mean not in TEACHER_MEANS:
        raise ParameterError(f"Unknown teacher mean form {mean}, choose from {TEACHER_MEANS}")
    with torch.no_grad():
        eps_hat = predict_noise(x_t, t, s, p, teacher)
        if mean == "x0":
            return predict_start(x_t, t, eps_hat, sched)
        return posterior_mean(x_t, t, eps_hat, sched)


def score_distillation_loss(x_theta, t, s, p, teacher, sched: NoiseSchedule, eps, mean="x0"):
    """
    c(t)·‖x_phi - x_theta‖₁ with c(t) = α_t, averaged over the batch.

    x_phi is computed from forward_diffuse(sg(x_theta), t, eps) without
    gradient, so only the x_theta term of the norm carries gradient.
    """
    x_theta_t = forward_diffuse(x_theta.detach(), t, eps, sched)
    x_phi = teacher_prediction(x_theta_t, t, s, p, teacher, sched, mean)
    if torch.is_tensor(t):
        weight = distillation_weight(t, sched).to(dtype=x_theta.dtype).reshape(-1, *([1] * (x_theta.dim() - 1)))
    else:
        weight = distillation_weight(t, sched)
    return torch.mean(weight * torch.abs(x_phi - x_theta))


def loss_weights(variant, lambda_fm, lambda_dist):
    """Weights of (adv, fm, dist) in the generator objective"""
    if variant == "full":
        return 1.0, lambda_fm, lambda_dist
    if variant == "adv":
        return 1.0, lambda_fm, 0.0
    if variant == "dist":
        return 0.0, 0.0, lambda_dist
    raise ParameterError(f"Unknown distillation variant {variant}, choose from {VARIANTS}")


@dataclass
class DistillResult:
    student: NoisePredictor
    discriminator: MultiResolutionDiscriminator
    history: pd.DataFrame
    collapse_warnings: int = 0
    frozen_hashes: dict = field(default_factory=dict)


class Distiller:
    """
    Alternating optimisation of L_ACDD(D) and L_ACDD(θ).

    The student starts as a copy of the teacher. The teacher, the vocoder and
    both encoders are frozen and their hashes are verified after every run.
    """

    def __init__(
        self,
        teacher,
        speaker_encoder,
        content_encoder,
        vocoder,
        sched: NoiseSchedule,
        preset,
        lr=2e-4,
        beta1=0.5,
        beta2=0.9,
        lambda_fm=2.0,
        lambda_dist=45.0,
        s_k=950,
        variant="full",
        teacher_mean="x0",
        seed=0,
    ):
        if not is_frozen(vocoder):
            raise ContractViolation("The vocoder must be frozen before distillation")
        if not 1 <= int(s_k) <= sched.T:
            raise ParameterError(f"S_K={s_k} outside [1, {sched.T}]")
        if teacher_mean not in TEACHER_MEANS:
            raise ParameterError(f"Unknown teacher mean form {teacher_mean}, choose from {TEACHER_MEANS}")
        self.weights = loss_weights(variant, lambda_fm, lambda_dist)
        self.variant = variant
        self.teacher_mean = teacher_mean
        self.sched = sched
        self.s_k = int(s_k)
        self.frozen = {
            "teacher": freeze(teacher),
            "vocoder": vocoder,
            "speaker_encoder": freeze(speaker_encoder),
            "content_encoder": freeze(content_encoder),
        }
        self.frozen_hashes = {name: state_hash(module) for name, module in self.frozen.items()}

        self.student = copy.deepcopy(teacher)
        for param in self.student.parameters():
            param.requires_grad_(True)
        self.student.train()
        self.discriminator = build("discriminator", preset, seed=derive_seed(seed, "distill", "discriminator"))
        self.opt_g = torch.optim.Adam(self.student.parameters(), lr=lr, betas=(beta1, beta2))
        self.opt_d = torch.optim.Adam(self.discriminator.parameters(), lr=lr, betas=(beta1, beta2))
        self.generator = torch.Generator().manual_seed(derive_seed(seed, "distill", "noise"))
        self.n_steps = 0
        self._low_d_streak = 0
        self.collapse_warnings = 0

    @property
    def teacher(self):
        return self.frozen["teacher"]

    @property
    def vocoder(self):
        return self.frozen["vocoder"]

    def verify_frozen(self):
        """Raise ContractViolation if a frozen network changed"""
        for name, module in self.frozen.items():
            if state_hash(module) != self.frozen_hashes[name]:
                raise ContractViolation(f"The frozen {name} was modified during distillation")

    def step(self, x0):
        """One discriminator update followed by one generator update; returns the logged components"""
        with torch.no_grad():
            s = encode_speaker(x0, self.frozen["speaker_encoder"])
            p = encode_content(x0, self.frozen["content_encoder"])
        eps_sk = torch.randn(x0.shape, generator=self.generator)
        eps_t = torch.randn(x0.shape, generator=self.generator)
        t = sample_steps(x0.shape[0], self.sched.T, self.generator)

        x_theta, _ = student_generate(x0, s, p, self.student, self.sched, self.s_k, eps_sk)
        with torch.no_grad():
            real_wav = vocode(x0, self.vocoder)
            fake_wav_detached = vocode(x_theta.detach(), self.vocoder)

        # Discriminator phase
        real_scores, _ = discriminate(real_wav, self.discriminator)
        fake_scores, _ = discriminate(fake_wav_detached, self.discriminator)
        adv_d = lsgan_d_loss(real_scores, fake_scores)
        if self.variant != "dist":
            self.opt_d.zero_grad()
            adv_d.backward()
            self.opt_d.step()

        # Generator phase
        with torch.no_grad():
            _, real_fmaps = discriminate(real_wav, self.discriminator)
        fake_scores, fake_fmaps = discriminate(vocode(x_theta, self.vocoder), self.discriminator)
        adv_g = lsgan_g_loss(fake_scores)
        fm = feature_matching(real_fmaps, fake_fmaps)
        dist = score_distillation_loss(x_theta, t, s, p, self.teacher, self.sched, eps_t, self.teacher_mean)
        w_adv, w_fm, w_dist = self.weights
        total = w_adv * adv_g + w_fm * fm + w_dist * dist
        if not torch.isfinite(total) or not torch.isfinite(adv_d):
            raise NumericError(
                f"Non-finite distillation loss at step {self.n_steps + 1}: "
                f"adv_g={adv_g.item()}, fm={fm.item()}, dist={dist.item()}, adv_d={adv_d.item()}"
            )
        self.opt_g.zero_grad()
        total.backward()
        self.opt_g.step()

        self.n_steps += 1
        record = {
            "step": self.n_steps,
            "adv_g": adv_g.item(),
            "adv_d": adv_d.item(),
            "fm": fm.item(),
            "dist": dist.item(),
            "total_g": total.item(),
        }
        self._watch_collapse(record["adv_d"])
        logger.debug(
            f"Distill step {self.n_steps}: adv_g {record['adv_g']:.4f} adv_d {record['adv_d']:.4f} "
            f"fm {record['fm']:.4f} dist {record['dist']:.4f} total {record['total_g']:.4f}"
        )
        return record

    def _watch_collapse(self, adv_d):
        if self.variant == "dist":
            return
        self._low_d_streak = self._low_d_streak + 1 if adv_d < COLLAPSE_THRESHOLD else 0
        if self._low_d_streak == COLLAPSE_STEPS:
            self.collapse_warnings += 1
            logger.warning(
                f"Discriminator loss below {COLLAPSE_THRESHOLD} for {COLLAPSE_STEPS} consecutive steps (step {self.n_steps}); "
                "the discriminator may have collapsed"
            )


def distill(
    feature_set: FeatureSet,
    teacher,
    speaker_encoder,
    content_encoder,
    vocoder,
    sched: NoiseSchedule,
    preset,
    epochs=20,
    max_steps=0,
    batch_size=32,
    crop=32,
    seed=0,
    progress=True,
    **options,
):
    """
    Run the distillation over the training split.

    `options` are forwarded to `Distiller` (learning rate, moments, λ values,
    S_K, variant, teacher mean form). `max_steps > 0` stops early.
    """
    distiller = Distiller(teacher, speaker_encoder, content_encoder, vocoder, sched, preset, seed=seed, **options)
    rng = numpy_rng(seed, "distill", "batches")
    utterances = feature_set.utterances("train")
    records = []
    start = time.perf_counter()
    for epoch in trange(1, epochs + 1, disable=not progress, desc="Distill"):
        for indices in batch_indices(len(utterances), batch_size, rng):
            x0 = crop_batch(feature_set, [utterances[i] for i in indices], crop, rng)
            records.append(distiller.step(x0))
            if max_steps and distiller.n_steps >= max_steps:
                break
        last = records[-1]
        logger.info(
            f"Distill epoch {epoch} (step {last['step']}, {time.perf_counter() - start:.1f} s): "
            f"adv_g {last['adv_g']:.4f} adv_d {last['adv_d']:.4f} fm {last['fm']:.4f} dist {last['dist']:.4f}"
        )
        if max_steps and distiller.n_steps >= max_steps:
            break
    distiller.verify_frozen()
    distiller.student.eval()
    return DistillResult(
        student=distiller.student,
        discriminator=distiller.discriminator,
        history=pd.DataFrame(records, columns=HISTORY_COLUMNS),
        collapse_warnings=distiller.collapse_warnings,
        frozen_hashes=dict(distiller.frozen_hashes),
    )
