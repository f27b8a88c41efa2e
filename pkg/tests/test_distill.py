"""
Tests for the adversarial conditional diffusion distillation
"""
import logging
import math

import numpy as np
import pytest
import torch

from fastvg.common import ContractViolation, ParameterError, ShapeError
from fastvg.networks import build, freeze, state_hash
from fastvg.training.data import crop_batch
from fastvg.training.distill import (
    COLLAPSE_STEPS,
    HISTORY_COLUMNS,
    Distiller,
    adv_loss_d,
    adv_loss_g,
    distill,
    feature_matching,
    fm_loss,
    loss_weights,
    lsgan_d_loss,
    lsgan_g_loss,
    score_distillation_loss,
    student_generate,
    teacher_prediction,
)

# pylint: disable=redefined-outer-name


@pytest.fixture
def networks(tiny_preset):
    """Teacher, encoders and a frozen vocoder on the tiny preset"""
    return {
        "teacher": build("predictor", tiny_preset, seed=0),
        "speaker_encoder": build("speaker_encoder", tiny_preset, seed=1),
        "content_encoder": build("content_encoder", tiny_preset, seed=2),
        "vocoder": freeze(build("vocoder", tiny_preset, seed=3)),
    }


def test_lsgan_constant_discriminator():
    """D ≡ 0.5 gives 0.25 + 0.25 for the discriminator and 0.25 for the generator"""
    half = [torch.full((2, 7), 0.5), torch.full((2, 3), 0.5)]
    assert lsgan_d_loss(half, half).item() == pytest.approx(0.5)
    assert lsgan_g_loss(half).item() == pytest.approx(0.25)
    with pytest.raises(ShapeError):
        lsgan_d_loss(half, half[:1])


def test_feature_matching():
    real = [[torch.zeros(2, 3), torch.zeros(2, 5)], [torch.zeros(2, 4), torch.zeros(2, 4)]]
    fake = [[torch.ones(2, 3), torch.full((2, 5), 2.0)], [torch.ones(2, 4), torch.ones(2, 4)]]
    # (1 + 2) and (1 + 1), averaged over the resolutions
    assert feature_matching(real, fake).item() == pytest.approx(2.5)
    assert feature_matching(real, real).item() == 0.0
    with pytest.raises(ShapeError):
        feature_matching(real, [fake[0][:1], fake[1]])


def test_loss_weights():
    assert loss_weights("full", 2.0, 45.0) == (1.0, 2.0, 45.0)
    assert loss_weights("adv", 2.0, 45.0) == (1.0, 2.0, 0.0)
    assert loss_weights("dist", 2.0, 45.0) == (0.0, 0.0, 45.0)
    with pytest.raises(ParameterError):
        loss_weights("none", 2.0, 45.0)


def test_vocoded_losses(networks, tiny_preset):
    """Losses on vocoded mels: only the generator losses reach x_theta"""
    disc = build("discriminator", tiny_preset, seed=4)
    x0 = torch.randn(2, tiny_preset.n_mels, 8)
    x_theta = torch.randn(2, tiny_preset.n_mels, 8, requires_grad=True)
    vocoder = networks["vocoder"]

    adv_d = adv_loss_d(x0, x_theta, disc, vocoder)
    with torch.no_grad():
        real_scores, _ = disc(vocoder(x0))
        fake_scores, _ = disc(vocoder(x_theta))
    assert adv_d.item() == pytest.approx(lsgan_d_loss(real_scores, fake_scores).item(), rel=1e-5)
    adv_d.backward()
    assert x_theta.grad is None

    adv_loss_g(x_theta, disc, vocoder).backward()
    assert x_theta.grad is not None
    assert torch.all(torch.isfinite(x_theta.grad))

    assert fm_loss(x0, x0, disc, vocoder).item() == pytest.approx(0.0, abs=1e-6)
    assert fm_loss(x0, x_theta, disc, vocoder).item() > 0


def test_student_generate(networks, tiny_preset, schedule):
    x0 = torch.randn(2, tiny_preset.n_mels, 8)
    s = torch.randn(2, tiny_preset.speaker_dim)
    p = torch.randn(2, tiny_preset.content_dim, 8)
    eps = torch.randn_like(x0)
    x_theta, x_sk = student_generate(x0, s, p, networks["teacher"], schedule, 950, eps)
    assert x_theta.shape == x0.shape
    abar = schedule.alpha_bar_at(950)
    torch.testing.assert_close(x_sk, math.sqrt(abar) * x0 + math.sqrt(1 - abar) * eps)


def test_score_distillation_exact_teacher(schedule):
    """A teacher that recovers the injected noise reproduces x_theta, so the loss vanishes"""
    torch.manual_seed(0)
    x_theta = torch.randn(3, 8, 6, dtype=torch.float64, requires_grad=True)
    eps = torch.randn(3, 8, 6, dtype=torch.float64)
    t = torch.tensor([5, 400, 900])
    loss = score_distillation_loss(x_theta, t, None, None, lambda *args: eps, schedule, eps)
    assert loss.item() == pytest.approx(0.0, abs=1e-10)


def test_score_distillation_stop_gradient(networks, tiny_preset, schedule):
    """Gradients reach x_theta only, never the teacher"""
    teacher = networks["teacher"]
    x_theta = torch.randn(2, tiny_preset.n_mels, 8, requires_grad=True)
    s = torch.randn(2, tiny_preset.speaker_dim)
    p = torch.randn(2, tiny_preset.content_dim, 8)
    eps = torch.randn(2, tiny_preset.n_mels, 8)
    t = torch.tensor([100, 800])
    loss = score_distillation_loss(x_theta, t, s, p, teacher, schedule, eps)
    loss.backward()
    assert all(param.grad is None for param in teacher.parameters())
    x_phi = teacher_prediction(torch.zeros_like(eps), t, s, p, teacher, schedule)
    assert not x_phi.requires_grad
    # d/dx_theta of mean(c·|x_phi - x_theta|) is -c·sign(x_phi - x_theta)/N
    weights = torch.tensor([schedule.alpha_at(100), schedule.alpha_at(800)], dtype=torch.float32)
    magnitudes = x_theta.grad.abs() * x_theta.numel()
    torch.testing.assert_close(magnitudes[0], torch.full_like(magnitudes[0], float(weights[0])))
    torch.testing.assert_close(magnitudes[1], torch.full_like(magnitudes[1], float(weights[1])))


def test_teacher_prediction_forms(networks, tiny_preset, schedule):
    x_t = torch.randn(1, tiny_preset.n_mels, 8)
    s = torch.randn(1, tiny_preset.speaker_dim)
    p = torch.randn(1, tiny_preset.content_dim, 8)
    start = teacher_prediction(x_t, 300, s, p, networks["teacher"], schedule, mean="x0")
    posterior = teacher_prediction(x_t, 300, s, p, networks["teacher"], schedule, mean="posterior")
    assert start.shape == posterior.shape == x_t.shape
    assert not torch.allclose(start, posterior)
    with pytest.raises(ParameterError):
        teacher_prediction(x_t, 300, s, p, networks["teacher"], schedule, mean="eps")


def test_vocoder_must_be_frozen(networks, tiny_preset, schedule):
    vocoder = build("vocoder", tiny_preset, seed=0)
    with pytest.raises(ContractViolation):
        Distiller(networks["teacher"], networks["speaker_encoder"], networks["content_encoder"], vocoder, schedule, tiny_preset)
    with pytest.raises(ParameterError):
        Distiller(
            networks["teacher"], networks["speaker_encoder"], networks["content_encoder"], networks["vocoder"], schedule, tiny_preset, s_k=1001
        )


@pytest.mark.parametrize("variant, updates_discriminator", [("full", True), ("dist", False)])
def test_distiller_step(networks, tiny_preset, schedule, tiny_features, variant, updates_discriminator):
    distiller = Distiller(
        networks["teacher"],
        networks["speaker_encoder"],
        networks["content_encoder"],
        networks["vocoder"],
        schedule,
        tiny_preset,
        variant=variant,
    )
    x0 = crop_batch(tiny_features, tiny_features.utterances("train")[:2], 8, np.random.default_rng(0))
    disc_before = state_hash(distiller.discriminator)
    student_before = state_hash(distiller.student)
    assert student_before == state_hash(distiller.teacher)
    record = distiller.step(x0)
    assert list(record) == HISTORY_COLUMNS
    assert record["step"] == 1
    assert (state_hash(distiller.discriminator) != disc_before) == updates_discriminator
    assert state_hash(distiller.student) != student_before
    distiller.verify_frozen()


def test_frozen_modification_detected(networks, tiny_preset, schedule):
    distiller = Distiller(
        networks["teacher"], networks["speaker_encoder"], networks["content_encoder"], networks["vocoder"], schedule, tiny_preset
    )
    with torch.no_grad():
        next(distiller.teacher.parameters()).add_(1.0)
    with pytest.raises(ContractViolation, match="teacher"):
        distiller.verify_frozen()


def test_collapse_warning(networks, tiny_preset, schedule, caplog):
    distiller = Distiller(
        networks["teacher"], networks["speaker_encoder"], networks["content_encoder"], networks["vocoder"], schedule, tiny_preset
    )
    with caplog.at_level(logging.WARNING, logger="fastvg"):
        for _ in range(COLLAPSE_STEPS - 1):
            distiller._watch_collapse(0.0)  # pylint: disable=protected-access
        assert distiller.collapse_warnings == 0
        distiller._watch_collapse(0.0)  # pylint: disable=protected-access
    assert distiller.collapse_warnings == 1
    assert "collapsed" in caplog.text


def test_distill_run(networks, tiny_preset, schedule, tiny_features):
    teacher_hash = state_hash(networks["teacher"])
    result = distill(
        tiny_features,
        networks["teacher"],
        networks["speaker_encoder"],
        networks["content_encoder"],
        networks["vocoder"],
        schedule,
        tiny_preset,
        epochs=5,
        max_steps=3,
        batch_size=2,
        crop=8,
        progress=False,
    )
    assert list(result.history.columns) == HISTORY_COLUMNS
    assert list(result.history["step"]) == [1, 2, 3]
    assert np.all(np.isfinite(result.history[["adv_g", "adv_d", "fm", "dist", "total_g"]].values))
    assert state_hash(networks["teacher"]) == teacher_hash
    assert result.frozen_hashes["teacher"] == teacher_hash
    assert state_hash(result.student) != teacher_hash
    assert not result.student.training


@pytest.mark.parametrize("variant", ["full", "adv", "dist"])
def test_history_total_matches_weights(networks, tiny_preset, schedule, tiny_features, variant):
    """The logged generator objective is the weighted sum of the logged components"""
    result = distill(
        tiny_features,
        networks["teacher"],
        networks["speaker_encoder"],
        networks["content_encoder"],
        networks["vocoder"],
        schedule,
        tiny_preset,
        epochs=5,
        max_steps=3,
        batch_size=2,
        crop=8,
        progress=False,
        variant=variant,
    )
    w_adv, w_fm, w_dist = {"full": (1.0, 2.0, 45.0), "adv": (1.0, 2.0, 0.0), "dist": (0.0, 0.0, 45.0)}[variant]
    history = result.history
    assert len(history) == 3
    expected = w_adv * history["adv_g"] + w_fm * history["fm"] + w_dist * history["dist"]
    np.testing.assert_allclose(history["total_g"], expected, rtol=1e-5, atol=1e-6)
