"""
Numerical validation of the training losses on the tiny preset in float64
"""
import logging
from dataclasses import asdict

import pandas as pd
import torch

from fastvg.networks import build, freeze
from fastvg.networks.gradcheck import grad_errors
from fastvg.networks.presets import get_preset
from fastvg.schedule import build_cosine_schedule, forward_diffuse
from fastvg.training.distill import adv_loss_g, fm_loss, score_distillation_loss, student_generate, teacher_prediction
from fastvg.training.teacher import ddpm_loss
from fastvg.utils import derive_seed

logger = logging.getLogger(__name__)

LOSSES = ("ddpm", "adv_g", "fm", "dist")
TOLERANCE = 1e-4


class PinnedPredictor(torch.nn.Module):
    """
    Noise predictor whose x0-prediction is always ``target``.

    Stands in for the teacher so that x_phi stays fixed while the student
    parameters are perturbed, as the stop-gradient makes it for autograd.
    """

    def __init__(self, target, sched):
        super().__init__()
        self.target = target
        self.alpha_bar = torch.as_tensor(sched.alpha_bar, dtype=target.dtype)

    def forward(self, x_t, t, s, p):
        a = self.alpha_bar[t].reshape(-1, *([1] * (x_t.dim() - 1)))
        return (x_t - torch.sqrt(a) * self.target) / torch.sqrt(1 - a)


class TinySetup:
    """Float64 tiny-preset networks and a fixed random batch"""

    def __init__(self, seed=0, batch=2, frames=8, T=1000, s_k=950):
        self.preset = get_preset("tiny")
        self.sched = build_cosine_schedule(T)
        self.s_k = s_k
        torch.manual_seed(derive_seed(seed, "gradcheck", "init"))
        self.student = build("predictor", self.preset).double()
        self.teacher = freeze(build("predictor", self.preset).double())
        self.speaker_encoder = build("speaker_encoder", self.preset).double()
        self.content_encoder = freeze(build("content_encoder", self.preset).double())
        self.vocoder = freeze(build("vocoder", self.preset).double())
        self.discriminator = freeze(build("discriminator", self.preset).double())

        gen = torch.Generator().manual_seed(derive_seed(seed, "gradcheck", "batch"))
        shape = (batch, self.preset.n_mels, frames)
        self.x0 = torch.randn(shape, generator=gen, dtype=torch.float64)
        self.eps = torch.randn(shape, generator=gen, dtype=torch.float64)
        self.eps_t = torch.randn(shape, generator=gen, dtype=torch.float64)
        self.t = torch.randint(1, T + 1, (batch,), generator=gen)
        # Real mels for feature matching, drawn apart from the student input
        self.real = torch.randn(shape, generator=gen, dtype=torch.float64)
        with torch.no_grad():
            self.s = self.speaker_encoder(self.x0)
            self.p = self.content_encoder(self.x0)

    def x_theta(self):
        return student_generate(self.x0, self.s, self.p, self.student, self.sched, self.s_k, self.eps)[0]

    def loss_fn(self, name):
        """Closure and parameters of one loss"""
        student_params = [p for p in self.student.parameters()]
        if name == "ddpm":
            params = student_params + list(self.speaker_encoder.parameters())
            return (lambda: ddpm_loss(self.x0, self.t, self.eps, self.speaker_encoder(self.x0), self.p, self.student, self.sched)), params
        if name == "adv_g":
            return (lambda: adv_loss_g(self.x_theta(), self.discriminator, self.vocoder)), student_params
        if name == "fm":
            return (lambda: fm_loss(self.real, self.x_theta(), self.discriminator, self.vocoder)), student_params
        if name == "dist":
            pinned = PinnedPredictor(self.teacher_target(), self.sched)
            return (lambda: score_distillation_loss(self.x_theta(), self.t, self.s, self.p, pinned, self.sched, self.eps_t)), student_params
        raise KeyError(name)

    def teacher_target(self):
        with torch.no_grad():
            x_theta_t = forward_diffuse(self.x_theta(), self.t, self.eps_t, self.sched)
        return teacher_prediction(x_theta_t, self.t, self.s, self.p, self.teacher, self.sched)

    def teacher_path_gradient(self):
        """
        Largest gradient reaching the student or the teacher through x_phi alone.

        Zero when the stop-gradient holds.
        """
        x_theta = self.x_theta()
        x_theta_t = forward_diffuse(x_theta.detach(), self.t, self.eps_t, self.sched)
        x_phi = teacher_prediction(x_theta_t, self.t, self.s, self.p, self.teacher, self.sched)
        loss = torch.mean(torch.abs(x_phi - x_theta.detach()))
        if not loss.requires_grad:
            return 0.0
        params = list(self.student.parameters()) + list(self.teacher.parameters())
        grads = torch.autograd.grad(loss, params, allow_unused=True)
        return max((g.abs().max().item() for g in grads if g is not None), default=0.0)


def loss_gradient_checks(losses=LOSSES, epsilon=1e-5, max_entries=6, seed=0):
    """
    Finite-difference check of every requested loss.

    Returns a table with columns loss, max_rel_error, max_abs_error, passed,
    and a row for the stop-gradient path of the distillation loss.
    """
    setup = TinySetup(seed=seed)
    rows = []
    for name in losses:
        loss_fn, params = setup.loss_fn(name)
        errors = grad_errors(loss_fn, params, epsilon=epsilon, max_entries=max_entries, seed=derive_seed(seed, "gradcheck", name))
        rows.append({"loss": name, **asdict(errors), "passed": errors.max_rel_error < TOLERANCE})
        logger.info(f"Gradient check {name}: max relative error {errors.max_rel_error:.3e}, max absolute error {errors.max_abs_error:.3e}")
    if "dist" in losses:
        leak = setup.teacher_path_gradient()
        rows.append({"loss": "dist_stop_gradient", "max_rel_error": leak, "max_abs_error": leak, "passed": leak == 0.0})
        logger.info(f"Teacher-path gradient of the distillation loss: {leak}")
    return pd.DataFrame(rows, columns=["loss", "max_rel_error", "max_abs_error", "passed"])
