"""
Training commands: vocoder, teacher (with the content encoder) and distillation
"""
import click
import numpy as np
import pandas as pd

from fastvg.checkpoint import ModelBundle, load_checkpoint, save_checkpoint
from fastvg.common import ParameterError
from fastvg.features import FeatureConfig
from fastvg.networks import freeze
from fastvg.networks.presets import get_preset
from fastvg.schedule import build_cosine_schedule
from fastvg.training.content import train_content_encoder
from fastvg.training.data import FeatureSet
from fastvg.training.distill import VARIANTS, distill as run_distill
from fastvg.training.teacher import train_teacher as run_teacher
from fastvg.training.vocoder import train_vocoder as run_vocoder

from .stage import stage


def load_features(run):
    cfg = FeatureConfig.from_run_config(run.config)
    return FeatureSet.load(run.paths.features, cfg), cfg


def student_name(variant):
    return "student.pt" if variant == "full" else f"student_{variant}.pt"


@click.command("train-vocoder")
@click.option("--epochs", type=int, help="Number of epochs")
@click.pass_obj
def train_vocoder(run, epochs):
    """Pretrain the vocoder with the multi-resolution STFT loss"""
    with stage(run, "train-vocoder", run.paths.checkpoints, {"vocoder.epochs": epochs}):
        features, cfg = load_features(run)
        section = run.config.section("vocoder")
        preset = get_preset(run.config["preset"], n_mels=cfg.n_mels)
        result = run_vocoder(features, preset, seed=run.seed, progress=run.progress, **section)
        result.history.to_csv(run.paths.logs / "vocoder_loss.csv", index=False)
        save_checkpoint(
            run.paths.checkpoints / "vocoder.pt",
            "vocoder",
            preset,
            {"vocoder": result.vocoder},
            stats=features.stats,
            config=run.config.parameters,
            metadata={"initial_val_loss": result.initial_val_loss, "final_val_loss": result.final_val_loss, "hop": cfg.hop},
        )
    click.echo(f"Vocoder validation loss {result.initial_val_loss:.4f} -> {result.final_val_loss:.4f} ({100 * result.reduction:.1f}% reduction)")


@click.command("train-teacher")
@click.option("--epochs", type=int, help="Number of teacher epochs")
@click.option("--content-epochs", type=int, help="Number of content encoder epochs")
@click.pass_obj
def train_teacher(run, epochs, content_epochs):
    """Pretrain the content encoder, then train the multi-step noise predictor"""
    with stage(run, "train-teacher", run.paths.checkpoints, {"teacher.epochs": epochs, "content.epochs": content_epochs}):
        features, cfg = load_features(run)
        preset = get_preset(run.config["preset"], n_mels=cfg.n_mels)
        sched = build_cosine_schedule(run.config["schedule.T"], run.config["schedule.offset"])
        content_encoder, content_history = train_content_encoder(
            features, preset, seed=run.seed, progress=run.progress, **run.config.section("content")
        )
        content_history.to_csv(run.paths.logs / "content_loss.csv", index=False)
        result = run_teacher(features, content_encoder, preset, sched, seed=run.seed, progress=run.progress, **run.config.section("teacher"))
        result.history.to_csv(run.paths.logs / "teacher_loss.csv", index=False)
        pd.DataFrame({"t": np.arange(1, sched.T + 1), "count": result.step_counts}).to_csv(
            run.paths.logs / "teacher_t_counts.csv", index=False
        )
        save_checkpoint(
            run.paths.checkpoints / "teacher.pt",
            "teacher",
            preset,
            {"predictor": result.predictor, "speaker_encoder": result.speaker_encoder, "content_encoder": content_encoder},
            schedule=sched,
            stats=features.stats,
            config=run.config.parameters,
            metadata={"first_epoch_loss": result.history["mean_loss"].iloc[0], "final_epoch_loss": result.history["mean_loss"].iloc[-1]},
        )
    click.echo(f"Teacher loss {result.history['mean_loss'].iloc[0]:.4f} -> {result.history['mean_loss'].iloc[-1]:.4f}")


@click.command("distill")
@click.option("--variant", type=click.Choice(VARIANTS), help="Loss variant")
@click.option("--teacher-mean", type=click.Choice(["x0", "posterior"]), help="Form of the teacher one-step prediction")
@click.option("--epochs", type=int, help="Number of epochs")
@click.option("--max-steps", type=int, help="Stop after this many steps (0 for no limit)")
@click.pass_obj
def distill(run, variant, teacher_mean, epochs, max_steps):
    """Distill the teacher into a one-step student"""
    overrides = {"distill.variant": variant, "distill.teacher_mean": teacher_mean, "distill.epochs": epochs, "distill.max_steps": max_steps}
    with stage(run, "distill", run.paths.checkpoints, overrides):
        features, _ = load_features(run)
        teacher = ModelBundle.load(run.paths.checkpoints / "teacher.pt")
        vocoder_ckpt = load_checkpoint(run.paths.checkpoints / "vocoder.pt", kind="vocoder")
        if vocoder_ckpt.preset.n_mels != teacher.preset.n_mels:
            raise ParameterError("The vocoder and the teacher use different numbers of mel bins")
        vocoder = freeze(vocoder_ckpt.module("vocoder", hop=features.cfg.hop))
        section = run.config.section("distill")
        loops = {key: section.pop(key) for key in ("epochs", "max_steps", "batch_size", "crop")}
        result = run_distill(
            features,
            teacher.predictor,
            teacher.speaker_encoder,
            teacher.content_encoder,
            vocoder,
            teacher.schedule,
            teacher.preset,
            seed=run.seed,
            progress=run.progress,
            **loops,
            **section,
        )
        name = student_name(section["variant"])
        result.history.to_csv(run.paths.logs / name.replace("student", "distill").replace(".pt", "_loss.csv"), index=False)
        save_checkpoint(
            run.paths.checkpoints / name,
            "student",
            teacher.preset,
            {
                "predictor": result.student,
                "speaker_encoder": teacher.speaker_encoder,
                "content_encoder": teacher.content_encoder,
                "discriminator": result.discriminator,
            },
            schedule=teacher.schedule,
            stats=teacher.stats,
            config=run.config.parameters,
            metadata={"variant": section["variant"], "s_k": section["s_k"], "steps": len(result.history), **result.frozen_hashes},
        )
    click.echo(f"Distilled {len(result.history)} steps into {run.paths.checkpoints / name}")
