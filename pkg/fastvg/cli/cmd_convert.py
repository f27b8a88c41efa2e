"""
Conversion commands: single conversions and the initial-state sweep
"""
from pathlib import Path

import click
import numpy as np
import torch

from fastvg.checkpoint import ModelBundle, load_checkpoint
from fastvg.conversion import INIT_MODES, ConversionRequest, convert_fast, convert_multistep, sweep_initial_state
from fastvg.corpus import Corpus
from fastvg.features import FeatureConfig, load_wav, mel_invert_diagnostic, mel_spectrogram, read_mel, write_mel, write_wav
from fastvg.evaluation import SpeakerVerifier, build_eval_pairs, calibration_mels
from fastvg.networks import freeze
from fastvg.training.data import FeatureSet
from fastvg.utils import parse_grid, require_file

from .stage import stage


def read_input(path, cfg: FeatureConfig):
    """Unnormalised log-mel of a WAV or a mel matrix file"""
    path = require_file(path, "input")
    if Path(path).suffix == ".mel":
        return read_mel(path, frame_rate=cfg.frame_rate)
    return mel_spectrogram(load_wav(path, cfg.sample_rate), cfg)


@click.command("convert")
@click.option("--source", required=True, type=click.Path(), help="Source WAV or mel file")
@click.option("--target", required=True, type=click.Path(), help="Target speaker reference WAV or mel file")
@click.option("--k", type=int, help="Number of reverse diffusion steps")
@click.option("--s1", type=int, help="First step S_1 of the subsequence")
@click.option("--sk", type=int, help="Initial step S_K of the subsequence")
@click.option("--init", "init_mode", type=click.Choice(INIT_MODES), help="Initial state")
@click.option("--one-step", is_flag=True, default=False, help="One-step conversion with the distilled student")
@click.option("--checkpoint", type=click.Path(), help="Model checkpoint, defaults to teacher.pt (student.pt with --one-step)")
@click.option("--name", help="Output name, defaults to <source>_to_<target>")
@click.option("--wav", is_flag=True, default=False, help="Also synthesise a WAV with the frozen vocoder")
@click.option("--diagnostic-wav", is_flag=True, default=False, help="Also write a Griffin-Lim WAV for inspection")
@click.pass_obj
def convert(run, source, target, k, s1, sk, init_mode, one_step, checkpoint, name, wav, diagnostic_wav):
    """Convert the source utterance to the voice of the target reference"""
    overrides = {"convert.k": k, "convert.s_1": s1, "convert.s_k": sk}
    if init_mode:
        overrides["convert.init_onestep" if one_step else "convert.init_multistep"] = init_mode
    with stage(run, "convert", run.paths.conversions, overrides) as out_dir:
        cfg = FeatureConfig.from_run_config(run.config)
        section = run.config.section("convert")
        default_ckpt = "student.pt" if one_step else "teacher.pt"
        model = ModelBundle.load(checkpoint or run.paths.checkpoints / default_ckpt)
        req = ConversionRequest(
            read_input(source, cfg),
            read_input(target, cfg),
            k=section["k"],
            endpoints=(section["s_1"], section["s_k"]),
            init_mode=section["init_onestep"] if one_step else section["init_multistep"],
            seed=run.seed,
        )
        if one_step and req.init_mode == "diffused_source":
            result = convert_fast(req, model)
        elif one_step:
            result = convert_multistep(ConversionRequest(req.source, req.target, 1, (section["s_k"], section["s_k"]), req.init_mode, req.seed), model)
        else:
            result = convert_multistep(req, model)

        name = name or f"{Path(source).stem}_to_{Path(target).stem}"
        write_mel(out_dir / f"{name}.mel", result.mel)
        if wav:
            vocoder_ckpt = load_checkpoint(run.paths.checkpoints / "vocoder.pt", kind="vocoder")
            vocoder = freeze(vocoder_ckpt.module("vocoder", hop=cfg.hop))
            with torch.no_grad():
                audio = vocoder(torch.from_numpy(result.normalized.T.astype(np.float32)).unsqueeze(0))[0].numpy()
            write_wav(out_dir / f"{name}.wav", audio, cfg.sample_rate)
        if diagnostic_wav:
            write_wav(out_dir / f"{name}_griffinlim.wav", mel_invert_diagnostic(result.mel, cfg), cfg.sample_rate)
    click.echo(f"Steps: {list(result.steps)}")
    click.echo(f"Predictor calls: {result.predictor_calls}")
    click.echo(f"Mel conversion time: {result.wall_time:.4f} s")
    click.echo(f"Output: {out_dir / (name + '.mel')}")


@click.command("sweep-init")
@click.option("--grid", help="S_K grid as start:stop:step or a comma separated list")
@click.option("--modes", help="Comma separated initial state modes")
@click.option("--max-pairs", type=int, help="Maximum number of conversion pairs (0 for all)")
@click.option("--checkpoint", type=click.Path(), help="Model checkpoint, defaults to teacher.pt")
@click.pass_obj
def sweep_init(run, grid, modes, max_pairs, checkpoint):
    """One-step conversion quality and speaker similarity against S_K"""
    overrides = {"sweep.grid": grid, "sweep.modes": modes, "sweep.max_pairs": max_pairs}
    with stage(run, "sweep-init", run.paths.reports, overrides) as out_dir:
        cfg = FeatureConfig.from_run_config(run.config)
        section = run.config.section("sweep")
        model = ModelBundle.load(checkpoint or run.paths.checkpoints / "teacher.pt")
        features = FeatureSet.load(run.paths.features, cfg)
        corpus = Corpus.load(run.paths.corpus / "corpus.json")
        pairs = build_eval_pairs(features, corpus, section["max_pairs"], run.seed)
        verifier = SpeakerVerifier(model.speaker_encoder, model.stats)
        verifier.calibrate(calibration_mels(features, corpus))
        mels = [(features.raw_mel(p.source), features.raw_mel(p.reference), features.raw_mel(p.oracle)) for p in pairs]
        table = sweep_initial_state(
            mels,
            parse_grid(section["grid"]),
            [m.strip() for m in section["modes"].split(",") if m.strip()],
            model,
            verifier,
            seed=run.seed,
            progress=run.progress,
        )
        table.to_csv(out_dir / "sweep_init.csv", index=False, float_format="%.6f")
    click.echo(table.to_string(index=False))
