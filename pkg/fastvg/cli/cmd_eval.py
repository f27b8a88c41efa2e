"""
Evaluation commands: system comparison and loss gradient checks
"""
import click
from tabulate import tabulate

from fastvg.checkpoint import ModelBundle, load_checkpoint
from fastvg.common import NumericError, ParameterError
from fastvg.corpus import Corpus
from fastvg.evaluation import EvalReport, SpeakerVerifier, build_eval_pairs, calibration_mels, evaluate_system
from fastvg.features import FeatureConfig
from fastvg.networks import freeze
from fastvg.training.checks import LOSSES, TOLERANCE, loss_gradient_checks
from fastvg.training.data import FeatureSet
from fastvg.utils import parse_grid, require_file

from .stage import stage

STUDENTS = {"student.pt": "FastVoiceGrad", "student_adv.pt": "FastVoiceGrad-adv", "student_dist.pt": "FastVoiceGrad-dist"}


@click.command("evaluate")
@click.option("--ks", help="Comma separated numbers of teacher reverse steps")
@click.option("--max-pairs", type=int, help="Maximum number of conversion pairs (0 for all)")
@click.pass_obj
def evaluate(run, ks, max_pairs):
    """Compare the multi-step teacher and the distilled students on held-out content"""
    with stage(run, "evaluate", run.paths.reports, {"evaluate.ks": ks, "evaluate.max_pairs": max_pairs}) as out_dir:
        cfg = FeatureConfig.from_run_config(run.config)
        conv = run.config.section("convert")
        features = FeatureSet.load(run.paths.features, cfg)
        corpus = Corpus.load(run.paths.corpus / "corpus.json")
        teacher = ModelBundle.load(require_file(run.paths.checkpoints / "teacher.pt", "teacher checkpoint"))
        pairs = build_eval_pairs(features, corpus, run.config["evaluate.max_pairs"], run.seed)
        verifier = SpeakerVerifier(teacher.speaker_encoder, teacher.stats)
        verifier.calibrate(calibration_mels(features, corpus))

        vocoder = None
        vocoder_path = run.paths.checkpoints / "vocoder.pt"
        if vocoder_path.is_file():
            vocoder = freeze(load_checkpoint(vocoder_path, kind="vocoder").module("vocoder", hop=cfg.hop))

        common = {"seed": run.seed, "vocoder": vocoder, "progress": run.progress}
        endpoints = (conv["s_1"], conv["s_k"])
        report = EvalReport()
        for k in parse_grid(run.config["evaluate.ks"]):
            if k < 1:
                raise ParameterError(f"Invalid number of steps {k}")
            report.systems.append(
                evaluate_system(f"VoiceGrad-{k}", pairs, features, teacher, verifier, k=k, endpoints=endpoints, init_mode=conv["init_multistep"], **common)
            )
        report.systems.append(
            evaluate_system("VoiceGrad-1-diffused", pairs, features, teacher, verifier, endpoints=endpoints, one_step=True, **common)
        )
        for filename, name in STUDENTS.items():
            path = run.paths.checkpoints / filename
            if path.is_file():
                student = ModelBundle.load(path)
                report.systems.append(evaluate_system(name, pairs, features, student, verifier, endpoints=endpoints, one_step=True, **common))
        report.write(out_dir)
        summary = report.summary()
        (out_dir / "summary.txt").write_text(summary + "\n")
    click.echo(summary)


@click.command("grad-check")
@click.option("--losses", default=",".join(LOSSES), show_default=True, help="Comma separated losses to check")
@click.option("--epsilon", default=1e-5, show_default=True, type=float, help="Finite-difference step")
@click.option("--max-entries", default=6, show_default=True, type=int, help="Entries checked per parameter tensor")
@click.pass_obj
def grad_check(run, losses, epsilon, max_entries):
    """Finite-difference check of the training losses on the tiny preset"""
    with stage(run, "grad-check", run.paths.reports) as out_dir:
        names = [name.strip() for name in losses.split(",") if name.strip()]
        unknown = set(names) - set(LOSSES)
        if unknown:
            raise ParameterError(f"Unknown losses {sorted(unknown)}, choose from {LOSSES}")
        table = loss_gradient_checks(names, epsilon=epsilon, max_entries=max_entries, seed=run.seed)
        table.to_csv(out_dir / "gradcheck.csv", index=False)
        click.echo(tabulate(table.values.tolist(), headers=list(table.columns), floatfmt=".3e"))
        if not table["passed"].all():
            failed = ", ".join(table.loc[~table["passed"], "loss"])
            raise NumericError(f"Gradient check failed for {failed} (tolerance {TOLERANCE})")
