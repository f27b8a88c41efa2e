"""
Corpus generation and feature extraction commands
"""
from pathlib import Path

import click

from fastvg.corpus import Corpus, generate_corpus
from fastvg.features import FeatureConfig
from fastvg.training.data import extract_features as run_extraction
from fastvg.utils import require_file

from .stage import stage


@click.command("gen-corpus")
@click.option("--n-speakers", type=int, help="Number of synthetic speakers")
@click.option("--n-scripts", type=int, help="Number of content scripts")
@click.option("--strict/--no-strict", default=None, help="Fail when the speakers are not separable")
@click.pass_obj
def gen_corpus(run, n_speakers, n_scripts, strict):
    """Render the synthetic multi-speaker corpus"""
    overrides = {"corpus.n_speakers": n_speakers, "corpus.n_scripts": n_scripts, "corpus.strict": strict}
    with stage(run, "gen-corpus", run.paths.corpus, overrides) as out_dir:
        cfg = run.config
        corpus = generate_corpus(
            out_dir,
            n_speakers=cfg["corpus.n_speakers"],
            n_scripts=cfg["corpus.n_scripts"],
            seed=run.seed,
            cfg=FeatureConfig.from_run_config(cfg),
            heldout_speakers=cfg["corpus.heldout_speakers"],
            heldout_scripts=cfg["corpus.heldout_scripts"],
            strict=cfg["corpus.strict"],
            progress=run.progress,
        )
    click.echo(f"Corpus of {len(corpus.speakers)} speakers x {len(corpus.scripts)} scripts written to {out_dir}")
    click.echo(f"Speaker separability: {corpus.separability:.3f}")


@click.command("extract-features")
@click.option("--manifest", type=click.Path(), help="Manifest (utterance_id, speaker_id, wav_path), defaults to the generated corpus")
@click.pass_obj
def extract_features(run, manifest):
    """Compute log-mel features and normalisation statistics"""
    with stage(run, "extract-features", run.paths.features) as out_dir:
        manifest = require_file(manifest or run.paths.corpus / "manifest.tsv", "manifest")
        corpus_json = Path(manifest).parent / "corpus.json"
        split_fn = Corpus.load(corpus_json).split if corpus_json.is_file() else None
        features = run_extraction(manifest, out_dir, FeatureConfig.from_run_config(run.config), split_fn=split_fn, progress=run.progress)
    click.echo(f"Features of {len(features)} utterances written to {out_dir}")
