"""
The commandline interface of fastvg
"""
# pylint: disable=invalid-name, too-many-arguments, import-outside-toplevel, too-many-locals
import logging

import click

from fastvg import __version__, setconsolelevel
from fastvg.config import RunConfig
from fastvg.networks.presets import PRESETS
from fastvg.utils import RunPaths

from .cmd_convert import convert, sweep_init
from .cmd_data import extract_features, gen_corpus
from .cmd_eval import evaluate, grad_check
from .cmd_train import distill, train_teacher, train_vocoder
from .stage import RunContext, categorised_errors


@click.group("fastvg")
@click.version_option(version=__version__, prog_name="fastvg")
@click.pass_context
@click.option("--config", "config_file", type=click.Path(exists=True, dir_okay=False), help="key=value configuration file")
@click.option("--seed", type=int, help="Global seed, overrides the configuration")
@click.option("--out", default="fastvg-run", type=click.Path(file_okay=False), show_default=True, help="Output directory")
@click.option("--preset", type=click.Choice(sorted(PRESETS)), help="Network preset, overrides the configuration")
@click.option("--verbose", "-v", is_flag=True, default=False, help="Show debug messages on the console")
@click.option("--progress/--no-progress", default=True, help="Show progress bars")
def main(ctx, config_file, seed, out, preset, verbose, progress):
    """Diffusion voice conversion and its one-step distillation"""
    if verbose:
        setconsolelevel(logging.DEBUG)
    with categorised_errors():
        config = RunConfig.from_file(config_file) if config_file else RunConfig()
        config.update({key: value for key, value in {"seed": seed, "preset": preset}.items() if value is not None})
    ctx.obj = RunContext(config=config, paths=RunPaths(out), progress=progress)


main.add_command(gen_corpus)
main.add_command(extract_features)
main.add_command(train_vocoder)
main.add_command(train_teacher)
main.add_command(distill)
main.add_command(convert)
main.add_command(sweep_init)
main.add_command(evaluate)
main.add_command(grad_check)
