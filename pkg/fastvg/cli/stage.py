"""
Shared plumbing of the subcommands: run context, stage bookkeeping and error mapping
"""
import logging
from contextlib import contextmanager
from dataclasses import dataclass

import click

import fastvg
from fastvg.common import FastVGError
from fastvg.config import RunConfig
from fastvg.utils import RunPaths, artifact_lock

logger = logging.getLogger(__name__)

EXIT_CODES = {"config": 3, "data": 4, "numeric": 5, "contract": 6}


class StageError(click.ClickException):
    """A library error reported with a categorised exit code"""

    def __init__(self, error: FastVGError):
        super().__init__(f"[{error.category}] {error}")
        self.exit_code = EXIT_CODES.get(error.category, 1)


@dataclass
class RunContext:
    """The object carried in `ctx.obj`"""

    config: RunConfig
    paths: RunPaths
    progress: bool = True

    @property
    def seed(self):
        return self.config["seed"]


@contextmanager
def categorised_errors():
    """Turn FastVGError into StageError"""
    try:
        yield
    except FastVGError as error:
        logger.error(str(error))
        raise StageError(error) from error


@contextmanager
def stage(run: RunContext, name, directory, overrides=None):
    """
    Bookkeeping of one subcommand: apply flag overrides to the config, log to
    `logs/<name>.log`, lock `directory` and write the resolved configuration
    next to the outputs.
    """
    with categorised_errors():
        if overrides:
            run.config.update({key: value for key, value in overrides.items() if value is not None})
        handler = fastvg.setlogfile(str(run.paths.logs / f"{name}.log"))
        try:
            logger.info(f"fastvg {fastvg.__version__}: {name} (seed {run.seed}, preset {run.config['preset']})")
            with artifact_lock(directory):
                run.config.write_resolved(directory)
                yield directory
        finally:
            fastvg.removelogfile(handler)
