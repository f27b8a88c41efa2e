"""
Utility module - seeds, output layout and small helpers
"""
import hashlib
import logging
import os
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from fastvg.common import DataError, ParameterError

logger = logging.getLogger(__name__)

LOCK_NAME = ".fastvg.lock"


def derive_seed(seed, *names):
    """
    Derive a stage seed from the global seed and a sequence of names.

    Different names give independent streams, so re-running one stage never
    perturbs the random numbers drawn by another.
    """
    text = "/".join([str(int(seed))] + [str(name) for name in names])
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little") & 0x7FFFFFFF


def numpy_rng(seed, *names):
    """Return a numpy Generator seeded from the derived seed"""
    return np.random.default_rng(derive_seed(seed, *names))


def parse_grid(text):
    """
    Parse a `start:stop:step` grid (inclusive of stop) or a comma separated list
    """
    text = str(text).strip()
    if not text:
        raise ParameterError("Empty grid")
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ParameterError(f"Grid must be start:stop:step, got {text}")
        start, stop, step = (int(x) for x in parts)
        if step <= 0 or stop < start:
            raise ParameterError(f"Invalid grid {text}")
        values = list(range(start, stop + 1, step))
    else:
        values = [int(x) for x in text.split(",") if x.strip()]
    if not values:
        raise ParameterError(f"Empty grid {text}")
    return values


class RunPaths:
    """
    Manager for the paths of a run.

    The folder structure looks like:

      <OUT>
      |- corpus        (synthetic WAVs, manifest.tsv, oracle_pairs.tsv, corpus.json)
      |- features      (mels/*.mel, index.tsv, stats.npz)
      |- checkpoints   (vocoder.pt, teacher.pt, student.pt)
      |- logs          (per-subcommand log files and loss CSVs)
      |- conversions   (converted mel / wav files)
      |- reports       (metrics.csv, cost.csv, sweep_init.csv)
    """

    STAGES = ("corpus", "features", "checkpoints", "logs", "conversions", "reports")

    def __init__(self, base_path="fastvg-run"):
        self.base_path = Path(base_path)
        self.base_path.mkdir(parents=True, exist_ok=True)

    def stage(self, name):
        """Return (and create) the directory of a stage"""
        if name not in self.STAGES:
            raise ParameterError(f"Unknown stage directory: {name}")
        path = self.base_path / name
        path.mkdir(parents=True, exist_ok=True)
        return path

    @property
    def corpus(self):
        return self.stage("corpus")

    @property
    def features(self):
        return self.stage("features")

    @property
    def checkpoints(self):
        return self.stage("checkpoints")

    @property
    def logs(self):
        return self.stage("logs")

    @property
    def conversions(self):
        return self.stage("conversions")

    @property
    def reports(self):
        return self.stage("reports")

    def __repr__(self):
        return f"RunPaths(base_path={self.base_path})"


def require_file(path, what="file"):
    """Raise a DataError naming the path if a prerequisite is missing"""
    path = Path(path)
    if not path.exists():
        raise DataError(f"Missing prerequisite {what}: {path}")
    return path


@contextmanager
def artifact_lock(directory):
    """
    Hold a sentinel lock file inside `directory` for the duration of the block.

    A second writer trying to take the lock gets a DataError instead of
    silently interleaving outputs.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lock = directory / LOCK_NAME
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError as error:
        raise DataError(f"Artifact directory {directory} is locked by another process ({lock})") from error
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield lock
    finally:
        try:
            lock.unlink()
        except FileNotFoundError:
            logger.warning(f"Lock file {lock} disappeared before release")
