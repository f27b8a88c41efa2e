"""
Run configuration - flat, namespaced key=value files
"""
import logging
from copy import deepcopy
from pathlib import Path

from fastvg.common import ConfigError

logger = logging.getLogger(__name__)


class RunConfig:
    """
    Configuration of a run.

    Keys are namespaced as ``<section>.<name>``. The type of every value is
    fixed by its default, and keys that are not in the default table are
    rejected.
    """

    _default = {
        "seed": 0,
        "preset": "toy",
        # Diffusion schedule
        "schedule.T": 1000,
        "schedule.offset": 0.008,
        # Feature extraction
        "features.sample_rate": 22050,
        "features.fft_size": 1024,
        "features.hop": 256,
        "features.win": 1024,
        "features.n_mels": 80,
        "features.log_floor": 1e-5,
        # Synthetic corpus
        "corpus.n_speakers": 10,
        "corpus.n_scripts": 20,
        "corpus.heldout_speakers": 2,
        "corpus.heldout_scripts": 2,
        "corpus.strict": False,
        # Vocoder pretraining
        "vocoder.epochs": 30,
        "vocoder.batch_size": 16,
        "vocoder.lr": 2e-4,
        "vocoder.crop": 32,
        # Content encoder pretraining
        "content.epochs": 10,
        "content.batch_size": 32,
        "content.lr": 1e-3,
        "content.crop": 128,
        # Teacher (multi-step) training
        "teacher.epochs": 30,
        "teacher.batch_size": 32,
        "teacher.lr": 2e-4,
        "teacher.beta1": 0.9,
        "teacher.beta2": 0.999,
        "teacher.crop": 128,
        # Distillation
        "distill.epochs": 20,
        "distill.max_steps": 0,
        "distill.batch_size": 32,
        "distill.lr": 2e-4,
        "distill.beta1": 0.5,
        "distill.beta2": 0.9,
        "distill.crop": 32,
        "distill.lambda_fm": 2.0,
        "distill.lambda_dist": 45.0,
        "distill.s_k": 950,
        "distill.variant": "full",
        "distill.teacher_mean": "x0",
        # Conversion
        "convert.k": 30,
        "convert.s_1": 50,
        "convert.s_k": 950,
        "convert.init_multistep": "clean_source",
        "convert.init_onestep": "diffused_source",
        # Initial state sweep
        "sweep.grid": "50:1000:50",
        "sweep.modes": "clean_source,diffused_source",
        "sweep.max_pairs": 40,
        # Evaluation
        "evaluate.max_pairs": 0,
        "evaluate.ks": "1,6,30",
    }

    def __init__(self, params=None):
        self.parameters = deepcopy(self._default)
        if params:
            self.update(params)

    def update(self, params):
        """Update with a dictionary of values, coercing to the default types"""
        for key, value in params.items():
            if key not in self._default:
                raise ConfigError(f"Key: {key} is not a valid configuration option")
            self.parameters[key] = self._coerce(key, value)

    def _coerce(self, key, value):
        default = self._default[key]
        if isinstance(value, str):
            value = value.strip()
            if isinstance(default, bool):
                if value.lower() in ("true", "yes", "1", "on"):
                    return True
                if value.lower() in ("false", "no", "0", "off"):
                    return False
                raise ConfigError(f"Key: {key} expects a boolean, got {value!r}")
        try:
            if isinstance(default, bool):
                return bool(value)
            if isinstance(default, int):
                as_float = float(value)
                if as_float != int(as_float):
                    raise ValueError
                return int(as_float)
            if isinstance(default, float):
                return float(value)
        except (TypeError, ValueError) as error:
            raise ConfigError(f"Key: {key} expects {type(default).__name__}, got {value!r}") from error
        return str(value)

    def __getitem__(self, key):
        return self.parameters[key]

    def __contains__(self, key):
        return key in self.parameters

    def section(self, name):
        """Return the keys of a section without the prefix"""
        prefix = name + "."
        return {key[len(prefix) :]: value for key, value in self.parameters.items() if key.startswith(prefix)}

    @classmethod
    def from_file(cls, path):
        """Read a key=value file, `#` starts a comment"""
        params = {}
        for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            params[key.strip()] = value.strip()
        return cls(params)

    def to_text(self):
        """Serialise the fully resolved configuration"""
        lines = ["# fully resolved fastvg configuration"]
        for key in sorted(self.parameters):
            lines.append(f"{key} = {self.parameters[key]}")
        return "\n".join(lines) + "\n"

    def write_resolved(self, directory):
        """Write the resolved configuration next to the outputs of a stage"""
        path = Path(directory) / "config.resolved.txt"
        path.write_text(self.to_text())
        logger.debug(f"Resolved configuration written to {path}")
        return path

    def __repr__(self) -> str:
        return "RunConfig(" + self.parameters.__repr__() + ")"
