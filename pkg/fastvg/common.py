"""
Module for common stuff - the exception hierarchy shared by every stage
"""


class FastVGError(Exception):
    """Base class of all errors raised by fastvg"""

    category = "error"


class ConfigError(FastVGError):
    """Invalid configuration or parameters"""

    category = "config"


class DataError(FastVGError):
    """Missing, malformed or inconsistent data artifacts"""

    category = "data"


class NumericError(FastVGError):
    """Non-finite values or divergence"""

    category = "numeric"


class ParameterError(ConfigError, ValueError):
    """A parameter outside of its valid range"""


class ShapeError(DataError, ValueError):
    """Arrays that do not have the expected shape or length"""


class AudioFormatError(DataError):
    """Audio file that cannot be read as PCM WAV"""


class ContractViolation(FastVGError, RuntimeError):
    """An invariant of the algorithm was broken by the caller"""

    category = "contract"
