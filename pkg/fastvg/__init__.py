"""
fastvg - diffusion voice conversion (VoiceGrad) and its one-step distillation (FastVoiceGrad)
"""
import logging
from logging.handlers import WatchedFileHandler

__version__ = "0.1.0"

logger = logging.getLogger(__name__)
logger.setLevel(logging.DEBUG)

# Formatter
formatter = logging.Formatter("%(asctime)s - %(name)s - %(levelname)s - %(message)s")

# Console handler
console_handler = logging.StreamHandler()
console_handler.setFormatter(formatter)
logger.addHandler(console_handler)


def setconsolelevel(level):
    """Set the level of the console handler"""
    console_handler.setLevel(level)


# Set the level of console handler (default)
setconsolelevel(logging.INFO)


def setlogfile(filename, level=logging.DEBUG):
    """
    Attach a watched file handler to the package logger

    filename : name of the file
    level : level of the file handler, DEBUG by default so the file keeps
    the per-step training detail that the console hides
    """
    watched_file = WatchedFileHandler(filename)
    watched_file.setFormatter(formatter)
    watched_file.setLevel(level)
    logger.addHandler(watched_file)
    return watched_file


def removelogfile(handler):
    """Detach and close a handler added by `setlogfile`"""
    logger.removeHandler(handler)
    handler.close()
