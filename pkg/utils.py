"""
Shared helpers: logging setup, settings files and label formatting.
"""
import json
import logging
import os

from model import SettingsError

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(levelname)s | %(name)s | %(message)s"

# Settings file path
DEFAULT_SETTINGS_FILE = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'gic_settings.json')


def configure_logging(level=logging.INFO):
    """Attach a stream handler to the root logger and set its level"""
    logging.basicConfig(
        format=LOG_FORMAT,
        handlers=[logging.StreamHandler()]
    )
    logging.getLogger().setLevel(level)


def load_settings(path=None):
    """
    Load a JSON settings file.

    With no path the bundled gic_settings.json is read, and a missing file
    falls back to an empty dict (built-in defaults). An explicitly requested
    file must exist.
    """
    requested = path is not None
    path = path or DEFAULT_SETTINGS_FILE
    try:
        with open(path, 'r') as settings_file:
            settings = json.load(settings_file)
    except FileNotFoundError:
        if requested:
            raise SettingsError(f"settings file not found: {path}")
        logger.info("No settings file at %s, using built-in defaults", path)
        return {}
    except json.JSONDecodeError as e:
        raise SettingsError(f"invalid JSON in settings file {path}: {e}")
    if not isinstance(settings, dict):
        raise SettingsError(f"settings file {path} must contain a JSON object")
    logger.debug("Settings loaded from %s", path)
    return settings


def format_number(value):
    """Compact label text for a number: 1.0 -> '1', 0.5 -> '0.5'"""
    return f"{float(value):g}"
