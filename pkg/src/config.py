import logging
import os

from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

DEFAULT_STORE = "ddso.store"
DEFAULT_LOG_LEVEL = "WARNING"


def store_path(override=None):
    """Snapshot path: the --store flag, else DDSO_STORE, else ./ddso.store."""
    return override or os.getenv("DDSO_STORE") or DEFAULT_STORE


def journal_path(store, override=None):
    """Journal path: the --journal flag, else DDSO_JOURNAL, else next to the snapshot."""
    return override or os.getenv("DDSO_JOURNAL") or f"{store}.journal"


def log_level():
    name = (os.getenv("DDSO_LOG_LEVEL") or DEFAULT_LOG_LEVEL).upper()
    level = logging.getLevelName(name)
    return level if isinstance(level, int) else logging.WARNING
