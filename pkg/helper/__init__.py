"""
Leaf utilities. Modules that depend on `models` (the file formats and
reports) are imported by their full path to keep this package free of
import cycles.
"""

from .atomic_io import atomic_write, read_locked
from .dateutils import DateUtils
from .logger_utils import configure_logging, force_log
from .settings_loader import EnvironmentSettings

__all__ = [
    "atomic_write",
    "read_locked",
    "DateUtils",
    "configure_logging",
    "force_log",
    "EnvironmentSettings",
]
