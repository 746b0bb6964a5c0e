"""
The package to load run configuration and environment
"""

from .load_environment import load_environment
from .run_config import RunConfig

__all__ = ["load_environment", "RunConfig"]
