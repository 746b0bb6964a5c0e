import os
from dataclasses import dataclass

import pytz
from platformdirs import user_cache_dir


@dataclass(frozen=True)
class EnvironmentSettings:
    cache_dir: str
    log_dir: str
    workers: int
    timezone: str

    OPTIONAL_ENV_VARS = ["KCN_CACHE_DIR", "KCN_LOG_DIR", "KCN_WORKERS", "TIMEZONE"]

    @classmethod
    def load(cls) -> "EnvironmentSettings":
        """
        Load the runtime settings from the environment variables.

        All variables are optional; malformed values are collected and
        reported together.
        """
        invalid = []

        cache_dir = os.getenv("KCN_CACHE_DIR") or user_cache_dir("kcn")
        log_dir = os.getenv("KCN_LOG_DIR") or "logs"
        timezone = os.getenv("TIMEZONE") or "UTC"

        raw_workers = os.getenv("KCN_WORKERS") or "1"
        try:
            workers = int(raw_workers)
            if workers < 1:
                raise ValueError
        except ValueError:
            invalid.append(f"KCN_WORKERS={raw_workers!r} (expected a positive integer)")
            workers = 1

        try:
            pytz.timezone(timezone)
        except pytz.UnknownTimeZoneError:
            invalid.append(f"TIMEZONE={timezone!r} (unknown timezone)")

        if invalid:
            error_msg = f"Invalid environment variables: {', '.join(invalid)}\n"
            error_msg += "For local runs, fix these in your .env file.\n"
            error_msg += f"Recognised variables: {', '.join(cls.OPTIONAL_ENV_VARS)}"
            raise EnvironmentError(error_msg)

        return cls(cache_dir=cache_dir, log_dir=log_dir, workers=workers, timezone=timezone)
