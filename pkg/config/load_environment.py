import os
from typing import Optional

from dotenv import load_dotenv

from helper.logger_utils import force_log


def load_environment(env: Optional[str] = None, directory: str = ".") -> list[str]:
    """
    Load .env.local, then .env, then .env.{APP_ENV} (which overrides).
    Returns the files that were found.
    """
    current_env = env or os.getenv("APP_ENV")
    candidates = [(".env.local", False), (".env", False)]
    if current_env:
        candidates.append((f".env.{current_env}", True))

    loaded = []
    for name, override in candidates:
        path = os.path.join(directory, name)
        if os.path.exists(path):
            load_dotenv(dotenv_path=path, override=override)
            loaded.append(path)

    if loaded:
        force_log(f"Loaded environment from {', '.join(loaded)}", "Config")
    return loaded
