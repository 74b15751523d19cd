import json
import logging
import os
import sys
from typing import Any, Optional

import numpy as np

LOG_FORMAT = "%(asctime)s [%(levelname)s] %(message)s"

logger = logging.getLogger(__name__)


def get_env_var(name: str, default=None):
    # Retrieve an environment variable safely; blank counts as unset.
    value = os.getenv(name)
    if value is None or value.strip() == "":
        return default
    return value.strip()


def setup_logging(level=logging.INFO, log_file: Optional[str] = None):
    """
    Configure root logging once for a command-line run.
    Library modules only ever call logging.getLogger(__name__).
    """
    handlers = [logging.StreamHandler(sys.stderr)]
    if log_file:
        os.makedirs(os.path.dirname(os.path.abspath(log_file)), exist_ok=True)
        handlers.append(logging.FileHandler(log_file, encoding="utf-8"))
    logging.basicConfig(level=level, format=LOG_FORMAT, handlers=handlers, force=True)


def to_jsonable(obj: Any):
    """
    Convert numpy scalars/arrays (and containers of them) to plain JSON types.
    Arrays become row-major nested lists.
    """
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def save_json(data, path: str) -> str:
    """Save a dictionary to JSON. Raises OSError on failure so callers can map it to an exit code."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(to_jsonable(data), f, indent=2, ensure_ascii=False)
        f.write("\n")
    logger.info(f"💾 Saved: {path}")
    return path


def load_json(path: str):
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)
