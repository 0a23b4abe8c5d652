"""Utility functions shared by the command-line front end."""

import os
from pathlib import Path
from typing import Optional

from dotenv import load_dotenv

from .constants import DEFAULT_OUTPUT_DIR, ENV_OUTPUT_DIR


def get_output_dir(override: Optional[Path] = None) -> Path:
    """
    Resolve the directory result files are written to.

    Checks:
    1. The --output flag
    2. HARQEH_OUTPUT_DIR (also read from a .env file)
    3. ./results
    """
    if override is not None:
        out = Path(override)
    else:
        load_dotenv()
        out = Path(os.environ.get(ENV_OUTPUT_DIR) or DEFAULT_OUTPUT_DIR)
    out.mkdir(parents=True, exist_ok=True)
    return out


def format_float(value: float) -> str:
    """Shortest round-tripping text for a float; empty for NaN."""
    if value != value:
        return ""
    return repr(float(value))
