"""CSV logger for the daily run log."""

import csv
from datetime import datetime
from pathlib import Path
from typing import Optional


def get_log_file_path(output_dir: Path) -> Path:
    """Get the path for today's log file."""
    today = datetime.now().strftime("%Y-%m-%d")
    log_dir = output_dir / "logs"
    log_dir.mkdir(parents=True, exist_ok=True)
    return log_dir / f"harqeh_run_log_{today}.csv"


def log_run(
    output_dir: Path,
    command: str,
    config: str,
    seed: Optional[int],
    status: str,
    elapsed_time: float,
    error: str = "",
) -> Path:
    """
    Append one command run to the daily CSV log.

    Args:
        output_dir: Result directory the logs/ folder lives in
        command: CLI command name
        config: Link label or scenario name
        seed: Master seed, if the command is seeded
        status: "SUCCESS", "FAILED" or "ERROR"
        elapsed_time: Wall time of the command in seconds
        error: Error message if the command did not succeed

    Returns:
        Path of the log file
    """
    log_file = get_log_file_path(output_dir)
    file_exists = log_file.exists()
    timestamp = datetime.now().strftime("%Y-%m-%d %H:%M:%S")

    with open(log_file, "a", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        if not file_exists:
            writer.writerow(["Timestamp", "Command", "Config", "Seed", "Status", "Time(s)", "Error"])
        writer.writerow([
            timestamp,
            command,
            config,
            "" if seed is None else seed,
            status,
            f"{elapsed_time:.1f}",
            error,
        ])
    return log_file
