"""CSV and JSON result files with manifest sidecars."""

import csv
import hashlib
import io
import json
import math
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterable, Literal, Optional, Sequence

import numpy as np

from . import __version__
from .model import info_bits
from .types import LinkConfig, RunManifest, SuiteReport
from .utils import format_float

Format = Literal["csv", "json"]


def csv_text(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    """Render rows as CSV with '\\n' line endings; floats keep full precision."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_float(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def _json_safe(value: Any) -> Any:
    if isinstance(value, float) and math.isnan(value):
        return None
    if isinstance(value, dict):
        return {str(k): _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, np.generic):
        return _json_safe(value.item())
    return value


def json_text(payload: Any) -> str:
    return json.dumps(_json_safe(payload), sort_keys=True, indent=2) + "\n"


def value_table_rows(cfg: LinkConfig, k, q_eh, q_id, ties) -> list[list[Any]]:
    """One row per lattice cell: b, m_index, m_bits, k, q_eh, q_id, tie."""
    rows = []
    for b in range(k.shape[0]):
        for i in range(k.shape[1]):
            rows.append([
                b,
                i,
                float(info_bits(i, cfg)),
                float(k[b, i]),
                float(q_eh[b, i]),
                float(q_id[b, i]),
                int(bool(ties[b, i])),
            ])
    return rows


VALUE_TABLE_HEADER = ["b", "m_index", "m_bits", "k", "q_eh", "q_id", "tie"]


def grid_header(cfg: LinkConfig) -> list[str]:
    return ["b"] + [f"m={format_float(info_bits(i, cfg))}" for i in range(cfg.n_info_levels)]


def grid_rows(grid: np.ndarray) -> list[list[Any]]:
    return [[b] + list(grid[b]) for b in range(grid.shape[0])]


def suite_rows(report: SuiteReport) -> list[list[Any]]:
    return [[r.config, r.margin, int(r.passed), r.detail] for r in report.results]


SUITE_HEADER = ["config", "margin", "passed", "detail"]


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def write_result(
    output_dir: Path,
    name: str,
    body: str,
    fmt: Format,
    command: str,
    config: dict[str, Any],
    seed: Optional[int] = None,
) -> tuple[Path, Path]:
    """
    Write a result body and its manifest sidecar.

    Args:
        output_dir: Directory to write into
        name: File stem, e.g. "table1"
        body: Rendered CSV or JSON text
        fmt: "csv" or "json"
        command: Command line that produced the body
        config: Parameters the body depends on
        seed: Master seed, if any

    Returns:
        Tuple of (result path, manifest path)
    """
    output_dir.mkdir(parents=True, exist_ok=True)
    result_path = output_dir / f"{name}.{fmt}"
    manifest_path = output_dir / f"{name}.manifest.json"
    with open(result_path, "w", encoding="utf-8", newline="") as f:
        f.write(body)

    manifest = RunManifest(
        command=command,
        config=_json_safe(config),
        seed=seed,
        tool_version=__version__,
        timestamp=datetime.now(timezone.utc).isoformat(timespec="seconds"),
        outputs={result_path.name: sha256_text(body)},
    )
    with open(manifest_path, "w", encoding="utf-8", newline="") as f:
        f.write(json_text(manifest.model_dump()))
    return result_path, manifest_path
