"""JSON/CSV emission. Reports are byte-stable: insertion-ordered keys, floats with 17 significant digits."""

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from imtk import __version__

logger = logging.getLogger(__name__)

INDENT = "  "


def _plain(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, complex):
        return [value.real, value.imag]
    return value


def format_float(x: float) -> str:
    if math.isnan(x):
        return '"nan"'
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    text = format(x, ".17g")
    if "." not in text and "e" not in text and "inf" not in text:
        text += ".0"
    return text


def _encode(value, level: int) -> str:
    value = _plain(value)
    pad = INDENT * (level + 1)
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return format_float(value)
    if isinstance(value, str):
        return json.dumps(value, ensure_ascii=False)
    if isinstance(value, dict):
        if not value:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(v, level + 1)}" for k, v in value.items()]
        return "{\n" + ",\n".join(items) + "\n" + INDENT * level + "}"
    if isinstance(value, (list, tuple)):
        if not value:
            return "[]"
        parts = [_encode(v, level + 1) for v in value]
        if all("\n" not in p for p in parts) and sum(len(p) for p in parts) < 100:
            return "[" + ", ".join(parts) + "]"
        return "[\n" + ",\n".join(pad + p for p in parts) + "\n" + INDENT * level + "]"
    raise TypeError(f"cannot encode {type(value).__name__} in a report")


def dumps(payload) -> str:
    return _encode(payload, 0) + "\n"


def write_json(path, payload) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(payload), encoding="utf-8")
    logger.debug("wrote %s", path)
    return path


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format(float(x), ".17g") if isinstance(x, (float, np.floating)) else x for x in row])
    logger.debug("wrote %s", path)
    return path


def write_manifold(M, prefix) -> list[Path]:
    """zeta_1..zeta_j, v_1..v_n per node, plus a JSON sidecar with the build metadata."""
    prefix = Path(prefix)
    header = [f"zeta_{k + 1}" for k in range(M.j)] + [f"v_{k + 1}" for k in range(M.n)]
    rows = np.hstack([M.nodes, M.values])
    csv_path = write_csv(prefix.with_suffix(".csv"), header, rows.tolist())
    meta_path = write_json(prefix.with_suffix(".json"), M.metadata())
    return [csv_path, meta_path]


def write_trajectory(path, times, states, prefix: str = "zeta") -> Path:
    states = np.atleast_2d(np.asarray(states))
    header = ["t"] + [f"{prefix}_{k + 1}" for k in range(states.shape[1])]
    return write_csv(path, header, np.column_stack([times, states]).tolist())


@dataclass
class RunManifest:
    command: str
    config_paths: list = field(default_factory=list)
    seed: int = 42
    tool_version: str = __version__
    started_at: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat())
    finished_at: Optional[str] = None
    artifacts: list = field(default_factory=list)

    def finish(self, artifacts: Sequence) -> "RunManifest":
        self.artifacts = [str(p) for p in artifacts]
        self.finished_at = datetime.now(timezone.utc).isoformat()
        return self

    def missing_artifacts(self) -> list:
        return [p for p in self.artifacts if not Path(p).exists()]

    def to_dict(self) -> dict:
        return asdict(self)
