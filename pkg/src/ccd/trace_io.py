"""Trajectory persistence: one JSON object per line.

Finite floats go through ``repr`` (Python's shortest-round-trip form), so a
parse of the emitted text recovers every bit. The only non-finite values a
trajectory can hold are the warmup thresholds, serialized as the strings
"inf" / "-inf" to stay inside strict JSON.

Every line carries a schema_version; readers accept any minor revision of a
known major version and reject the rest.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Iterable, Iterator

from ccd.engine import Trajectory
from ccd.errors import TraceSchemaError

SCHEMA_VERSION = "1.0"
_INF_KEYS = ("tau_cd", "tau_rep")


def _encode_trace(doc: dict) -> dict:
    out = dict(doc)
    for key in _INF_KEYS:
        v = out.get(key)
        if isinstance(v, float) and not math.isfinite(v):
            out[key] = "inf" if v > 0 else "-inf"
    return out


def _decode_trace(doc: dict) -> dict:
    out = dict(doc)
    for key in _INF_KEYS:
        v = out.get(key)
        if isinstance(v, str):
            out[key] = float(v)
    return out


def to_line(trajectory: Trajectory) -> str:
    doc = trajectory.to_dict()
    doc["traces"] = [_encode_trace(t) for t in doc["traces"]]
    doc["schema_version"] = SCHEMA_VERSION
    return json.dumps(doc, separators=(",", ":"), allow_nan=False)


def from_line(line: str) -> Trajectory:
    try:
        doc = json.loads(line)
    except json.JSONDecodeError as exc:
        raise TraceSchemaError(f"unparseable trace line: {exc}") from exc
    if not isinstance(doc, dict):
        raise TraceSchemaError("trace line is not a JSON object")
    version = doc.pop("schema_version", None)
    if not isinstance(version, str) or version.split(".")[0] != SCHEMA_VERSION.split(".")[0]:
        raise TraceSchemaError(f"unsupported trace schema version {version!r}")
    doc["traces"] = [_decode_trace(t) for t in doc.get("traces", [])]
    try:
        return Trajectory.from_dict(doc)
    except (TypeError, ValueError) as exc:
        raise TraceSchemaError(f"malformed trajectory record: {exc}") from exc


def write_file(path: str | Path, trajectories: Iterable[Trajectory]) -> None:
    with open(path, "w", encoding="utf-8") as fp:
        for traj in trajectories:
            fp.write(to_line(traj))
            fp.write("\n")


def iter_file(path: str | Path) -> Iterator[Trajectory]:
    with open(path, "r", encoding="utf-8") as fp:
        for line in fp:
            line = line.strip()
            if line:
                yield from_line(line)


def read_file(path: str | Path) -> list[Trajectory]:
    return list(iter_file(path))
