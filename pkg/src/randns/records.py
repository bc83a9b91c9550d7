"""Newline-delimited run records: one manifest line, sample/point lines, one aggregate.

Sample lines carry no timing or host data, so a replayed run reproduces them
byte for byte; the aggregate line holds the wall clock and anything else
volatile.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

VOLATILE_AGGREGATE_KEYS = ("wall_clock_s",)


def jsonable(obj):
    """Coerce numpy scalars/arrays into JSON-safe python values."""
    if isinstance(obj, dict):
        return {k: jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        val = float(obj)
        return val if math.isfinite(val) else None
    return obj


def _dumps(obj) -> str:
    return json.dumps(jsonable(obj), sort_keys=True, separators=(",", ":"))


def write_run_record(path, manifest_normalized: dict, digest: str,
                     rows: list[dict], aggregate: dict, version: str) -> None:
    lines = [_dumps({"type": "manifest", "digest": digest, "version": version,
                     "manifest": manifest_normalized})]
    lines.extend(_dumps(row) for row in rows)
    lines.append(_dumps({"type": "aggregate", **aggregate}))
    Path(path).write_text("\n".join(lines) + "\n")


def read_run_record(path) -> dict:
    """Parse a record file into {manifest, digest, version, rows, aggregate}."""
    out = {"rows": []}
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        if obj.get("type") == "manifest":
            out["manifest"] = obj["manifest"]
            out["digest"] = obj["digest"]
            out["version"] = obj.get("version")
        elif obj.get("type") == "aggregate":
            out["aggregate"] = obj
        else:
            out["rows"].append(obj)
    if "manifest" not in out:
        raise ValueError(f"{path}: no manifest line found")
    return out


def stable_aggregate(aggregate: dict) -> dict:
    """Aggregate with volatile keys (timing) removed, for replay comparison."""
    return {k: v for k, v in aggregate.items()
            if k not in VOLATILE_AGGREGATE_KEYS and k != "type"}
