"""Canonical JSON for events, logs, and HTTP payloads.

Every float is rounded to nine significant digits at serialization time and
negative zero collapses to zero, so the same run always produces the same
bytes no matter which code path serialized it.  Logs are one event per line.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any

from .session import SessionEvent


class NotCanonical(ValueError):
    """Value that cannot appear on the wire (non-finite float, unknown type)."""


def canon_float(x: float) -> float:
    if not math.isfinite(x):
        raise NotCanonical(f"non-finite float {x!r} on the wire")
    v = float(f"{x:.9g}")
    return 0.0 if v == 0.0 else v


def canon(value: Any) -> Any:
    """Recursively canonicalize to plain JSON types."""
    if value is None or isinstance(value, (bool, int, str)):
        return value
    if isinstance(value, float):
        return canon_float(value)
    if isinstance(value, dict):
        out = {}
        for k, v in value.items():
            if not isinstance(k, str):
                raise NotCanonical(f"non-string key {k!r}")
            out[k] = canon(v)
        return out
    if isinstance(value, (list, tuple)):
        return [canon(v) for v in value]
    raise NotCanonical(f"cannot serialize {type(value).__name__}")


def dumps(value: Any) -> str:
    return json.dumps(canon(value), separators=(",", ":"), sort_keys=True, allow_nan=False)


def event_to_wire(e: SessionEvent) -> dict:
    return {"seq": e.seq, "t": canon_float(e.t), "kind": e.kind, "payload": canon(e.payload)}


def event_line(e: SessionEvent) -> str:
    return dumps(event_to_wire(e))


def write_log(events: list[SessionEvent], path: str | Path) -> None:
    Path(path).write_text("".join(event_line(e) + "\n" for e in events), encoding="utf-8")


def read_log(path: str | Path) -> list[str]:
    """Log lines without trailing newlines; blank lines are ignored."""
    return [ln for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln]
