"""Header lines stamped on every output file."""
from __future__ import annotations

import hashlib
import json


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)


def config_hash(config: dict) -> str:
    return hashlib.sha256(canonical_json(config).encode("utf-8")).hexdigest()[:16]


def header_lines(command: str, config: dict, defaulted=()) -> list:
    from . import __version__

    lines = [f"lobphys {__version__} {command}", f"config_hash {config_hash(config)}",
             f"config {canonical_json(config)}"]
    if defaulted:
        lines.append("defaulted " + ",".join(sorted(defaulted)))
    return lines
