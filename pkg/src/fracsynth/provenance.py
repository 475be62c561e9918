"""Run provenance: every CLI artifact directory gets a record of the exact
command, seed and config hash that produced it.  Records carry no timestamps
so reruns stay byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import os

from . import __version__


def config_hash(config: dict) -> str:
    payload = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(payload.encode()).hexdigest()


def write_provenance(target, command: str, config: dict, seed=None) -> str:
    """Write provenance.json next to (or inside) the target artifact."""
    record = {
        "tool": "fracsynth",
        "version": __version__,
        "command": command,
        "seed": seed,
        "config": config,
        "config_hash": config_hash(config),
    }
    if os.path.isdir(target):
        path = os.path.join(target, "provenance.json")
    else:
        path = f"{target}.provenance.json"
    with open(path, "w") as fh:
        json.dump(record, fh, sort_keys=True, indent=1)
        fh.write("\n")
    return path


def parse_kv_config(path) -> dict:
    """Tiny declarative key/value config reader.

    Lines are `key = value` with `#` comments; values parse as bool, int,
    float, quoted string, or a comma list of numbers in brackets.
    """
    out: dict = {}
    with open(path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"bad config line: {raw!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key] = _parse_value(value)
    return out


def _parse_value(value: str):
    low = value.lower()
    if low in ("true", "false"):
        return low == "true"
    if value.startswith("[") and value.endswith("]"):
        inner = value[1:-1].strip()
        return [_parse_value(v.strip()) for v in inner.split(",")] if inner else []
    if value.startswith('"') and value.endswith('"') and len(value) >= 2:
        return value[1:-1]
    try:
        return int(value)
    except ValueError:
        pass
    try:
        return float(value)
    except ValueError:
        pass
    return value
