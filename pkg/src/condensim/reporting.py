"""Bit-exact tabular output and run manifests.

CSV bodies are deterministic: floats carry 17 significant digits (the
shortest round-trip width for doubles), newlines are LF, and no
timestamps appear; timestamps live only in the manifest.
"""

from __future__ import annotations

import json
import time
from pathlib import Path


def fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if value != value:  # nan: emit an empty cell
            return ""
        return format(value, ".17g")
    if value is None:
        return ""
    return str(value)


def write_csv(path: Path, header: list[str], rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    lines.extend(",".join(fmt(v) for v in row) for row in rows)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    return path


def mask_of(indices) -> int:
    """Bitmask encoding of a 0-based site subset (bit j <-> site j+1)."""
    mask = 0
    for j in indices:
        mask |= 1 << int(j)
    return mask


class ManifestTimer:
    """Collects manifest fields across one subcommand run."""

    def __init__(self, subcommand: str, config_digest: str, seed: int, seed_source: str):
        self.subcommand = subcommand
        self.config_digest = config_digest
        self.seed = seed
        self.seed_source = seed_source
        self.checks: dict[str, bool] = {}
        self._start = time.monotonic()
        self._wall = time.time()

    def record(self, name: str, passed: bool) -> bool:
        self.checks[name] = bool(passed)
        return bool(passed)

    @property
    def all_passed(self) -> bool:
        return all(self.checks.values())

    def write(self, path: Path, version: str) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = {
            "artifact": "condensim",
            "version": version,
            "subcommand": self.subcommand,
            "config_hash": self.config_digest,
            "seed": self.seed,
            "seed_source": self.seed_source,
            "wall_time_s": round(time.monotonic() - self._start, 3),
            "started_unix": self._wall,
            "checks": self.checks,
        }
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        return path
