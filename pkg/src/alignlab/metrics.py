"""Metrics log: one JSON object per line, byte-stable across reruns.

Records are serialized with sorted keys and fixed separators so identical
runs produce identical files. On resume, the log is truncated to records
from steps that were completed before the checkpoint being resumed from;
the rerun period then reproduces the dropped tail exactly.
"""

from __future__ import annotations

import json
import os

from .errors import DataError


def json_line(rec: dict) -> str:
    return json.dumps(rec, sort_keys=True, separators=(",", ":")) + "\n"


def load_metrics(path) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as f:
        for ln, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(json.loads(line))
            except json.JSONDecodeError as e:
                raise DataError(f"{path}:{ln}: bad metrics line: {e}") from e
    return out


def _load_for_resume(path) -> list[dict]:
    # A process killed mid-write can leave a torn final line; that artifact
    # is dropped here. Corruption anywhere else still fails loudly.
    out = []
    with open(path, encoding="utf-8") as f:
        lines = [(ln, s.strip()) for ln, s in enumerate(f, start=1) if s.strip()]
    for i, (ln, line) in enumerate(lines):
        try:
            out.append(json.loads(line))
        except json.JSONDecodeError as e:
            if i == len(lines) - 1:
                break
            raise DataError(f"{path}:{ln}: bad metrics line: {e}") from e
    return out


class MetricsWriter:
    """Append-only JSONL writer with resume truncation."""

    def __init__(self, path: str, resume_step: int | None = None):
        self.path = path
        if resume_step is None or not os.path.exists(path):
            self._f = open(path, "w", encoding="utf-8")
        else:
            kept = [r for r in _load_for_resume(path) if r.get("step", -1) < resume_step]
            self._f = open(path, "w", encoding="utf-8")
            for r in kept:
                self._f.write(json_line(r))
            self._f.flush()

    def write(self, rec: dict) -> None:
        self._f.write(json_line(rec))
        self._f.flush()

    def close(self) -> None:
        self._f.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
