"""Line-delimited result records and flat tables.

Each record is one canonical JSON object per line with keys ``fingerprint``
(the config hash), ``kind``, ``seq`` (emission index within the run) and
``payload``. Records carry no wall-clock fields, so re-running a stored
config reproduces the file byte for byte; the run timestamp lives in the
separate ``run.json`` written next to the records.
"""

from __future__ import annotations

import csv
import json
import time
from pathlib import Path

import numpy as np


def _scrub(value):
    if isinstance(value, dict):
        return {k: _scrub(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_scrub(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_scrub(v) for v in value.tolist()]
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        return value.item()
    return value


def canonical_json(payload) -> str:
    return json.dumps(_scrub(payload), sort_keys=True, separators=(",", ":"),
                      allow_nan=False)


class RecordWriter:
    def __init__(self, path, fingerprint: str):
        self.path = Path(path)
        self.fingerprint = fingerprint
        self._seq = 0
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "w")

    def write(self, kind: str, payload) -> None:
        record = {
            "fingerprint": self.fingerprint,
            "kind": kind,
            "seq": self._seq,
            "payload": payload,
        }
        self._fh.write(canonical_json(record) + "\n")
        self._seq += 1

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_run_meta(directory, fingerprint: str, cfg_text: str, note: str = ""):
    """Run metadata (including the only timestamp a run produces)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meta = {
        "fingerprint": fingerprint,
        "started": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "note": note,
    }
    (directory / "run.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    (directory / "config.txt").write_text(cfg_text)


def write_table(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_scrub(v) for v in row])


def read_records(path):
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
