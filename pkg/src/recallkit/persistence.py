"""Append-only operation log plus periodic snapshot.

Every committed write is one JSON line in ``oplog.jsonl`` holding the effects
it had on the stores (records and embeddings, not the request), so replay
needs neither the extractor nor the embedder. A snapshot captures the full
state at a log sequence number; after it is written the log is truncated.
Replaying entries with ``seq`` greater than the snapshot's reproduces the
state. A torn final line (crash mid-write) is discarded.
"""

from __future__ import annotations

import base64
import fcntl
import json
import logging
import os
from pathlib import Path
from typing import Any

import numpy as np

log = logging.getLogger(__name__)

LOG_NAME = "oplog.jsonl"
SNAPSHOT_NAME = "snapshot.json"
LOCK_NAME = "LOCK"


class CorruptLog(RuntimeError):
    pass


class DataDirLocked(RuntimeError):
    pass


def encode_vector(v: np.ndarray) -> str:
    return base64.b64encode(np.asarray(v, dtype="<f8").tobytes()).decode("ascii")


def decode_vector(s: str) -> np.ndarray:
    return np.frombuffer(base64.b64decode(s), dtype="<f8").astype(np.float64)


def _fsync_dir(path: Path) -> None:
    fd = os.open(path, os.O_RDONLY)
    try:
        os.fsync(fd)
    finally:
        os.close(fd)


class Persistence:
    def __init__(self, data_dir: str | os.PathLike, *, fsync: bool = True) -> None:
        self.dir = Path(data_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.fsync = fsync
        self._lock_fd = os.open(self.dir / LOCK_NAME, os.O_RDWR | os.O_CREAT, 0o644)
        try:
            fcntl.flock(self._lock_fd, fcntl.LOCK_EX | fcntl.LOCK_NB)
        except BlockingIOError as exc:
            os.close(self._lock_fd)
            raise DataDirLocked(f"{self.dir} is in use by another process") from exc
        self._log = open(self.dir / LOG_NAME, "ab")
        self.entries_since_snapshot = 0

    def close(self) -> None:
        if self._log is not None:
            self._log.close()
            self._log = None
        if self._lock_fd is not None:
            fcntl.flock(self._lock_fd, fcntl.LOCK_UN)
            os.close(self._lock_fd)
            self._lock_fd = None

    def load(self) -> tuple[dict[str, Any] | None, list[dict[str, Any]]]:
        snapshot = None
        snap_path = self.dir / SNAPSHOT_NAME
        if snap_path.exists():
            snapshot = json.loads(snap_path.read_text("utf-8"))
        start = snapshot["seq"] if snapshot else 0
        entries: list[dict[str, Any]] = []
        log_path = self.dir / LOG_NAME
        raw = log_path.read_bytes() if log_path.exists() else b""
        lines = raw.split(b"\n")
        torn = lines[-1] != b""  # final line lacks its newline
        for i, line in enumerate(lines):
            if not line:
                continue
            try:
                entry = json.loads(line)
            except json.JSONDecodeError as exc:
                if i == len(lines) - 1 and torn:
                    log.warning("discarding torn final log line (%d bytes)", len(line))
                    break
                raise CorruptLog(f"unreadable log entry at line {i + 1}") from exc
            if entry["seq"] > start:
                entries.append(entry)
        if torn:
            # drop the partial bytes so new appends start on a clean line
            keep = raw[: raw.rfind(b"\n") + 1]
            self._log.close()
            log_path.write_bytes(keep)
            self._log = open(log_path, "ab")
        self.entries_since_snapshot = len(entries)
        return snapshot, entries

    def append(self, entry: dict[str, Any]) -> None:
        line = json.dumps(entry, separators=(",", ":"), sort_keys=True).encode("utf-8") + b"\n"
        self._log.write(line)
        self._log.flush()
        if self.fsync:
            os.fsync(self._log.fileno())
        self.entries_since_snapshot += 1

    def write_snapshot(self, state: dict[str, Any]) -> None:
        tmp = self.dir / (SNAPSHOT_NAME + ".tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(state, fh, separators=(",", ":"), sort_keys=True)
            fh.flush()
            if self.fsync:
                os.fsync(fh.fileno())
        os.replace(tmp, self.dir / SNAPSHOT_NAME)
        if self.fsync:
            _fsync_dir(self.dir)
        # entries up to state["seq"] are now redundant
        self._log.close()
        self._log = open(self.dir / LOG_NAME, "wb")
        self._log.flush()
        self.entries_since_snapshot = 0
