"""Deterministic artifact writing: CSV, JSON summaries and run manifests."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import tempfile
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .errors import NHBerryError


class OutputError(NHBerryError):
    exit_code = 4


def fmt(v) -> str:
    """17 significant digits, round-trips doubles exactly."""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return "%.17g" % float(v)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": to_jsonable(obj.real), "im": to_jsonable(obj.imag)}
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if hasattr(obj, "value") and hasattr(obj, "name"):  # enum
        return obj.value
    return obj


def json_text(obj) -> str:
    return json.dumps(to_jsonable(obj), indent=2, sort_keys=True) + "\n"


def atomic_write(path: Path, text: str) -> str:
    """Write via temp file + rename; returns the sha256 of the content."""
    path = Path(path)
    data = text.encode("utf-8")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=path.suffix)
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc
    return hashlib.sha256(data).hexdigest()


class RunWriter:
    """Collects outputs of one run and writes the manifest last."""

    def __init__(self, output_dir, command: str, spec: dict):
        self.dir = Path(output_dir)
        self.command = command
        self.spec = spec
        self.files = {}
        self.diagnostics = {}
        self.started = datetime.now(timezone.utc).isoformat()

    def write(self, name: str, text: str) -> Path:
        path = self.dir / name
        self.files[name] = atomic_write(path, text)
        return path

    def write_csv(self, name, header, rows) -> Path:
        return self.write(name, csv_text(header, rows))

    def write_json(self, name, obj) -> Path:
        return self.write(name, json_text(obj))

    def finish(self, status="ok", error=None) -> Path:
        manifest = {
            "command": self.command,
            "spec": self.spec,
            "tool": "nhberry",
            "version": __version__,
            "started": self.started,
            "finished": datetime.now(timezone.utc).isoformat(),
            "status": status,
            "files": {k: {"sha256": v} for k, v in sorted(self.files.items())},
            "diagnostics": self.diagnostics,
        }
        if error is not None:
            manifest["error"] = error
        path = self.dir / "manifest.json"
        atomic_write(path, json_text(manifest))
        return path
