"""Result files and run manifests."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

__all__ = ["to_jsonable", "dumps", "csv_text", "RunWriter"]


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        if math.isinf(f):
            return "inf" if f > 0 else "-inf"
        if math.isnan(f):
            return "nan"
        return f
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(to_jsonable(obj), indent=2, sort_keys=True) + "\n"


def csv_text(rows: list[dict], columns: list[str] | None = None) -> str:
    if not rows:
        return ""
    columns = columns or list(rows[0].keys())
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: to_jsonable(r.get(k)) for k in columns})
    return buf.getvalue()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


class RunWriter:
    """Writes into ``<outdir>/<command>-<seed>/`` and records a manifest.

    Only the manifest carries timestamps, so result files are
    byte-identical across reruns with the same config and seed.
    """

    def __init__(self, outdir, command: str, seed: int, argv: list[str], config: dict, version: str):
        self.root = Path(outdir).resolve() / f"{command}-{seed}"
        self.root.mkdir(parents=True, exist_ok=True)
        self.manifest = {
            "tool_version": version,
            "command": command,
            "argv": list(argv),
            "config": to_jsonable(config),
            "base_seed": seed,
            "started": _now(),
            "outputs": {},
        }

    def write(self, name: str, text: str) -> Path:
        path = (self.root / name).resolve()
        if self.root not in path.parents:
            raise ValueError(f"refusing to write outside {self.root}")
        path.parent.mkdir(parents=True, exist_ok=True)
        data = text.encode()
        path.write_bytes(data)
        self.manifest["outputs"][name] = hashlib.sha256(data).hexdigest()
        return path

    def finish(self) -> Path:
        self.manifest["finished"] = _now()
        path = self.root / "manifest.json"
        path.write_text(dumps(self.manifest))
        return path
