"""Deterministic artifact writing: atomic files, config digests, sidecars.

Data outputs (CSV/JSON) are byte-identical given identical config and seed;
wall-clock timestamps live only in a .meta.json sidecar.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
import time

SCHEMA_VERSION = 1


def config_digest(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def atomic_write_text(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_sidecar(path: str, config: dict) -> None:
    meta = {"written_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
            "config": config}
    atomic_write_text(path + ".meta.json", json.dumps(meta, indent=2) + "\n")


def write_json(path: str, payload: dict, config: dict) -> None:
    doc = {"schema_version": SCHEMA_VERSION,
           "config_digest": config_digest(config),
           "config": config}
    doc.update(payload)
    atomic_write_text(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")
    write_sidecar(path, config)


def write_csv(path: str, header: list, rows: list, config: dict) -> None:
    lines = [f"# schema_version={SCHEMA_VERSION} config_digest={config_digest(config)}",
             ",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")
    write_sidecar(path, config)


def _fmt(v) -> str:
    if isinstance(v, float):
        return format(v, ".12g")
    return str(v)
