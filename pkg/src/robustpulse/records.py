"""Output helpers shared by the file writers: number formatting, hashing, headers."""

from __future__ import annotations

import hashlib
import json

from . import __version__


def fmt(x) -> str:
    """Shortest decimal string that reads back to the same float."""
    return repr(float(x))


def config_hash(config) -> str:
    """SHA-256 of the canonical JSON form of ``config`` (first 16 hex digits)."""
    text = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def metadata(config=None, **extra) -> dict:
    meta = {"tool": "robustpulse", "version": __version__}
    if config is not None:
        meta["config_hash"] = config_hash(config)
        if "seed" in config:
            meta["seed"] = config["seed"]
    meta.update(extra)
    return meta


def comment_header(meta: dict) -> str:
    """Metadata as ``# key: value`` lines for the top of a CSV file."""
    return "".join(f"# {k}: {v}\n" for k, v in meta.items())


def write_csv(path, header, rows, meta: dict | None = None) -> None:
    lines = [comment_header(meta) if meta else "", ",".join(header) + "\n"]
    for row in rows:
        lines.append(",".join(fmt(v) for v in row) + "\n")
    with open(path, "w") as fh:
        fh.write("".join(lines))


def read_csv(path):
    """Return ``(meta, header, rows)`` from a file written by :func:`write_csv`."""
    meta, header, rows = {}, None, []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line[1:].partition(":")
                meta[key.strip()] = value.strip()
            elif header is None:
                header = line.split(",")
            else:
                rows.append([float(v) for v in line.split(",")])
    if header is None:
        raise ValueError(f"{path}: no header line")
    return meta, header, rows
