"""Deterministic artifact files and their provenance sidecars.

Artifacts (JSON Lines, JSON, CSV) are written with stable key order, fixed
separators and no timestamps, so rerunning a command with the same inputs
and seed reproduces every artifact byte for byte. Anything time-dependent
lives next to the artifact in a ``<name>.manifest.json`` sidecar recording
the command line, config snapshot, seed, input and output hashes, and the
tool version; ``verify_manifest`` re-hashes both sides later.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import time
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from delprobe import __version__
from delprobe.errors import ConfigError, ManifestError, SchemaError

MANIFEST_SUFFIX = ".manifest.json"


# -- hashing ----------------------------------------------------------------

def sha256_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for block in iter(lambda: handle.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()


def hash_files(paths: Iterable[str | Path]) -> dict[str, str]:
    """Map each path (as given, normalized) to its content hash."""
    out = {}
    for path in paths:
        key = os.path.normpath(str(path))
        try:
            out[key] = sha256_file(path)
        except OSError as exc:
            raise ManifestError(f"cannot hash {path}: {exc}") from exc
    return out


# -- deterministic writers --------------------------------------------------

def json_line(obj) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False,
                      separators=(",", ":"))


def write_jsonl(path: str | Path, rows: Iterable[Mapping]) -> int:
    """Write one JSON object per line; returns the number of rows."""
    path = Path(path)
    count = 0
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as handle:
        for row in rows:
            handle.write(json_line(row) + "\n")
            count += 1
    os.replace(tmp, path)
    return count


def read_jsonl_numbered(path: str | Path) -> list[tuple[int, dict]]:
    """Read JSON Lines as (line_no, row); errors name the file and line."""
    rows = []
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise SchemaError(f"cannot read {path}: {exc}") from exc
    for line_no, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}:{line_no}: not JSON: {exc}") from exc
        if not isinstance(row, dict):
            raise SchemaError(f"{path}:{line_no}: expected a JSON object")
        rows.append((line_no, row))
    return rows


def read_jsonl(path: str | Path) -> list[dict]:
    return [row for _, row in read_jsonl_numbered(path)]


def write_json(path: str | Path, obj) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as handle:
        json.dump(obj, handle, sort_keys=True, ensure_ascii=False, indent=2)
        handle.write("\n")
    os.replace(tmp, path)


def csv_cell(value) -> str:
    """Render one CSV value; None means a missing cell, never 0."""
    if value is None:
        return ""
    if isinstance(value, Fraction):
        return str(float(value))
    if isinstance(value, float):
        if math.isinf(value):
            return "inf"
        return str(value)
    return str(value)


def write_csv(path: str | Path, header: Sequence[str],
              rows: Iterable[Sequence]) -> int:
    path = Path(path)
    count = 0
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([csv_cell(v) for v in row])
            count += 1
    os.replace(tmp, path)
    return count


def read_csv(path: str | Path) -> tuple[list[str], list[dict[str, str]]]:
    """Read a CSV into (header, row dicts); errors name the file."""
    try:
        with open(path, encoding="utf-8", newline="") as handle:
            reader = csv.reader(handle)
            try:
                header = next(reader)
            except StopIteration:
                raise SchemaError(f"{path}: empty CSV") from None
            rows = []
            for line_no, row in enumerate(reader, 2):
                if len(row) != len(header):
                    raise SchemaError(
                        f"{path}:{line_no}: expected {len(header)} fields, "
                        f"got {len(row)}")
                rows.append(dict(zip(header, row)))
    except OSError as exc:
        raise SchemaError(f"cannot read {path}: {exc}") from exc
    return header, rows


# -- config files -----------------------------------------------------------

def load_config(path: str | Path | None) -> dict:
    if path is None:
        return {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return data


# -- manifests ---------------------------------------------------------------

def manifest_path(artifact: str | Path) -> Path:
    artifact = Path(artifact)
    return artifact.with_name(artifact.name + MANIFEST_SUFFIX)


def write_manifests(command: str, argv: Sequence[str], seed: int | None,
                    config: Mapping, inputs: Sequence[str | Path],
                    outputs: Sequence[str | Path]) -> list[Path]:
    """Write one provenance sidecar per output artifact.

    Every sidecar of a run carries the same body (the full input and
    output hash maps), so any single artifact identifies the run that
    produced it. Timestamps live only here, keeping artifacts rerun-stable.
    """
    body = {
        "command": command,
        "argv": list(argv),
        "config": dict(config),
        "seed": seed,
        "inputs": hash_files(inputs),
        "outputs": hash_files(outputs),
        "created_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "version": __version__,
    }
    written = []
    for artifact in outputs:
        side = manifest_path(artifact)
        write_json(side, body)
        written.append(side)
    return written


def read_manifest(path: str | Path) -> dict:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: not JSON: {exc}") from exc
    for key in ("command", "inputs", "outputs", "version"):
        if key not in data:
            raise ManifestError(f"{path}: missing {key!r}")
    return data


def verify_manifest(path: str | Path) -> list[str]:
    """Re-hash a manifest's inputs and outputs; returns mismatch messages."""
    data = read_manifest(path)
    problems = []
    for role in ("inputs", "outputs"):
        for file_path, recorded in sorted(data[role].items()):
            if not os.path.exists(file_path):
                problems.append(f"{role[:-1]} missing: {file_path}")
            elif sha256_file(file_path) != recorded:
                problems.append(f"{role[:-1]} changed: {file_path}")
    return problems
