"""CSV/JSON artifacts and run manifests.

CSV files carry '#'-prefixed metadata lines (seed always included) above the
header row; floats are written with repr so identical runs produce identical
bytes.  Every CLI run emits a manifest recording the resolved config, its
hash, the seed, the worker count, and the sha256 of each output file;
re-running a manifest reproduces the outputs bit-exactly.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import __version__

SCHEMA_VERSION = 1


def fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def write_csv(path, metadata: Mapping, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    lines = [f"# {k}={fmt(v)}" for k, v in metadata.items()]
    lines.append(",".join(header))
    lines.extend(",".join(fmt(v) for v in row) for row in rows)
    Path(path).write_text("\n".join(lines) + "\n")


def json_dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ": "), indent=1)


def write_json(path, obj) -> None:
    Path(path).write_text(json_dumps(obj) + "\n")


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path) -> str:
    return sha256_bytes(Path(path).read_bytes())


def config_hash(config: Mapping) -> str:
    return sha256_bytes(json_dumps(config).encode())


def module_versions() -> dict:
    mods = ("lattice", "agy", "observables", "dynamics", "mixing", "dimension", "bounds", "cli")
    return {m: __version__ for m in mods}


def write_manifest(path, command: str, config: Mapping, seed: int, workers: int,
                   outputs: Sequence) -> dict:
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config": dict(config),
        "config_sha256": config_hash(config),
        "seed": seed,
        "workers": workers,
        "package_version": __version__,
        "module_versions": module_versions(),
        "outputs": {str(p): sha256_file(p) for p in outputs},
    }
    write_json(path, manifest)
    return manifest
