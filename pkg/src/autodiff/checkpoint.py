"""
Formato de checkpoint do ParamSet.

manifest.json lista nome -> {shape, dtype, offset, nbytes} e params.bin guarda
os bytes little-endian concatenados na ordem dos nomes. As gravações usam
arquivo temporário + rename, nunca deixando um checkpoint truncado.
"""
import json
import os
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import numpy as np

from src.autodiff.params import ParamSet
from src.config import CHECKPOINT_FORMAT_VERSION
from src.errors import CheckpointCompatibilityError, FormatError

MANIFEST_NAME = "manifest.json"
BLOB_NAME = "params.bin"


def atomic_write_bytes(path: Path, payload: bytes):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(payload)
        f.flush()
        os.fsync(f.fileno())
    os.replace(tmp, path)


def atomic_write_json(path: Path, obj: Any):
    payload = json.dumps(obj, indent=2, sort_keys=True).encode("utf-8")
    atomic_write_bytes(path, payload)


def save_checkpoint(params: ParamSet, directory, metadata: Optional[Dict[str, Any]] = None) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    entries = {}
    chunks = []
    offset = 0
    for name, array in params.items():
        le = array.astype(array.dtype.newbyteorder("<"), copy=False)
        raw = le.tobytes(order="C")
        entries[name] = {
            "shape": list(array.shape),
            "dtype": le.dtype.str,
            "offset": offset,
            "nbytes": len(raw),
        }
        chunks.append(raw)
        offset += len(raw)

    atomic_write_bytes(directory / BLOB_NAME, b"".join(chunks))
    manifest = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "entries": entries,
        "frozen": sorted(params.frozen),
        "metadata": metadata or {},
    }
    atomic_write_json(directory / MANIFEST_NAME, manifest)
    return directory


def read_checkpoint_manifest(directory) -> Dict[str, Any]:
    path = Path(directory) / MANIFEST_NAME
    if not path.exists():
        raise CheckpointCompatibilityError(f"Checkpoint não encontrado em: {directory}")
    with open(path, "r", encoding="utf-8") as f:
        manifest = json.load(f)
    if manifest.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise FormatError(
            f"Versão de checkpoint {manifest.get('format_version')} não suportada "
            f"(esperado {CHECKPOINT_FORMAT_VERSION})"
        )
    return manifest


def load_checkpoint(directory) -> Tuple[ParamSet, Dict[str, Any]]:
    directory = Path(directory)
    manifest = read_checkpoint_manifest(directory)
    blob = (directory / BLOB_NAME).read_bytes()

    params = ParamSet()
    for name in sorted(manifest["entries"]):
        entry = manifest["entries"][name]
        start, size = entry["offset"], entry["nbytes"]
        if start + size > len(blob):
            raise FormatError(f"Blob truncado para o parâmetro {name}")
        dtype = np.dtype(entry["dtype"])
        array = np.frombuffer(blob, dtype=dtype, count=size // dtype.itemsize, offset=start)
        params.add(name, array.reshape(entry["shape"]).astype(dtype.newbyteorder("="), copy=True))
    params.freeze(manifest.get("frozen", []))
    return params, manifest.get("metadata", {})
