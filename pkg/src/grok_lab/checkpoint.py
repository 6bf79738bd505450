# -*- coding: utf-8 -*-
"""
Checkpoint layout:

    GROKCKPT1\n
    {"<tensor name>": {"shape": [...], "dtype": "<f4", "offset": 0, "length": 1234}, ...}\n
    \n
    <little-endian payloads concatenated in manifest order>

Offsets are relative to the first payload byte.
"""
import json
from pathlib import Path
from typing import Dict, Union

import numpy as np

from grok_lab.errors import CheckpointError
from grok_lab.model import Params
from grok_lab.schemas import ModelConfig

MAGIC = b"GROKCKPT1\n"
_DTYPES = {"<f4": np.dtype("<f4"), "<f8": np.dtype("<f8")}


def write_checkpoint(path: Union[str, Path], tensors: Dict[str, np.ndarray]) -> Path:
    path = Path(path)
    manifest = {}
    payloads = []
    offset = 0
    for name, arr in tensors.items():
        le = np.ascontiguousarray(arr, dtype=np.asarray(arr).dtype.newbyteorder("<"))
        code = le.dtype.str
        if code not in _DTYPES:
            raise CheckpointError(f"{name}: unsupported dtype {arr.dtype}")
        raw = le.tobytes(order="C")
        manifest[name] = {"shape": list(le.shape), "dtype": code, "offset": offset, "length": len(raw)}
        payloads.append(raw)
        offset += len(raw)

    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as f:
        f.write(MAGIC)
        f.write(json.dumps(manifest, ensure_ascii=False, separators=(",", ":")).encode("utf-8"))
        f.write(b"\n\n")
        for raw in payloads:
            f.write(raw)
    return path


def read_checkpoint(path: Union[str, Path]) -> Dict[str, np.ndarray]:
    path = Path(path)
    with path.open("rb") as f:
        if f.read(len(MAGIC)) != MAGIC:
            raise CheckpointError(f"{path}: not a grok-lab checkpoint (bad magic)")
        try:
            manifest = json.loads(f.readline().decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"{path}: malformed manifest") from exc
        if f.readline() != b"\n":
            raise CheckpointError(f"{path}: missing blank line after manifest")
        body = f.read()

    out: Dict[str, np.ndarray] = {}
    for name, entry in manifest.items():
        dtype = _DTYPES.get(entry.get("dtype"))
        if dtype is None:
            raise CheckpointError(f"{path}: {name} has unsupported dtype {entry.get('dtype')}")
        start, length = int(entry["offset"]), int(entry["length"])
        if start + length > len(body):
            raise CheckpointError(f"{path}: {name} payload truncated")
        arr = np.frombuffer(body[start:start + length], dtype=dtype).reshape(entry["shape"])
        out[name] = arr.astype(dtype.newbyteorder("="), copy=True)
    return out


def save_params(path: Union[str, Path], params: Params) -> Path:
    return write_checkpoint(path, params.arrays())


def load_params(path: Union[str, Path], config: ModelConfig) -> Params:
    return Params.from_arrays(config, read_checkpoint(path))
