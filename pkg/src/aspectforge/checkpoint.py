"""Checkpoint container.

Layout (all text UTF-8)::

    ASPECTFORGE-CHECKPOINT 1
    [config]
    key=value
    ...
    [manifest]
    name<TAB>d0,d1,...<TAB>byte_offset<TAB>byte_length
    ...
    [end]
    <payload: little-endian float64 buffers, offsets relative to payload start>
"""
from __future__ import annotations

from collections import OrderedDict
from pathlib import Path

import numpy as np

from .model import ModelConfig, Parameters, param_shapes

MAGIC = "ASPECTFORGE-CHECKPOINT"
VERSION = 1
_DTYPE = np.dtype("<f8")


class CheckpointError(ValueError):
    pass


def dumps(config: ModelConfig, params: Parameters, metadata: dict[str, str] | None = None) -> bytes:
    meta = {f"model.{k}": str(v) for k, v in config.to_dict().items()}
    for k, v in (metadata or {}).items():
        if "\n" in str(v) or "=" in k:
            raise CheckpointError(f"metadata entry {k!r} cannot be stored")
        meta[k] = str(v)

    header = [f"{MAGIC} {VERSION}", "[config]"]
    header += [f"{k}={v}" for k, v in meta.items()]
    header.append("[manifest]")
    chunks = []
    offset = 0
    for name, tensor in params.items():
        buf = np.ascontiguousarray(tensor.data, dtype=_DTYPE).tobytes()
        shape = ",".join(str(d) for d in tensor.shape)
        header.append(f"{name}\t{shape}\t{offset}\t{len(buf)}")
        chunks.append(buf)
        offset += len(buf)
    header.append("[end]")
    return ("\n".join(header) + "\n").encode("utf-8") + b"".join(chunks)


def loads(blob: bytes) -> tuple[ModelConfig, Parameters, dict[str, str]]:
    end = blob.find(b"[end]\n")
    if not blob.startswith(MAGIC.encode()) or end < 0:
        raise CheckpointError("not an aspectforge checkpoint")
    lines = blob[:end].decode("utf-8").splitlines()
    version = int(lines[0].split()[1])
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    payload = memoryview(blob)[end + len(b"[end]\n"):]

    meta: dict[str, str] = {}
    manifest = []
    section = None
    for line in lines[1:]:
        if line in ("[config]", "[manifest]"):
            section = line
        elif section == "[config]":
            k, v = line.split("=", 1)
            meta[k] = v
        elif section == "[manifest]":
            name, shape, off, length = line.split("\t")
            dims = tuple(int(d) for d in shape.split(",") if d)
            manifest.append((name, dims, int(off), int(length)))

    config = ModelConfig.from_dict({k[len("model."):]: v for k, v in meta.items() if k.startswith("model.")})
    expected = param_shapes(config)
    arrays = OrderedDict()
    for name, dims, off, length in manifest:
        if expected.get(name) != dims:
            raise CheckpointError(f"tensor {name!r} has shape {dims}, config expects {expected.get(name)}")
        if off + length > len(payload):
            raise CheckpointError(f"tensor {name!r} runs past the end of the file")
        arrays[name] = np.frombuffer(payload[off : off + length], dtype=_DTYPE).reshape(dims).astype(np.float64)
    missing = set(expected) - set(arrays)
    if missing:
        raise CheckpointError(f"checkpoint lacks tensors {sorted(missing)[:3]}")
    extra = {k: v for k, v in meta.items() if not k.startswith("model.")}
    return config, Parameters.from_arrays(arrays), extra


def save(path: str | Path, config: ModelConfig, params: Parameters, metadata: dict[str, str] | None = None) -> None:
    Path(path).write_bytes(dumps(config, params, metadata))


def load(path: str | Path) -> tuple[ModelConfig, Parameters, dict[str, str]]:
    return loads(Path(path).read_bytes())
