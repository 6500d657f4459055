"""Binary checkpoint persistence.

Layout: magic "GELDCKPT", u32 format version, u32 tensor count, then per
tensor a length-prefixed UTF-8 name, u8 rank, u32 dims, and float32
little-endian row-major values; finally a 64-bit BLAKE2b checksum of the
payload (everything between the magic and the checksum). Loads are all-or-
nothing: a bad checksum raises before any tensor is returned.
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np

from .errors import ChecksumError, CheckpointError, VersionMismatchError
from .model import ModelConfig, ModelParams
from .numeric import Tensor

MAGIC = b"GELDCKPT"
FORMAT_VERSION = 1
_CONFIG_KEY = "meta.config"


def _config_vector(config: ModelConfig) -> np.ndarray:
    return np.array(
        [
            config.hidden_dim,
            config.num_heads,
            config.decoder_layers,
            config.region_rows,
            config.region_cols,
        ],
        dtype=np.float32,
    )


def _config_from_vector(vec: np.ndarray) -> ModelConfig:
    vals = [int(v) for v in vec]
    if len(vals) != 5:
        raise CheckpointError(f"bad config record of length {len(vals)}")
    return ModelConfig(*vals)


def _pack_tensor(name: str, arr: np.ndarray) -> bytes:
    data = np.ascontiguousarray(arr, dtype="<f4")
    name_b = name.encode("utf-8")
    head = struct.pack("<H", len(name_b)) + name_b
    head += struct.pack("<B", data.ndim)
    head += struct.pack(f"<{data.ndim}I", *data.shape)
    return head + data.tobytes()


def _checksum(payload: bytes) -> bytes:
    return hashlib.blake2b(payload, digest_size=8).digest()


def save_checkpoint(params: ModelParams, path) -> None:
    entries = [(_CONFIG_KEY, _config_vector(params.config))]
    entries += [(k, v.data) for k, v in params.named().items()]
    payload = struct.pack("<I", FORMAT_VERSION) + struct.pack("<I", len(entries))
    for name, arr in entries:
        payload += _pack_tensor(name, arr)
    with open(path, "wb") as fh:
        fh.write(MAGIC + payload + _checksum(payload))


def load_checkpoint(path) -> ModelParams:
    """Load a checkpoint as float32 inference parameters."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(MAGIC) + 16 or blob[: len(MAGIC)] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    payload, stored = blob[len(MAGIC) : -8], blob[-8:]
    if _checksum(payload) != stored:
        raise ChecksumError("checksum mismatch; file is corrupt or truncated")
    off = 0

    def take(fmt: str):
        nonlocal off
        size = struct.calcsize(fmt)
        vals = struct.unpack_from(fmt, payload, off)
        off += size
        return vals

    (version,) = take("<I")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(
            f"checkpoint format v{version} needs migration (this build reads v{FORMAT_VERSION})"
        )
    (count,) = take("<I")
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = take("<H")
        name = payload[off : off + name_len].decode("utf-8")
        off += name_len
        (rank,) = take("<B")
        shape = take(f"<{rank}I") if rank else ()
        n_items = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(payload, dtype="<f4", count=n_items, offset=off).reshape(shape)
        off += 4 * n_items
        tensors[name] = arr.copy()
    if off != len(payload):
        raise CheckpointError("trailing bytes after the last tensor")
    if _CONFIG_KEY not in tensors:
        raise CheckpointError("checkpoint lacks a config record")
    config = _config_from_vector(tensors.pop(_CONFIG_KEY))
    named = {k: Tensor(v, name=k) for k, v in tensors.items()}
    params = ModelParams(config, named)
    expected = set(ModelParams.init(config, seed=0).named())
    if set(named) != expected:
        raise CheckpointError("checkpoint tensor names do not match the architecture")
    return params
