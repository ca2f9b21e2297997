"""Binary checkpoint serialization.

Layout (all integers little-endian):

    magic            8 bytes  b"AECKCKPT"
    format_version   uint32
    config_len       uint32
    config           config_len bytes of canonical key-sorted JSON
                     ({"model": {...}, "stft": {...}})
    adam_step        uint64
    n_arrays         uint32
    per array:       name_len uint16, name utf-8, ndim uint8,
                     ndim x uint32 dims, float32 data
    crc32            uint32 over everything above

Arrays are written in sorted name order: "param.<name>", then
"adam_m.<name>" / "adam_v.<name>" for the optimizer moments. The parameter
name set itself is fixed by the configuration (see network.param_shapes).
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import asdict

import numpy as np

from ..dsp import StftConfig
from ..errors import ChecksumMismatchError, InvalidConfigError, VersionMismatchError
from .network import AdamState, Checkpoint, ModelConfig, param_shapes

MAGIC = b"AECKCKPT"
FORMAT_VERSION = 1


def _config_blob(ckpt: Checkpoint) -> bytes:
    doc = {"model": ckpt.config.to_dict(), "stft": asdict(ckpt.stft_config)}
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _pack_array(name: str, arr: np.ndarray) -> bytes:
    data = np.ascontiguousarray(arr, dtype="<f4")
    name_b = name.encode("utf-8")
    head = struct.pack("<H", len(name_b)) + name_b + struct.pack("<B", data.ndim)
    head += struct.pack(f"<{data.ndim}I", *data.shape)
    return head + data.tobytes()


def checkpoint_bytes(ckpt: Checkpoint) -> bytes:
    named = {f"param.{k}": v for k, v in ckpt.params.items()}
    named.update({f"adam_m.{k}": v for k, v in ckpt.adam.m.items()})
    named.update({f"adam_v.{k}": v for k, v in ckpt.adam.v.items()})
    for name, arr in named.items():
        if not np.all(np.isfinite(arr)):
            raise InvalidConfigError(f"cannot save non-finite values in {name}")
    blob = _config_blob(ckpt)
    body = bytearray()
    body += MAGIC
    body += struct.pack("<I", ckpt.format_version)
    body += struct.pack("<I", len(blob)) + blob
    body += struct.pack("<Q", ckpt.adam.step)
    body += struct.pack("<I", len(named))
    for name in sorted(named):
        body += _pack_array(name, named[name])
    body += struct.pack("<I", zlib.crc32(bytes(body)))
    return bytes(body)


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    data = checkpoint_bytes(ckpt)
    with open(path, "wb") as fh:
        fh.write(data)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ChecksumMismatchError("checkpoint file is truncated")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]


def checkpoint_from_bytes(data: bytes) -> Checkpoint:
    if len(data) < len(MAGIC) + 8:
        raise ChecksumMismatchError("checkpoint file is truncated")
    stored_crc = struct.unpack("<I", data[-4:])[0]
    if zlib.crc32(data[:-4]) != stored_crc:
        raise ChecksumMismatchError("checkpoint CRC32 mismatch")
    rd = _Reader(data[:-4])
    if rd.take(len(MAGIC)) != MAGIC:
        raise ChecksumMismatchError("bad checkpoint magic bytes")
    version = rd.u32()
    if version > FORMAT_VERSION:
        raise VersionMismatchError(
            f"checkpoint format {version} is newer than supported {FORMAT_VERSION}")
    blob = rd.take(rd.u32())
    doc = json.loads(blob.decode("utf-8"))
    config = ModelConfig.from_dict(doc["model"])
    stft = StftConfig(**doc["stft"])
    step = rd.u64()
    n_arrays = rd.u32()
    named = {}
    for _ in range(n_arrays):
        name = rd.take(rd.u16()).decode("utf-8")
        ndim = rd.take(1)[0]
        shape = struct.unpack(f"<{ndim}I", rd.take(4 * ndim))
        count = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(rd.take(4 * count), dtype="<f4").reshape(shape)
        named[name] = arr.astype(np.float32)
    params = {k[len("param."):]: v for k, v in named.items() if k.startswith("param.")}
    adam_m = {k[len("adam_m."):]: v for k, v in named.items() if k.startswith("adam_m.")}
    adam_v = {k[len("adam_v."):]: v for k, v in named.items() if k.startswith("adam_v.")}
    shapes = param_shapes(config)
    expected = set(shapes)
    if set(params) != expected or set(adam_m) != expected or set(adam_v) != expected:
        raise InvalidConfigError("checkpoint arrays do not match its configuration")
    # restore canonical parameter order regardless of on-disk array order
    params = {k: params[k] for k in shapes}
    adam_m = {k: adam_m[k] for k in shapes}
    adam_v = {k: adam_v[k] for k in shapes}
    return Checkpoint(config=config, stft_config=stft, params=params,
                      adam=AdamState(m=adam_m, v=adam_v, step=step),
                      format_version=version)


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        data = fh.read()
    return checkpoint_from_bytes(data)
