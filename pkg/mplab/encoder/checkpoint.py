import os
import struct

import msgspec
import numpy as np

from mplab.config.validations import EncoderConfig
from mplab.constants import CHECKPOINT_MAGIC, CHECKPOINT_VERSION
from mplab.encoder.params import ParameterSet
from mplab.errors import FormatError, MissingInputError

# magic, version, length of the JSON EncoderConfig
_HEADER = struct.Struct("<4sII")
_U32 = struct.Struct("<I")


def encode_checkpoint(cfg, params):
    """
    Serialise a checkpoint. Layout (little-endian): magic ``MPLC``, uint32 version,
    uint32 config length, JSON EncoderConfig, uint32 entry count, then per entry a
    uint32-prefixed UTF-8 name, uint32 ndim, ndim uint32 dims and row-major float64 data.
    """
    cfg_bytes = msgspec.json.encode(cfg)
    parts = [_HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, len(cfg_bytes)), cfg_bytes, _U32.pack(len(params))]
    for name, values in params.items():
        raw = name.encode()
        parts.append(_U32.pack(len(raw)) + raw)
        parts.append(struct.pack(f"<I{values.ndim}I", values.ndim, *values.shape))
        parts.append(np.ascontiguousarray(values, dtype="<f8").tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, buf, path):
        self.buf, self.path, self.offset = buf, path, 0

    def take(self, n):
        if self.offset + n > len(self.buf):
            raise FormatError(f"{self.path}: truncated checkpoint at byte {self.offset}")
        chunk = self.buf[self.offset : self.offset + n]
        self.offset += n
        return chunk

    def u32(self):
        return _U32.unpack(self.take(4))[0]


def decode_checkpoint(buf, path="<bytes>"):
    reader = _Reader(buf, path)
    magic, version, cfg_len = _HEADER.unpack(reader.take(_HEADER.size))
    if magic != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: not a checkpoint (magic {magic!r})")
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    try:
        cfg = msgspec.json.decode(reader.take(cfg_len), type=EncoderConfig)
    except msgspec.DecodeError as e:
        raise FormatError(f"{path}: bad encoder config: {e}") from e
    entries = []
    for _ in range(reader.u32()):
        name = reader.take(reader.u32()).decode()
        shape = tuple(reader.u32() for _ in range(reader.u32()))
        count = int(np.prod(shape, dtype=np.int64))
        values = np.frombuffer(reader.take(8 * count), dtype="<f8").reshape(shape)
        entries.append((name, values))
    if reader.offset != len(buf):
        raise FormatError(f"{path}: {len(buf) - reader.offset} trailing bytes")
    return cfg, ParameterSet(entries)


def save_checkpoint(path, cfg, params):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "wb") as f:
        f.write(encode_checkpoint(cfg, params))


def load_checkpoint(path):
    if not os.path.isfile(path):
        raise MissingInputError(path, "checkpoint")
    with open(path, "rb") as f:
        return decode_checkpoint(f.read(), path)
