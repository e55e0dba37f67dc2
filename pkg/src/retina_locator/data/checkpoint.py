"""
Retina Locator - Checkpoint files
Copyright (c) 2025 Retina Locator Team
Licensed under MIT License - see LICENSE file for details

Layout (little-endian): magic ``FRL1``, uint32 entry count, then per entry
uint32 name length, UTF-8 name, uint32 rank, rank x uint32 dims and the
float32 payload in row-major order.
"""

import logging
import os
import struct
from pathlib import Path
from typing import Dict, Mapping, Union

import numpy as np

from ..autodiff.nn import Module
from ..autodiff.optim import ParamStore
from ..autodiff.tensor import Tensor
from ..exceptions import DataError, FormatError

logger = logging.getLogger(__name__)

MAGIC = b'FRL1'
_U32 = struct.Struct('<I')
_PAYLOAD = np.dtype('<f4')

PathLike = Union[str, Path]
Arrays = Mapping[str, np.ndarray]


def encode_checkpoint(arrays: Arrays) -> bytes:
    """Serialize named arrays in the given order."""
    parts = [MAGIC, _U32.pack(len(arrays))]
    for name, value in arrays.items():
        data = np.asarray(value)
        encoded = name.encode('utf-8')
        parts.append(_U32.pack(len(encoded)))
        parts.append(encoded)
        parts.append(_U32.pack(data.ndim))
        parts.extend(_U32.pack(d) for d in data.shape)
        parts.append(np.ascontiguousarray(data, dtype=_PAYLOAD).tobytes())
    return b''.join(parts)


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.offset = 0

    def take(self, n: int, what: str) -> bytes:
        if self.offset + n > len(self.blob):
            raise FormatError(f"Checkpoint truncated while reading {what}: need {n} bytes, "
                              f"{len(self.blob) - self.offset} left", self.offset)
        chunk = self.blob[self.offset:self.offset + n]
        self.offset += n
        return chunk

    def u32(self, what: str) -> int:
        return _U32.unpack(self.take(4, what))[0]


def decode_checkpoint(blob: bytes) -> Dict[str, np.ndarray]:
    """Parse a checkpoint blob into float32 arrays.

    Raises:
        FormatError: bad magic, truncation, bad names or trailing bytes, with the byte offset
    """
    reader = _Reader(blob)
    magic = reader.take(4, 'magic')
    if magic != MAGIC:
        raise FormatError(f"Bad checkpoint magic {magic!r}, expected {MAGIC!r}", 0)
    count = reader.u32('entry count')
    arrays: Dict[str, np.ndarray] = {}
    for _ in range(count):
        start = reader.offset
        name_bytes = reader.take(reader.u32('name length'), 'name')
        try:
            name = name_bytes.decode('utf-8')
        except UnicodeDecodeError:
            raise FormatError("Checkpoint entry name is not UTF-8", start + 4)
        if name in arrays:
            raise FormatError(f"Duplicate checkpoint entry '{name}'", start)
        rank = reader.u32(f"rank of '{name}'")
        shape = tuple(reader.u32(f"dims of '{name}'") for _ in range(rank))
        size = int(np.prod(shape, dtype=np.int64)) if shape else 1
        payload = reader.take(size * _PAYLOAD.itemsize, f"data of '{name}'")
        arrays[name] = np.frombuffer(payload, dtype=_PAYLOAD).reshape(shape).astype(np.float32)
    if reader.offset != len(blob):
        raise FormatError(f"{len(blob) - reader.offset} trailing bytes after the last entry", reader.offset)
    return arrays


def save_checkpoint(store: Union[ParamStore, Arrays], path: PathLike) -> Path:
    """Write a ParamStore (or a name -> array mapping) as a checkpoint file."""
    if isinstance(store, ParamStore):
        arrays = {name: p.data for name, p in store.params.items()}
    else:
        arrays = dict(store)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + '.tmp')
    tmp.write_bytes(encode_checkpoint(arrays))
    os.replace(tmp, path)
    logger.info(f"Saved {len(arrays)} tensors to {path}")
    return path


def read_checkpoint(path: PathLike) -> Dict[str, np.ndarray]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"Checkpoint not found: {path}")
    return decode_checkpoint(path.read_bytes())


def load_checkpoint(path: PathLike) -> ParamStore:
    """Read a checkpoint into a ParamStore of float32 tensors.

    Raises:
        DataError: the file does not exist
        FormatError: the file is malformed; nothing is returned
    """
    arrays = read_checkpoint(path)
    return ParamStore((name, Tensor(value, requires_grad=True, dtype=np.float32)) for name, value in arrays.items())


def module_arrays(sections: Mapping[str, Module]) -> Dict[str, np.ndarray]:
    """Parameters and buffers of every module under its checkpoint prefix."""
    arrays: Dict[str, np.ndarray] = {}
    for prefix, module in sections.items():
        arrays.update(module.state_dict(prefix))
    return arrays


def save_modules(sections: Mapping[str, Module], path: PathLike) -> Path:
    return save_checkpoint(module_arrays(sections), path)


def load_modules(sections: Mapping[str, Module], path: PathLike) -> Dict[str, np.ndarray]:
    """Load every section's entries in place; returns the raw arrays."""
    arrays = read_checkpoint(path)
    for prefix, module in sections.items():
        module.load_state_dict(arrays, prefix)
    return arrays
