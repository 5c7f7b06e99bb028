import struct
from collections import OrderedDict
from typing import Dict

import numpy as np

from utils.errors import DataError

MAGIC = b"RLW1"
VERSION = 1


def write_container(path: str, tensors: Dict[str, np.ndarray]) -> None:
    """
    Write named arrays as an RLW1 container.

    Layout (little-endian): magic, version u32, count u32, then per tensor
    name length u16, UTF-8 name, rank u8, extents u32 each, f32 row-major payload.

    Args:
        path: Output file
        tensors: Name -> array, written in iteration order
    """
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(tensors)))
        for name, array in tensors.items():
            encoded = name.encode("utf-8")
            array = np.ascontiguousarray(array, dtype="<f4")
            f.write(struct.pack("<H", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<B", array.ndim))
            f.write(struct.pack(f"<{array.ndim}I", *array.shape))
            f.write(array.tobytes(order="C"))


def read_container(path: str) -> "OrderedDict[str, np.ndarray]":
    """
    Read an RLW1 container.

    Args:
        path: Input file

    Returns:
        Name -> float32 array, in file order
    """
    try:
        with open(path, "rb") as f:
            blob = f.read()
    except OSError as e:
        raise DataError(f"cannot read weights {path}: {e}")

    if blob[:4] != MAGIC:
        raise DataError(f"{path} is not an RLW1 weight file")
    try:
        version, count = struct.unpack_from("<II", blob, 4)
        if version != VERSION:
            raise DataError(f"{path}: unsupported weight file version {version}")
        offset = 12
        tensors: "OrderedDict[str, np.ndarray]" = OrderedDict()
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", blob, offset)
            offset += 2
            name = blob[offset:offset + name_len].decode("utf-8")
            offset += name_len
            (rank,) = struct.unpack_from("<B", blob, offset)
            offset += 1
            shape = struct.unpack_from(f"<{rank}I", blob, offset)
            offset += 4 * rank
            size = int(np.prod(shape)) if rank else 1
            payload = np.frombuffer(blob, dtype="<f4", count=size, offset=offset)
            offset += 4 * size
            tensors[name] = payload.reshape(shape).astype(np.float32)
    except (struct.error, ValueError, UnicodeDecodeError) as e:
        raise DataError(f"{path}: truncated or corrupt weight file ({e})")
    if offset != len(blob):
        raise DataError(f"{path}: {len(blob) - offset} trailing bytes after {count} tensors")
    return tensors
