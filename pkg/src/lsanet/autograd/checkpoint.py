"""Binary tensor checkpoints.

Layout, little-endian throughout:
    b'LSAN' | version u32 | entry count u32 |
    per entry: name length u32 | utf-8 name | dtype tag u8 | rank u32 |
               extents u64 * rank | raw float payload
"""
import struct
from pathlib import Path
from typing import Mapping

import numpy as np

from lsanet.errors import CheckpointError
from lsanet.settings import CHECKPOINT_MAGIC, CHECKPOINT_VERSION


DTYPE_TAGS = {1: np.dtype('<f4'), 2: np.dtype('<f8')}
TAG_OF_KIND = {np.dtype('float32'): 1, np.dtype('float64'): 2}


def save_checkpoint(path: Path, arrays: Mapping[str, np.ndarray]) -> None:
    """Write named arrays in insertion order"""
    chunks = [CHECKPOINT_MAGIC, struct.pack('<II', CHECKPOINT_VERSION, len(arrays))]
    for name, array in arrays.items():
        array = np.asarray(array)
        tag = TAG_OF_KIND.get(array.dtype)
        if tag is None:
            raise CheckpointError(f'{name}: unsupported dtype {array.dtype}')
        encoded = name.encode('utf-8')
        chunks.append(struct.pack('<I', len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack('<BI', tag, array.ndim))
        chunks.append(struct.pack(f'<{array.ndim}Q', *array.shape))
        chunks.append(np.ascontiguousarray(array, dtype=DTYPE_TAGS[tag]).tobytes())

    path = Path(path)
    tmp_path = path.with_suffix(path.suffix + '.tmp')
    tmp_path.write_bytes(b''.join(chunks))
    tmp_path.replace(path)


def load_checkpoint(path: Path) -> dict[str, np.ndarray]:
    """Read every entry back, in file order, with its stored precision"""
    buffer = Path(path).read_bytes()
    if buffer[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError(f'{path}: not an LSAN checkpoint')
    try:
        version, count = struct.unpack_from('<II', buffer, 4)
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(f'{path}: unsupported format version {version}')
        offset = 12
        arrays: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack_from('<I', buffer, offset)
            offset += 4
            name = buffer[offset:offset + name_len].decode('utf-8')
            offset += name_len
            tag, rank = struct.unpack_from('<BI', buffer, offset)
            offset += 5
            shape = struct.unpack_from(f'<{rank}Q', buffer, offset)
            offset += 8 * rank
            dtype = DTYPE_TAGS.get(tag)
            if dtype is None:
                raise CheckpointError(f'{path}: entry {name!r} has unknown dtype tag {tag}')
            n_bytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
            if offset + n_bytes > len(buffer):
                raise CheckpointError(f'{path}: entry {name!r} is truncated')
            payload = np.frombuffer(buffer, dtype=dtype, count=n_bytes // dtype.itemsize, offset=offset)
            arrays[name] = payload.reshape(shape).astype(dtype.newbyteorder('='))
            offset += n_bytes
    except struct.error as exc:
        raise CheckpointError(f'{path}: truncated header ({exc})') from exc
    return arrays
