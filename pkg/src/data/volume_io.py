"""
PCCVOL v1 volume files.

One ASCII header line ``PCCVOL v1 <H> <W> <D>\\n`` followed by H*W*D
little-endian float32 values in lattice (C) order. Values are narrowed to
float32 on write and widened back to float64 on read.
"""
import logging
import os

import numpy as np

from src.core.errors import FileFormatError
from src.core.volume import Volume

logger = logging.getLogger(__name__)

MAGIC = "PCCVOL v1"
MAX_VOXELS = 2 ** 31


def volume_header(shape: tuple) -> bytes:
    h, w, d = shape
    return f"{MAGIC} {h} {w} {d}\n".encode("ascii")


def write_volume(path: str, volume: Volume):
    """Writes ``volume`` to ``path`` in PCCVOL v1 format."""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "wb") as f:
        f.write(volume_header(volume.shape))
        f.write(volume.flat().astype("<f4").tobytes())
    logger.debug("Wrote volume %s to %s", volume.shape, path)


def read_volume(path: str) -> Volume:
    """
    Reads a PCCVOL v1 file.

    Raises:
        FileFormatError: For a malformed header, an oversized shape or a
            truncated payload; the message names the byte offset.
    """
    with open(path, "rb") as f:
        blob = f.read()
    end = blob.find(b"\n", 0, 128)
    if end < 0:
        raise FileFormatError(f"{path}: missing PCCVOL header line", 0)
    try:
        fields = blob[:end].decode("ascii").split(" ")
    except UnicodeDecodeError:
        raise FileFormatError(f"{path}: header is not ASCII", 0) from None
    if len(fields) != 5 or " ".join(fields[:2]) != MAGIC:
        raise FileFormatError(f"{path}: not a PCCVOL v1 file", 0)
    try:
        shape = tuple(int(e) for e in fields[2:])
    except ValueError:
        raise FileFormatError(f"{path}: bad extents in header", len(MAGIC) + 1) from None
    if any(e <= 0 for e in shape):
        raise FileFormatError(f"{path}: extents must be positive, got {shape}", len(MAGIC) + 1)
    count = shape[0] * shape[1] * shape[2]
    if count > MAX_VOXELS:
        raise FileFormatError(f"{path}: shape {shape} exceeds {MAX_VOXELS} voxels", len(MAGIC) + 1)

    payload_start = end + 1
    expected = payload_start + 4 * count
    if len(blob) < expected:
        raise FileFormatError(f"{path}: payload truncated, expected {4 * count} bytes", len(blob))
    if len(blob) > expected:
        raise FileFormatError(f"{path}: {len(blob) - expected} trailing bytes after payload", expected)
    values = np.frombuffer(blob, dtype="<f4", count=count, offset=payload_start)
    return Volume.from_array(values.astype(np.float64), shape=shape)
