"""
PCCCKPT v1 checkpoint files.

Layout::

    PCCCKPT v1\\n
    <count>\\n
    <name>\\t<extent> <extent> ...\\n      (count lines, manifest order)
    <float64 little-endian payload, tensors concatenated in manifest order>
"""
import logging
import os

import numpy as np

from src.core.errors import FileFormatError
from src.core.tensor import Tensor
from src.network.params import ModelParams

logger = logging.getLogger(__name__)

MAGIC = b"PCCCKPT v1\n"


def write_checkpoint(path: str, params: ModelParams):
    """Writes every named tensor of ``params`` to ``path``."""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    lines = [MAGIC, f"{len(params)}\n".encode("ascii")]
    for name, tensor in params.items():
        if any(ch.isspace() for ch in name):
            raise FileFormatError(f"parameter name '{name}' contains whitespace")
        extents = " ".join(str(e) for e in tensor.shape)
        lines.append(f"{name}\t{extents}\n".encode("ascii"))
    with open(path, "wb") as f:
        for line in lines:
            f.write(line)
        for _, tensor in params.items():
            f.write(np.ascontiguousarray(tensor.data, dtype="<f8").tobytes())
    logger.info("Checkpoint with %d tensors saved to %s", len(params), path)


def _read_line(blob: bytes, offset: int) -> tuple[str, int]:
    end = blob.find(b"\n", offset)
    if end < 0:
        raise FileFormatError("unterminated manifest line", offset)
    try:
        return blob[offset:end].decode("ascii"), end + 1
    except UnicodeDecodeError:
        raise FileFormatError("manifest line is not ASCII", offset) from None


def read_checkpoint(path: str) -> ModelParams:
    """
    Loads a checkpoint written by ``write_checkpoint``.

    Raises:
        FileFormatError: On a wrong magic line, a malformed manifest or a
            truncated payload; the message names the byte offset.
    """
    with open(path, "rb") as f:
        blob = f.read()
    if not blob.startswith(MAGIC):
        raise FileFormatError(f"{path}: not a PCCCKPT v1 file", 0)
    offset = len(MAGIC)
    line, next_offset = _read_line(blob, offset)
    if not line.isdigit():
        raise FileFormatError(f"{path}: bad tensor count '{line}'", offset)
    count, offset = int(line), next_offset

    manifest = []
    for _ in range(count):
        line, next_offset = _read_line(blob, offset)
        name, sep, extents = line.partition("\t")
        if not sep or not name:
            raise FileFormatError(f"{path}: bad manifest entry '{line}'", offset)
        try:
            shape = tuple(int(e) for e in extents.split())
        except ValueError:
            raise FileFormatError(f"{path}: bad shape for '{name}'", offset) from None
        if any(e <= 0 for e in shape):
            raise FileFormatError(f"{path}: nonpositive extent for '{name}'", offset)
        manifest.append((name, shape))
        offset = next_offset

    tensors = {}
    for name, shape in manifest:
        nbytes = 8 * int(np.prod(shape, dtype=np.int64))
        if offset + nbytes > len(blob):
            raise FileFormatError(f"{path}: payload truncated in '{name}'", len(blob))
        values = np.frombuffer(blob, dtype="<f8", count=nbytes // 8, offset=offset).reshape(shape)
        tensors[name] = Tensor(values.astype(np.float64), requires_grad=True)
        offset += nbytes
    if offset != len(blob):
        raise FileFormatError(f"{path}: {len(blob) - offset} trailing bytes", offset)
    return ModelParams(tensors)
