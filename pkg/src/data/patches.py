from dataclasses import dataclass

import numpy as np

from src.core.errors import ContractError
from src.core.volume import Volume


@dataclass(frozen=True)
class PatchGrid:
    """
    Placement of cubic patches inside a volume.

    Attributes:
        volume_shape (tuple): Extents of the source volume.
        patch_side (int): Patch edge length.
        stride (int): Step between neighboring origins on every axis.
        origins (tuple): (h, w, d) corner of every patch, in C order over the origin lattice.
    """
    volume_shape: tuple
    patch_side: int
    stride: int
    origins: tuple

    def __len__(self) -> int:
        return len(self.origins)

    def region(self, origin: tuple) -> tuple:
        return tuple(slice(o, o + self.patch_side) for o in origin)


def _divisors(n: int) -> list[int]:
    return [s for s in range(1, n + 1) if n % s == 0]


def _axis_origins(extent: int, patch_side: int, stride: int) -> list[int]:
    span = extent - patch_side
    if span == 0:
        return [0]
    if span % stride:
        raise ContractError(
            f"stride {stride} does not tile extent {extent} with patch {patch_side}; "
            f"admissible strides: {_divisors(span)}")
    return list(range(0, span + 1, stride))


def make_patch_grid(volume_shape: tuple, patch_side: int, stride: int) -> PatchGrid:
    """
    Origins at every multiple of ``stride`` per axis, up to and including the last aligned position.

    Raises:
        ContractError: If the patch does not fit or (extent - patch_side) is
            not divisible by ``stride``; the message lists admissible strides.
    """
    if patch_side < 1 or stride < 1:
        raise ContractError("patch_side and stride must be positive")
    if any(patch_side > e for e in volume_shape):
        raise ContractError(f"patch side {patch_side} exceeds volume shape {tuple(volume_shape)}")
    per_axis = [_axis_origins(e, patch_side, stride) for e in volume_shape]
    origins = tuple((h, w, d) for h in per_axis[0] for w in per_axis[1] for d in per_axis[2])
    return PatchGrid(tuple(volume_shape), patch_side, stride, origins)


def extract_patches(volume: Volume, patch_side: int, stride: int) -> tuple[PatchGrid, list[Volume]]:
    """Cuts overlapping cubic patches out of a volume."""
    grid = make_patch_grid(volume.shape, patch_side, stride)
    return grid, [Volume.from_array(volume.voxels[grid.region(origin)]) for origin in grid.origins]


def assemble_patches(grid: PatchGrid, patches: list[Volume]) -> Volume:
    """
    Recomposes a volume, each voxel the mean of all patches covering it.

    The mean is accumulated incrementally, so voxels covered only by equal
    values come back bit-exact.

    Raises:
        ContractError: If the patch list does not match the grid.
    """
    if len(patches) != len(grid):
        raise ContractError(f"{len(patches)} patches given for a grid of {len(grid)}")
    expected = (grid.patch_side,) * 3
    mean = np.zeros(grid.volume_shape, dtype=np.float64)
    count = np.zeros(grid.volume_shape, dtype=np.int64)
    for origin, patch in zip(grid.origins, patches):
        if patch.shape != expected:
            raise ContractError(f"patch of shape {patch.shape} does not match patch side {grid.patch_side}")
        region = grid.region(origin)
        count[region] += 1
        mean[region] += (patch.voxels - mean[region]) / count[region]
    if np.any(count == 0):
        raise ContractError("patch grid does not cover the volume")
    return Volume.from_array(mean)
