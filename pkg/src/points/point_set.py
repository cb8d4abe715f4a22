from dataclasses import dataclass
from typing import Sequence

import numpy as np

from src.core import ops
from src.core.errors import ContractError, DimensionError
from src.core.tensor import Tensor
from src.core.volume import Volume


@dataclass
class PointSet:
    """
    A set of n points, each carrying a feature vector and a 3D position.

    Attributes:
        features (Tensor): Shape (d, n).
        coords (np.ndarray): Shape (3, n), every entry in [0, 1]. Linear layers
            never touch coordinates; only the reducer and expander rewrite them.
        grid_shape (tuple | None): (H, W, D) when the points enumerate a full
            lattice in C order, otherwise None.
    """
    features: Tensor
    coords: np.ndarray
    grid_shape: tuple | None = None

    def __post_init__(self):
        if self.features.ndim != 2:
            raise DimensionError(f"point features must be (d, n), got {self.features.shape}")
        if self.coords.shape != (3, self.features.shape[1]):
            raise DimensionError(
                f"coords of shape {self.coords.shape} do not match {self.features.shape[1]} points")
        if self.coords.size and (self.coords.min() < 0.0 or self.coords.max() > 1.0):
            raise ContractError("point coordinates must lie in [0, 1]")
        if self.grid_shape is not None:
            self.grid_shape = tuple(int(e) for e in self.grid_shape)
            if int(np.prod(self.grid_shape)) != self.n:
                raise ContractError(f"grid shape {self.grid_shape} does not hold {self.n} points")

    @property
    def n(self) -> int:
        """Number of points."""
        return self.features.shape[1]

    @property
    def width(self) -> int:
        """Feature dimension d."""
        return self.features.shape[0]

    def with_features(self, features: Tensor) -> "PointSet":
        """Returns a point set at the same positions with new features."""
        return PointSet(features, self.coords, self.grid_shape)


def lattice_coords(shape: Sequence[int]) -> np.ndarray:
    """
    Normalized voxel-lattice coordinates, index / (extent - 1) per axis.

    Single-extent axes map to 0.

    Returns:
        A (3, H*W*D) array in C order of the (H, W, D) lattice.
    """
    axes = [np.arange(e, dtype=np.float64) / (e - 1) if e > 1 else np.zeros(1) for e in shape]
    grid = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.reshape(-1) for g in grid])


def construct_from_channels(channels: Sequence[Tensor], grid_shape: tuple, embed_weight: Tensor,
                            embed_bias: Tensor) -> PointSet:
    """
    Builds a point set from one or more intensity channels on a lattice.

    Each point's raw vector is (channel values..., cx, cy, cz); it is then
    embedded to the base width by a linear projection.

    Args:
        channels: Tensors of shape (1, H*W*D) in lattice order.
        grid_shape: The (H, W, D) lattice.
        embed_weight: Shape (W0, C + 3).
        embed_bias: Shape (W0,).
    """
    n = int(np.prod(grid_shape))
    for ch in channels:
        if ch.shape != (1, n):
            raise DimensionError(f"channel of shape {ch.shape} does not match a lattice of {n} points")
    coords = lattice_coords(grid_shape)
    raw = ops.concat([*channels, Tensor(coords, copy=False)], axis=0)
    return PointSet(ops.linear_project(raw, embed_weight, embed_bias), coords, grid_shape)


def construct_points(volume: Volume, embed_weight: Tensor, embed_bias: Tensor) -> PointSet:
    """
    Converts a volume to points with explicit coordinates, then embeds them.

    Args:
        volume (Volume): A finite H x W x D volume.
        embed_weight (Tensor): Shape (W0, 4).
        embed_bias (Tensor): Shape (W0,).

    Returns:
        A PointSet of H*W*D points with grid_shape set.
    """
    if not volume.is_finite():
        raise ContractError("construct_points: volume contains non-finite voxels")
    intensity = Tensor(volume.flat().reshape(1, -1))
    return construct_from_channels([intensity], volume.shape, embed_weight, embed_bias)


def revert_points(points: PointSet, head_weight: Tensor, head_bias: Tensor) -> Volume:
    """
    Writes one scalar per point back onto the originating lattice.

    Args:
        points (PointSet): Points with grid_shape set.
        head_weight (Tensor): Shape (1, d).
        head_bias (Tensor): Shape (1,).

    Raises:
        ContractError: If the point set does not sit on a lattice.
    """
    values = revert_values(points, head_weight, head_bias)
    return Volume.from_array(values.data, shape=points.grid_shape)


def revert_values(points: PointSet, head_weight: Tensor, head_bias: Tensor) -> Tensor:
    """Differentiable part of ``revert_points``: the (1, n) head output in lattice order."""
    if points.grid_shape is None:
        raise ContractError("revert_points needs a point set with grid_shape")
    if head_weight.shape[0] != 1:
        raise DimensionError(f"reversion head must produce one channel, got weight {head_weight.shape}")
    return ops.linear_project(points.features, head_weight, head_bias)
