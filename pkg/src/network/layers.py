"""Point-set resampling layers and the pointwise feed-forward branch."""
import numpy as np

from src.core import ops
from src.core.errors import ContractError, DimensionError
from src.core.tensor import Tensor
from src.network.params import FeedForwardParams
from src.points.anchors import anchor_grid
from src.points.knn import cached_knn_indices
from src.points.point_set import PointSet

OCTANTS = 8


def points_reducer(points: PointSet, per_axis: int, k: int, weight: Tensor, bias: Tensor) -> PointSet:
    """
    Replaces the points by A^3 anchors, each fusing its k nearest input points.

    The k neighbor features are concatenated along the channel axis (nearest
    first) and fused by one linear projection.

    Args:
        points (PointSet): Input points, width d_in.
        per_axis (int): Anchors per axis, A.
        k (int): Neighbors per anchor.
        weight (Tensor): Shape (d_out, k * d_in).
        bias (Tensor): Shape (d_out,).

    Returns:
        A PointSet of A^3 points on the anchor lattice with grid_shape (A, A, A).
    """
    anchors = anchor_grid(points, per_axis)
    neighbors = cached_knn_indices(points.coords, anchors, k)
    stacked = ops.concat([ops.gather(points.features, neighbors[:, j]) for j in range(k)], axis=0)
    fused = ops.linear_project(stacked, weight, bias)
    return PointSet(fused, anchors, (per_axis, per_axis, per_axis))


def cell_center_coords(shape: tuple) -> np.ndarray:
    """(i + 0.5) / extent per axis for every cell of a lattice, as a (3, n) array in C order."""
    axes = [(np.arange(e, dtype=np.float64) + 0.5) / e for e in shape]
    grid = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.reshape(-1) for g in grid])


def octant_order(parent_shape: tuple) -> np.ndarray:
    """
    Source column for every child of a lattice refined by two per axis.

    Children are produced octant-major (column o * n + parent); this returns,
    for each child in C order of the refined lattice, its column.
    """
    h, w, d = parent_shape
    x, y, z = np.meshgrid(np.arange(2 * h), np.arange(2 * w), np.arange(2 * d), indexing="ij")
    parent = ((x // 2) * w + (y // 2)) * d + (z // 2)
    octant = ((x % 2) * 2 + (y % 2)) * 2 + (z % 2)
    return (octant * (h * w * d) + parent).reshape(-1)


def points_expander(points: PointSet, k: int, weight: Tensor, bias: Tensor) -> PointSet:
    """
    Turns every point into k = 8 children placed at the octant centers of its cell.

    A linear projection widens each point to k * d_out channels, which are cut
    into k slices of d_out channels, one per child.

    Args:
        points (PointSet): Input points on a lattice (grid_shape set).
        k (int): Children per point; must be 8.
        weight (Tensor): Shape (k * d_out, d_in).
        bias (Tensor): Shape (k * d_out,).

    Returns:
        A PointSet of 8n points with grid_shape doubled per axis.
    """
    if k != OCTANTS:
        raise ContractError(f"points_expander places one child per octant; k must be 8, got {k}")
    if points.grid_shape is None:
        raise ContractError("points_expander needs a point set with grid_shape")
    if weight.shape[0] % k:
        raise DimensionError(f"expander weight of {weight.shape[0]} rows does not split into {k} children")
    d_out = weight.shape[0] // k
    projected = ops.linear_project(points.features, weight, bias)
    children = ops.concat(ops.split(projected, [d_out] * k, axis=0), axis=1)
    child_shape = tuple(2 * e for e in points.grid_shape)
    features = ops.gather(children, octant_order(points.grid_shape))
    return PointSet(features, cell_center_coords(child_shape), child_shape)


def feed_forward(points: PointSet, params: FeedForwardParams) -> PointSet:
    """x + W2 silu(W1 x + b1) + b2, where silu(h) = h * sigmoid(h)."""
    hidden = ops.linear_project(points.features, params.w1, params.b1)
    gated = ops.mul(hidden, ops.sigmoid(hidden))
    return points.with_features(ops.add(points.features, ops.linear_project(gated, params.w2, params.b2)))
