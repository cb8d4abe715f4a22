import numpy as np

from src.core.errors import ContractError, TooManyAnchorsError


def cell_center_lattice(per_axis: int) -> np.ndarray:
    """
    Cell centers (i + 0.5) / A of an even A x A x A lattice over [0, 1]^3.

    Returns:
        A (3, A^3) array in C order.
    """
    axis = (np.arange(per_axis, dtype=np.float64) + 0.5) / per_axis
    grid = np.meshgrid(axis, axis, axis, indexing="ij")
    return np.stack([g.reshape(-1) for g in grid])


def anchor_grid(points, per_axis: int) -> np.ndarray:
    """
    Evenly places A anchors per axis over the point space.

    The result depends only on A and on the point count (for the bound check),
    never on point features.

    Args:
        points (PointSet): The point set being reduced.
        per_axis (int): Anchors per spatial axis, A.

    Returns:
        A (3, A^3) array of anchor coordinates.

    Raises:
        TooManyAnchorsError: If A^3 exceeds the number of points.
    """
    if points.n == 0:
        raise ContractError("anchor_grid: empty point set")
    if per_axis < 1:
        raise ContractError(f"anchor_grid: anchors per axis must be positive, got {per_axis}")
    if per_axis ** 3 > points.n:
        raise TooManyAnchorsError(f"{per_axis}^3 anchors requested for {points.n} points")
    return cell_center_lattice(per_axis)
