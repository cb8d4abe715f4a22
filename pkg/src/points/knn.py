"""
Exact k-nearest-neighbor search over points in the unit cube.

A uniform grid spatial hash limits each query to the cells around it; rings
of cells are added until no unvisited point can beat the current k-th
neighbor. Ties are broken by ascending point index, so the result is
identical to an exhaustive search.
"""
import math
from functools import lru_cache

import numpy as np

from src.core.errors import ContractError


def squared_distances(coords: np.ndarray, query: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances from one query (3,) to the columns of coords (3, m)."""
    return ((coords - query[:, None]) ** 2).sum(axis=0)


def _nearest(indices: np.ndarray, d2: np.ndarray, k: int) -> np.ndarray:
    order = np.lexsort((indices, d2))
    return indices[order[:k]]


class SpatialHash:
    """
    Uniform grid over [0, 1]^3 mapping each cell to the points inside it.

    Attributes:
        coords (np.ndarray): The (3, n) indexed points.
        grid_size (int): Cells per axis, G.
        cell_size (float): Cell edge length, 1 / G.
    """
    def __init__(self, coords: np.ndarray, points_per_cell: int = 8):
        self.coords = coords
        n = coords.shape[1]
        self.grid_size = max(1, int(round((n / max(points_per_cell, 1)) ** (1.0 / 3.0))))
        self.cell_size = 1.0 / self.grid_size

        spaces = self.point_to_space(coords)
        keys = self.space_to_hash(spaces)
        # stable sort keeps point indices ascending inside every cell
        self._order = np.argsort(keys, kind="stable")
        sorted_keys = keys[self._order]
        all_keys = np.arange(self.grid_size ** 3)
        self._starts = np.searchsorted(sorted_keys, all_keys, side="left")
        self._ends = np.searchsorted(sorted_keys, all_keys, side="right")

    def point_to_space(self, points: np.ndarray) -> np.ndarray:
        """Cell index per axis for each column of a (3, m) array."""
        return np.minimum((points * self.grid_size).astype(np.intp), self.grid_size - 1)

    def space_to_hash(self, spaces: np.ndarray) -> np.ndarray:
        g = self.grid_size
        return (spaces[0] * g + spaces[1]) * g + spaces[2]

    def ring(self, space: np.ndarray, radius: int) -> np.ndarray:
        """Point indices in the cells at Chebyshev distance exactly ``radius`` from ``space``."""
        ranges = [np.arange(max(0, s - radius), min(self.grid_size, s + radius + 1)) for s in space]
        s0, s1, s2 = np.meshgrid(*ranges, indexing="ij")
        spaces = np.stack([s0.reshape(-1), s1.reshape(-1), s2.reshape(-1)])
        offset = np.abs(spaces - space[:, None]).max(axis=0)
        keys = self.space_to_hash(spaces[:, offset == radius])
        chunks = [self._order[self._starts[key]:self._ends[key]] for key in keys]
        return np.concatenate(chunks) if chunks else np.empty(0, dtype=np.intp)

    def query(self, query: np.ndarray, k: int) -> np.ndarray:
        """
        Indices of the k points nearest to ``query``, closest first.

        Raises:
            ContractError: If k exceeds the number of indexed points.
        """
        n = self.coords.shape[1]
        if not 1 <= k <= n:
            raise ContractError(f"knn: k = {k} must lie in [1, {n}]")
        space = self.point_to_space(query[:, None])[:, 0]
        found = []
        total = 0
        radius = 0
        while True:
            chunk = self.ring(space, radius)
            if chunk.size:
                found.append(chunk)
                total += chunk.size
            if radius >= self.grid_size - 1:
                break
            if total >= k:
                candidates = np.concatenate(found)
                d2 = squared_distances(self.coords[:, candidates], query)
                kth = np.partition(d2, k - 1)[k - 1]
                # points outside the visited rings are at least radius * cell_size away
                bound = radius * self.cell_size
                if kth < bound * bound * (1.0 - 1e-9):
                    break
            radius += 1
        candidates = np.concatenate(found)
        d2 = squared_distances(self.coords[:, candidates], query)
        return _nearest(candidates, d2, k)


def knn_indices(coords: np.ndarray, queries: np.ndarray, k: int) -> np.ndarray:
    """
    Exact k nearest neighbors for every query.

    Args:
        coords (np.ndarray): (3, n) point coordinates in [0, 1].
        queries (np.ndarray): (3, q) query coordinates in [0, 1].
        k (int): Neighbors per query.

    Returns:
        A (q, k) integer array; row j lists point indices by nondecreasing
        distance to query j, ties by ascending index.

    Raises:
        ContractError: If k > n or k < 1.
    """
    n = coords.shape[1]
    if not 1 <= k <= n:
        raise ContractError(f"knn: k = {k} must lie in [1, {n}]")
    index = SpatialHash(coords, points_per_cell=k)
    out = np.empty((queries.shape[1], k), dtype=np.intp)
    for j in range(queries.shape[1]):
        out[j] = index.query(queries[:, j], k)
    return out


def brute_force_knn(coords: np.ndarray, queries: np.ndarray, k: int) -> np.ndarray:
    """Exhaustive O(n * q) reference for ``knn_indices``."""
    n = coords.shape[1]
    if not 1 <= k <= n:
        raise ContractError(f"knn: k = {k} must lie in [1, {n}]")
    everyone = np.arange(n)
    return np.stack([_nearest(everyone, squared_distances(coords, queries[:, j]), k)
                     for j in range(queries.shape[1])])


@lru_cache(maxsize=64)
def _cached(coords_bytes: bytes, coords_n: int, query_bytes: bytes, query_n: int, k: int) -> np.ndarray:
    coords = np.frombuffer(coords_bytes, dtype=np.float64).reshape(3, coords_n)
    queries = np.frombuffer(query_bytes, dtype=np.float64).reshape(3, query_n)
    result = knn_indices(coords, queries, k)
    result.setflags(write=False)
    return result


def cached_knn_indices(coords: np.ndarray, queries: np.ndarray, k: int) -> np.ndarray:
    """
    Memoized ``knn_indices``.

    Point positions never depend on features, so every patch of a given size
    shares the same neighbor lists; they are computed once per geometry.
    """
    coords = np.ascontiguousarray(coords, dtype=np.float64)
    queries = np.ascontiguousarray(queries, dtype=np.float64)
    return _cached(coords.tobytes(), coords.shape[1], queries.tobytes(), queries.shape[1], int(k))
