"""
Context clustering over point sets.

Centers are proposed on an even lattice and take the mean feature of their
nearest points. Every point then joins the center it is most cosine-similar to.
Each cluster is aggregated into one vector weighted by the sigmoid of the
scaled and shifted similarities, and the aggregate is dispatched back to the
members with the same weights.

The argmax assignment is a routing decision and carries no gradient; the
similarities themselves and alpha/beta are differentiable.
"""
import contextvars
from dataclasses import dataclass

import numpy as np

from src.core import ops
from src.core.errors import ContractError, DimensionError
from src.core.tensor import Tensor
from src.points.anchors import anchor_grid
from src.points.knn import cached_knn_indices
from src.points.point_set import PointSet

# cosine similarities closer than this are rounding noise
TIE_TOLERANCE = 1e-12

_frozen_routing: contextvars.ContextVar = contextvars.ContextVar("frozen_routing", default=None)


class FrozenRouting:
    """
    Pins the cluster assignments of repeated forward passes.

    Inside the ``with`` block the first pass records every assignment in call
    order; after ``rewind`` later passes reuse them instead of recomputing the
    argmax. Finite-difference checks use this so that a perturbation measures
    the smooth part of the loss only.
    """
    def __init__(self):
        self.assignments: list[np.ndarray] = []
        self._cursor = 0
        self._token = None

    def __enter__(self) -> "FrozenRouting":
        self._token = _frozen_routing.set(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _frozen_routing.reset(self._token)
        self._token = None
        return False

    def rewind(self):
        self._cursor = 0

    def route(self, member_of: np.ndarray) -> np.ndarray:
        if self._cursor < len(self.assignments):
            member_of = self.assignments[self._cursor]
        else:
            self.assignments.append(member_of)
        self._cursor += 1
        return member_of


@dataclass
class ClusterParams:
    """
    Learnable scale (alpha) and shift (beta) of the similarity, one pair per layer.

    Both are shape (1,) tensors.
    """
    alpha: Tensor
    beta: Tensor

    @classmethod
    def initial(cls, requires_grad: bool = True) -> "ClusterParams":
        """alpha = 1, beta = 0."""
        return cls(Tensor([1.0], requires_grad=requires_grad), Tensor([0.0], requires_grad=requires_grad))


@dataclass
class ClusterAssignment:
    """
    Partition of a point set into c clusters.

    Attributes:
        center_features (Tensor): Shape (d, c).
        member_of (np.ndarray): Length-n cluster id per point, each in [0, c).
        similarity (Tensor): Length-n cosine similarity of each point to its own center.
    """
    center_features: Tensor
    member_of: np.ndarray
    similarity: Tensor

    @property
    def c(self) -> int:
        return self.center_features.shape[1]

    def members(self, cluster: int) -> np.ndarray:
        """Indices of the points assigned to ``cluster``, ascending."""
        return np.flatnonzero(self.member_of == cluster)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.member_of, minlength=self.c)


def effective_centers_per_axis(c_per_axis: int, n: int) -> int:
    """Largest a <= c_per_axis with a^3 <= n, so the proposal lattice never outnumbers the points."""
    a = c_per_axis
    while a > 1 and a ** 3 > n:
        a -= 1
    return a


def propose_centers(points: PointSet, c_per_axis: int, k_center: int) -> Tensor:
    """
    Places centers on an even lattice and gives each the mean feature of its nearest points.

    Args:
        points (PointSet): The points to cluster.
        c_per_axis (int): Centers per axis; clamped so that at most n centers exist.
        k_center (int): Neighbors averaged per center; clamped to n.

    Returns:
        Center features of shape (d, c_eff).

    Raises:
        ContractError: If the point set is empty.
    """
    if points.n == 0:
        raise ContractError("propose_centers: empty point set")
    if c_per_axis < 1 or k_center < 1:
        raise ContractError("propose_centers: c_per_axis and k_center must be positive")
    per_axis = effective_centers_per_axis(c_per_axis, points.n)
    anchors = anchor_grid(points, per_axis)
    k = min(k_center, points.n)
    # summed in index order, so centers over the same neighbor set are bitwise equal
    neighbors = np.sort(cached_knn_indices(points.coords, anchors, k), axis=1)
    c = anchors.shape[1]
    gathered = ops.gather(points.features, neighbors.reshape(-1))
    totals = ops.scatter_add(gathered, np.repeat(np.arange(c), k), c)
    return ops.div(totals, float(k))


def assign_clusters(points: PointSet, centers: Tensor) -> ClusterAssignment:
    """
    Assigns every point to its most cosine-similar center.

    Ties go to the lowest center index; similarities within TIE_TOLERANCE of the
    best one count as ties.

    Raises:
        DegenerateVectorError: If a point or center feature is near zero.
    """
    similarity = ops.cosine_sim_matrix(points.features, centers)
    best = similarity.data.max(axis=0)
    member_of = np.argmax(similarity.data >= best - TIE_TOLERANCE, axis=0)
    routing = _frozen_routing.get()
    if routing is not None:
        member_of = routing.route(member_of)
    return ClusterAssignment(centers, member_of, ops.pick(similarity, member_of))


def cluster_weights(similarity, params: ClusterParams) -> Tensor:
    """sig(alpha * s + beta) for every similarity s."""
    return ops.sigmoid(ops.add(ops.mul(params.alpha, similarity), params.beta))


def aggregate_cluster(members, similarities, center, params: ClusterParams) -> Tensor:
    """
    Similarity-weighted aggregate of one cluster.

    g = (v_c + sum_m w_m v_m) / (1 + sum_m w_m), w_m = sig(alpha * s_m + beta).
    An empty cluster (M = 0) aggregates to its center.

    Args:
        members (Tensor): Shape (d, M).
        similarities: Length-M similarities of the members to the center.
        center (Tensor): Shape (d,).
        params (ClusterParams): alpha and beta of this layer.

    Returns:
        The aggregate, shape (d,).
    """
    members, center = ops.as_tensor(members), ops.as_tensor(center)
    similarities = ops.as_tensor(similarities)
    if members.ndim != 2 or center.shape != (members.shape[0],) or similarities.shape != (members.shape[1],):
        raise DimensionError(
            f"aggregate_cluster: members {members.shape}, similarities {similarities.shape}, center {center.shape}")
    weights = cluster_weights(similarities, params)
    numerator = ops.add(center, ops.sum_(ops.mul(members, weights), axis=1))
    return ops.div(numerator, ops.add(1.0, ops.sum_(weights)))


def dispatch_cluster(members, similarities, aggregated, params: ClusterParams) -> Tensor:
    """
    Sends a cluster's aggregate back to its members: v'_m = v_m + sig(alpha * s_m + beta) * g.

    Returns:
        Updated members, same shape as ``members``.
    """
    members, aggregated = ops.as_tensor(members), ops.as_tensor(aggregated)
    similarities = ops.as_tensor(similarities)
    if members.ndim != 2 or aggregated.shape != (members.shape[0],) or similarities.shape != (members.shape[1],):
        raise DimensionError(
            f"dispatch_cluster: members {members.shape}, similarities {similarities.shape}, "
            f"aggregate {aggregated.shape}")
    weights = cluster_weights(similarities, params)
    column = ops.reshape(aggregated, (members.shape[0], 1))
    return ops.add(members, ops.mul(column, weights))


def aggregate_clusters(features: Tensor, assignment: ClusterAssignment, params: ClusterParams) -> Tensor:
    """
    All-cluster form of ``aggregate_cluster``: segment sums over ``member_of``.

    Returns:
        Aggregates of shape (d, c).
    """
    c = assignment.c
    weights = cluster_weights(assignment.similarity, params)
    weighted = ops.scatter_add(ops.mul(features, weights), assignment.member_of, c)
    numerator = ops.add(assignment.center_features, weighted)
    normalizer = ops.add(1.0, ops.scatter_add(weights, assignment.member_of, c))
    return ops.div(numerator, normalizer)


def dispatch_clusters(features: Tensor, assignment: ClusterAssignment, aggregated: Tensor,
                      params: ClusterParams) -> Tensor:
    """All-cluster form of ``dispatch_cluster``; returns updated features of shape (d, n)."""
    weights = cluster_weights(assignment.similarity, params)
    return ops.add(features, ops.mul(ops.gather(aggregated, assignment.member_of), weights))


def context_cluster_layer(points: PointSet, params: ClusterParams, c_per_axis: int, k_center: int) -> PointSet:
    """
    Propose centers, assign, aggregate and dispatch.

    Point count, width and coordinates are unchanged.
    """
    centers = propose_centers(points, c_per_axis, k_center)
    assignment = assign_clusters(points, centers)
    aggregated = aggregate_clusters(points.features, assignment, params)
    return points.with_features(dispatch_clusters(points.features, assignment, aggregated, params))
