from src.clustering.context_cluster import context_cluster_layer
from src.core import ops
from src.core.errors import ContractError
from src.network.layers import feed_forward, points_expander, points_reducer
from src.network.params import CoCParams, TCoCParams
from src.points.point_set import PointSet


def coc_block(points: PointSet, block: CoCParams, per_axis: int, k: int, c_per_axis: int) -> PointSet:
    """
    Points reducer, context clustering, then the residual feed-forward.

    With the default projection widths the point count is divided by eight
    and the width doubled.
    """
    reduced = points_reducer(points, per_axis, k, block.reduce_weight, block.reduce_bias)
    clustered = context_cluster_layer(reduced, block.cluster, c_per_axis, k)
    return feed_forward(clustered, block.ff)


def tcoc_block(points: PointSet, skip: PointSet, block: TCoCParams, k: int, c_per_axis: int) -> PointSet:
    """
    Points expander, context clustering and feed-forward, plus the mirrored CoC output.

    Raises:
        ContractError: If ``skip`` does not match the expanded point set.
    """
    expanded = points_expander(points, k, block.expand_weight, block.expand_bias)
    clustered = context_cluster_layer(expanded, block.cluster, c_per_axis, k)
    out = feed_forward(clustered, block.ff)
    if skip.features.shape != out.features.shape:
        raise ContractError(
            f"skip connection of shape {skip.features.shape} does not match block output {out.features.shape}")
    return out.with_features(ops.add(out.features, skip.features))
