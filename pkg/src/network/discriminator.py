from src.config.model_config import ModelConfig
from src.core import ops
from src.core.errors import ContractError
from src.core.tensor import Tensor
from src.core.volume import Volume
from src.network.blocks import coc_block
from src.network.generator import check_patch_shape, volume_values
from src.network.params import DISCRIMINATOR, ModelParams
from src.points.point_set import construct_from_channels


def discriminate(lpet_values: Tensor, candidate_values: Tensor, grid_shape: tuple, params: ModelParams,
                 config: ModelConfig) -> Tensor:
    """
    Differentiable discriminator pass on an (LPET, candidate) pair.

    The two volumes become one two-channel point set, pass four CoC blocks
    (same anchor schedule as the generator), are mean-pooled over points and
    mapped to a probability.

    Returns:
        A (1, 1) tensor in (0, 1): the probability that the candidate is a real SPET.
    """
    if lpet_values.shape != candidate_values.shape:
        raise ContractError(f"pair shapes differ: {lpet_values.shape} vs {candidate_values.shape}")
    c_per_axis = config.clusters_per_axis
    points = construct_from_channels([lpet_values, candidate_values], grid_shape,
                                     params[f"{DISCRIMINATOR}.embed.weight"], params[f"{DISCRIMINATOR}.embed.bias"])
    for i, per_axis in enumerate(config.anchor_schedule, start=1):
        points = coc_block(points, params.coc(f"{DISCRIMINATOR}.coc{i}"), per_axis, config.k, c_per_axis)
    pooled = ops.mean(points.features, axis=1, keepdims=True)
    logit = ops.linear_project(pooled, params[f"{DISCRIMINATOR}.head.weight"], params[f"{DISCRIMINATOR}.head.bias"])
    return ops.sigmoid(logit)


def discriminator_forward(lpet: Volume, candidate: Volume, params: ModelParams, config: ModelConfig) -> float:
    """
    Probability that ``candidate`` is the real standard-dose volume for ``lpet``.

    Raises:
        ContractError: If either volume is not S x S x S.
    """
    shape = check_patch_shape(lpet, config)
    if candidate.shape != shape:
        raise ContractError(f"candidate shape {candidate.shape} does not match LPET shape {shape}")
    return discriminate(volume_values(lpet), volume_values(candidate), shape, params, config).item()
