from src.config.model_config import NUM_BLOCKS, ModelConfig
from src.core import ops
from src.core.errors import ContractError
from src.core.tensor import Tensor
from src.core.volume import Volume
from src.network.blocks import coc_block, tcoc_block
from src.network.params import GENERATOR, ModelParams
from src.points.point_set import PointSet, construct_from_channels, lattice_coords, revert_points, revert_values

# reverts a one-channel point set unchanged
_UNIT_HEAD = (Tensor([[1.0]]), Tensor([0.0]))


def generate(lpet_values: Tensor, grid_shape: tuple, params: ModelParams, config: ModelConfig) -> Tensor:
    """
    Differentiable generator pass on lattice-ordered intensities.

    The LPET points go through four CoC blocks and four TCoC blocks (each TCoC
    adding the output of its mirrored CoC block, the last one the embedded
    input). A linear head turns the final points into one residual per point,
    which is added to the input intensity.

    Args:
        lpet_values (Tensor): Shape (1, S^3).
        grid_shape (tuple): (S, S, S).
        params (ModelParams): Holds the ``gen.*`` tensors.
        config (ModelConfig): Architecture.

    Returns:
        Estimated intensities, shape (1, S^3).
    """
    c_per_axis = config.clusters_per_axis
    points = construct_from_channels([lpet_values], grid_shape, params[f"{GENERATOR}.embed.weight"],
                                     params[f"{GENERATOR}.embed.bias"])
    skips = [points]
    for i, per_axis in enumerate(config.anchor_schedule, start=1):
        points = coc_block(points, params.coc(f"{GENERATOR}.coc{i}"), per_axis, config.k, c_per_axis)
        skips.append(points)
    skips.pop()
    for j in range(1, NUM_BLOCKS + 1):
        points = tcoc_block(points, skips.pop(), params.tcoc(f"{GENERATOR}.tcoc{j}"), config.k, c_per_axis)
    residual = revert_values(points, params[f"{GENERATOR}.head.weight"], params[f"{GENERATOR}.head.bias"])
    return ops.add(lpet_values, residual)


def check_patch_shape(volume: Volume, config: ModelConfig) -> tuple:
    expected = (config.input_side,) * 3
    if volume.shape != expected:
        raise ContractError(f"expected a volume of shape {expected}, got {volume.shape}")
    return expected


def volume_values(volume: Volume) -> Tensor:
    """A volume's voxels as a constant (1, n) tensor in lattice order."""
    return Tensor(volume.flat().reshape(1, -1))


def generator_forward(lpet: Volume, params: ModelParams, config: ModelConfig) -> Volume:
    """
    Estimates the standard-dose volume for one LPET patch.

    Raises:
        ContractError: If the patch is not S x S x S.
    """
    shape = check_patch_shape(lpet, config)
    estimate = generate(volume_values(lpet), shape, params, config)
    return revert_points(PointSet(estimate, lattice_coords(shape), shape), *_UNIT_HEAD)
