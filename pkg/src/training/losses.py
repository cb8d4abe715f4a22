from src.core import ops
from src.core.errors import ContractError
from src.core.tensor import Tensor
from src.core.volume import Volume


def _as_values(x) -> Tensor:
    if isinstance(x, Volume):
        return Tensor(x.voxels)
    return ops.as_tensor(x)


def l1_loss(estimate, target) -> Tensor:
    """
    Mean absolute voxel error, mean(|target - estimate|).

    Accepts Volumes or tensors; the mean keeps lambda scale-free across patch sizes.

    Raises:
        ContractError: If the shapes differ.
    """
    estimate, target = _as_values(estimate), _as_values(target)
    if estimate.shape != target.shape:
        raise ContractError(f"l1_loss: shapes {estimate.shape} and {target.shape} differ")
    return ops.mean(ops.absolute(ops.sub(target, estimate)))


def _check_probability(d: Tensor, name: str):
    value = d.item()
    if not 0.0 < value < 1.0:
        raise ContractError(f"{name} must lie strictly inside (0, 1), got {value}")


def generator_adversarial_loss(d_fake, non_saturating: bool = True) -> Tensor:
    """-log d_fake, or the literal log(1 - d_fake) when ``non_saturating`` is False."""
    d_fake = ops.as_tensor(d_fake)
    _check_probability(d_fake, "d_fake")
    if non_saturating:
        return ops.sum_(ops.mul(-1.0, ops.log(d_fake)))
    return ops.sum_(ops.log(ops.sub(1.0, d_fake)))


def gan_losses(d_real, d_fake, non_saturating: bool = True) -> tuple[Tensor, Tensor]:
    """
    Discriminator and generator adversarial losses.

    loss_D = -log d_real - log(1 - d_fake). The generator loss is -log d_fake
    (non-saturating) or, with ``non_saturating=False``, the literal log(1 - d_fake)
    of the min-max objective.

    Raises:
        ContractError: If either probability lies outside (0, 1).
    """
    d_real, d_fake = ops.as_tensor(d_real), ops.as_tensor(d_fake)
    _check_probability(d_real, "d_real")
    _check_probability(d_fake, "d_fake")
    loss_d = ops.sub(ops.mul(-1.0, ops.log(d_real)), ops.log(ops.sub(1.0, d_fake)))
    return ops.sum_(loss_d), generator_adversarial_loss(d_fake, non_saturating)


def total_generator_loss(adv, l1, lam: float) -> Tensor:
    """adv + lambda * l1."""
    return ops.add(adv, ops.mul(lam, l1))
