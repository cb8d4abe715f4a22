import logging
from dataclasses import dataclass

import numpy as np

from src.clustering.context_cluster import FrozenRouting
from src.config.model_config import ModelConfig
from src.config.train_config import TrainConfig
from src.core import ops
from src.core.gradcheck import check_model_gradients, finite_diff_check
from src.core.tensor import Tensor
from src.network.discriminator import discriminate
from src.network.generator import generate
from src.network.params import DISCRIMINATOR, GENERATOR, init_model_params
from src.training.losses import gan_losses, generator_adversarial_loss, l1_loss, total_generator_loss

logger = logging.getLogger(__name__)

GRADCHECK_TOLERANCE = 1e-4
GRADCHECK_STEP = 1e-5
GRADCHECK_COORDS = 50


@dataclass(frozen=True)
class GradcheckResult:
    """Worst relative error of one check and the parameter where it occurred."""
    check: str
    error: float
    where: str

    @property
    def passed(self) -> bool:
        return self.error < GRADCHECK_TOLERANCE


def _discriminator_loss_of_pair(probabilities: Tensor) -> Tensor:
    d_real, d_fake = ops.split(probabilities, [1, 1], axis=0)
    return gan_losses(d_real, d_fake)[0]


def _pinned(loss_fn, routing: FrozenRouting):
    def call():
        routing.rewind()
        return loss_fn()
    return call


def run_model_gradcheck(side: int = 16, width: int = 4, seed: int = 3, n_coords: int = GRADCHECK_COORDS,
                        step: float = GRADCHECK_STEP) -> list[GradcheckResult]:
    """
    Central-difference checks of the full generator and both adversarial losses.

    The generator head starts at zero, which would block every upstream
    gradient, so it is replaced by small random values before checking.
    Cluster assignments carry no gradient and are pinned to those of the
    unperturbed pass while a check runs.

    Args:
        side (int): Patch edge length S.
        width (int): Base width W0.
        seed (int): Seeds the parameters, the random volumes and the sampled coordinates.
        n_coords (int): Scalar parameters sampled per check.
        step (float): Central-difference half width.

    Returns:
        One result per check: generator L1, generator total loss, discriminator loss
        and the two scalar loss functions.
    """
    config = ModelConfig(input_side=side, base_width=width)
    params = init_model_params(config, seed)
    rng = np.random.Generator(np.random.Philox(seed))
    head = params[f"{GENERATOR}.head.weight"]
    head.data[...] = rng.normal(0.0, 0.1, size=head.shape)

    grid = (side,) * 3
    lpet = Tensor(0.1 + rng.random((1, side ** 3)))
    spet = Tensor(0.1 + rng.random((1, side ** 3)))
    gen, disc = params.subset(GENERATOR), params.subset(DISCRIMINATOR)

    def generator_l1():
        return l1_loss(generate(lpet, grid, params, config), spet)

    def generator_total():
        estimate = generate(lpet, grid, params, config)
        adv = generator_adversarial_loss(discriminate(lpet, estimate, grid, params, config))
        return total_generator_loss(adv, l1_loss(estimate, spet), TrainConfig.LAMBDA)

    fake = generate(lpet, grid, params, config).detach()

    def discriminator_loss():
        loss_d, _ = gan_losses(discriminate(lpet, spet, grid, params, config),
                               discriminate(lpet, fake, grid, params, config))
        return loss_d

    results = []
    for name, loss_fn, tensors in (("generator_l1", generator_l1, gen),
                                   ("generator_total", generator_total, gen),
                                   ("discriminator", discriminator_loss, disc)):
        with FrozenRouting() as routing:
            error, where = check_model_gradients(_pinned(loss_fn, routing), tensors, n_coords, rng, step)
        logger.info("gradcheck %s: max relative error %.3e at %s", name, error, where)
        results.append(GradcheckResult(name, error, where))

    results.append(GradcheckResult(
        "loss_d", finite_diff_check(_discriminator_loss_of_pair, Tensor([0.3, 0.6]), step), "d_real, d_fake"))
    results.append(GradcheckResult(
        "loss_g_adv", finite_diff_check(generator_adversarial_loss, Tensor([[0.6]]), step), "d_fake"))
    return results
