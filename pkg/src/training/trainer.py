import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from tqdm import tqdm

from src.config.model_config import ModelConfig
from src.config.train_config import TrainConfig
from src.core.errors import ContractError, TrainingError
from src.core.tensor import GradTape, Tensor, backward_gradients
from src.core.volume import Volume
from src.metrics.quality import capped_psnr, psnr
from src.network.discriminator import discriminate
from src.network.generator import check_patch_shape, generate, generator_forward, volume_values
from src.network.params import DISCRIMINATOR, GENERATOR, ModelParams, init_model_params
from src.training.losses import gan_losses, generator_adversarial_loss, l1_loss, total_generator_loss
from src.training.optimizer import OptimizerState, adam_step, lr_at_epoch

logger = logging.getLogger(__name__)

PatchPair = tuple[Volume, Volume]
LOG_COLUMNS = ("epoch", "lr", "loss_d", "loss_g_adv", "l1", "val_psnr")


@dataclass(frozen=True)
class EpochMetrics:
    """Per-epoch means over batches, plus validation PSNR (NaN without a validation set)."""
    epoch: int
    lr: float
    loss_d: float
    loss_g_adv: float
    l1: float
    val_psnr: float

    def to_line(self) -> str:
        return "\t".join([str(self.epoch)] + [f"{getattr(self, c):.12g}" for c in LOG_COLUMNS[1:]])


def write_metric_log(filepath: str, log: Sequence[EpochMetrics]):
    """Tab-separated metric log with a header row."""
    with open(filepath, "w", encoding="utf-8", newline="\n") as f:
        f.write("\t".join(LOG_COLUMNS) + "\n")
        for entry in log:
            f.write(entry.to_line() + "\n")


def _gradient_arrays(grads: dict[int, Tensor], tensors: dict[str, Tensor]) -> dict[str, np.ndarray]:
    return {name: grads[t.node_id].data for name, t in tensors.items()}


def _check_finite(value: float, what: str, epoch: int, batch: int):
    if not math.isfinite(value):
        raise TrainingError(f"non-finite {what} ({value}) at epoch {epoch + 1}, batch {batch + 1}")


class AdversarialTrainer:
    """
    Alternates one discriminator update and one generator update per batch.

    Per-sample forward/backward passes may run on a thread pool; their gradients
    are always summed in sample order, so the result does not depend on ``threads``.
    """
    def __init__(self, model_config: ModelConfig, train_config: TrainConfig, params: ModelParams | None = None,
                 show_progress: bool = False):
        self.model_config = model_config
        self.train_config = train_config
        initial = params if params is not None else init_model_params(model_config, train_config.rng_seed)
        self.params = initial.copy()
        self.gen = self.params.subset(GENERATOR)
        self.disc = self.params.subset(DISCRIMINATOR)
        self.gen_state = OptimizerState.zeros(self.gen)
        self.disc_state = OptimizerState.zeros(self.disc)
        self.shuffle_rng = np.random.Generator(np.random.Philox(train_config.rng_seed))
        self.show_progress = show_progress
        self.grid_shape = (model_config.input_side,) * 3

    def discriminator_gradients(self, pair: PatchPair) -> tuple[float, dict[str, np.ndarray]]:
        """loss_D on the real pair and the detached fake pair, and its gradients."""
        lpet, spet = pair
        lpet_values, spet_values = volume_values(lpet), volume_values(spet)
        fake = generate(lpet_values, self.grid_shape, self.params, self.model_config).detach()
        with GradTape() as tape:
            d_real = discriminate(lpet_values, spet_values, self.grid_shape, self.params, self.model_config)
            d_fake = discriminate(lpet_values, fake, self.grid_shape, self.params, self.model_config)
            loss_d, _ = gan_losses(d_real, d_fake, self.train_config.non_saturating)
        grads = backward_gradients(loss_d, tape, wrt=list(self.disc.values()))
        return loss_d.item(), _gradient_arrays(grads, self.disc)

    def generator_gradients(self, pair: PatchPair) -> tuple[float, float, dict[str, np.ndarray]]:
        """(adversarial loss, l1) of one sample and the gradients of adv + lambda * l1."""
        lpet, spet = pair
        lpet_values, spet_values = volume_values(lpet), volume_values(spet)
        with GradTape() as tape:
            estimate = generate(lpet_values, self.grid_shape, self.params, self.model_config)
            l1 = l1_loss(estimate, spet_values)
            if self.train_config.adversarial:
                d_fake = discriminate(lpet_values, estimate, self.grid_shape, self.params, self.model_config)
                adv = generator_adversarial_loss(d_fake, self.train_config.non_saturating)
                loss = total_generator_loss(adv, l1, self.train_config.lam)
            else:
                adv = Tensor(0.0)
                loss = total_generator_loss(0.0, l1, self.train_config.lam)
        grads = backward_gradients(loss, tape, wrt=list(self.gen.values()))
        return adv.item(), l1.item(), _gradient_arrays(grads, self.gen)

    def _batch_mean(self, fn, batch: Sequence[PatchPair], executor: ThreadPoolExecutor | None):
        results = list(executor.map(fn, batch)) if executor is not None else [fn(pair) for pair in batch]
        scalars = np.array([r[:-1] for r in results], dtype=np.float64)
        grads = {}
        for result in results:
            for name, g in result[-1].items():
                grads[name] = g.copy() if name not in grads else grads[name] + g
        return scalars.mean(axis=0), {name: g / len(batch) for name, g in grads.items()}

    def train_step(self, batch: Sequence[PatchPair], lr: float, executor: ThreadPoolExecutor | None = None,
                   epoch: int = 0, batch_index: int = 0) -> tuple[float, float, float]:
        """
        One discriminator update followed by one generator update.

        Returns:
            (loss_D, loss_G_adv, l1) averaged over the batch, measured before the updates.
        """
        cfg = self.train_config
        loss_d = 0.0
        if cfg.adversarial:
            (loss_d,), disc_grads = self._batch_mean(self.discriminator_gradients, batch, executor)
            _check_finite(loss_d, "discriminator loss", epoch, batch_index)
            adam_step(self.disc, disc_grads, self.disc_state, lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
        (adv, l1), gen_grads = self._batch_mean(self.generator_gradients, batch, executor)
        _check_finite(adv, "adversarial loss", epoch, batch_index)
        _check_finite(l1, "l1 loss", epoch, batch_index)
        adam_step(self.gen, gen_grads, self.gen_state, lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
        logger.debug("epoch %d batch %d: loss_D=%.6f adv=%.6f l1=%.6f", epoch + 1, batch_index + 1, loss_d, adv, l1)
        return float(loss_d), float(adv), float(l1)

    def validate(self, pairs: Sequence[PatchPair]) -> float:
        """Mean capped PSNR of the generator's estimates over validation pairs."""
        if not pairs:
            return math.nan
        scores = [capped_psnr(psnr(generator_forward(lpet, self.params, self.model_config), spet))
                  for lpet, spet in pairs]
        return float(np.mean(scores))

    def run_epoch(self, epoch: int, dataset: Sequence[PatchPair], executor: ThreadPoolExecutor | None,
                  validation: Sequence[PatchPair] = ()) -> EpochMetrics:
        cfg = self.train_config
        lr = lr_at_epoch(epoch, cfg)
        order = self.shuffle_rng.permutation(len(dataset))
        batches = [order[i:i + cfg.batch_size] for i in range(0, len(order), cfg.batch_size)]
        totals = np.zeros(3)
        bar = tqdm(batches, desc=f"epoch {epoch + 1}/{cfg.epochs}", disable=not self.show_progress, leave=False)
        for b, indices in enumerate(bar):
            totals += self.train_step([dataset[i] for i in indices], lr, executor, epoch, b)
            bar.set_postfix(l1=f"{totals[2] / (b + 1):.4f}")
        loss_d, adv, l1 = totals / len(batches)
        return EpochMetrics(epoch + 1, lr, float(loss_d), float(adv), float(l1), self.validate(validation))

    def run(self, dataset: Sequence[PatchPair], validation: Sequence[PatchPair] = ()) -> tuple[ModelParams, list]:
        """
        Trains for ``train_config.epochs`` epochs over shuffled batches.

        Returns:
            The trained parameters and one EpochMetrics per epoch.

        Raises:
            ContractError: If the dataset is empty or a patch has the wrong shape.
            TrainingError: On a non-finite loss or gradient.
        """
        cfg = self.train_config
        if not dataset:
            raise ContractError("training needs at least one (LPET, SPET) pair")
        for lpet, spet in dataset:
            check_patch_shape(lpet, self.model_config)
            check_patch_shape(spet, self.model_config)
        logger.info("Training on %d pairs: %d epochs, batch %d, %d generator / %d discriminator parameters",
                    len(dataset), cfg.epochs, cfg.batch_size, self.params.count(GENERATOR),
                    self.params.count(DISCRIMINATOR))
        log = []
        executor = ThreadPoolExecutor(max_workers=cfg.threads) if cfg.threads > 1 else None
        try:
            for epoch in range(cfg.epochs):
                metrics = self.run_epoch(epoch, dataset, executor, validation)
                log.append(metrics)
                logger.info("Epoch %d/%d - lr %.3g - loss_D %.4f - adv %.4f - l1 %.5f - val PSNR %.2f",
                            metrics.epoch, cfg.epochs, metrics.lr, metrics.loss_d, metrics.loss_g_adv,
                            metrics.l1, metrics.val_psnr)
                if cfg.log_path:
                    write_metric_log(cfg.log_path, log)
        finally:
            if executor is not None:
                executor.shutdown()
        return self.params, log


def train_run(dataset: Sequence[PatchPair], model_config: ModelConfig, train_config: TrainConfig,
              validation: Sequence[PatchPair] = (), params: ModelParams | None = None,
              show_progress: bool = False) -> tuple[ModelParams, list[EpochMetrics]]:
    """
    Adversarial training from seeded initial parameters (or ``params``).

    Zero epochs return the initial parameters and an empty log.
    """
    trainer = AdversarialTrainer(model_config, train_config, params, show_progress)
    return trainer.run(dataset, validation)
