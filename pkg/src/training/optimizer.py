from dataclasses import dataclass, field

import numpy as np

from src.config.train_config import TrainConfig
from src.core.errors import ContractError, TrainingError
from src.core.tensor import Tensor


def lr_at_epoch(epoch: int, config: TrainConfig) -> float:
    """
    Learning rate for an epoch: constant for the plateau, then linear down to 0.

    ``epoch == config.epochs`` is accepted as the closing boundary and gives 0.

    Raises:
        ContractError: If the epoch lies outside [0, epochs].
    """
    if not 0 <= epoch <= config.epochs:
        raise ContractError(f"epoch {epoch} outside [0, {config.epochs}]")
    if epoch < config.lr_plateau_epochs:
        return config.lr_init
    decay_span = config.epochs - config.lr_plateau_epochs
    if decay_span == 0:
        return 0.0
    return config.lr_init * (config.epochs - epoch) / decay_span


@dataclass
class OptimizerState:
    """
    Adam moments per parameter name and the number of steps taken.

    Attributes:
        m (dict): First-moment estimates.
        v (dict): Second-moment estimates.
        step (int): Steps taken so far.
    """
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0

    @classmethod
    def zeros(cls, params: dict[str, Tensor]) -> "OptimizerState":
        return cls({name: np.zeros_like(t.data) for name, t in params.items()},
                   {name: np.zeros_like(t.data) for name, t in params.items()}, 0)


def adam_step(params: dict[str, Tensor], grads: dict[str, np.ndarray], state: OptimizerState, lr: float,
              beta1: float = TrainConfig.ADAM_BETA1, beta2: float = TrainConfig.ADAM_BETA2,
              eps: float = TrainConfig.ADAM_EPS) -> tuple[dict[str, Tensor], OptimizerState]:
    """
    One bias-corrected Adam update, applied to the parameter tensors in place.

    Raises:
        TrainingError: If a gradient contains NaN or Inf; names the parameter.
        ContractError: If gradients and parameters disagree in names or shapes.
    """
    for name, grad in grads.items():
        if not np.all(np.isfinite(grad)):
            raise TrainingError(f"non-finite gradient for parameter '{name}'")
    state.step += 1
    correction1 = 1.0 - beta1 ** state.step
    correction2 = 1.0 - beta2 ** state.step
    for name, param in params.items():
        grad = grads.get(name)
        if grad is None:
            grad = np.zeros_like(param.data)
        if grad.shape != param.shape:
            raise ContractError(f"gradient shape {grad.shape} does not match parameter '{name}' {param.shape}")
        m = state.m.setdefault(name, np.zeros_like(param.data))
        v = state.v.setdefault(name, np.zeros_like(param.data))
        m *= beta1
        m += (1.0 - beta1) * grad
        v *= beta2
        v += (1.0 - beta2) * grad * grad
        param.data -= lr * (m / correction1) / (np.sqrt(v / correction2) + eps)
    return params, state
