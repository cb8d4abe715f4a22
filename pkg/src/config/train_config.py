# src/config/train_config.py
from dataclasses import dataclass

from src.core.errors import ContractError


@dataclass(frozen=True)
class TrainConfig:
    """
    Configuration for adversarial training.

    Class-level constants hold the published defaults; instances may override them.
    Without an explicit ``lr_plateau_epochs`` the rate stays flat for the first
    third of the run, which gives the published 50 of 150 epochs.
    """
    EPOCHS = 150
    BATCH_SIZE = 4
    LR_INIT = 2e-4
    LR_PLATEAU_EPOCHS = 50
    LAMBDA = 100.0
    ADAM_BETA1 = 0.9
    ADAM_BETA2 = 0.999
    ADAM_EPS = 1e-8
    RNG_SEED = 7

    # Desk profile: a few hundred steps instead of tens of thousands
    DESK_EPOCHS = 20
    DESK_BATCH_SIZE = 2
    DESK_LR_INIT = 1e-3

    epochs: int = EPOCHS
    batch_size: int = BATCH_SIZE
    lr_init: float = LR_INIT
    lr_plateau_epochs: int | None = None
    lam: float = LAMBDA
    adam_beta1: float = ADAM_BETA1
    adam_beta2: float = ADAM_BETA2
    adam_eps: float = ADAM_EPS
    rng_seed: int = RNG_SEED
    adversarial: bool = True
    non_saturating: bool = True
    threads: int = 1
    log_path: str | None = None

    def __post_init__(self):
        if self.epochs < 0:
            raise ContractError(f"epochs must be nonnegative, got {self.epochs}")
        if self.batch_size < 1:
            raise ContractError(f"batch_size must be positive, got {self.batch_size}")
        if not self.lr_init > 0:
            raise ContractError(f"lr_init must be positive, got {self.lr_init}")
        if self.lr_plateau_epochs is None:
            object.__setattr__(self, "lr_plateau_epochs", self.epochs // 3)
        if not 0 <= self.lr_plateau_epochs <= self.epochs:
            raise ContractError(
                f"lr_plateau_epochs must lie in [0, epochs={self.epochs}], got {self.lr_plateau_epochs}")
        if self.lam < 0:
            raise ContractError(f"lambda must be nonnegative, got {self.lam}")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1 and self.adam_eps > 0):
            raise ContractError("Adam coefficients must satisfy 0 <= beta < 1 and eps > 0")
        if self.threads < 1:
            raise ContractError(f"threads must be positive, got {self.threads}")

    @classmethod
    def desk(cls, **overrides) -> "TrainConfig":
        """Desk profile: 20 epochs of batch 2 at a fivefold initial rate."""
        overrides.setdefault("epochs", cls.DESK_EPOCHS)
        overrides.setdefault("batch_size", cls.DESK_BATCH_SIZE)
        overrides.setdefault("lr_init", cls.DESK_LR_INIT)
        return cls(**overrides)
