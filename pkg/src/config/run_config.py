import configparser
import logging
from dataclasses import dataclass, field

from src.config.model_config import ModelConfig
from src.config.train_config import TrainConfig
from src.core.errors import UsageError

logger = logging.getLogger(__name__)

PROFILES = ("full", "desk")
PATCH_STRIDE = 8

# key -> type; keys match the long flag names with dashes turned into underscores
CONFIG_KEYS = {
    "side": int,
    "width": int,
    "k": int,
    "c": int,
    "epochs": int,
    "batch_size": int,
    "lr": float,
    "lr_plateau": int,
    "lam": float,
    "seed": int,
    "threads": int,
    "stride": int,
    "adversarial": bool,
    "non_saturating": bool,
}

# config key -> TrainConfig field
_TRAIN_FIELDS = {
    "epochs": "epochs",
    "batch_size": "batch_size",
    "lr": "lr_init",
    "lr_plateau": "lr_plateau_epochs",
    "lam": "lam",
    "seed": "rng_seed",
    "adversarial": "adversarial",
    "non_saturating": "non_saturating",
    "threads": "threads",
}

_SECTION = "run"


def load_config_file(filepath: str) -> dict:
    """
    Reads a ``key = value`` config file (``#`` comments, no section headers).

    Returns:
        Typed values for the keys present in the file.

    Raises:
        FileNotFoundError: If the file does not exist.
        UsageError: On an unknown key or a value of the wrong type.
    """
    parser = configparser.ConfigParser(comment_prefixes=("#",), inline_comment_prefixes=("#",))
    with open(filepath, encoding="utf-8") as f:
        try:
            parser.read_string(f"[{_SECTION}]\n" + f.read(), source=filepath)
        except configparser.Error as e:
            raise UsageError(f"{filepath}: {e.message.splitlines()[0]}") from None
    section = parser[_SECTION]
    values = {}
    for key in section:
        if key not in CONFIG_KEYS:
            raise UsageError(f"{filepath}: unknown key '{key}' (known: {', '.join(sorted(CONFIG_KEYS))})")
        kind = CONFIG_KEYS[key]
        try:
            if kind is bool:
                values[key] = section.getboolean(key)
            elif kind is int:
                values[key] = section.getint(key)
            else:
                values[key] = section.getfloat(key)
        except ValueError:
            raise UsageError(f"{filepath}: '{key}' expects {kind.__name__}, got '{section[key]}'") from None
    logger.debug("Loaded %d settings from '%s'", len(values), filepath)
    return values


@dataclass(frozen=True)
class RunConfig:
    """
    Everything one CLI invocation needs, resolved from profile, config file and flags.

    Attributes:
        model (ModelConfig): Architecture.
        train (TrainConfig): Optimization settings.
        stride (int): Patch stride for extraction and reconstruction.
        manifest (str | None): Dataset manifest.
        checkpoint (str | None): Checkpoint to write (train) or read (reconstruct).
        out_dir (str | None): Output directory.
    """
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    stride: int = PATCH_STRIDE
    manifest: str | None = None
    checkpoint: str | None = None
    out_dir: str | None = None


def build_run_config(profile: str, settings: dict, **paths) -> RunConfig:
    """
    Applies ``settings`` (file values already overridden by flags) on top of a profile.

    Raises:
        UsageError: On an unknown profile.
        ContractError: If a resulting value violates ModelConfig or TrainConfig.
    """
    if profile not in PROFILES:
        raise UsageError(f"unknown profile '{profile}' (choose from {', '.join(PROFILES)})")
    base_model = ModelConfig.desk() if profile == "desk" else ModelConfig.full()
    model = ModelConfig(input_side=settings.get("side", base_model.input_side),
                        base_width=settings.get("width", base_model.base_width),
                        k=settings.get("k", base_model.k),
                        c=settings.get("c", base_model.c))

    overrides = {name: settings[key] for key, name in _TRAIN_FIELDS.items() if key in settings}
    overrides["log_path"] = paths.pop("log_path", None)
    train = TrainConfig.desk(**overrides) if profile == "desk" else TrainConfig(**overrides)
    stride = settings.get("stride", PATCH_STRIDE)
    if stride < 1:
        raise UsageError(f"stride must be positive, got {stride}")
    return RunConfig(model, train, stride, **paths)
