from dataclasses import dataclass
from typing import Iterator

import numpy as np

from src.clustering.context_cluster import ClusterParams
from src.config.model_config import NUM_BLOCKS, ModelConfig
from src.core.errors import ContractError
from src.core.tensor import Tensor

GENERATOR = "gen"
DISCRIMINATOR = "disc"


@dataclass
class FeedForwardParams:
    """Two linear layers of the pointwise feed-forward branch."""
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor


@dataclass
class CoCParams:
    """Weights of one CoC block: reducer projection, clustering, feed-forward."""
    reduce_weight: Tensor
    reduce_bias: Tensor
    cluster: ClusterParams
    ff: FeedForwardParams


@dataclass
class TCoCParams:
    """Weights of one TCoC block: expander projection, clustering, feed-forward."""
    expand_weight: Tensor
    expand_bias: Tensor
    cluster: ClusterParams
    ff: FeedForwardParams


class ModelParams:
    """
    Named learnable tensors of the generator (``gen.*``) and discriminator (``disc.*``).

    Names are dotted paths such as ``gen.coc1.reduce.weight``; insertion order
    is the checkpoint manifest order.
    """
    def __init__(self, tensors: dict[str, Tensor] | None = None):
        self._tensors: dict[str, Tensor] = dict(tensors or {})

    def __getitem__(self, name: str) -> Tensor:
        try:
            return self._tensors[name]
        except KeyError:
            raise ContractError(f"missing parameter '{name}'") from None

    def __setitem__(self, name: str, tensor: Tensor):
        self._tensors[name] = tensor

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def items(self):
        return self._tensors.items()

    def subset(self, prefix: str) -> dict[str, Tensor]:
        """Tensors whose name starts with ``prefix.``, in manifest order."""
        return {name: t for name, t in self._tensors.items() if name.startswith(prefix + ".")}

    def count(self, prefix: str | None = None) -> int:
        """Number of learnable scalars, optionally restricted to one network."""
        tensors = self._tensors.values() if prefix is None else self.subset(prefix).values()
        return int(sum(t.size for t in tensors))

    def copy(self) -> "ModelParams":
        return ModelParams({name: Tensor(t.data, requires_grad=t.requires_grad) for name, t in self._tensors.items()})

    def cluster(self, prefix: str) -> ClusterParams:
        return ClusterParams(self[f"{prefix}.cluster.alpha"], self[f"{prefix}.cluster.beta"])

    def feed_forward(self, prefix: str) -> FeedForwardParams:
        return FeedForwardParams(self[f"{prefix}.ff1.weight"], self[f"{prefix}.ff1.bias"],
                                 self[f"{prefix}.ff2.weight"], self[f"{prefix}.ff2.bias"])

    def coc(self, prefix: str) -> CoCParams:
        return CoCParams(self[f"{prefix}.reduce.weight"], self[f"{prefix}.reduce.bias"],
                         self.cluster(prefix), self.feed_forward(prefix))

    def tcoc(self, prefix: str) -> TCoCParams:
        return TCoCParams(self[f"{prefix}.expand.weight"], self[f"{prefix}.expand.bias"],
                          self.cluster(prefix), self.feed_forward(prefix))


def _uniform(rng: np.random.Generator, shape: tuple, fan_in: int) -> Tensor:
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


def _linear(tensors: dict, name: str, rng: np.random.Generator, d_out: int, d_in: int):
    tensors[f"{name}.weight"] = _uniform(rng, (d_out, d_in), d_in)
    tensors[f"{name}.bias"] = _uniform(rng, (d_out,), d_in)


def _cluster_and_ff(tensors: dict, prefix: str, rng: np.random.Generator, width: int):
    cluster = ClusterParams.initial()
    tensors[f"{prefix}.cluster.alpha"] = cluster.alpha
    tensors[f"{prefix}.cluster.beta"] = cluster.beta
    _linear(tensors, f"{prefix}.ff1", rng, width, width)
    _linear(tensors, f"{prefix}.ff2", rng, width, width)


def _coc_stack(tensors: dict, prefix: str, rng: np.random.Generator, config: ModelConfig):
    widths = config.widths
    for i in range(1, NUM_BLOCKS + 1):
        block = f"{prefix}.coc{i}"
        _linear(tensors, f"{block}.reduce", rng, widths[i], config.k * widths[i - 1])
        _cluster_and_ff(tensors, block, rng, widths[i])


def init_generator_params(config: ModelConfig, rng: np.random.Generator) -> dict[str, Tensor]:
    """
    Generator weights: embedding, four CoC blocks, four TCoC blocks and a zero reversion head.

    Projections draw from U(-1/sqrt(fan_in), 1/sqrt(fan_in)). The zero head
    makes the initial generator the identity on intensities.
    """
    widths = config.widths
    tensors: dict[str, Tensor] = {}
    _linear(tensors, f"{GENERATOR}.embed", rng, widths[0], 4)
    _coc_stack(tensors, GENERATOR, rng, config)
    for j in range(1, NUM_BLOCKS + 1):
        block = f"{GENERATOR}.tcoc{j}"
        d_in, d_out = widths[NUM_BLOCKS + 1 - j], widths[NUM_BLOCKS - j]
        _linear(tensors, f"{block}.expand", rng, config.k * d_out, d_in)
        _cluster_and_ff(tensors, block, rng, d_out)
    tensors[f"{GENERATOR}.head.weight"] = Tensor(np.zeros((1, widths[0])), requires_grad=True)
    tensors[f"{GENERATOR}.head.bias"] = Tensor(np.zeros(1), requires_grad=True)
    return tensors


def init_discriminator_params(config: ModelConfig, rng: np.random.Generator) -> dict[str, Tensor]:
    """Discriminator weights: two-channel embedding, four CoC blocks, pooled linear head."""
    widths = config.widths
    tensors: dict[str, Tensor] = {}
    _linear(tensors, f"{DISCRIMINATOR}.embed", rng, widths[0], 5)
    _coc_stack(tensors, DISCRIMINATOR, rng, config)
    _linear(tensors, f"{DISCRIMINATOR}.head", rng, 1, widths[-1])
    return tensors


def init_model_params(config: ModelConfig, seed: int) -> ModelParams:
    """All weights for a seed; identical seeds give bitwise-identical parameters."""
    rng = np.random.Generator(np.random.Philox(seed))
    tensors = init_generator_params(config, rng)
    tensors.update(init_discriminator_params(config, rng))
    return ModelParams(tensors)
