# src/config/model_config.py
from dataclasses import dataclass, field

from src.core.errors import ContractError

NUM_BLOCKS = 4


@dataclass(frozen=True)
class ModelConfig:
    """
    Architecture hyperparameters shared by the generator and the discriminator.

    Attributes:
        input_side (int): Patch edge length S; the network sees S^3 points.
        base_width (int): Feature width W0 after the construction embedding.
        anchor_schedule (tuple): Anchors per axis for the four CoC blocks,
            S/2, S/4, S/8, S/16 unless given.
        k (int): Neighbors gathered per anchor, also the expander fan-out
            and the neighbors averaged per cluster center.
        c (int): Clusters per context-clustering layer; must be a cube.
    """
    INPUT_SIDE = 64
    BASE_WIDTH = 16
    K = 8
    C = 8

    input_side: int = INPUT_SIDE
    base_width: int = BASE_WIDTH
    anchor_schedule: tuple = field(default=())
    k: int = K
    c: int = C

    def __post_init__(self):
        if self.input_side < 16 or self.input_side % 16:
            raise ContractError(f"input_side must be a multiple of 16, got {self.input_side}")
        if self.base_width < 1:
            raise ContractError(f"base_width must be positive, got {self.base_width}")
        if not self.anchor_schedule:
            object.__setattr__(self, "anchor_schedule",
                               tuple(self.input_side >> (i + 1) for i in range(NUM_BLOCKS)))
        schedule = tuple(int(a) for a in self.anchor_schedule)
        object.__setattr__(self, "anchor_schedule", schedule)
        if len(schedule) != NUM_BLOCKS:
            raise ContractError(f"anchor_schedule needs {NUM_BLOCKS} entries, got {schedule}")
        previous = self.input_side
        for a in schedule:
            if a < 1 or a * 2 != previous:
                raise ContractError(
                    f"anchor_schedule must halve the lattice each block starting from {self.input_side}, "
                    f"got {schedule}")
            previous = a
        if self.k != 8:
            # the expander places one child per octant
            raise ContractError(f"k must be 8 so every point expands into its 8 octants, got {self.k}")
        if self.clusters_per_axis ** 3 != self.c:
            raise ContractError(f"c must be a perfect cube to sit on an even lattice, got {self.c}")

    @property
    def clusters_per_axis(self) -> int:
        return max(1, round(self.c ** (1.0 / 3.0)))

    @property
    def widths(self) -> tuple:
        """Point widths W0, 2W0, 4W0, 8W0, 16W0 from construction to the bottleneck."""
        return tuple(self.base_width << i for i in range(NUM_BLOCKS + 1))

    @classmethod
    def full(cls) -> "ModelConfig":
        """Full-scale setting: 64^3 patches, anchors 32/16/8/4."""
        return cls()

    @classmethod
    def desk(cls) -> "ModelConfig":
        """Laptop-scale setting: 16^3 patches, W0 = 8, anchors 8/4/2/1."""
        return cls(input_side=16, base_width=8)
