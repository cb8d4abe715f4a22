import logging
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from src.core.errors import ContractError
from src.core.volume import Volume

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PhantomSpec:
    """
    Parameters of a synthetic standard-dose phantom.

    Attributes:
        shape (tuple): Volume extents, each at least 8.
        seed (int): Seed of the Philox generator driving every draw.
        num_ellipsoids (int): Number of additive ellipsoidal structures.
        intensity_range (tuple): Uniform range of each structure's added intensity.
        background (float): Constant uptake everywhere.
        blur_sigma (float): Gaussian blur width in voxels; 0 disables blurring.
    """
    shape: tuple = (32, 32, 32)
    seed: int = 0
    num_ellipsoids: int = 6
    intensity_range: tuple = (0.5, 2.0)
    background: float = 0.2
    blur_sigma: float = 1.0

    def __post_init__(self):
        if len(self.shape) != 3 or any(e < 8 for e in self.shape):
            raise ContractError(f"phantom extents must be at least 8, got {self.shape}")
        low, high = self.intensity_range
        if low < 0 or high < low:
            raise ContractError(f"intensity range must be nonnegative and ordered, got {self.intensity_range}")
        if self.background < 0 or self.num_ellipsoids < 0 or self.blur_sigma < 0:
            raise ContractError("background, num_ellipsoids and blur_sigma must be nonnegative")


@dataclass(frozen=True)
class Ellipsoid:
    """Axis-aligned ellipsoid in voxel units."""
    center: tuple
    radii: tuple
    intensity: float

    def bounding_box(self) -> tuple:
        """Inclusive (low, high) voxel index bounds per axis."""
        low = tuple(int(np.floor(c - r)) for c, r in zip(self.center, self.radii))
        high = tuple(int(np.ceil(c + r)) for c, r in zip(self.center, self.radii))
        return low, high

    def mask(self, shape: tuple) -> np.ndarray:
        h, w, d = np.meshgrid(*(np.arange(e, dtype=np.float64) for e in shape), indexing="ij")
        dist = sum(((axis - c) / r) ** 2 for axis, c, r in zip((h, w, d), self.center, self.radii))
        return dist <= 1.0


def sample_ellipsoids(spec: PhantomSpec) -> list[Ellipsoid]:
    """
    Draws the structures of a phantom.

    Centers stay in the middle 60% of each axis; radii span 8% to 25% of the extent.
    """
    rng = np.random.Generator(np.random.Philox(spec.seed))
    shapes = np.asarray(spec.shape, dtype=np.float64)
    ellipsoids = []
    for _ in range(spec.num_ellipsoids):
        center = rng.uniform(0.2, 0.8, size=3) * (shapes - 1)
        radii = np.maximum(rng.uniform(0.08, 0.25, size=3) * shapes, 1.0)
        intensity = rng.uniform(*spec.intensity_range)
        ellipsoids.append(Ellipsoid(tuple(center), tuple(radii), float(intensity)))
    return ellipsoids


def gen_phantom(spec: PhantomSpec) -> Volume:
    """
    Generates a smooth nonnegative standard-dose phantom.

    Background uptake plus additive ellipsoids, then Gaussian blur. The same
    spec always gives the same volume.
    """
    voxels = np.full(spec.shape, spec.background, dtype=np.float64)
    for ellipsoid in sample_ellipsoids(spec):
        voxels += ellipsoid.intensity * ellipsoid.mask(spec.shape)
    if spec.blur_sigma > 0 and spec.num_ellipsoids > 0:
        voxels = gaussian_filter(voxels, sigma=spec.blur_sigma, mode="nearest")
    # blur of a nonnegative field can round to -0.0 or tiny negatives at most
    np.maximum(voxels, 0.0, out=voxels)
    logger.debug("Phantom seed %d: %d ellipsoids, max %.3f", spec.seed, spec.num_ellipsoids, voxels.max())
    return Volume.from_array(voxels)
