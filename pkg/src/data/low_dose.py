import numpy as np

from src.core.errors import ContractError
from src.core.volume import Volume

COUNTS_PER_UNIT = 50.0
QUARTER_DOSE = 0.25


def simulate_low_dose(spet: Volume, dose_fraction: float = QUARTER_DOSE, seed: int = 0,
                      scale: float = COUNTS_PER_UNIT) -> Volume:
    """
    Thins a standard-dose volume to a lower count level with Poisson noise.

    Each voxel draws Poisson(dose_fraction * scale * value) counts, which are
    divided back by dose_fraction * scale, so the result is an unbiased but
    noisier estimate of the input. numpy's Poisson sampler inverts the CDF for
    small means and uses a rejection method for large ones; the Philox
    counter-based generator keeps draws reproducible across platforms.

    Args:
        spet (Volume): Nonnegative standard-dose volume.
        dose_fraction (float): Fraction of the standard counts, in (0, 1].
        seed (int): Seed of the noise draw.
        scale (float): Counts per unit intensity at full dose.

    Raises:
        ContractError: On negative voxels or parameters out of range.
    """
    if not 0.0 < dose_fraction <= 1.0:
        raise ContractError(f"dose_fraction must lie in (0, 1], got {dose_fraction}")
    if scale <= 0:
        raise ContractError(f"scale must be positive, got {scale}")
    if np.any(spet.voxels < 0):
        raise ContractError("simulate_low_dose: standard-dose volume has negative voxels")
    rng = np.random.Generator(np.random.Philox(seed))
    counts_per_unit = dose_fraction * scale
    counts = rng.poisson(counts_per_unit * spet.voxels)
    return Volume.from_array(counts / counts_per_unit)
