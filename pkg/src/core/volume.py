import numpy as np

from src.core.errors import ContractError


class Volume:
    """
    Represents an H x W x D scalar field.

    This is the unit of file IO, phantom simulation and metric evaluation.
    Voxels are stored as a float64 array of shape (H, W, D); flattening uses
    C order, so voxel (h, w, d) sits at index (h * W + w) * D + d. The point
    lattice of ``construct_points`` enumerates voxels in the same order.

    Attributes:
        _voxels (np.ndarray): The (H, W, D) array of voxel values.
    """
    def __init__(self, shape: tuple, fill_value: float = 0.0):
        """
        Initializes a constant volume.

        Args:
            shape (tuple): The (H, W, D) extents.
            fill_value (float): The initial value of every voxel.

        Raises:
            ContractError: If the shape is not three positive integers.
        """
        if len(shape) != 3 or not all(isinstance(e, (int, np.integer)) and e > 0 for e in shape):
            raise ContractError(f"Volume shape must be three positive integers, got {shape}")
        self._voxels = np.full(tuple(int(e) for e in shape), fill_value, dtype=np.float64)

    @property
    def shape(self) -> tuple:
        """Returns the (H, W, D) extents."""
        return self._voxels.shape

    @property
    def size(self) -> int:
        return self._voxels.size

    @property
    def voxels(self) -> np.ndarray:
        """Returns the (H, W, D) voxel array (not a copy)."""
        return self._voxels

    def flat(self) -> np.ndarray:
        """Returns the voxels as a length H*W*D vector in lattice order."""
        return self._voxels.reshape(-1)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self._voxels)))

    @classmethod
    def from_array(cls, array, shape: tuple | None = None) -> "Volume":
        """
        Creates a Volume from an existing array.

        Args:
            array: A (H, W, D) array, or a flat array when ``shape`` is given.
            shape (tuple | None): Target shape for flat input.

        Returns:
            A Volume holding a float64 copy of the values.
        """
        data = np.array(array, dtype=np.float64)
        if shape is not None:
            if data.size != int(np.prod(shape)):
                raise ContractError(f"{data.size} values do not fill a volume of shape {tuple(shape)}")
            data = data.reshape(shape)
        if data.ndim != 3:
            raise ContractError(f"Volume data must be three-dimensional, got shape {data.shape}")
        volume = cls(data.shape)
        volume._voxels = data
        return volume

    def __eq__(self, other) -> bool:
        if not isinstance(other, Volume):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self._voxels, other._voxels)

    def __repr__(self) -> str:
        return f"Volume(shape={self.shape})"
