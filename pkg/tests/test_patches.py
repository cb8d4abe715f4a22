import numpy as np
import pytest

from src.core.errors import ContractError
from src.core.volume import Volume
from src.data.patches import assemble_patches, extract_patches, make_patch_grid


def test_full_scale_patch_count():
    grid = make_patch_grid((128, 128, 128), 64, 8)
    assert len(grid) == 729
    assert grid.origins[0] == (0, 0, 0)
    assert grid.origins[-1] == (64, 64, 64)


def test_patch_as_large_as_the_volume():
    assert make_patch_grid((16, 16, 16), 16, 4).origins == ((0, 0, 0),)


def test_three_origins_per_axis():
    grid = make_patch_grid((32, 32, 32), 16, 8)
    assert len(grid) == 27
    assert grid.origins[1] == (0, 0, 8)


def test_extract_then_assemble_is_exact():
    volume = Volume.from_array(np.random.default_rng(0).random((20, 24, 16)))
    grid, patches = extract_patches(volume, 8, 4)
    assert all(p.shape == (8, 8, 8) for p in patches)
    assert assemble_patches(grid, patches) == volume


def test_overlap_is_the_mean_of_the_covering_patches():
    grid = make_patch_grid((4, 4, 6), 4, 2)
    assert len(grid) == 2
    merged = assemble_patches(grid, [Volume((4, 4, 4), fill_value=1.0), Volume((4, 4, 4), fill_value=3.0)])
    np.testing.assert_array_equal(merged.voxels[:, :, :2], 1.0)
    np.testing.assert_array_equal(merged.voxels[:, :, 2:4], 2.0)
    np.testing.assert_array_equal(merged.voxels[:, :, 4:], 3.0)


def test_stride_that_does_not_tile_lists_admissible_strides():
    with pytest.raises(ContractError, match=r"admissible strides: \[1, 2, 4, 8\]"):
        make_patch_grid((24, 24, 24), 16, 3)


def test_patch_larger_than_volume_is_rejected():
    with pytest.raises(ContractError):
        make_patch_grid((8, 8, 8), 16, 1)


def test_assemble_checks_the_patch_list():
    grid = make_patch_grid((8, 8, 8), 4, 4)
    with pytest.raises(ContractError):
        assemble_patches(grid, [Volume((4, 4, 4))] * 7)
    with pytest.raises(ContractError):
        assemble_patches(grid, [Volume((4, 4, 4))] * 7 + [Volume((2, 2, 2))])
