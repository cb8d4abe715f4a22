import numpy as np
import pytest

from src.core.errors import ContractError, TooManyAnchorsError
from src.core.tensor import Tensor
from src.core.volume import Volume
from src.points.anchors import anchor_grid
from src.points.knn import SpatialHash, brute_force_knn, cached_knn_indices, knn_indices
from src.points.point_set import PointSet, construct_points, lattice_coords, revert_points

PASS_THROUGH = (Tensor([[1.0, 0.0, 0.0, 0.0]]), Tensor([0.0]))
UNIT_HEAD = (Tensor([[1.0]]), Tensor([0.0]))


def _points(n: int, width: int = 1) -> PointSet:
    return PointSet(Tensor(np.ones((width, n))), np.zeros((3, n)))


def test_construct_two_cubed_volume():
    volume = Volume.from_array(np.arange(8.0).reshape(2, 2, 2))
    weight = Tensor(np.random.default_rng(0).normal(size=(5, 4)))
    points = construct_points(volume, weight, Tensor(np.zeros(5)))
    assert points.n == 8
    assert points.width == 5
    assert points.grid_shape == (2, 2, 2)


def test_construct_single_voxel_has_zero_coords():
    points = construct_points(Volume((1, 1, 1), fill_value=3.0), *PASS_THROUGH)
    np.testing.assert_array_equal(points.coords, np.zeros((3, 1)))
    assert points.features.item() == 3.0


def test_lattice_coords_count_and_order():
    coords = lattice_coords((64, 64, 64))
    assert coords.shape == (3, 262144)
    small = lattice_coords((2, 3, 4))
    # voxel (h, w, d) sits at (h * W + w) * D + d
    np.testing.assert_array_equal(small[:, (1 * 3 + 2) * 4 + 3], [1.0, 1.0, 1.0])
    np.testing.assert_array_equal(small[:, 4], [0.0, 0.5, 0.0])


def test_construct_revert_round_trip_is_exact():
    volume = Volume.from_array(np.random.default_rng(1).random((3, 5, 4)))
    assert revert_points(construct_points(volume, *PASS_THROUGH), *UNIT_HEAD) == volume


def test_revert_with_zero_head_gives_zero_volume():
    volume = Volume.from_array(np.random.default_rng(2).random((2, 2, 2)))
    points = construct_points(volume, *PASS_THROUGH)
    assert revert_points(points, Tensor([[0.0]]), Tensor([0.0])) == Volume((2, 2, 2))


def test_revert_extracts_channel_in_lattice_order():
    features = Tensor(np.stack([np.arange(8.0), -np.arange(8.0)]))
    points = PointSet(features, lattice_coords((2, 2, 2)), (2, 2, 2))
    volume = revert_points(points, Tensor([[1.0, 0.0]]), Tensor([0.0]))
    np.testing.assert_array_equal(volume.voxels, np.arange(8.0).reshape(2, 2, 2))
    assert volume.voxels[1, 0, 1] == 5.0


def test_revert_needs_a_lattice():
    with pytest.raises(ContractError):
        revert_points(_points(3), *UNIT_HEAD)


def test_point_set_rejects_coordinates_outside_unit_cube():
    with pytest.raises(ContractError):
        PointSet(Tensor(np.ones((1, 2))), np.full((3, 2), 1.5))


def test_single_anchor_sits_at_cell_center():
    np.testing.assert_array_equal(anchor_grid(_points(1), 1), [[0.5], [0.5], [0.5]])


def test_two_anchors_per_axis():
    anchors = anchor_grid(_points(8), 2)
    assert anchors.shape == (3, 8)
    assert {tuple(a) for a in anchors.T} == {(x, y, z) for x in (0.25, 0.75) for y in (0.25, 0.75)
                                             for z in (0.25, 0.75)}


def test_anchor_count_is_an_eighth_of_the_full_scale_lattice():
    assert anchor_grid(_points(64 ** 3), 32).shape == (3, 32768)


def test_too_many_anchors_is_rejected():
    with pytest.raises(TooManyAnchorsError):
        anchor_grid(_points(7), 2)


def test_knn_query_on_a_point_returns_it():
    coords = np.random.default_rng(3).random((3, 50))
    assert knn_indices(coords, coords[:, [17]], 1)[0, 0] == 17


def test_knn_collinear_points():
    coords = np.array([[0.0, 0.5, 1.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
    np.testing.assert_array_equal(knn_indices(coords, np.zeros((3, 1)), 2), [[0, 1]])


def test_knn_breaks_distance_ties_by_index():
    offsets = np.array([[0.25, -0.25, 0, 0, 0, 0], [0, 0, 0.25, -0.25, 0, 0], [0, 0, 0, 0, 0.25, -0.25]])
    coords = 0.5 + offsets
    np.testing.assert_array_equal(knn_indices(coords, np.full((3, 1), 0.5), 3), [[0, 1, 2]])


@pytest.mark.parametrize("seed", range(5))
def test_knn_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    coords = rng.random((3, 300))
    queries = rng.random((3, 40))
    for k in (1, 8, 27):
        np.testing.assert_array_equal(knn_indices(coords, queries, k), brute_force_knn(coords, queries, k))


def test_knn_on_a_lattice_with_many_ties_matches_brute_force():
    coords = lattice_coords((6, 6, 6))
    anchors = anchor_grid(_points(216), 3)
    np.testing.assert_array_equal(knn_indices(coords, anchors, 8), brute_force_knn(coords, anchors, 8))


def test_knn_rejects_k_larger_than_point_count():
    with pytest.raises(ContractError):
        knn_indices(np.zeros((3, 4)), np.zeros((3, 1)), 5)


def test_spatial_hash_ring_zero_holds_the_points_of_the_own_cell():
    coords = np.random.default_rng(4).random((3, 200))
    index = SpatialHash(coords)
    space = index.point_to_space(coords[:, [5]])[:, 0]
    members = index.ring(space, 0)
    assert 5 in members
    np.testing.assert_array_equal(index.point_to_space(coords[:, members]), np.repeat(space[:, None], members.size, 1))


def test_cached_knn_is_read_only_and_equal():
    rng = np.random.default_rng(5)
    coords, queries = rng.random((3, 64)), rng.random((3, 8))
    cached = cached_knn_indices(coords, queries, 4)
    np.testing.assert_array_equal(cached, knn_indices(coords, queries, 4))
    assert not cached.flags.writeable
    assert cached_knn_indices(coords, queries, 4) is cached
