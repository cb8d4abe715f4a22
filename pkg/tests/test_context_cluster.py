import math

import numpy as np
import pytest

from src.clustering.context_cluster import (TIE_TOLERANCE, ClusterAssignment, ClusterParams, FrozenRouting,
                                            aggregate_cluster, aggregate_clusters,
                                            assign_clusters, context_cluster_layer, dispatch_cluster,
                                            dispatch_clusters, effective_centers_per_axis, propose_centers)
from src.core import ops
from src.core.errors import ContractError
from src.core.gradcheck import finite_diff_check
from src.core.tensor import GradTape, Tensor, backward_gradients
from src.points.point_set import PointSet, lattice_coords

SIG1 = 1.0 / (1.0 + math.exp(-1.0))


def _lattice_points(features: np.ndarray, side: int = 2) -> PointSet:
    shape = (side, side, side)
    return PointSet(Tensor(features), lattice_coords(shape), shape)


def test_single_point_gives_one_center_equal_to_it():
    points = PointSet(Tensor([[0.3], [-1.2]]), np.zeros((3, 1)))
    centers = propose_centers(points, 4, 9)
    np.testing.assert_array_equal(centers.data, [[0.3], [-1.2]])


def test_uniform_features_give_uniform_centers():
    points = _lattice_points(np.repeat([[0.7], [0.2], [-0.5]], 64, axis=1), side=4)
    centers = propose_centers(points, 2, 8)
    assert centers.shape == (3, 8)
    np.testing.assert_allclose(centers.data, np.repeat([[0.7], [0.2], [-0.5]], 8, axis=1), rtol=1e-12)


def test_centers_on_two_cubed_lattice_copy_the_nearest_point():
    features = np.random.default_rng(0).normal(size=(3, 8))
    centers = propose_centers(_lattice_points(features), 2, 1)
    # anchor (i+0.5)/2 is nearest to lattice corner i, and both enumerate in C order
    np.testing.assert_array_equal(centers.data, features)


def test_effective_centers_never_outnumber_points():
    assert effective_centers_per_axis(4, 64) == 4
    assert effective_centers_per_axis(4, 63) == 3
    assert effective_centers_per_axis(4, 7) == 1
    with pytest.raises(ContractError):
        propose_centers(PointSet(Tensor(np.ones((1, 0))), np.zeros((3, 0))), 2, 1)


def test_single_center_takes_every_point():
    points = PointSet(Tensor(np.random.default_rng(1).normal(size=(4, 20))), np.zeros((3, 20)))
    assignment = assign_clusters(points, Tensor(np.ones((4, 1))))
    np.testing.assert_array_equal(assignment.member_of, np.zeros(20, dtype=int))
    assert assignment.sizes().tolist() == [20]


def test_point_equal_to_a_center_joins_it_with_similarity_one():
    centers = Tensor([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    points = PointSet(Tensor([[0.0], [2.0], [0.0]]), np.zeros((3, 1)))
    assignment = assign_clusters(points, centers)
    assert assignment.member_of[0] == 1
    assert assignment.similarity.data[0] == pytest.approx(1.0)


def test_hand_built_assignment_in_two_dimensions():
    features = Tensor([[1.0, 0.9, -0.1, -1.0], [0.1, -0.2, 1.0, 0.8]])
    centers = Tensor([[1.0, 0.0], [0.0, 1.0]])
    assignment = assign_clusters(PointSet(features, np.zeros((3, 4))), centers)
    np.testing.assert_array_equal(assignment.member_of, [0, 0, 1, 1])
    assert assignment.members(1).tolist() == [2, 3]


def test_equal_similarity_goes_to_lowest_center_index():
    centers = Tensor([[1.0, 0.0], [0.0, 1.0]])
    assignment = assign_clusters(PointSet(Tensor([[1.0], [1.0]]), np.zeros((3, 1))), centers)
    assert assignment.member_of[0] == 0


def test_assignment_matches_exhaustive_argmax():
    for seed in range(100):
        rng = np.random.default_rng(seed)
        features = Tensor(rng.normal(size=(5, 30)))
        centers = Tensor(rng.normal(size=(5, 6)))
        assignment = assign_clusters(PointSet(features, rng.random((3, 30))), centers)
        for i in range(30):
            sims = [float(features.data[:, i] @ centers.data[:, j])
                    / (np.linalg.norm(features.data[:, i]) * np.linalg.norm(centers.data[:, j])) for j in range(6)]
            assert assignment.member_of[i] == int(np.argmax(sims))


def test_aggregate_of_members_equal_to_center_is_the_center():
    v = np.array([0.4, -1.1, 2.0])
    g = aggregate_cluster(np.repeat(v[:, None], 5, axis=1), np.linspace(-1, 1, 5), v, ClusterParams.initial())
    np.testing.assert_allclose(g.data, v, rtol=1e-12)


def test_empty_cluster_aggregates_to_its_center():
    g = aggregate_cluster(np.zeros((2, 0)), np.zeros(0), np.array([3.0, -4.0]), ClusterParams.initial())
    np.testing.assert_array_equal(g.data, [3.0, -4.0])


def test_aggregate_by_hand():
    g = aggregate_cluster(np.array([[1.0], [0.0]]), np.array([1.0]), np.array([2.0, 0.0]), ClusterParams.initial())
    assert g.data[0] == pytest.approx(1.57777, abs=1e-4)
    assert g.data[1] == 0.0


def test_dispatch_of_zero_aggregate_leaves_members():
    members = np.random.default_rng(2).normal(size=(3, 4))
    out = dispatch_cluster(members, np.ones(4), np.zeros(3), ClusterParams.initial())
    np.testing.assert_array_equal(out.data, members)


def test_dispatch_at_sigmoid_midpoint_adds_half_the_aggregate():
    members = np.array([[1.0, 2.0], [0.0, -1.0]])
    out = dispatch_cluster(members, np.zeros(2), np.array([2.0, 4.0]), ClusterParams.initial())
    np.testing.assert_array_equal(out.data, members + np.array([[1.0], [2.0]]))


def test_dispatch_by_hand():
    out = dispatch_cluster(np.array([[1.0], [0.0]]), np.array([1.0]), np.array([2.0, 2.0]), ClusterParams.initial())
    np.testing.assert_allclose(out.data[:, 0], [2.46212, 1.46212], atol=1e-4)


@pytest.mark.parametrize("seed", range(100))
def test_all_cluster_forms_match_per_cluster_forms(seed):
    rng = np.random.default_rng(seed)
    params = ClusterParams(Tensor([rng.uniform(0.5, 2.0)]), Tensor([rng.uniform(-0.5, 0.5)]))
    c, n = 5, 30
    features = Tensor(rng.normal(size=(4, n)))
    assignment = ClusterAssignment(Tensor(rng.normal(size=(4, c))), rng.integers(0, c, size=n),
                                   Tensor(rng.uniform(-1.0, 1.0, size=n)))
    aggregated = aggregate_clusters(features, assignment, params)
    dispatched = dispatch_clusters(features, assignment, aggregated, params)
    for j in range(c):
        idx = assignment.members(j)
        members, sims = features.data[:, idx], assignment.similarity.data[idx]
        center = assignment.center_features.data[:, j]
        g = aggregate_cluster(members, sims, center, params).data
        np.testing.assert_allclose(aggregated.data[:, j], g, rtol=0.0, atol=1e-12)
        np.testing.assert_allclose(dispatched.data[:, idx], dispatch_cluster(members, sims, g, params).data,
                                   rtol=0.0, atol=1e-12)
        hull = np.concatenate([members, center[:, None]], axis=1)
        assert np.all(g >= hull.min(axis=1) - 1e-12) and np.all(g <= hull.max(axis=1) + 1e-12)


def test_layer_with_singleton_clusters():
    features = np.random.default_rng(3).normal(size=(4, 8))
    out = context_cluster_layer(_lattice_points(features), ClusterParams.initial(), 2, 1)
    np.testing.assert_allclose(out.features.data, features + SIG1 * features, rtol=1e-10, atol=1e-12)


def test_layer_keeps_a_uniform_field_uniform():
    points = _lattice_points(np.repeat([[0.5], [-0.25]], 27, axis=1), side=3)
    out = context_cluster_layer(points, ClusterParams.initial(), 2, 4).features.data
    np.testing.assert_allclose(out, np.repeat(out[:, :1], 27, axis=1), rtol=1e-12)


def test_layer_keeps_coordinates_and_lattice():
    points = _lattice_points(np.random.default_rng(4).normal(size=(3, 64)), side=4)
    out = context_cluster_layer(points, ClusterParams.initial(), 2, 8)
    assert out.coords is points.coords
    assert out.grid_shape == (4, 4, 4)
    assert out.features.shape == (3, 64)


def test_similarity_gradient_reaches_alpha_and_beta():
    params = ClusterParams.initial()
    points = _lattice_points(np.random.default_rng(5).normal(size=(3, 8)))
    with GradTape() as tape:
        loss = ops.sum_(context_cluster_layer(points, params, 1, 8).features)
    grads = backward_gradients(loss, tape, wrt=[params.alpha, params.beta])
    assert np.all(np.isfinite(grads[params.alpha.node_id].data))
    assert grads[params.beta.node_id].data[0] != 0.0


@pytest.mark.parametrize("offset", [0.0, 1e-5])
def test_centers_over_one_neighbor_set_are_bitwise_equal(offset):
    rng = np.random.default_rng(6)
    features = rng.normal(size=(3, 8)) + offset * rng.normal(size=(3, 8))
    points = _lattice_points(features)
    centers = propose_centers(points, 2, 8)
    assert centers.shape == (3, 8)
    assert np.all(centers.data == centers.data[:, :1])
    np.testing.assert_array_equal(assign_clusters(points, centers).member_of, np.zeros(8, dtype=int))


def test_frozen_routing_replays_the_first_assignment():
    centers = Tensor(np.eye(2))
    first = PointSet(Tensor([[1.0], [0.0]]), np.zeros((3, 1)))
    second = PointSet(Tensor([[0.0], [1.0]]), np.zeros((3, 1)))
    with FrozenRouting() as routing:
        assert assign_clusters(first, centers).member_of.tolist() == [0]
        routing.rewind()
        replayed = assign_clusters(second, centers)
    assert replayed.member_of.tolist() == [0]
    assert replayed.similarity.data[0] == 0.0
    assert len(routing.assignments) == 1
    assert assign_clusters(second, centers).member_of.tolist() == [1]


def test_layer_is_equivariant_under_point_permutation():
    rng = np.random.default_rng(7)
    features, coords = rng.normal(size=(4, 64)), rng.random((3, 64))
    params = ClusterParams(Tensor([1.3]), Tensor([-0.2]))
    out = context_cluster_layer(PointSet(Tensor(features), coords), params, 2, 8).features.data
    order = rng.permutation(64)
    shuffled = PointSet(Tensor(features[:, order]), coords[:, order])
    permuted_out = context_cluster_layer(shuffled, params, 2, 8).features.data
    restored = np.empty_like(permuted_out)
    restored[:, order] = permuted_out
    np.testing.assert_allclose(restored, out, rtol=1e-12, atol=1e-12)


def _oracle_assignment(features: np.ndarray, centers: np.ndarray) -> list[int]:
    owners = []
    for i in range(features.shape[1]):
        v = features[:, i]
        sims = [float(v @ centers[:, j]) / (math.sqrt(float(v @ v)) * math.sqrt(float(centers[:, j] @ centers[:, j])))
                for j in range(centers.shape[1])]
        best = max(sims)
        owners.append(next(j for j, s in enumerate(sims) if s >= best - TIE_TOLERANCE))
    return owners


@pytest.mark.parametrize("seed", range(100))
def test_assignment_matches_exhaustive_argmax_with_ties(seed):
    rng = np.random.default_rng(seed)
    n, c, d = int(rng.integers(1, 257)), int(rng.integers(1, 28)), int(rng.integers(2, 7))
    centers = rng.normal(size=(d, c))
    features = rng.normal(size=(d, n))
    if c >= 2:
        # a scaled copy of an earlier center has the same direction
        low, high = sorted(rng.choice(c, size=2, replace=False))
        centers[:, high] = 3.0 * centers[:, low]
        # some points sit exactly on that shared direction
        features[:, : n // 4] = centers[:, [low]] * rng.uniform(0.5, 2.0, size=n // 4)
    assignment = assign_clusters(PointSet(Tensor(features), rng.random((3, n))), Tensor(centers))
    assert assignment.member_of.tolist() == _oracle_assignment(features, centers)
    if c >= 2:
        assert high not in assignment.member_of.tolist()


def _cluster_case(seed: int):
    rng = np.random.default_rng(seed)
    members = rng.normal(size=(3, 5))
    sims = rng.uniform(-1.0, 1.0, size=5)
    center = rng.normal(size=3)
    alpha, beta = np.array([rng.uniform(0.5, 2.0)]), np.array([rng.uniform(-0.5, 0.5)])
    weights = Tensor(np.linspace(0.5, 1.5, 15).reshape(3, 5))
    return members, sims, center, alpha, beta, weights


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("wrt", ["members", "similarities", "center", "alpha", "beta"])
def test_aggregate_gradient_matches_central_differences(seed, wrt):
    members, sims, center, alpha, beta, weights = _cluster_case(seed)
    args = {"members": members, "similarities": sims, "center": center, "alpha": alpha, "beta": beta}

    def f(p):
        given = {name: Tensor(value) for name, value in args.items()}
        given[wrt] = p
        g = aggregate_cluster(given["members"], given["similarities"], given["center"],
                              ClusterParams(given["alpha"], given["beta"]))
        return ops.sum_(ops.mul(g, Tensor(weights.data[:, 0])))

    assert finite_diff_check(f, Tensor(args[wrt])) < 1e-6


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("wrt", ["members", "similarities", "aggregate", "alpha", "beta"])
def test_dispatch_gradient_matches_central_differences(seed, wrt):
    members, sims, center, alpha, beta, weights = _cluster_case(seed)
    args = {"members": members, "similarities": sims, "aggregate": center, "alpha": alpha, "beta": beta}

    def f(p):
        given = {name: Tensor(value) for name, value in args.items()}
        given[wrt] = p
        out = dispatch_cluster(given["members"], given["similarities"], given["aggregate"],
                               ClusterParams(given["alpha"], given["beta"]))
        return ops.sum_(ops.mul(out, weights))

    assert finite_diff_check(f, Tensor(args[wrt])) < 1e-6
