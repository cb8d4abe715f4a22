"""
Invariant checks that run without a test framework (``python -m src.main selftest``).

Each check raises AssertionError with a short reason when it fails.
"""
import logging
import math
import os
import tempfile
from typing import Callable

import numpy as np

from src.clustering.context_cluster import (ClusterAssignment, ClusterParams, aggregate_cluster, aggregate_clusters,
                                            assign_clusters)
from src.config.model_config import ModelConfig
from src.config.train_config import TrainConfig
from src.core.ops import cosine_sim_matrix
from src.core.tensor import Tensor
from src.core.volume import Volume
from src.data.patches import assemble_patches, extract_patches, make_patch_grid
from src.data.volume_io import read_volume, write_volume
from src.metrics.quality import nmse, psnr, ssim
from src.network.blocks import coc_block, tcoc_block
from src.network.checkpoint import read_checkpoint, write_checkpoint
from src.network.generator import generator_forward
from src.network.params import GENERATOR, init_model_params
from src.points.knn import brute_force_knn, knn_indices
from src.points.point_set import PointSet, construct_points, revert_points
from src.training.optimizer import lr_at_epoch

logger = logging.getLogger(__name__)

CHECKS: dict[str, Callable[[np.random.Generator], None]] = {}


def check(fn):
    CHECKS[fn.__name__] = fn
    return fn


def _expect(condition: bool, reason: str):
    if not condition:
        raise AssertionError(reason)


def _rng(seed: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


@check
def knn_matches_brute_force(rng):
    coords = rng.random((3, 400))
    queries = rng.random((3, 30))
    _expect(np.array_equal(knn_indices(coords, queries, 8), brute_force_knn(coords, queries, 8)),
            "grid kNN differs from exhaustive search")


@check
def construct_revert_identity(rng):
    volume = Volume.from_array(rng.random((5, 4, 3)))
    points = construct_points(volume, Tensor([[1.0, 0.0, 0.0, 0.0]]), Tensor([0.0]))
    _expect(revert_points(points, Tensor([[1.0]]), Tensor([0.0])) == volume, "construct/revert is not identity")


@check
def cluster_assignment_oracle(rng):
    features = Tensor(rng.normal(size=(6, 64)))
    centers = Tensor(np.concatenate([features.data[:, :4], rng.normal(size=(6, 4))], axis=1))
    coords = rng.random((3, 64))
    assignment = assign_clusters(PointSet(features, coords), centers)
    sims_all = cosine_sim_matrix(features, centers).data
    for i in range(64):
        sims = sims_all[:, i]
        _expect(assignment.member_of[i] == int(np.flatnonzero(sims == sims.max())[0]),
                f"point {i} not assigned to its most similar center")


@check
def aggregate_matches_per_cluster(rng):
    params = ClusterParams(Tensor([1.3]), Tensor([-0.2]))
    features = Tensor(rng.normal(size=(5, 40)))
    centers = Tensor(rng.normal(size=(5, 4)))
    member_of = rng.integers(0, 3, size=40)  # cluster 3 stays empty
    similarity = Tensor(rng.uniform(-1.0, 1.0, size=40))
    aggregated = aggregate_clusters(features, ClusterAssignment(centers, member_of, similarity), params).data
    for j in range(4):
        idx = np.flatnonzero(member_of == j)
        single = aggregate_cluster(features.data[:, idx], similarity.data[idx], centers.data[:, j], params).data
        _expect(np.allclose(aggregated[:, j], single, rtol=0.0, atol=1e-12), f"cluster {j} aggregate differs")
        hull = np.concatenate([features.data[:, idx], centers.data[:, j:j + 1]], axis=1)
        _expect(np.all(single >= hull.min(axis=1) - 1e-12) and np.all(single <= hull.max(axis=1) + 1e-12),
                f"cluster {j} aggregate leaves the convex hull")
    _expect(np.array_equal(aggregated[:, 3], centers.data[:, 3]), "empty cluster does not aggregate to its center")


@check
def block_arithmetic(rng):
    config = ModelConfig(input_side=16, base_width=2)
    params = init_model_params(config, 0)
    volume = Volume.from_array(0.1 + rng.random((16, 16, 16)))
    points = construct_points(volume, params[f"{GENERATOR}.embed.weight"], params[f"{GENERATOR}.embed.bias"])
    skips = [points]
    for i, per_axis in enumerate(config.anchor_schedule, start=1):
        before = points
        points = coc_block(points, params.coc(f"{GENERATOR}.coc{i}"), per_axis, config.k, config.clusters_per_axis)
        _expect(points.n * 8 == before.n and points.width == 2 * before.width, f"CoC block {i} arithmetic")
        skips.append(points)
    skips.pop()
    for j in range(1, 5):
        before = points
        points = tcoc_block(points, skips.pop(), params.tcoc(f"{GENERATOR}.tcoc{j}"), config.k,
                            config.clusters_per_axis)
        _expect(points.n == 8 * before.n and points.width * 2 == before.width, f"TCoC block {j} arithmetic")
    _expect(points.n == 16 ** 3 and points.width == config.base_width, "decoder does not return to the input lattice")


@check
def zero_head_identity(rng):
    config = ModelConfig(input_side=16, base_width=2)
    params = init_model_params(config, 1)
    lpet = Volume.from_array(0.1 + rng.random((16, 16, 16)))
    _expect(generator_forward(lpet, params, config) == lpet, "zero-initialized generator is not the identity")


@check
def patch_round_trip(rng):
    volume = Volume.from_array(rng.random((24, 24, 24)))
    grid, patches = extract_patches(volume, 16, 4)
    _expect(assemble_patches(grid, patches) == volume, "extract/assemble is not identity")
    _expect(len(make_patch_grid((128, 128, 128), 64, 8)) == 729, "128^3 / 64 / 8 does not give 729 patches")


@check
def file_round_trips(rng):
    volume = Volume.from_array(rng.random((3, 4, 5)).astype(np.float32).astype(np.float64))
    params = init_model_params(ModelConfig(input_side=16, base_width=2), 2)
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "v.pccvol")
        write_volume(path, volume)
        _expect(read_volume(path) == volume, "PCCVOL round trip changed the volume")
        path = os.path.join(tmp, "p.pccckpt")
        write_checkpoint(path, params)
        loaded = read_checkpoint(path)
    _expect(list(loaded) == list(params), "checkpoint changed the parameter manifest")
    _expect(all(np.array_equal(loaded[n].data, params[n].data) for n in params), "checkpoint changed values")


@check
def learning_rate_schedule(rng):
    config = TrainConfig()
    _expect(lr_at_epoch(10, config) == 2e-4, "plateau learning rate")
    _expect(math.isclose(lr_at_epoch(100, config), 1e-4, rel_tol=1e-12), "decay midpoint")
    _expect(lr_at_epoch(150, config) == 0.0, "final learning rate")


@check
def metric_identity(rng):
    volume = Volume.from_array(0.1 + rng.random((8, 8, 8)))
    _expect(psnr(volume, volume) == math.inf, "psnr of identical volumes")
    _expect(ssim(volume, volume) == 1.0, "ssim of identical volumes")
    _expect(nmse(volume, volume) == 0.0, "nmse of identical volumes")


def run_selftest(seed: int = 0) -> list[tuple[str, bool, str]]:
    """
    Runs every registered check.

    Returns:
        (check name, passed, failure reason or empty string) per check.
    """
    results = []
    for name, fn in CHECKS.items():
        try:
            fn(_rng(seed))
            results.append((name, True, ""))
        except AssertionError as e:
            logger.error("selftest %s failed: %s", name, e)
            results.append((name, False, str(e)))
    return results
