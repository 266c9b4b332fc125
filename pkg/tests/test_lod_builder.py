import numpy as np
import pytest

from core.errors import ConfigError, InputError
from core.lod_builder import (NO_NEIGHBOR, LodConfig, build_base_layers, build_inference_layers, build_lod,
                              default_schedule, knn_base_layers, knn_for_layer, manhattan, validate_schedule)
from core.synthetic import gradient_cloud


def _brute_knn(query, candidates, ids, k):
    d = np.abs(query[None, :] - candidates).sum(axis=1)
    order = np.lexsort((ids, d))[:k]
    return ids[order].tolist(), d[order].tolist()


def test_inference_layers_uniform_sampling():
    layers = build_inference_layers(np.arange(6), 3)
    assert [layer.tolist() for layer in layers] == [[0, 3], [1, 4], [2, 5]]
    with pytest.raises(ConfigError):
        build_inference_layers(np.arange(6), 0)


def test_validate_schedule():
    assert validate_schedule((8, 4, 2), 3) == []
    assert validate_schedule((2, 4, 1), 3)
    assert validate_schedule((4, 2), 3)
    assert validate_schedule((4, -1, 0), 3)
    assert validate_schedule((4, 4, 2), 3)
    assert validate_schedule((8, 2, 2), 3)
    assert validate_schedule((8, 0, 0), 3) == []
    assert validate_schedule((0, 0, 0), 3) == []


def test_default_schedule_is_geometric():
    cloud = gradient_cloud(count=2000, extent=32, seed=0)
    schedule = default_schedule(cloud.positions, 4, 0.05)
    assert len(schedule) == 4
    assert all(a == 2 * b for a, b in zip(schedule, schedule[1:]))
    assert schedule[-1] >= 1


def test_default_schedule_for_tiny_cloud_is_zero():
    assert default_schedule(np.array([[0, 0, 0], [1, 0, 0]]), 3, 0.5) == (0, 0, 0)


def test_knn_matches_brute_force_with_ties(rng):
    candidates = rng.integers(0, 6, size=(80, 3))
    candidates = np.unique(candidates, axis=0)
    queries = rng.integers(0, 6, size=(40, 3))
    ids = np.arange(candidates.shape[0]) * 3
    got_ids, got_d = knn_for_layer(queries, candidates, 7, candidate_ids=ids)
    for q, row_ids, row_d in zip(queries, got_ids, got_d):
        want_ids, want_d = _brute_knn(q, candidates, ids, 7)
        assert row_ids.tolist() == want_ids
        assert row_d.tolist() == want_d


def test_knn_pads_with_nearest_when_few_candidates():
    ids, dists = knn_for_layer(np.array([[0, 0, 0]]), np.array([[1, 0, 0], [3, 0, 0]]), 4)
    assert ids.tolist() == [[0, 1, 0, 0]]
    assert dists.tolist() == [[1, 3, 1, 1]]


def test_base_neighbors_are_causal(rng):
    positions = np.unique(rng.integers(0, 10, size=(300, 3)), axis=0)
    order = rng.permutation(positions.shape[0])
    ids, dists = knn_base_layers(positions, order, 5, chunk_size=32)
    assert np.all(ids[0] == NO_NEIGHBOR)
    for i in range(1, order.shape[0]):
        prefix = order[:i]
        want_ids, want_d = _brute_knn(positions[order[i]], positions[prefix], prefix, 5)
        got = ids[i].tolist()
        assert got[:len(want_ids)] == want_ids
        assert dists[i].tolist()[:len(want_d)] == want_d


def test_base_layers_respect_thresholds():
    cloud = gradient_cloud(count=1500, extent=32, seed=5)
    schedule = (8, 4, 2)
    layers, remainder = build_base_layers(cloud.positions, 3, schedule)
    accepted = []
    for threshold, layer in zip(schedule, layers):
        for point in layer:
            if accepted:
                assert manhattan(cloud.positions[accepted], cloud.positions[point]).min() > threshold
            accepted.append(int(point))
    assert np.intersect1d(np.asarray(accepted), remainder).size == 0
    assert len(accepted) + remainder.size == cloud.num_points


def test_zero_threshold_accepts_everything_left():
    positions = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]])
    layers, remainder = build_base_layers(positions, 2, (5, 0))
    assert layers[0].tolist() == [0]
    assert sorted(layers[1].tolist()) == [1, 2]
    assert remainder.size == 0


def test_build_lod_structure():
    cloud = gradient_cloud(count=1200, extent=24, seed=6)
    config = LodConfig(T=3, L=7, k=5)
    lod = build_lod(cloud.positions, config)
    assert lod.num_layers == 7
    assert len(lod.inference_layers) == 4
    every = np.sort(np.concatenate(lod.layers))
    assert np.array_equal(every, np.arange(cloud.num_points))

    for index, layer in enumerate(lod.inference_layers, start=config.T):
        if not layer.size:
            continue
        assert np.all(lod.layer_of_point[lod.neighbors[layer]] < index)
    rest = lod.base_order[1:]
    assert np.all(lod.distances[rest] >= 1)
    assert build_lod(cloud.positions, config).digest() == lod.digest()


def test_build_lod_rejects_bad_input():
    with pytest.raises(InputError):
        build_lod(np.zeros((0, 3), dtype=np.int64), LodConfig(T=2, L=4, k=3))
    with pytest.raises(ConfigError):
        build_lod(np.array([[0, 0, 0]]), LodConfig(T=4, L=4, k=3))
    with pytest.raises(ConfigError):
        build_lod(np.array([[0, 0, 0], [1, 1, 1]]), LodConfig(T=2, L=4, k=3), schedule=(1, 2))
