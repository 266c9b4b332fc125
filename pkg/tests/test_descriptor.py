import math

import numpy as np
import pytest
import torch

from core.cloud_io import AttributeMode
from core.descriptor import (DaldConfig, DescriptorEmbeddings, axis_label, axis_labels, batch_mean_axis_distance,
                             build_descriptor_inputs, build_descriptors, combine_label, normalize_positions,
                             stack_inputs)
from core.errors import ConfigError, InputError
from core.lod_builder import LodConfig, build_lod
from core.pipeline import cloud_values
from core.prediction import idw_predict_batch
from core.synthetic import gradient_cloud

OBJECT_THRESHOLDS = (0.0, 1.0, 3.0, math.inf)
LIDAR_THRESHOLDS = [(0.2, 1.0, 3.0, math.inf), (0.2, 1.0, 3.0, math.inf), (0.2, 0.4, 1.0, math.inf)]


def _scan_label(delta, mean_distance, thresholds, n):
    ratio = abs(delta) / mean_distance
    for k, t in enumerate(thresholds):
        if ratio <= t:
            break
    k = min(k, n)
    sign = (delta > 0) - (delta < 0)
    return sign * k + n


@pytest.mark.parametrize('thresholds', [OBJECT_THRESHOLDS] + LIDAR_THRESHOLDS)
@pytest.mark.parametrize('mean_distance', [0.5, 1.0, 2.0])
def test_axis_labels_match_interval_scan(thresholds, mean_distance):
    deltas = np.arange(-1000, 1001)
    got = axis_labels(deltas, mean_distance, thresholds, 3)
    want = [_scan_label(int(d), mean_distance, thresholds, 3) for d in deltas]
    assert got.tolist() == want
    assert got.min() >= 0 and got.max() <= 6


def test_axis_label_examples():
    assert axis_label(2, 1.0, OBJECT_THRESHOLDS, 3) == 5
    assert axis_label(-2, 1.0, OBJECT_THRESHOLDS, 3) == 1
    assert axis_label(0, 1.0, OBJECT_THRESHOLDS, 3) == 3


def test_combined_alphabet():
    config = DaldConfig()
    assert config.label_alphabet == 343
    grid = np.arange(7)
    lx, ly, lz = np.meshgrid(grid, grid, grid, indexing='ij')
    labels = combine_label(lx, ly, lz, 3).reshape(-1)
    assert sorted(labels.tolist()) == list(range(343))


def test_config_validation():
    assert DaldConfig().validate()[0]
    ok, errors = DaldConfig(thresholds_x=(0.0, 2.0, 1.0, math.inf)).validate()
    assert not ok and errors
    assert not DaldConfig(n=2).validate()[0]
    assert DaldConfig(k=7).descriptor_dim == 7 * 15 + 6


def test_mean_axis_distance_floor():
    centers = np.array([[0, 0, 0], [2, 0, 0]])
    nearest = np.array([[1, 0, 0], [3, 0, 0]])
    assert batch_mean_axis_distance(centers, nearest).tolist() == [1.0, 1e-3, 1e-3]
    with pytest.raises(InputError):
        batch_mean_axis_distance(np.zeros((0, 3)), np.zeros((0, 3)))


def test_normalize_positions_zero_span():
    out = normalize_positions(np.array([[0, 5, 2], [10, 5, 4]]))
    assert out.tolist() == [[0.0, 0.0, 0.0], [1.0, 0.0, 1.0]]


@pytest.fixture
def batch_inputs():
    cloud = gradient_cloud(count=500, extent=20, seed=9)
    values = cloud_values(cloud)
    lod = build_lod(cloud.positions, LodConfig(T=2, L=5, k=4))
    layer = lod.inference_layers[0]
    points = np.concatenate([layer[:10], np.repeat(layer[9:10], 6)])
    predicted = np.stack([idw_predict_batch(values[lod.neighbors[points], c], lod.distances[points])
                          for c in range(3)], axis=1)
    config = DaldConfig(k=4)
    inputs = build_descriptor_inputs(cloud.positions, values, predicted, points, 10, lod, config,
                                     AttributeMode.RGB)
    return inputs, config, (cloud, values, lod, predicted, points)


def test_descriptor_inputs_shapes(batch_inputs):
    inputs, config, _ = batch_inputs
    assert inputs.positions.shape == (1, 16, 3)
    assert inputs.labels.shape == (1, 16, 4)
    assert inputs.neighbor_index.shape == (1, 16, 4, 3)
    assert inputs.real_mask.sum() == 10
    assert inputs.labels.max() < config.label_alphabet
    assert stack_inputs([inputs, inputs]).batch_count == 2


def test_descriptor_dimension(batch_inputs):
    inputs, config, _ = batch_inputs
    torch.manual_seed(0)
    embeddings = DescriptorEmbeddings(config, AttributeMode.RGB)
    descriptors = build_descriptors(inputs, embeddings)
    assert descriptors.shape == (1, 16, config.descriptor_dim)
    assert torch.isfinite(descriptors).all()


def test_channel_mismatch_rejected(batch_inputs):
    _, config, (cloud, values, lod, predicted, points) = batch_inputs
    with pytest.raises(ConfigError):
        build_descriptor_inputs(cloud.positions, values[:, :1], predicted[:, :1], points, 10, lod, config,
                                AttributeMode.RGB)
