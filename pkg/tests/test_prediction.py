import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from core.errors import InputError, IntegrityError, PipelineOrderError
from core.lod_builder import LodConfig, build_lod
from core.metrics import empirical_entropy
from core.prediction import (idw_predict, idw_predict_batch, idw_predict_exact, predict_points, reconstruct,
                             residuals_for_layer)
from core.synthetic import gradient_cloud


@pytest.mark.parametrize('attrs, dists, expected', [
    ([8, 16], [1, 2], 10),
    ([100], [3], 100),
    ([0, 1], [1, 1], 1),
    ([-1, 0], [1, 1], -1),
    ([10, 20, 30], [2, 2, 2], 20),
])
def test_idw_known_values(attrs, dists, expected):
    assert idw_predict(attrs, dists) == expected
    assert idw_predict_exact(attrs, dists) == expected


@given(st.lists(st.tuples(st.integers(-255, 255), st.integers(1, 40)), min_size=1, max_size=11))
@settings(max_examples=200, deadline=None)
def test_float_path_matches_exact_rationals(pairs):
    attrs = [a for a, _ in pairs]
    dists = [d for _, d in pairs]
    assert idw_predict(attrs, dists) == idw_predict_exact(attrs, dists)


def test_batch_prediction_stays_within_neighbor_range(rng):
    attrs = rng.integers(0, 256, size=(1000, 7))
    dists = rng.integers(1, 20, size=(1000, 7))
    predicted = idw_predict_batch(attrs, dists)
    assert np.all(predicted >= attrs.min(axis=1))
    assert np.all(predicted <= attrs.max(axis=1))


def test_invalid_neighbors_rejected():
    with pytest.raises(InputError):
        idw_predict([], [])
    with pytest.raises(InputError):
        idw_predict([1, 2], [1, 0])


def test_reconstruct_checks_range():
    assert reconstruct(100, -5) == 95
    assert reconstruct(np.array([0, -255]), np.array([255, 510]), -255, 255).tolist() == [255, 255]
    with pytest.raises(IntegrityError):
        reconstruct(250, 10)


def test_residuals_beat_raw_entropy_on_smooth_clouds():
    cloud = gradient_cloud(count=3000, extent=40, seed=7, single=True)
    values = cloud.attribute_matrix()
    lod = build_lod(cloud.positions, LodConfig(T=3, L=8, k=5))
    residuals = np.concatenate([residuals_for_layer(values, lod, t) for t in range(3, 8)
                                if lod.layers[t].size])
    points = np.concatenate(lod.inference_layers)
    assert empirical_entropy(residuals) <= empirical_entropy(values[points, 0])


def test_prediction_order_enforced():
    cloud = gradient_cloud(count=400, extent=16, seed=8, single=True)
    values = cloud.attribute_matrix()[:, 0]
    lod = build_lod(cloud.positions, LodConfig(T=2, L=5, k=3))
    available = np.zeros(cloud.num_points, dtype=bool)
    with pytest.raises(PipelineOrderError):
        predict_points(values, lod, lod.inference_layers[0], available)
    with pytest.raises(PipelineOrderError):
        predict_points(values, lod, lod.base_order[:1])
    available[lod.base_order] = True
    assert predict_points(values, lod, lod.inference_layers[0], available).shape == lod.inference_layers[0].shape
