import numpy as np
import pytest

from core.errors import InputError
from core.lod_builder import build_lod
from core.metrics import (cloud_label_histogram, empirical_entropy, label_histogram, nn_density,
                          sampled_density_curve)
from core.synthetic import isolated_cloud, solid_cube


def test_isolated_points_have_unit_density():
    assert nn_density(isolated_cloud(count=150, spacing=6)) == 1.0


def test_solid_cube_density():
    cube = solid_cube(extent=8)
    # Interior points see the full 5x5x5 window
    assert 27.0 < nn_density(cube) < 125.0
    assert nn_density(cube, kernel_radius=0) == 1.0


def test_density_curve_is_non_increasing():
    curve = sampled_density_curve(solid_cube(extent=16), seed=3)
    assert list(curve.columns) == ['ratio', 'nn', 'points']
    assert curve['points'].iloc[0] == 16 ** 3
    assert np.all(np.diff(curve['nn'].to_numpy()) <= 1e-12)
    assert np.all(curve['nn'] >= 1.0)


def test_density_curve_seeded():
    cube = solid_cube(extent=12)
    first = sampled_density_curve(cube, [0.5, 0.1], seed=7)
    second = sampled_density_curve(cube, [0.5, 0.1], seed=7)
    assert first.equals(second)


@pytest.mark.parametrize('ratio', [0.0, -0.5, 1.5])
def test_density_curve_rejects_bad_ratio(ratio):
    with pytest.raises(InputError):
        sampled_density_curve(np.zeros((4, 3)) + np.arange(4)[:, None], [ratio])


def test_empty_inputs_rejected():
    with pytest.raises(InputError):
        nn_density(np.zeros((0, 3)))
    with pytest.raises(InputError):
        empirical_entropy([])


def test_empirical_entropy():
    assert empirical_entropy([5, 5, 5]) == 0.0
    assert empirical_entropy([0, 1, 2, 3]) == pytest.approx(2.0)
    assert empirical_entropy([0, 0, 0, 1]) == pytest.approx(0.8112781244591328)


def test_label_histogram():
    histogram = label_histogram([0, 3, 3, 342], 343)
    assert histogram.shape == (343,)
    assert histogram[3] == 2 and histogram.sum() == 4
    with pytest.raises(InputError):
        label_histogram([343], 343)


def test_cloud_label_histogram_counts_every_neighbor(small_config, rgb_cloud):
    lod = build_lod(rgb_cloud.positions, small_config.lod)
    histogram = cloud_label_histogram(rgb_cloud.positions, lod, small_config.dald)
    inference = sum(layer.shape[0] for layer in lod.inference_layers)
    assert histogram.sum() == inference * small_config.dald.k
    # The center label (0, 0, 0) never occurs: neighbors are distinct points
    center = (small_config.dald.label_alphabet - 1) // 2
    assert histogram[center] == 0
