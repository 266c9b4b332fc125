import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from core.color_transform import (YCoCgTriple, rgb_to_ycocgr, rgb_to_ycocgr_array, ycocgr_to_rgb,
                                  ycocgr_to_rgb_array)
from core.errors import InputError


@pytest.mark.parametrize('rgb, expected', [
    ((0, 0, 0), YCoCgTriple(0, 0, 0)),
    ((255, 255, 255), YCoCgTriple(255, 0, 0)),
    ((255, 0, 0), YCoCgTriple(63, 255, -127)),
    ((0, 255, 0), YCoCgTriple(127, 0, 255)),
    ((0, 0, 255), YCoCgTriple(63, -255, -127)),
])
def test_known_triples(rgb, expected):
    assert rgb_to_ycocgr(*rgb) == expected
    assert ycocgr_to_rgb(expected) == rgb


@given(st.integers(0, 255), st.integers(0, 255), st.integers(0, 255))
def test_scalar_roundtrip_and_ranges(r, g, b):
    triple = rgb_to_ycocgr(r, g, b)
    assert 0 <= triple.y <= 255
    assert -255 <= triple.co <= 255
    assert -255 <= triple.cg <= 255
    assert ycocgr_to_rgb(triple) == (r, g, b)


def test_vectorized_matches_scalar(rng):
    rgb = rng.integers(0, 256, size=(500, 3))
    ycocg = rgb_to_ycocgr_array(rgb)
    for row, out in zip(rgb.tolist(), ycocg.tolist()):
        triple = rgb_to_ycocgr(*row)
        assert out == [triple.y, triple.co, triple.cg]


def test_out_of_range_rejected():
    with pytest.raises(InputError):
        rgb_to_ycocgr(256, 0, 0)
    with pytest.raises(InputError):
        rgb_to_ycocgr_array(np.array([[0, -1, 0]]))


@pytest.mark.slow
def test_exhaustive_bijection():
    values = np.arange(256, dtype=np.int64)
    seen = np.zeros((256, 511, 511), dtype=bool)
    for r in range(256):
        g, b = np.meshgrid(values, values, indexing='ij')
        rgb = np.stack([np.full(g.size, r), g.reshape(-1), b.reshape(-1)], axis=1)
        ycocg = rgb_to_ycocgr_array(rgb)
        assert np.array_equal(ycocgr_to_rgb_array(ycocg), rgb)
        idx = (ycocg[:, 0], ycocg[:, 1] + 255, ycocg[:, 2] + 255)
        assert not seen[idx].any()
        seen[idx] = True
    assert seen.sum() == 1 << 24
