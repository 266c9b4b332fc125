import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from core.cloud_io import (AttributeConfig, AttributeMode, PointCloud, canonicalize, load_ply, load_ply_geometry,
                           morton_code, morton_codes, morton_decode, read_ply_file, save_ply, write_ply_file)
from core.errors import InputError

ASCII_HEADER = 'ply\nformat ascii 1.0\nelement vertex {count}\n{props}end_header\n'


def ascii_ply(rows, props):
    header = ASCII_HEADER.format(count=len(rows), props=''.join(f'property {t} {n}\n' for t, n in props))
    return (header + ''.join(' '.join(str(v) for v in row) + '\n' for row in rows)).encode('ascii')


XYZ = [('int', 'x'), ('int', 'y'), ('int', 'z')]
RGB = [('uchar', 'red'), ('uchar', 'green'), ('uchar', 'blue')]


def test_morton_examples():
    assert morton_code((1, 0, 0)) == 1
    assert morton_code((0, 1, 0)) == 2
    assert morton_code((0, 0, 1)) == 4
    assert morton_code((3, 3, 3)) == 63


@given(arrays(np.int64, (20, 3), elements=st.integers(0, (1 << 21) - 1)))
def test_morton_decode_inverts(positions):
    np.testing.assert_array_equal(morton_decode(morton_codes(positions)), positions)


def test_canonicalize_sorts_and_drops_duplicates():
    cloud = PointCloud([[1, 1, 1], [0, 0, 0], [1, 1, 1], [1, 0, 0]],
                       {'reflectance': [10, 20, 30, 40]}, 2, AttributeConfig.single())
    canonical = canonicalize(cloud)
    np.testing.assert_array_equal(canonical.positions, [[0, 0, 0], [1, 0, 0], [1, 1, 1]])
    np.testing.assert_array_equal(canonical.channels['reflectance'], [20, 40, 10])
    assert canonical.validate() == (True, [])


def test_ascii_rgb_ply():
    data = ascii_ply([(2, 0, 0, 1, 2, 3), (0, 0, 0, 4, 5, 6)], XYZ + RGB)
    cloud = load_ply(data)
    assert cloud.mode == AttributeMode.RGB
    assert cloud.bit_depth_geometry == 2
    np.testing.assert_array_equal(cloud.attribute_matrix(), [[4, 5, 6], [1, 2, 3]])


def test_scalar_channel_detection():
    cloud = load_ply(ascii_ply([(0, 1, 0, 9, 200)], XYZ + [('float', 'nx'), ('uchar', 'intensity')]))
    assert cloud.mode == AttributeMode.SINGLE
    assert cloud.attribute_config.channel_names == ('intensity',)


def test_geometry_only_ply():
    data = ascii_ply([(1, 1, 1), (0, 0, 0), (1, 1, 1), (1, 0, 0)], XYZ)
    with pytest.raises(InputError):
        load_ply(data)
    np.testing.assert_array_equal(load_ply_geometry(data), [[0, 0, 0], [1, 0, 0], [1, 1, 1]])
    # attributes present are ignored
    with_rgb = ascii_ply([(2, 0, 0, 1, 2, 3), (0, 0, 0, 4, 5, 6)], XYZ + RGB)
    np.testing.assert_array_equal(load_ply_geometry(with_rgb), [[0, 0, 0], [2, 0, 0]])


def test_float_coordinates_must_be_integral():
    assert load_ply(ascii_ply([(1.0, 2.0, 3.0, 7)], [('float', 'x'), ('float', 'y'), ('float', 'z'),
                                                      ('uchar', 'reflectance')])).num_points == 1
    with pytest.raises(InputError):
        load_ply(ascii_ply([(1.5, 2.0, 3.0, 7)], [('float', 'x'), ('float', 'y'), ('float', 'z'),
                                                   ('uchar', 'reflectance')]))


@pytest.mark.parametrize('data', [
    b'not a ply',
    ascii_ply([(0, 0, 0)], XYZ),
    ascii_ply([(0, 0, 1, 2)], [('int', 'x'), ('int', 'y'), ('uchar', 'red'), ('uchar', 'green')]),
    ascii_ply([(-1, 0, 0, 5)], XYZ + [('int', 'reflectance')]),
    ascii_ply([(0, 0, 0, 300)], XYZ + [('int', 'reflectance')]),
])
def test_malformed_inputs(data):
    with pytest.raises(InputError):
        load_ply(data)


def test_declared_bit_depth_is_enforced():
    data = ascii_ply([(8, 0, 0, 1)], XYZ + [('uchar', 'reflectance')])
    assert load_ply(data).bit_depth_geometry == 4
    with pytest.raises(InputError):
        load_ply(data, bit_depth=3)


def test_binary_roundtrip(tmp_path, rgb_cloud, single_cloud):
    assert load_ply(save_ply(rgb_cloud)) == rgb_cloud
    write_ply_file(single_cloud, tmp_path / 'single.ply')
    assert read_ply_file(tmp_path / 'single.ply') == single_cloud


def test_validate_reports_problems():
    cloud = PointCloud([[1, 0, 0], [0, 0, 0]], {'red': [1, 2], 'green': [3, 4]}, 1)
    is_valid, errors = cloud.validate()
    assert not is_valid
    assert any('blue' in e for e in errors)
    assert any('Morton' in e for e in errors)
