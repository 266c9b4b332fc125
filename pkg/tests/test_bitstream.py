import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from core.bitstream import (Bitstream, BitstreamHeader, SectionId, decode_geometry, decode_varint,
                            encode_geometry, encode_varint, pack_inference_section,
                            unpack_inference_section)
from core.cloud_io import AttributeMode
from core.errors import InputError, IntegrityError
from core.synthetic import gradient_cloud, sphere_cloud


def make_header(**changes):
    fields = dict(
        point_count=1234, bit_depth_geometry=10, mode=AttributeMode.RGB, channel_name='rgb',
        T=3, L=6, k=7, schedule=(16, 8, 4), n=3,
        thresholds=((0.0, 1.0, 3.0, math.inf),) * 3, seed=42, num_clusters=5,
        batch_size=256, batches_per_block=32, smoothing_neighbors=50, alpha=255.0,
        kmeans_max_iter=20, learned=True, model_hash=bytes(range(8)), structure_digest=b'\xaa' * 8,
    )
    fields.update(changes)
    return BitstreamHeader(**fields)


@pytest.fixture
def stream():
    return Bitstream(make_header(), {
        SectionId.BASE: b'base-payload',
        SectionId.INFERENCE: bytes(range(200)),
        SectionId.OVERFLOW: b'',
    })


def test_header_roundtrip(stream):
    parsed = Bitstream.from_bytes(stream.to_bytes())
    assert parsed.header == stream.header
    assert parsed.sections == stream.sections
    assert list(parsed.sections) == [SectionId.BASE, SectionId.INFERENCE, SectionId.OVERFLOW]


def test_single_channel_header_keeps_name():
    header = make_header(mode=AttributeMode.SINGLE, channel_name='reflectance', learned=False, debug=True)
    parsed = Bitstream.from_bytes(Bitstream(header, {SectionId.BASE: b'x'}).to_bytes()).header
    assert parsed.channel_name == 'reflectance'
    assert parsed.mode == AttributeMode.SINGLE
    assert parsed.debug and not parsed.learned and not parsed.embed_geometry


def test_corrupted_header_detected(stream):
    data = bytearray(stream.to_bytes())
    data[10] ^= 0x01
    with pytest.raises(IntegrityError):
        Bitstream.from_bytes(bytes(data))


def test_corrupted_section_detected(stream):
    data = bytearray(stream.to_bytes())
    data[-5] ^= 0x80
    with pytest.raises(IntegrityError, match='INFERENCE'):
        Bitstream.from_bytes(bytes(data))


@pytest.mark.parametrize('cut', [1, 50, 150])
def test_truncated_stream_detected(stream, cut):
    with pytest.raises(IntegrityError):
        Bitstream.from_bytes(stream.to_bytes()[:-cut])


def test_trailing_bytes_detected(stream):
    with pytest.raises(IntegrityError):
        Bitstream.from_bytes(stream.to_bytes() + b'\x00')


def test_wrong_magic_detected(stream):
    with pytest.raises(IntegrityError):
        Bitstream.from_bytes(b'XXXX' + stream.to_bytes()[4:])


@given(st.integers(min_value=0, max_value=(1 << 63) - 1))
def test_varint_roundtrip(value):
    encoded = encode_varint(value)
    assert decode_varint(b'\x07' + encoded, 1) == (value, 1 + len(encoded))


def test_varint_sizes_and_truncation():
    assert encode_varint(0) == b'\x00'
    assert encode_varint(127) == b'\x7f'
    assert encode_varint(128) == b'\x80\x01'
    with pytest.raises(IntegrityError):
        decode_varint(b'\x80\x80', 0)


def test_inference_section_roundtrip():
    layers = [[b'abc', b'', b'defg'], [], [b'x' * 300]]
    crcs = [[1, 2, 3], [], [0xFFFFFFFF]]
    streams, parsed_crcs, table_size = unpack_inference_section(pack_inference_section(layers, crcs), debug=True)
    assert streams == layers
    assert parsed_crcs == crcs
    assert table_size == 1 + 1 + 3 + 1 + 1 + 2

    plain = pack_inference_section(layers)
    streams, parsed_crcs, _ = unpack_inference_section(plain)
    assert streams == layers and parsed_crcs == []
    with pytest.raises(IntegrityError):
        unpack_inference_section(plain[:-1])
    with pytest.raises(IntegrityError):
        unpack_inference_section(plain + b'!')


@pytest.mark.parametrize('cloud', [
    gradient_cloud(count=700, extent=24, seed=5),
    sphere_cloud(count=1500, radius=20, seed=6),
])
def test_geometry_roundtrip(cloud):
    data = encode_geometry(cloud.positions)
    np.testing.assert_array_equal(decode_geometry(data, cloud.num_points), cloud.positions)
    assert len(data) < cloud.num_points * 3 * cloud.bit_depth_geometry / 8


def test_geometry_empty_and_limits():
    empty = encode_geometry(np.zeros((0, 3), dtype=np.int64))
    assert decode_geometry(empty, 0).shape == (0, 3)
    with pytest.raises(InputError):
        encode_geometry(np.array([[1 << 21, 0, 0]]))
    with pytest.raises(InputError):
        encode_geometry(np.array([[1, 0, 0], [0, 0, 0]]))
    cloud = gradient_cloud(count=100, extent=16, seed=7)
    with pytest.raises(IntegrityError):
        decode_geometry(encode_geometry(cloud.positions), cloud.num_points + 1)


def test_geometry_full_coordinate_range():
    top = (1 << 21) - 1
    positions = np.array([[0, 0, 0], [1, 0, 0], [top, 0, 0], [top, top, top]])
    data = encode_geometry(positions)
    np.testing.assert_array_equal(decode_geometry(data, 4), positions)
