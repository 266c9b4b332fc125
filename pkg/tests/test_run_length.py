import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from core.errors import IntegrityError
from core.range_coder import RangeDecoder, RangeEncoder
from core.run_length import (TokenModels, decode_run_length, detokenize, encode_overflow,
                             encode_run_length, restore_overflow, run_length_decode, run_length_encode,
                             tokenize, unzigzag, zigzag)


def test_zigzag_mapping():
    assert zigzag(np.array([0, -1, 1, -2, 2])).tolist() == [0, 1, 2, 3, 4]
    assert unzigzag(np.array([0, 1, 2, 3, 4])).tolist() == [0, -1, 1, -2, 2]


@pytest.mark.parametrize('values, tokens', [
    ([0, 0, 5, -1], [(2, 10), (0, 1), (0, 0)]),
    ([], [(0, 0)]),
    ([0, 0, 0], [(3, 0)]),
    ([3], [(0, 6), (0, 0)]),
])
def test_tokenize(values, tokens):
    assert tokenize(np.array(values, dtype=np.int64)) == tokens
    assert detokenize(tokens).tolist() == values


@given(st.lists(st.integers(-600, 600), max_size=400))
@settings(max_examples=60, deadline=None)
def test_roundtrip(values):
    data = run_length_encode(np.array(values, dtype=np.int64))
    assert run_length_decode(data).tolist() == values


def test_large_magnitudes_use_chunked_mantissa():
    values = np.array([0, 1 << 40, -(1 << 33), 7, 0, 0], dtype=np.int64)
    assert run_length_decode(run_length_encode(values)).tolist() == values.tolist()


def test_long_zero_runs_are_cheap():
    values = np.zeros(100_000, dtype=np.int64)
    assert len(run_length_encode(values)) < 16


def test_several_streams_share_one_encoder():
    encoder = RangeEncoder()
    first, second = np.array([1, 0, -3]), np.array([0, 0, 9, 9])
    encode_run_length(encoder, first, TokenModels())
    encode_run_length(encoder, second, TokenModels())
    decoder = RangeDecoder(encoder.finish())
    assert decode_run_length(decoder, 10, TokenModels()).tolist() == first.tolist()
    assert decode_run_length(decoder, 10, TokenModels()).tolist() == second.tolist()


def test_decode_rejects_streams_longer_than_expected():
    data = run_length_encode(np.arange(50))
    with pytest.raises(IntegrityError):
        run_length_decode(data, max_count=10)


def test_overflow_split_and_restore():
    residuals = np.array([0, 255, -255, 256, -400, 510, 3])
    clamped, side = encode_overflow(residuals)
    assert clamped.tolist() == [0, 255, -255, 255, -255, 255, 3]
    assert side.tolist() == [0, 0, 0, 256, -400, 510, 0]
    assert restore_overflow(clamped, side).tolist() == residuals.tolist()


def test_overflow_inconsistency_detected():
    with pytest.raises(IntegrityError):
        restore_overflow(np.array([10]), np.array([300]))
    with pytest.raises(IntegrityError):
        restore_overflow(np.array([255]), np.array([-300]))
    with pytest.raises(IntegrityError):
        restore_overflow(np.array([0, 0]), np.array([0]))
