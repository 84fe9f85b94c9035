"""Codec, .dat I/O, and windowing tests for the stream module."""

import numpy as np
import pytest

from spikekit.errors import DataIOError, PreconditionError
from spikekit.stream import (ClipWindowSpec, SpikeStream, StreamMeta,
                             clip_count, pack_spikes, read_dat, read_meta,
                             sidecar_path, slice_clips, subsample_indices,
                             subsample_temporal, unpack_spikes, write_dat,
                             write_meta)


def make_stream(bits, shape):
    return SpikeStream(np.array(bits, dtype=np.uint8).reshape(shape))


def random_stream(rng, t, h, w):
    return SpikeStream(rng.integers(0, 2, size=(t, h, w), dtype=np.uint8))


# ---------------------------------------------------------------------------
# pack / unpack
# ---------------------------------------------------------------------------

def test_pack_msb_first_single_byte():
    # [1,0,1,0,0,0,0,0] MSB-first is 0xA0; forced by the declared bit order.
    s = make_stream([1, 0, 1, 0, 0, 0, 0, 0], (1, 1, 8))
    assert pack_spikes(s) == bytes([0xA0])


def test_pack_all_zero_single_byte():
    s = make_stream([0] * 8, (2, 2, 2))
    assert pack_spikes(s) == bytes([0x00])


def test_pack_length_is_ceil_of_bits():
    rng = np.random.default_rng(0)
    for t, h, w in [(1, 1, 1), (3, 5, 7), (7, 5, 3), (10, 4, 4), (13, 3, 11)]:
        s = random_stream(rng, t, h, w)
        assert len(pack_spikes(s)) == (t * h * w + 7) // 8


def test_pack_element_order_t_outermost_x_fastest():
    # One spike at (t=1, y=0, x=0) in a 2x1x4 stream lands in bit 4 of the
    # single packed byte: flat index 4, MSB-first.
    data = np.zeros((2, 1, 4), dtype=np.uint8)
    data[1, 0, 0] = 1
    assert pack_spikes(SpikeStream(data)) == bytes([0b00001000])


def test_unpack_all_ones_byte():
    meta = StreamMeta(height=1, width=8, t_len=1)
    s = unpack_spikes(bytes([0xFF]), meta)
    assert s.data.tolist() == [[[1] * 8]]


def test_unpack_discards_padding():
    meta = StreamMeta(height=1, width=1, t_len=1)
    s = unpack_spikes(bytes([0x80]), meta)
    assert s.data.tolist() == [[[1]]]
    # padding bits of 0xFF beyond element 0 are ignored too
    s2 = unpack_spikes(bytes([0xFF]), meta)
    assert s2.data.tolist() == [[[1]]]


def test_unpack_length_mismatch_raises():
    meta = StreamMeta(height=4, width=4, t_len=4)
    with pytest.raises(DataIOError):
        unpack_spikes(bytes(3), meta)


def test_roundtrip_1000_random_streams():
    rng = np.random.default_rng(1234)
    for _ in range(1000):
        t = int(rng.integers(1, 40))
        h = int(rng.integers(1, 12))
        w = int(rng.integers(1, 12))
        s = random_stream(rng, t, h, w)
        meta = StreamMeta.for_stream(s)
        back = unpack_spikes(pack_spikes(s), meta)
        assert back == s


def test_stream_rejects_non_binary():
    with pytest.raises(PreconditionError):
        SpikeStream(np.full((1, 1, 1), 2, dtype=np.uint8))


def test_stream_rejects_bad_rank_and_empty_dims():
    with pytest.raises(PreconditionError):
        SpikeStream(np.zeros((2, 2), dtype=np.uint8))
    with pytest.raises(PreconditionError):
        SpikeStream(np.zeros((0, 2, 2), dtype=np.uint8))


# ---------------------------------------------------------------------------
# .dat files
# ---------------------------------------------------------------------------

def test_write_read_dat_roundtrip(tmp_path):
    rng = np.random.default_rng(7)
    s = random_stream(rng, 2000, 4, 4)
    meta = StreamMeta.for_stream(s)
    path = tmp_path / "stream.dat"
    write_dat(s, meta, path)
    assert read_dat(path, meta) == s


def test_dat_file_size_matches_format_arithmetic(tmp_path):
    # 250 frames of 240x320 pack to exactly ceil(250*240*320/8) bytes.
    s = SpikeStream(np.zeros((250, 240, 320), dtype=np.uint8))
    meta = StreamMeta.for_stream(s)
    path = tmp_path / "big.dat"
    write_dat(s, meta, path)
    assert path.stat().st_size == 2_400_000


def test_zero_t_len_request_is_dimension_error():
    with pytest.raises(PreconditionError):
        StreamMeta(height=4, width=4, t_len=0)


def test_read_dat_truncated_file(tmp_path):
    path = tmp_path / "short.dat"
    path.write_bytes(bytes(3))
    meta = StreamMeta(height=4, width=4, t_len=4)
    with pytest.raises(DataIOError):
        read_dat(path, meta)


def test_meta_sidecar_roundtrip(tmp_path):
    meta = StreamMeta(height=3, width=5, t_len=9, threshold_theta=5.0,
                      tick_seconds=1e-6)
    path = tmp_path / "x.meta.json"
    write_meta(meta, path)
    assert read_meta(path) == meta
    assert sidecar_path(tmp_path / "x.dat") == str(tmp_path / "x.meta.json")


def test_write_dat_meta_mismatch():
    s = make_stream([0] * 8, (2, 2, 2))
    wrong = StreamMeta(height=2, width=2, t_len=3)
    with pytest.raises(PreconditionError):
        write_dat(s, wrong, "/tmp/never-written.dat")


# ---------------------------------------------------------------------------
# Clip windowing
# ---------------------------------------------------------------------------

def test_slice_single_window():
    s = SpikeStream(np.zeros((800, 2, 2), dtype=np.uint8))
    clips = slice_clips(s, ClipWindowSpec(800, 200))
    assert len(clips) == 1


def test_slice_starts_enumeration():
    rng = np.random.default_rng(5)
    s = random_stream(rng, 1400, 2, 3)
    spec = ClipWindowSpec(800, 200)
    clips = slice_clips(s, spec)
    assert len(clips) == 4
    starts = [0, 200, 400, 600]
    for clip, start in zip(clips, starts):
        assert np.array_equal(clip.data, s.data[start:start + 800])


def test_slice_too_short_raises():
    s = SpikeStream(np.zeros((799, 1, 1), dtype=np.uint8))
    with pytest.raises(PreconditionError):
        slice_clips(s, ClipWindowSpec(800, 200))


def test_clip_count_matches_bruteforce_enumeration():
    # Oracle: walk starts 0, stride, 2*stride, ... while the window fits.
    for t in range(1, 60):
        for window in range(1, t + 1):
            for stride in (1, 2, 3, 7):
                brute = 0
                k = 0
                while k + window <= t:
                    brute += 1
                    k += stride
                assert clip_count(t, ClipWindowSpec(window, stride)) == brute


def test_clips_own_their_storage_and_values_are_frozen():
    s = SpikeStream(np.zeros((10, 1, 1), dtype=np.uint8))
    clips = slice_clips(s, ClipWindowSpec(5, 5))
    for clip in clips:
        assert not np.shares_memory(clip.data, s.data)
    # values are immutable after construction
    assert not s.data.flags.writeable
    with pytest.raises(ValueError):
        clips[0].data[0, 0, 0] = 1
    # and the constructor snapshots: mutating the source array afterwards
    # does not reach into the stream
    source = np.zeros((2, 2, 2), dtype=np.uint8)
    stream = SpikeStream(source)
    source[0, 0, 0] = 1
    assert stream.data[0, 0, 0] == 0


# ---------------------------------------------------------------------------
# Temporal subsampling
# ---------------------------------------------------------------------------

def test_subsample_index_formula():
    idx = subsample_indices(800, 250)
    expected = [(i * 800) // 250 for i in range(250)]
    assert idx.tolist() == expected


def test_subsample_identity_when_target_equals_len():
    rng = np.random.default_rng(11)
    s = random_stream(rng, 37, 3, 3)
    assert subsample_temporal(s, 37) == s


def test_subsample_target_one_keeps_first_frame():
    rng = np.random.default_rng(12)
    s = random_stream(rng, 9, 2, 2)
    out = subsample_temporal(s, 1)
    assert np.array_equal(out.data[0], s.data[0])


def test_subsample_target_too_large():
    s = SpikeStream(np.zeros((4, 1, 1), dtype=np.uint8))
    with pytest.raises(PreconditionError):
        subsample_temporal(s, 5)


def test_operations_preserve_binary_values():
    rng = np.random.default_rng(13)
    s = random_stream(rng, 50, 6, 6)
    outputs = [unpack_spikes(pack_spikes(s), StreamMeta.for_stream(s))]
    outputs += slice_clips(s, ClipWindowSpec(20, 10))
    outputs.append(subsample_temporal(s, 17))
    for out in outputs:
        assert set(np.unique(out.data)).issubset({0, 1})
