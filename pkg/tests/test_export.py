import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lungqc.errors import DuplicateOutputError
from lungqc.export import (
    LungBlock,
    WindowConfig,
    block_path,
    export_block,
    montage,
    npy_header,
    quantize_block,
    quantize_hu,
    read_npy_int16,
    round_half_away,
    window_rescale,
    write_montage_pgm,
    write_npy_int16,
)
from lungqc.series_qc import SeriesOutcome


def test_quantize_examples():
    assert quantize_hu(np.array([-1023.6, 40000.0, 0.0, -40000.0])).tolist() == [
        -1024, 32767, 0, -32768]


def test_round_half_away():
    x = np.array([0.5, -0.5, 1.5, -2.5, 0.49999999999999994, 127.5])
    assert round_half_away(x).tolist() == [1.0, -1.0, 2.0, -3.0, 0.0, 128.0]


def test_quantize_block_range():
    slices = [np.full((2, 2), float(i), np.float32) for i in range(5)]
    b = quantize_block(slices, (1, 3), "s", "p")
    assert b.voxels[:, 0, 0].tolist() == [1, 2, 3] and b.source_block == (1, 3)
    with pytest.raises(ValueError):
        quantize_block(slices, (3, 5))


def test_npy_header_template():
    h = npy_header((60, 512, 512))
    assert h[:8] == b"\x93NUMPY\x01\x00"
    assert len(h) % 64 == 0 and h.endswith(b"\n")
    hlen = int.from_bytes(h[8:10], "little")
    assert hlen == len(h) - 10
    text = h[10:].decode("latin1")
    assert text.startswith("{'descr': '<i2', 'fortran_order': False, 'shape': (60, 512, 512), }")
    assert set(text[len("{'descr': '<i2', 'fortran_order': False, 'shape': (60, 512, 512), }"):-1]) <= {" "}


@pytest.mark.parametrize("shape", [(60, 512, 512), (1, 4, 4), (3, 7, 5), (7,)])
def test_header_matches_numpy(shape, tmp_path):
    p = tmp_path / "ref.npy"
    np.save(p, np.zeros(shape, "<i2"))
    ref = p.read_bytes()
    ours = npy_header(shape)
    assert ref[: len(ours)] == ours


def test_data_section_size_and_bytes(tmp_path):
    v = np.zeros((60, 512, 512), np.int16)
    v[0, 0, 1] = -1000
    p = tmp_path / "b.npy"
    write_npy_int16(v, p)
    raw = p.read_bytes()
    hdr = len(npy_header(v.shape))
    assert len(raw) - hdr == 60 * 512 * 512 * 2
    assert raw[hdr + 2 : hdr + 4] == b"\x18\xfc"


@settings(max_examples=40, deadline=None)
@given(arrays(np.int16, st.tuples(st.integers(1, 4), st.integers(1, 9), st.integers(1, 9))))
def test_round_trip_numpy_reader(tmp_path_factory, v):
    p = tmp_path_factory.mktemp("npy") / "v.npy"
    write_npy_int16(v, p)
    back = np.load(p)
    assert back.dtype == np.dtype("<i2") and back.shape == v.shape
    np.testing.assert_array_equal(back, v)
    np.testing.assert_array_equal(read_npy_int16(p), v)
    assert p.read_bytes() == _numpy_bytes(v, tmp_path_factory)


def _numpy_bytes(v, factory):
    p = factory.mktemp("ref") / "r.npy"
    np.save(p, v.astype("<i2"))
    return p.read_bytes()


def _accepted(pid="100012", uid="1.2.3"):
    return SeriesOutcome(uid, pid, "accepted", None, 100, 20, (10, 29))


def test_export_layout(tmp_path):
    block = LungBlock(np.zeros((20, 4, 4), np.int16), "1.2.3", "100012", (10, 29))
    path = export_block(_accepted(), block, tmp_path)
    assert path == tmp_path / "100012" / "1.2.3" / "lung_block.npy"
    assert np.load(path).shape == (20, 4, 4)
    assert [p.name for p in path.parent.iterdir()] == ["lung_block.npy"]


def test_export_rejected(tmp_path):
    rej = SeriesOutcome.rejected("1", "P", "NO_LUNG_BLOCK", 70)
    with pytest.raises(ValueError):
        export_block(rej, LungBlock(np.zeros((1, 1, 1), np.int16)), tmp_path)
    assert not any(tmp_path.iterdir())


def test_export_duplicate(tmp_path):
    block = LungBlock(np.zeros((2, 2, 2), np.int16))
    export_block(_accepted(), block, tmp_path)
    with pytest.raises(DuplicateOutputError) as ei:
        export_block(_accepted(), block, tmp_path)
    assert ei.value.code == "DUPLICATE_OUTPUT"
    export_block(_accepted(), LungBlock(np.ones((2, 2, 2), np.int16)), tmp_path, overwrite=True)
    assert np.load(block_path(tmp_path, "100012", "1.2.3")).sum() == 8


def test_block_paths_injective():
    pairs = [("1", "2.3"), ("1.2", "3"), ("12", "3"), ("1", "23")]
    assert len({block_path("/o", p, s) for p, s in pairs}) == len(pairs)


@pytest.mark.parametrize("hu,expected", [(-1250, 0), (250, 255), (-500, 128), (-3000, 0), (900, 255)])
def test_window_examples(hu, expected):
    assert window_rescale(np.array([hu]))[0] == expected


@given(st.lists(st.floats(-3000, 3000), min_size=2, max_size=50))
def test_window_monotone(values):
    v = np.sort(np.array(values))
    out = window_rescale(v).astype(int)
    assert np.all(np.diff(out) >= 0)


def test_window_surjective():
    lower = WindowConfig().lower
    v = lower + np.linspace(0, 1500, 100001)
    assert set(window_rescale(v).tolist()) == set(range(256))


def test_montage_dimensions(tmp_path):
    block = LungBlock(np.full((60, 512, 512), -500, np.int16))
    img = montage(block, 10)
    assert img.shape == (3072, 5120)
    assert np.all(img == 128)
    p = tmp_path / "m.pgm"
    write_montage_pgm(block, p, 10)
    raw = p.read_bytes()
    assert raw.startswith(b"P5\n5120 3072\n255\n")
    assert len(raw) == len(b"P5\n5120 3072\n255\n") + 5120 * 3072


def test_montage_trailing_black():
    img = montage(np.full((1, 8, 8), -500, np.int16), 4)
    assert img.shape == (8, 32)
    assert np.all(img[:, :8] == 128) and not img[:, 8:].any()
