import numpy as np
import pytest

from densescale import io
from densescale.errors import FormatError
from densescale.scalespace import FrameStream, ScaleLadder, Signal1D
from densescale.selection import select_dense

P5_3x2 = b"P5\n3 2\n255\n" + bytes([0, 17, 34, 128, 200, 255])


def test_p5_round_trip_is_bit_identical(tmp_path):
    img = io.decode_pgm(P5_3x2)
    assert img.shape == (2, 3)
    assert io.encode_pgm(img) == P5_3x2
    path = tmp_path / "a.pgm"
    io.write_image(img, path)
    assert path.read_bytes() == P5_3x2


def test_p2_comments_match_plain_twin():
    plain = b"P2\n3 2\n255\n0 17 34\n128 200 255\n"
    commented = b"P2\n# made by hand\n3 # width\n2\n255 # maxval\n0 17 34 # row\n128 200 255\n"
    assert np.array_equal(io.decode_pgm(plain), io.decode_pgm(commented))
    assert np.array_equal(io.decode_pgm(plain), io.decode_pgm(P5_3x2))


def test_sixteen_bit_matches_pillow(tmp_path):
    Image = pytest.importorskip("PIL.Image")
    rng = np.random.default_rng(0)
    raw = rng.integers(0, 65536, size=(5, 7), dtype=np.uint16)
    buf = b"P5\n7 5\n65535\n" + raw.astype(">u2").tobytes()
    path = tmp_path / "deep.pgm"
    path.write_bytes(buf)
    ours = io.read_image(path) * 65535
    with Image.open(path) as im:
        theirs = np.asarray(im, dtype=float)
    assert np.array_equal(np.rint(ours), theirs)


def test_ascii_write_reads_back():
    img = np.array([[0.0, 0.5], [1.0, 0.25]])
    back = io.decode_pgm(io.encode_pgm(img, ascii=True))
    assert np.allclose(back, np.rint(img * 255) / 255)


@pytest.mark.parametrize("buf, offset", [
    (b"P6\n1 1\n255\n\x00", 0),
    (b"P5\n3 2\n255\n\x00\x01", 13),
    (b"P5\n3 x\n255\n", None),
    (b"P2\n2 1\n255\n7\n", None),
    (b"P5\n1 1\n70000\n\x00\x00", None),
])
def test_malformed_pgm(buf, offset):
    with pytest.raises(FormatError) as info:
        io.decode_pgm(buf)
    if offset is not None:
        assert info.value.offset == offset


def test_signal_lines_and_header(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("0\n1\n0\n")
    assert len(io.read_signal(p)) == 3
    p.write_text("# sample_period=0.001953125\n0\n1\n")
    assert io.read_signal(p).sample_period == 1 / 512


def test_signal_round_trip(tmp_path):
    sig = Signal1D(np.random.default_rng(1).standard_normal(50), 0.01)
    p = tmp_path / "r.csv"
    io.write_signal(sig, p)
    back = io.read_signal(p)
    assert np.array_equal(back.data, sig.data)
    assert back.sample_period == sig.sample_period


def test_signal_bad_line_number(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("1\n2\nthree\n")
    with pytest.raises(FormatError, match="line 3"):
        io.read_signal(p)


def test_frames_round_trip(tmp_path):
    frames = np.linspace(0, 1, 3 * 4 * 5).reshape(3, 4, 5)
    io.write_frames(FrameStream(frames, 12.5), tmp_path / "v")
    back = io.read_frames(tmp_path / "v")
    assert back.frame_rate == 12.5
    assert np.allclose(back.frames, np.rint(frames * 255) / 255)


def test_frames_need_manifest(tmp_path):
    (tmp_path / "frame0001.pgm").write_bytes(P5_3x2)
    with pytest.raises(FormatError, match="manifest"):
        io.read_frames(tmp_path)


# ----------------------------------------------------------------------------
# scale maps

def test_empty_map_is_header_only(tmp_path):
    smap = select_dense("I", np.zeros((6, 9)), ScaleLadder.per_octave(1, 4, 2))
    paths = io.write_scale_map(smap, tmp_path / "m", 1, 4)
    data = paths[0].read_bytes()
    assert data == io.MAP_MAGIC + (6).to_bytes(8, "little") + (9).to_bytes(8, "little")
    assert io.decode_scale_map(data) == ((6, 9), [[]] * 54)
    pgm = io.read_image(paths[1])
    assert np.all(pgm == 0)


def test_uniform_map_is_constant_gray():
    s = np.full((4, 4), 16.0)
    levels = io.scale_map_image(s, 1.0, 16.0)
    assert np.unique(levels).size == 1
    t = (np.log2(16.125) - np.log2(1.125)) / (np.log2(256.125) - np.log2(1.125))
    assert levels[0, 0] == int(np.rint(1 + 254 * t))


def test_map_round_trip():
    img = np.tile(np.sin(2 * np.pi * np.arange(64) / 8) + np.sin(2 * np.pi * np.arange(64) / 32), (3, 1))
    smap = select_dense("I", img, ScaleLadder.per_octave(1, 32, 4))
    shape, points = io.decode_scale_map(io.encode_scale_map(smap))
    assert shape == (3, 64)
    for i, pts in enumerate(points):
        y, x = divmod(i, 64)
        assert len(pts) == smap.count[y, x]
        for m, (s, mag, w1) in enumerate(pts):
            assert (s, mag, w1) == (smap.s_hat[m, y, x], smap.magnitude[m, y, x], smap.w1[m, y, x])


@pytest.mark.parametrize("buf", [b"XXXXXXXX" + bytes(16), io.MAP_MAGIC + bytes(4),
                                 io.MAP_MAGIC + (1).to_bytes(8, "little") * 2 + np.float64(2).tobytes()])
def test_bad_map_bytes(buf):
    with pytest.raises(FormatError):
        io.decode_scale_map(buf)


def test_summary_of_constant_scale():
    stats = io.scale_map_summary(np.full(10, 4.0))
    assert stats["points"] == 10
    assert stats["sigma_mean"] == pytest.approx(2.0)
    assert stats["relative_spread"] == 0.0
    assert np.isnan(io.scale_map_summary(np.full(3, np.nan))["sigma_mean"])
