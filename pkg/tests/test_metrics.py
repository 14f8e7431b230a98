import math

import numpy as np
import pytest

from binseal.metrics import (
    FrameBuffer,
    edge_map,
    edr,
    encryption_quality,
    eq_max,
    histogram,
    load_pgm,
    npcr,
    psnr,
    save_pgm,
    uaci,
    weighted_psnr,
)


def frame(arr, depth=8):
    a = np.asarray(arr, dtype=np.int64)
    return FrameBuffer(a.shape[1], a.shape[0], depth, a)


def const_frame(w, h, value, depth=8):
    return FrameBuffer(w, h, depth, np.full((h, w), value, dtype=np.int64))


class TestHistogram:
    def test_constant_frame(self):
        h = histogram(const_frame(8, 8, 42))
        assert h[42] == 64 and h.sum() == 64

    def test_two_pixel_frame(self):
        h = histogram(frame([[0, 255]]))
        assert h[0] == 1 and h[255] == 1

    def test_conservation(self):
        rng = np.random.default_rng(0)
        f = frame(rng.integers(0, 256, (13, 17)))
        assert histogram(f).sum() == 13 * 17


class TestEncryptionQuality:
    def test_identical_frames(self):
        f = const_frame(8, 8, 3)
        assert encryption_quality(f, f) == 0.0

    def test_disjoint_histograms_small(self):
        a = const_frame(16, 16, 0)
        b = const_frame(16, 16, 255)
        assert encryption_quality(a, b) == 2.0

    def test_symmetry(self):
        rng = np.random.default_rng(1)
        a = frame(rng.integers(0, 256, (9, 9)))
        b = frame(rng.integers(0, 256, (9, 9)))
        assert encryption_quality(a, b) == encryption_quality(b, a)

    def test_bounded_by_max(self):
        rng = np.random.default_rng(2)
        a = frame(rng.integers(0, 256, (12, 10)))
        b = frame(rng.integers(0, 256, (12, 10)))
        assert encryption_quality(a, b) <= eq_max(12, 10, 8)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            encryption_quality(const_frame(4, 4, 0), const_frame(4, 5, 0))


class TestEqMax:
    def test_uhd_ten_bit(self):
        assert eq_max(3840, 2160, 10) == 16200.0

    def test_hd_ten_bit(self):
        assert eq_max(1920, 1080, 10) == 4050.0

    def test_small_eight_bit(self):
        assert eq_max(16, 16, 8) == 2.0


class TestEdges:
    def test_constant_frame_has_no_edges(self):
        assert edge_map(const_frame(8, 8, 77)).sum() == 0

    def test_single_bright_pixel(self):
        arr = np.zeros((7, 7), dtype=np.int64)
        arr[3, 3] = 255
        em = edge_map(FrameBuffer(7, 7, 8, arr))
        assert em[3, 3] == 1
        assert em[3, 2] == em[3, 4] == em[2, 3] == em[4, 3] == 1
        assert em[0, 0] == 0

    def test_binary_output(self):
        rng = np.random.default_rng(3)
        em = edge_map(frame(rng.integers(0, 256, (11, 11))))
        assert set(np.unique(em)) <= {0, 1}


class TestEdr:
    def test_identical_maps(self):
        rng = np.random.default_rng(4)
        f = frame(rng.integers(0, 256, (16, 16)))
        assert edr(f, f) == 0.0

    def test_both_empty_defined_as_zero(self):
        assert edr(const_frame(8, 8, 5), const_frame(8, 8, 200)) == 0.0

    def test_disjoint_edge_maps(self):
        a = np.zeros((8, 8), dtype=np.int64)
        a[2, 2] = 255
        b = np.zeros((8, 8), dtype=np.int64)
        b[6, 6] = 255
        assert edr(FrameBuffer(8, 8, 8, a), FrameBuffer(8, 8, 8, b)) == 1.0

    def test_range(self):
        rng = np.random.default_rng(5)
        a = frame(rng.integers(0, 256, (16, 16)))
        b = frame(rng.integers(0, 256, (16, 16)))
        assert 0.0 <= edr(a, b) <= 1.0


class TestPixelChangeRates:
    def test_identical(self):
        f = const_frame(8, 8, 10)
        assert npcr(f, f) == 0.0
        assert uaci(f, f) == 0.0

    def test_all_different(self):
        assert npcr(const_frame(8, 8, 0), const_frame(8, 8, 1)) == 100.0

    def test_uaci_full_swing(self):
        value = uaci(const_frame(16, 16, 0), const_frame(16, 16, 255))
        assert value == pytest.approx(25500 / 256, abs=1e-9)

    def test_ranges(self):
        rng = np.random.default_rng(6)
        a = frame(rng.integers(0, 256, (10, 10)))
        b = frame(rng.integers(0, 256, (10, 10)))
        assert 0.0 <= npcr(a, b) <= 100.0
        assert 0.0 <= uaci(a, b) <= 100.0


class TestPsnr:
    def test_identical_is_infinite(self):
        f = const_frame(8, 8, 100)
        assert math.isinf(psnr(f, f))

    def test_full_swing_is_zero_db(self):
        assert psnr(const_frame(8, 8, 0), const_frame(8, 8, 255)) == pytest.approx(0.0)

    def test_single_pixel_difference(self):
        a = np.zeros((16, 16), dtype=np.int64)
        b = a.copy()
        b[0, 0] = 1
        value = psnr(FrameBuffer(16, 16, 8, a), FrameBuffer(16, 16, 8, b))
        assert value == pytest.approx(10 * math.log10(255 * 255 * 256), abs=1e-6)

    def test_weighted(self):
        y = const_frame(8, 8, 0)
        y2 = const_frame(8, 8, 255)
        u = const_frame(8, 8, 7)
        assert weighted_psnr([y, u, u], [y2, u, u], (6, 1, 1)) == math.inf
        assert weighted_psnr([y, u, u], [y2, u2 := const_frame(8, 8, 8), u2],
                             (0, 1, 1)) < math.inf


class TestPgm:
    def test_round_trip_8bit(self, tmp_path):
        rng = np.random.default_rng(7)
        f = frame(rng.integers(0, 256, (9, 14)))
        path = tmp_path / "f.pgm"
        save_pgm(f, path)
        g = load_pgm(path)
        assert g.bit_depth == 8
        assert np.array_equal(f.pixels, g.pixels)

    def test_round_trip_10bit(self, tmp_path):
        rng = np.random.default_rng(8)
        f = frame(rng.integers(0, 1024, (6, 5)), depth=10)
        path = tmp_path / "f10.pgm"
        save_pgm(f, path)
        g = load_pgm(path)
        assert g.bit_depth == 10
        assert np.array_equal(f.pixels, g.pixels)

    def test_comment_in_header(self, tmp_path):
        path = tmp_path / "c.pgm"
        path.write_bytes(b"P5\n# a comment\n2 2\n255\n\x00\x01\x02\x03")
        f = load_pgm(path)
        assert f.pixels.tolist() == [[0, 1], [2, 3]]

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.pgm"
        path.write_bytes(b"P2\n2 2\n255\n")
        with pytest.raises(ValueError):
            load_pgm(path)

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "short.pgm"
        path.write_bytes(b"P5\n4 4\n255\n\x00\x00")
        with pytest.raises(ValueError):
            load_pgm(path)
