import numpy as np
import pytest
from PIL import Image

import oracles
from isocorners import raster
from isocorners.errors import EmptyCurve, FormatError, ImageIOError
from isocorners.isocurve import IsoCurveSegment
from isocorners.raster import GrayImage


def test_pgm_roundtrip(tmp_path, rng):
    img = GrayImage.from_array(rng.integers(0, 256, (17, 23)).astype(np.uint8))
    p = tmp_path / "a.pgm"
    raster.save_pgm(img, p)
    assert p.read_bytes().startswith(b"P5\n23 17\n255\n")
    assert raster.load_image(p) == img


def test_pgm_header_comments(tmp_path):
    body = bytes(range(6))
    p = tmp_path / "c.pgm"
    p.write_bytes(b"P5\n# made by hand\n3 2\n# max\n255\n" + body)
    img = raster.load_image(p)
    assert (img.width, img.height) == (3, 2)
    assert img.data.tolist() == [[0, 1, 2], [3, 4, 5]]


@pytest.mark.parametrize("raw", [b"P5\n3 2\n255\n\x00", b"P5\n3 2\n65535\n" + bytes(12), b"P5\nx 2\n255\n",
                                 b"P2\n1 1\n255\n0", b"hello"])
def test_bad_files(tmp_path, raw):
    p = tmp_path / "bad.pgm"
    p.write_bytes(raw)
    with pytest.raises(FormatError):
        raster.load_image(p)


def test_missing_file(tmp_path):
    with pytest.raises(ImageIOError):
        raster.load_image(tmp_path / "nope.pgm")


def test_png_gray_and_rgb(tmp_path, rng):
    a = rng.integers(0, 256, (9, 11)).astype(np.uint8)
    Image.fromarray(a).save(tmp_path / "g.png")
    assert np.array_equal(raster.load_image(tmp_path / "g.png").data, a)
    rgb = np.zeros((2, 2, 3), dtype=np.uint8)
    rgb[0, 0] = (255, 0, 0)
    rgb[1, 1] = (255, 255, 255)
    Image.fromarray(rgb).save(tmp_path / "c.png")
    d = raster.load_image(tmp_path / "c.png").data
    # luma L = 0.299 R + 0.587 G + 0.114 B
    assert d[0, 0] == 76 and d[1, 1] == 255 and d[0, 1] == 0


def test_image_is_read_only(rng):
    img = GrayImage.from_array(rng.integers(0, 256, (4, 4)))
    with pytest.raises(ValueError):
        img.data[0, 0] = 1


def test_from_array_range():
    with pytest.raises(ValueError):
        GrayImage.from_array(np.array([[0, 300]]))


def test_resize_constant_and_identity(rng):
    img = GrayImage.from_array(np.full((10, 20), 77, dtype=np.uint8))
    small = raster.resize_to_height(img, 5)
    assert (small.width, small.height) == (10, 5)
    assert (small.data == 77).all()
    r = GrayImage.from_array(rng.integers(0, 256, (8, 8)))
    assert raster.resize_to_height(r, 8) is r


def test_resize_upsample_linear_ramp():
    ramp = GrayImage.from_array(np.tile(np.arange(0, 200, 20, dtype=np.uint8), (10, 1)))
    big = raster.resize_to_height(ramp, 20)
    row = big.data[0].astype(int)
    assert (np.diff(row) >= 0).all()


@pytest.mark.parametrize("seed", range(4))
def test_distance_transform_matches_exhaustive(seed):
    rng = np.random.default_rng(seed)
    for _ in range(30):
        h, w = (int(v) for v in rng.integers(1, 33, 2))
        n = int(rng.integers(1, 8))
        pts = [(int(rng.integers(0, w)), int(rng.integers(0, h))) for _ in range(n)]
        dm = raster.labeled_distance_transform(pts, w, h)
        ref = oracles.distance_map(pts, h, w)
        assert np.max(np.abs(dm.distance - ref)) <= 1e-9
        lab = dm.label
        for y in range(h):
            for x in range(w):
                qx, qy = pts[lab[y, x]]
                assert abs(np.hypot(qx - x, qy - y) - ref[y, x]) <= 1e-9


def test_distance_transform_rank_tie():
    # the same pixel listed twice keeps the preferred rank
    dm = raster.labeled_distance_transform([(1, 1), (1, 1)], 3, 3, rank=[5, 0])
    assert (dm.label == 1).all()


def test_distance_transform_rejects_outside_points():
    with pytest.raises(ValueError):
        raster.labeled_distance_transform([(5, 0)], 3, 3)
    with pytest.raises(EmptyCurve):
        raster.labeled_distance_transform([], 3, 3)


def _naive_box(v, r, passes, mode):
    v = np.asarray(v, dtype=float)
    n = len(v)
    for _ in range(passes):
        out = np.empty(n)
        for i in range(n):
            acc = 0.0
            for j in range(i - r, i + r + 1):
                if mode == "clamp":
                    acc += v[min(max(j, 0), n - 1)]
                elif mode == "wrap":
                    acc += v[j % n]
                elif 0 <= j < n:
                    acc += v[j]
            out[i] = acc / (2 * r + 1)
        v = out
    return v


@pytest.mark.parametrize("mode", ["clamp", "zero", "wrap"])
def test_box_filter_matches_naive(rng, mode):
    for _ in range(40):
        v = rng.random(int(rng.integers(1, 40)))
        r = int(rng.integers(1, 6))
        got = raster.iterated_box_filter_1d(v, r, 3, mode)
        assert np.allclose(got, _naive_box(v, r, 3, mode), atol=1e-12)


def test_box_filter_args():
    with pytest.raises(ValueError):
        raster.iterated_box_filter_1d([1.0, 2.0], 0, 3)


def test_box_radius_for_sigma():
    for s in (1.0, 2.5, 8.4, 11.8, 30.0):
        r = raster.box_radius_for_sigma(s)
        err = abs(raster.box_variance(r, 3) - s * s)
        for other in (r - 1, r + 1):
            if other >= 1:
                assert err <= abs(raster.box_variance(other, 3) - s * s)


def test_weight_field_matches_exhaustive(rng):
    for _ in range(100):
        h, w = (int(v) for v in rng.integers(2, 14, 2))
        n = int(rng.integers(1, 9))
        pts = tuple((int(rng.integers(0, w)), int(rng.integers(0, h))) for _ in range(n))
        c = int(rng.integers(0, n))
        seg = IsoCurveSegment(0, pts, c)
        sigma = float(rng.uniform(0.5, 6))
        wf = raster.gaussian_weight_field(seg, w, h, sigma)
        assert np.max(np.abs(wf.weights - oracles.weight_field(pts, c, sigma, h, w))) <= 1e-12


def test_weight_field_center_is_one():
    seg = IsoCurveSegment(0, ((0, 0), (1, 0), (2, 0)), 1)
    wf = raster.gaussian_weight_field(seg, 3, 1, 2.0)
    assert wf.weights[0, 1] == 1.0
    assert wf.weights[0, 0] == wf.weights[0, 2] == pytest.approx(np.exp(-1 / 8))


def test_arc_weights():
    w = raster.arc_weights(5, 2, 1.0)
    assert w[2] == 1.0 and w[0] == w[4] == pytest.approx(np.exp(-2))
