import numpy as np
import pytest

import oracles
from conftest import random_block
from isocorners import isocurve as ic
from isocorners.errors import EmptyCurve, PointNotOnCurve
from isocorners.raster import GrayImage, gaussian_weight_field


def _img(a):
    return GrayImage.from_array(np.asarray(a, dtype=np.uint8))


def _boundary_pixels(mask):
    h, w = mask.shape
    return {(x, y) for y in range(h) for x in range(w) if ic.is_boundary_pixel(mask, x, y)}


def test_square_gives_one_closed_chain(square):
    curves = ic.extract_iso_curves(square, 100)
    assert len(curves) == 1
    cv = curves[0]
    assert cv.closed and cv.level == 100
    mask = square.data >= 100
    assert set(cv.points) == _boundary_pixels(mask)
    assert len(cv.points) == 4 * 49
    xy = cv.xy()
    steps = np.abs(np.diff(np.vstack([xy, xy[:1]]), axis=0)).max(axis=1)
    assert (steps == 1).all()


def test_component_on_edge_is_open():
    a = np.zeros((10, 10), dtype=np.uint8)
    a[0:4, 0:4] = 200
    curves = ic.extract_iso_curves(_img(a), 100)
    assert len(curves) == 1 and not curves[0].closed
    assert curves[0].points[0] in {(3, 0), (0, 3)} and curves[0].points[-1] in {(3, 0), (0, 3)}


def test_no_curves_for_full_or_empty_set(square):
    assert ic.extract_iso_curves(square, 0) == []
    assert ic.extract_iso_curves(square, 255) == []
    with pytest.raises(ValueError):
        ic.extract_iso_curves(square, 256)


def test_chains_cover_all_boundary_pixels(rng):
    for _ in range(60):
        blk = random_block(rng, 8, 25)
        lv = int(rng.integers(1, 255))
        mask = blk.data >= lv
        pts = set()
        for cv in ic.extract_iso_curves(blk, lv):
            pts |= set(cv.points)
            for x, y in cv.points:
                assert mask[y, x]
        assert pts == _boundary_pixels(mask)


def test_closed_chain_starts_at_min_crack():
    a = np.zeros((8, 8), dtype=np.uint8)
    a[2:5, 3:6] = 220
    cv = ic.extract_iso_curves(_img(a), 128)[0]
    assert cv.cracks[0] == cv.cracks.min()
    assert cv.points[0] == (3, 2)


def test_dump_and_parse_curves(square):
    curves = ic.extract_iso_curves(square, 150)
    text = ic.dump_curves(curves)
    assert text.startswith("150; ")
    parsed = ic.parse_curves(text)
    assert parsed == [(150, list(curves[0].points))]
    assert ic.dump_curves([]) == ""


def test_segment_around_closed_and_open(square):
    curves = ic.extract_iso_curves(square, 100)
    seg = ic.segment_around(curves, (60, 35), 12)
    assert len(seg.points) == 25 and seg.center == (60, 35) and seg.center_index == 12
    assert not seg.truncated and seg.closed_source
    corner = ic.segment_around(curves, (35, 35), 5)
    assert corner.points[0] != corner.points[-1]
    assert corner.center == (35, 35)
    with pytest.raises(PointNotOnCurve):
        ic.segment_around(curves, (0, 0), 5)
    line = ic.IsoCurve.from_points([(x, 0) for x in range(10)])
    s = ic.segment_around([line], (1, 0), 4)
    assert s.truncated and s.center_index == 1 and len(s.points) == 6


def test_short_closed_chain_is_whole_loop():
    a = np.zeros((10, 10), dtype=np.uint8)
    a[4:7, 4:7] = 200
    curves = ic.extract_iso_curves(_img(a), 100)
    seg = ic.segment_around(curves, (5, 4), 10)
    assert seg.truncated and len(seg.points) == len(curves[0].points)
    assert seg.center == (5, 4)


def test_level_set_locate_and_nearest(square):
    ls = ic.LevelSet(square.data, 100)
    assert ls.nearest((60, 60)) in {(60, 35), (60, 84), (35, 60), (84, 60)}
    assert ls.locate((60, 60)) is None
    cv, i = ls.locate((36, 35))
    assert cv.points[i] == (36, 35)
    assert ls.canonical_crack((36, 35)) == (35 * 120 + 36) * 4


def _ramp_square(size=60):
    # nested squares: level L boundary shrinks by one pixel per 10 levels
    a = np.zeros((size, size))
    yy, xx = np.mgrid[0:size, 0:size]
    d = np.minimum.reduce([xx, yy, size - 1 - xx, size - 1 - yy])
    a = np.clip(d * 10, 0, 250)
    return _img(a)


def test_find_up_down_on_ramp():
    img = _ramp_square()
    ls = ic.LevelSet(img.data, 150)
    seg, _ = ic.segment_at(ls, (30, 10), 8)
    up, down = ic.find_up_down(seg, img, 10)
    assert up.level == 160 and down.level == 140
    assert all(y == 16 for _, y in up.points) and all(y == 14 for _, y in down.points)


def test_weighted_delta_area_matches_oracle(rng):
    for _ in range(150):
        h, w = (int(v) for v in rng.integers(4, 16, 2))
        n1, n2 = int(rng.integers(2, 8)), int(rng.integers(2, 8))
        up = ic.IsoCurveSegment(0, tuple((int(rng.integers(0, w)), int(rng.integers(0, h))) for _ in range(n1)), 0)
        dn = ic.IsoCurveSegment(0, tuple((int(rng.integers(0, w)), int(rng.integers(0, h))) for _ in range(n2)), 0)
        wts = rng.random((h, w))
        from isocorners.raster import WeightField

        got = ic.weighted_delta_area(up, dn, WeightField(w, h, wts))
        assert abs(got - oracles.enclosed_area(up.points, dn.points, h, w, wts)) <= 1e-9
        cnt = ic.weighted_delta_area(up, dn, shape=(h, w))
        assert cnt == oracles.enclosed_area(up.points, dn.points, h, w)


def test_weighted_delta_area_edge_cases():
    a = ic.IsoCurveSegment(0, ((0, 0), (5, 0)), 0)
    assert ic.weighted_delta_area(a, a) == 0.0
    with pytest.raises(EmptyCurve):
        ic.weighted_delta_area(ic.IsoCurveSegment(0, (), 0), a)
    b = ic.IsoCurveSegment(0, ((0, 3), (5, 3)), 0)
    # rectangle 0..5 x 0..3 by lattice points with the right/bottom edges open
    assert ic.weighted_delta_area(a, b) == 15.0


def test_stability_cap_and_vanishing():
    flat_step = np.zeros((30, 30), dtype=np.uint8)
    flat_step[:, 15:] = 200
    img = _img(flat_step)
    ls = ic.LevelSet(img.data, 100)
    seg, _ = ic.segment_at(ls, (15, 15), 6)
    rec = ic.stability(seg, img, 5)
    assert rec.rho == ic.RHO_CAP and rec.delta_area == 0.0
    tiny = np.zeros((30, 30), dtype=np.uint8)
    tiny[5:25, 5:25] = 100
    tiny[14:16, 14:16] = 200
    img2 = _img(tiny)
    seg2, _ = ic.segment_at(ic.LevelSet(img2.data, 100), (5, 15), 6)
    assert ic.stability(seg2, img2, 101).rho == 0.0


def test_sweep_records_equal_public_stability(rng):
    checked = 0
    for _ in range(80):
        blk = random_block(rng, 12, 35)
        p = (int(rng.integers(0, blk.width)), int(rng.integers(0, blk.height)))
        pol = int(rng.choice([1, -1]))
        sweep = ic.LevelSweep(blk, p, 12, 5, 8.4, pol)
        for lv in rng.integers(10, 245, 4).tolist():
            hit = sweep.evaluate(lv)
            if hit is None:
                continue
            seg, rec, _ = hit
            assert seg.level == lv
            wf = gaussian_weight_field(seg, blk.width, blk.height, 8.4)
            assert ic.stability(seg, blk, 5, wf) == rec
            checked += 1
    assert checked > 50


def test_find_msics_matches_exhaustive_sweep(rng):
    for t in range(12):
        blk = random_block(rng)
        p = (int(rng.integers(0, blk.width)), int(rng.integers(0, blk.height)))
        sigma = 8.4 if t % 2 else None
        got = ic.find_msics(blk, p, 12, 5, sigma)
        ref = oracles.exhaustive_msics(blk, p, 12, 5, sigma)
        assert (got is None) == (ref is None)
        if got is not None:
            assert got.segment.level == ref.segment.level
            assert got.segment.polarity == ref.segment.polarity
            assert set(got.segment.points) == set(ref.segment.points)


def test_find_msics_square_corner(square):
    m = ic.find_msics(square, (36, 36), 12, 5, 8.4)
    assert m is not None
    assert m.segment.level in range(41, 201)
    assert (35, 35) in m.segment.points


def test_find_msics_constant_and_bounds():
    flat = _img(np.full((20, 20), 90))
    assert ic.find_msics(flat, (5, 5), 6) is None
    with pytest.raises(ValueError):
        ic.find_msics(flat, (25, 5), 6)


def test_find_msics_level_window(square):
    m = ic.find_msics(square, (36, 36), 12, 5, None, polarity=1, levels=(100, 110))
    assert m is not None and m.segment.polarity == 1
    assert ic.find_msics(square, (36, 36), 12, 5, None, polarity=1, levels=(210, 230)) is None
