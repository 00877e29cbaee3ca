"""Compiled kernels against the pure-Python fallback, and backend selection."""

import os
import subprocess
import sys

import numpy as np
import pytest

import oracles
from isocorners import _backend, _pykernels as P

BACKENDS = _backend.available()
needs_c = pytest.mark.skipif("cython" not in BACKENDS, reason="compiled extension not built")


def _masks(rng, count):
    for _ in range(count):
        h, w = (int(v) for v in rng.integers(1, 15, 2))
        yield np.ascontiguousarray(rng.random((h, w)) < rng.random(), dtype=np.uint8)


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_traces_cover_every_crack_once(name, rng):
    k = BACKENDS[name]
    for m in _masks(rng, 150):
        h, w = m.shape
        chains = k.trace_all(m)
        allc = np.concatenate([c for c, _ in chains]) if chains else np.empty(0, dtype=np.int64)
        assert len(set(allc.tolist())) == len(allc)
        assert sum(bool(k.crack_exists(m, c)) for c in range(4 * h * w)) == len(allc)
        for c, closed in chains:
            again, cl = k.trace_chain(m, int(c[0]))
            assert bool(cl) == bool(closed)
            assert np.array_equal(np.asarray(again), c)


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_crack_pixels_are_8_connected_boundary(name, rng):
    k = BACKENDS[name]
    for m in _masks(rng, 150):
        h, w = m.shape
        for c, closed in k.trace_all(m):
            xy, pos = k.crack_pixels(np.ascontiguousarray(c, dtype=np.int64), bool(closed), w)
            xy = np.asarray(xy)
            assert len(pos) == len(c)
            for (x, y), cr in zip(xy[np.asarray(pos)], c):
                assert (y * w + x) == cr // 4
            steps = np.abs(np.diff(xy, axis=0)) if len(xy) > 1 else np.zeros((0, 2))
            assert (steps.max(axis=1, initial=1) <= 1).all()
            assert (steps.sum(axis=1) > 0).all()
            for x, y in xy:
                assert m[y, x]


@needs_c
def test_backends_agree(rng):
    C = BACKENDS["cython"]
    for m in _masks(rng, 200):
        h, w = m.shape
        a, b = C.trace_all(m), P.trace_all(m)
        assert len(a) == len(b)
        for (c1, k1), (c2, k2) in zip(a, b):
            assert bool(k1) == bool(k2) and np.array_equal(np.asarray(c1), np.asarray(c2))
            x1, p1 = C.crack_pixels(np.ascontiguousarray(c1, dtype=np.int64), bool(k1), w)
            x2, p2 = P.crack_pixels(np.ascontiguousarray(c2, dtype=np.int64), bool(k2), w)
            assert np.array_equal(np.asarray(x1), np.asarray(x2)) and np.array_equal(np.asarray(p1), np.asarray(p2))
        from isocorners.isocurve import ring_offsets

        off = ring_offsets(h, w)
        for _ in range(3):
            px, py = int(rng.integers(0, w)), int(rng.integers(0, h))
            assert tuple(C.nearest_boundary(m, px, py, off)) == tuple(P.nearest_boundary(m, px, py, off))
        blk = np.ascontiguousarray(rng.integers(0, 6, (h, w)).astype(np.uint8) * 40)
        t1, t2 = C.component_tree(blk), P.component_tree(blk)
        for u, v in zip(t1, t2):
            assert np.array_equal(np.asarray(u), np.asarray(v))
        s1 = C.tree_stability(*t1[:4], 3, int(blk.min()), 1e6)
        s2 = P.tree_stability(*t2[:4], 3, int(blk.min()), 1e6)
        for u, v in zip(s1, s2):
            assert np.array_equal(np.asarray(u), np.asarray(v))
        seed = int(rng.integers(0, h * w))
        lv = int(blk.flat[seed])
        assert np.array_equal(np.asarray(C.component_mask(blk, lv, seed)), np.asarray(P.component_mask(blk, lv, seed)))
        seeds = np.full((h, w), -1, np.int32)
        for i in range(int(rng.integers(1, 5))):
            seeds[rng.integers(h), rng.integers(w)] = i
        d1, l1 = C.edt_labeled(seeds)
        d2, l2 = P.edt_labeled(seeds)
        assert np.array_equal(np.asarray(d1), np.asarray(d2)) and np.array_equal(np.asarray(l1), np.asarray(l2))
        xs = rng.integers(-2, w + 2, 7).astype(np.int64)
        ys = rng.integers(-2, h + 2, 7).astype(np.int64)
        assert np.array_equal(np.asarray(C.polygon_mask(xs, ys, h, w)), P.polygon_mask(xs, ys, h, w))
        v = rng.random(int(rng.integers(1, 30)))
        for mode in range(3):
            assert np.array_equal(np.asarray(C.box_filter_1d(v, 2, 3, mode)), P.box_filter_1d(v, 2, 3, mode))


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_polygon_mask_matches_point_in_polygon(name, rng):
    k = BACKENDS[name]
    for _ in range(150):
        h, w = (int(v) for v in rng.integers(3, 15, 2))
        n = int(rng.integers(3, 9))
        xs = rng.integers(-2, w + 2, n).astype(np.int64)
        ys = rng.integers(-2, h + 2, n).astype(np.int64)
        poly = list(zip(xs.tolist(), ys.tolist()))
        ref = np.array([[oracles.point_in_polygon(x, y, poly) for x in range(w)] for y in range(h)])
        assert np.array_equal(np.asarray(k.polygon_mask(xs, ys, h, w)).astype(bool), ref)


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_component_tree_sizes(name, rng):
    # each node is an 8-connected component of {v >= level}: its pixel count and in-block crack count
    k = BACKENDS[name]
    from scipy import ndimage

    for _ in range(40):
        h, w = (int(v) for v in rng.integers(2, 12, 2))
        blk = np.ascontiguousarray(rng.integers(0, 5, (h, w)).astype(np.uint8) * 50)
        level, size, perim, parent, seed = (np.asarray(a) for a in k.component_tree(blk))
        for node in range(len(level)):
            lab, _ = ndimage.label(blk >= level[node], structure=np.ones((3, 3)))
            comp = lab == lab.flat[seed[node]]
            assert comp.sum() == size[node]
            cracks = (comp[:, 1:] != comp[:, :-1]).sum() + (comp[1:, :] != comp[:-1, :]).sum()
            assert cracks == perim[node]


def test_pure_python_switch():
    code = "from isocorners import _backend; print(_backend.NAME)"
    env = dict(os.environ, ISOCORNERS_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


@needs_c
def test_detect_same_under_both_backends():
    code = ("from isocorners import detector\n"
            "from conftest import square_image\n"
            "import sys\n"
            "sys.stdout.write(detector.format_features(detector.detect(square_image())))\n")
    here = os.path.dirname(__file__)
    outs = []
    for pure in ("1", "0"):
        env = dict(os.environ, ISOCORNERS_PURE_PYTHON=pure, PYTHONPATH=here)
        outs.append(subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                                   check=True).stdout)
    assert outs[0] == outs[1] and outs[0].count("\n") == 4
