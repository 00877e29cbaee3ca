from fractions import Fraction

import numpy as np
import pytest

import oracles
from score_tables import TABLES
from isocorners import evalbench as E
from isocorners.detector import FeatureSet
from isocorners.errors import DimensionMismatch, FormatError, InconsistentInput, TrajectoryOutOfBounds
from isocorners.matcher import MatchRecord


class _Pt:
    def __init__(self, x, y):
        self.position = (x, y)


def table_from(counts, matches, positions=None):
    fsets = []
    for t, c in enumerate(counts):
        pts = positions[t] if positions else [(0, 0)] * c
        fsets.append(FeatureSet(t, tuple(_Pt(*p) for p in pts)))
    links = [[MatchRecord(t, t + 1, a, b, 0.0, "++") for a, b in ms] for t, ms in enumerate(matches)]
    return E.build_tracks(list(zip(fsets, links + [[]])))


def test_full_chains():
    tab = table_from([3] * 6, [[(j, j) for j in range(3)]] * 5)
    assert sorted(len(c) for c in tab.chains) == [6, 6, 6]


def test_chain_breaks():
    ms = [[(0, 0), (1, 1)], [(0, 0), (1, 1)], [(0, 0)], [(0, 0), (1, 1)], [(0, 0), (1, 1)]]
    tab = table_from([2] * 6, ms)
    got = sorted((c.start, len(c)) for c in tab.chains)
    assert got == [(0, 3), (0, 6), (3, 3)]
    assert tab.chains[0].index_at(2) == 0 and tab.chains[0].index_at(9) is None


def test_chains_match_path_enumeration(rng):
    for _ in range(60):
        frames = int(rng.integers(2, 7))
        counts = [int(v) for v in rng.integers(0, 7, frames)]
        matches = []
        for t in range(frames - 1):
            a = rng.permutation(counts[t])[: int(rng.integers(0, counts[t] + 1))]
            b = rng.permutation(counts[t + 1])[: len(a)]
            matches.append([(int(x), int(y)) for x, y in zip(a, b)])
        tab = table_from(counts, matches)
        got = {(c.start, c.indices) for c in tab.chains}
        assert got == oracles.chains_by_paths(counts, matches)


def test_inconsistent_matches():
    with pytest.raises(InconsistentInput):
        table_from([2, 2], [[(0, 5)]])
    with pytest.raises(InconsistentInput):
        table_from([2, 2], [[(0, 0), (1, 0)]])


@pytest.mark.parametrize("k", range(len(TABLES)))
def test_scripted_tables_exact(k):
    t = TABLES[k]
    tab = table_from(t["counts"], t["matches"])
    row = E.m_score(tab, t["i"], t["n"])[0]
    assert row.cls == "overall"
    assert row.ratio == t["expected"]
    assert row.ratio == oracles.m_score_fraction(t["counts"], t["matches"], t["i"], t["n"])
    assert row.m_score == float(t["expected"] * 100)


def test_seven_of_twenty_is_35():
    t = TABLES[1]
    assert E.m_score(table_from(t["counts"], t["matches"]), 5, 5)[0].m_score == 35.0


def test_m_score_range_check():
    tab = table_from([1] * 3, [[(0, 0)]] * 2)
    with pytest.raises(InconsistentInput):
        E.m_score(tab, 1, 5)


def test_resm_non_increasing_in_n(rng):
    for _ in range(30):
        counts = [5] * 8
        matches = [[(int(a), int(b)) for a, b in zip(rng.permutation(5)[:3], rng.permutation(5)[:3])]
                   for _ in range(7)]
        tab = table_from(counts, matches)
        res = [len(E.residual_chains(tab, 7, n)) for n in range(1, 8)]
        assert all(x >= y for x, y in zip(res, res[1:]))


def test_groundtruth_rule():
    ms = [[(0, 0), (1, 1)]] * 4 + [[(0, 0)]]
    tab = table_from([2] * 6, ms)
    val = E.groundtruth_matches(tab, 5)
    assert sorted(len(c) for c in val) == [5, 6]
    short = table_from([2] * 6, [[(0, 0)]] * 3 + [[]] * 2)
    assert [len(c) for c in E.groundtruth_matches(short, 5)] == []
    with pytest.raises(InconsistentInput):
        E.groundtruth_matches(table_from([1] * 3, [[(0, 0)]] * 2), 5)


def _disk(h=60, w=60, r=18):
    yy, xx = np.mgrid[0:h, 0:w]
    return E.RegionMask((xx - 30) ** 2 + (yy - 30) ** 2 <= r * r)


def test_region_classes_match_pixel_oracle(rng):
    mask = _disk()
    cls = E.region_classes(mask, 5.0)
    fg = mask.fg
    bg_pts = np.argwhere(~fg)
    fg_pts = np.argwhere(fg)
    for _ in range(200):
        y, x = int(rng.integers(0, 60)), int(rng.integers(0, 60))
        if fg[y, x]:
            d = np.sqrt(((bg_pts - [y, x]) ** 2).sum(1)).min()
            want = 1 if d <= 5.0 else 2
        else:
            d = np.sqrt(((fg_pts - [y, x]) ** 2).sum(1)).min()
            want = 1 if d <= E.BG_REACH else 0
        assert cls[y, x] == want


def test_boundary_split_examples():
    mask = _disk()
    feats = [_Pt(30, 30), _Pt(30, 14), _Pt(2, 2)]
    bnd, inner, off = E.boundary_split(feats, mask, 5.0)
    assert (bnd, inner, off) == ([1], [0], [2])
    with pytest.raises(DimensionMismatch):
        E.boundary_split([_Pt(70, 3)], mask)


def test_class_rows_and_partition():
    mask = _disk()
    pos = [[(30, 30), (30, 14), (2, 2), (31, 31)], [(30, 30), (30, 14), (2, 2), (31, 31)]]
    tab = table_from([4, 4], [[(0, 0), (1, 1), (2, 2)]], positions=pos)
    rows = {r.cls: r for r in E.m_score(tab, 1, 1, mask)}
    assert rows["boundary"].ratio == Fraction(1, 1)
    assert rows["non_boundary"].ratio == Fraction(1, 2)
    assert rows["overall"].n_detected == rows["boundary"].n_detected + rows["non_boundary"].n_detected
    assert rows["overall"].resm == rows["boundary"].resm + rows["non_boundary"].resm


def test_report_csv_and_table():
    t = TABLES[1]
    tab = table_from(t["counts"], t["matches"])
    rep = E.merge_reports(E.score_sequence(tab, n=5, every=5, method="sided"),
                          E.score_sequence(table_from(t["counts"], [[]] * 5), n=5, method="full"))
    csv = E.report_csv(rep)
    assert csv.splitlines() == ["frame,i,n,class,m_score,resm,n_detected,method",
                                "0,5,5,overall,35.0000,7,20,sided",
                                "0,5,5,overall,0.0000,0,20,full"]
    txt = E.report_table(rep)
    lines = txt.splitlines()
    assert lines[0].split() == ["method", "measure", "overall"]
    assert lines[-4].split()[:3] == ["sided", "M_score(5)", "35.0"]
    assert len({len(x) for x in lines if x and not set(x) <= {"-", " "}}) == 1


def test_scene_static_zero_motion_is_constant():
    spec = E.SyntheticScene(frames=3, width=120, height=100, sprite_w=40, sprite_h=30, start=(10, 10),
                            velocity=(0, 0), bg_mode="static")
    frames = E.generate_scene(spec)
    assert frames[0][0] == frames[1][0] == frames[2][0]


def test_scene_regenerated_background_keeps_foreground():
    spec = E.SyntheticScene(frames=3, width=120, height=100, sprite_w=40, sprite_h=30, start=(10, 10),
                            velocity=(0, 0))
    (a, ma), (b, mb), _ = E.generate_scene(spec)
    assert np.array_equal(ma.fg, mb.fg)
    assert np.array_equal(a.data[ma.fg], b.data[mb.fg])
    assert not np.array_equal(a.data[~ma.fg], b.data[~mb.fg])


def test_scene_moves_sprite_and_is_deterministic():
    spec = E.SyntheticScene(frames=4, width=160, height=120, sprite_w=40, sprite_h=30, start=(10, 10),
                            velocity=(3, 1), seed=9)
    f1 = E.generate_scene(spec)
    f2 = E.generate_scene(spec)
    for (a, ma), (b, mb) in zip(f1, f2):
        assert a.data.tobytes() == b.data.tobytes() and np.array_equal(ma.fg, mb.fg)
    ys, xs = np.nonzero(f1[3][1].fg)
    ys0, xs0 = np.nonzero(f1[0][1].fg)
    assert (xs.min() - xs0.min(), ys.min() - ys0.min()) == (9, 3)
    assert np.array_equal(f1[0][0].data[ys0, xs0], f1[3][0].data[ys, xs])


def test_scene_out_of_bounds():
    with pytest.raises(TrajectoryOutOfBounds):
        E.generate_scene(E.SyntheticScene(frames=30, width=200, height=200, sprite_w=80, sprite_h=60,
                                          start=(100, 10), velocity=(5, 0)))


def test_scene_scrolling():
    spec = E.SyntheticScene(frames=3, width=120, height=100, sprite_w=30, sprite_h=30, start=(80, 60),
                            velocity=(0, 0), bg_mode="scrolling", scroll=(2, 0))
    (a, ma), (b, _), _ = E.generate_scene(spec)
    assert np.array_equal(a.data[:50, 2:60], b.data[:50, 0:58])


def test_scene_config_roundtrip():
    spec = E.SyntheticScene(frames=6, seed=3, bg_mode="static", noise=1.5, textured=False)
    assert E.parse_scene_config(E.format_scene_config(spec)) == spec
    traj = E.parse_scene_config("trajectory = 1,2 3,4  # two frames\n")
    assert traj.frames == 2 and traj.offsets() == [(1, 2), (3, 4)]
    with pytest.raises(FormatError):
        E.parse_scene_config("colour = red\n")
    with pytest.raises(FormatError):
        E.parse_scene_config("frames = many\n")


def test_mask_image_roundtrip():
    m = _disk()
    assert np.array_equal(E.RegionMask.from_image(m.to_image()).fg, m.fg)
