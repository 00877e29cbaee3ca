"""Iso-intensity curves, their Up/Down correspondents and segment stability.

An iso-curve at level ``I`` is the boundary of a connected component of the
upper level set ``{v >= I}``.  Boundaries are traced as chains of cracks
(edges between a set pixel and an unset 4-neighbour inside the block); the
pixel chain is the set pixel of every crack with repeats collapsed, which is
8-connected.  Components touching the block edge give open chains.

Dark-on-bright structure is handled by running the same machinery on the
inverted block; a segment records which ``polarity`` it came from and its
``level`` is always expressed in that oriented frame.
"""

from __future__ import annotations

import math
from bisect import bisect_left
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Optional, Sequence

import numpy as np

from ._backend import kernels
from .errors import EmptyCurve, NoCorrespondent, PointNotOnCurve
from .raster import GrayImage, WeightField, gaussian_weight_field, weights_at

RHO_CAP = 1.0e6
Point = tuple[int, int]


class IsoCurve:
    """One traced boundary chain of a level set.

    Points are held as an (n, 2) array; the tuple form is built on first use.
    """

    __slots__ = ("level", "closed", "cracks", "crack_point", "width", "_xy", "_points")

    def __init__(self, level: int, points, closed: bool, cracks: np.ndarray, crack_point: np.ndarray,
                 width: int = 0, *, xy: Optional[np.ndarray] = None):
        self.level = level
        self.closed = closed
        self.cracks = cracks
        self.crack_point = crack_point
        self.width = width
        self._points = None if points is None else tuple(points)
        self._xy = xy

    def __len__(self):
        return len(self._xy) if self._xy is not None else len(self._points)

    def __repr__(self):
        return f"IsoCurve(level={self.level}, n={len(self)}, closed={self.closed})"

    @property
    def points(self) -> tuple:
        if self._points is None:
            self._points = tuple(map(tuple, self._xy.tolist()))
        return self._points

    def xy(self) -> np.ndarray:
        if self._xy is None:
            self._xy = np.asarray(self._points, dtype=np.int64).reshape(-1, 2)
        return self._xy

    @classmethod
    def from_points(cls, points, closed: bool = False, level: int = 0) -> "IsoCurve":
        """A chain given directly by its points (no crack bookkeeping)."""
        pts = tuple((int(x), int(y)) for x, y in points)
        return cls(level, pts, closed, np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64), 0)


@dataclass(frozen=True)
class IsoCurveSegment:
    level: int
    points: tuple
    center_index: int
    scale: float = 0.0
    truncated: bool = False
    polarity: int = 1
    closed_source: bool = False

    def __len__(self):
        return len(self.points)

    @property
    def center(self) -> Point:
        return self.points[self.center_index]

    def xy(self) -> np.ndarray:
        return np.asarray(self.points, dtype=np.int64).reshape(-1, 2)

    def translated(self, dx: int, dy: int) -> "IsoCurveSegment":
        pts = tuple((x + dx, y + dy) for x, y in self.points)
        return IsoCurveSegment(self.level, pts, self.center_index, self.scale,
                               self.truncated, self.polarity, self.closed_source)


@dataclass(frozen=True)
class StabilityRecord:
    rho: float
    delta_area: float
    weighted_len: float
    delta: int


@dataclass(frozen=True)
class MSICS:
    segment: IsoCurveSegment
    stability: StabilityRecord


# ---------------------------------------------------------------- extraction

def _curve_from_cracks(cracks: np.ndarray, closed: bool, w: int, level: int) -> IsoCurve:
    xy, pos = kernels.crack_pixels(np.ascontiguousarray(cracks, dtype=np.int64), bool(closed), w)
    return IsoCurve(level, None, bool(closed), cracks, pos, w, xy=xy)


def _oriented(block: GrayImage, polarity: int) -> np.ndarray:
    return block.data if polarity > 0 else 255 - block.data


class LevelSet:
    """Thresholded mask whose curves are traced on demand.

    ``locate`` traces only the chain through the queried pixel; ``curves``
    traces everything.
    """

    __slots__ = ("level", "mask", "_curves", "_by_crack")

    def __init__(self, data: np.ndarray, level: int):
        self.level = level
        self.mask = np.ascontiguousarray(data >= level, dtype=np.uint8)
        self._curves = None
        self._by_crack: dict[int, tuple] = {}

    @property
    def curves(self) -> list[IsoCurve]:
        if self._curves is None:
            w = self.mask.shape[1]
            self._curves = [_curve_from_cracks(c, closed, w, self.level)
                            for c, closed in kernels.trace_all(self.mask)]
        return self._curves

    def canonical_crack(self, p: Point) -> int:
        """First existing crack of pixel ``p`` in top, right, bottom, left order; -1 if none."""
        x, y = p
        h, w = self.mask.shape
        if not (0 <= x < w and 0 <= y < h) or not self.mask[y, x]:
            return -1
        for s, (dx, dy) in enumerate(((0, -1), (1, 0), (0, 1), (-1, 0))):
            nx, ny = x + dx, y + dy
            if 0 <= nx < w and 0 <= ny < h and not self.mask[ny, nx]:
                return (y * w + x) * 4 + s
        return -1

    def locate(self, p: Point) -> Optional[tuple[IsoCurve, int]]:
        """Curve through pixel ``p`` and p's index on it (via its canonical crack)."""
        c = self.canonical_crack(p)
        if c < 0:
            return None
        hit = self._by_crack.get(c)
        if hit is None:
            cracks, closed = kernels.trace_chain(self.mask, c)
            cv = _curve_from_cracks(cracks, closed, self.mask.shape[1], self.level)
            hit = (cv, int(cv.crack_point[int(np.flatnonzero(cracks == c)[0])]))
            self._by_crack[c] = hit
        return hit

    def nearest(self, p: Point) -> Optional[Point]:
        h, w = self.mask.shape
        x, y = kernels.nearest_boundary(self.mask, int(p[0]), int(p[1]), ring_offsets(h, w))
        return None if x < 0 else (int(x), int(y))


@lru_cache(maxsize=16)
def ring_offsets(h: int, w: int) -> np.ndarray:
    """All (dy, dx) offsets reachable inside an h x w block, by (d^2, dy, dx)."""
    dy, dx = np.mgrid[-(h - 1):h, -(w - 1):w]
    dy = dy.ravel()
    dx = dx.ravel()
    order = np.lexsort((dx, dy, dy * dy + dx * dx))
    out = np.ascontiguousarray(np.stack([dy[order], dx[order]], axis=1), dtype=np.int32)
    out.setflags(write=False)
    return out


def extract_iso_curves(block: GrayImage, level: int) -> list[IsoCurve]:
    """Boundary chains of all components of ``{pixel >= level}`` in the block."""
    if not 0 <= level <= 255:
        raise ValueError("level must lie in [0, 255]")
    return list(LevelSet(block.data, level).curves)


def is_boundary_pixel(mask: np.ndarray, x: int, y: int) -> bool:
    """Set pixel with an unset 4-neighbour inside the mask."""
    h, w = mask.shape
    if not mask[y, x]:
        return False
    for dx, dy in ((0, -1), (1, 0), (0, 1), (-1, 0)):
        nx, ny = x + dx, y + dy
        if 0 <= nx < w and 0 <= ny < h and not mask[ny, nx]:
            return True
    return False


def dump_curves(curves: Iterable) -> str:
    """Text dump, one curve per line: ``level; x0,y0 x1,y1 ...``."""
    lines = []
    for c in curves:
        pts = " ".join(f"{x},{y}" for x, y in c.points)
        lines.append(f"{c.level}; {pts}")
    return "\n".join(lines) + ("\n" if lines else "")


def parse_curves(text: str) -> list[tuple[int, list[Point]]]:
    out = []
    for raw in text.splitlines():
        if not raw.strip():
            continue
        head, _, body = raw.partition(";")
        pts = [tuple(int(v) for v in tok.split(",")) for tok in body.split()]
        out.append((int(head), pts))
    return out


# ----------------------------------------------------------------- segments

def _cut(curve: IsoCurve, c: int, k: int, level: int, polarity: int, scale: float) -> IsoCurveSegment:
    xy = curve.xy()
    n = len(xy)
    if curve.closed:
        if n >= 2 * k + 1:
            seg = tuple(map(tuple, xy[(c + np.arange(-k, k + 1)) % n].tolist()))
            return IsoCurveSegment(level, seg, k, scale, False, polarity, True)
        lo = (n - 1) // 2
        seg = tuple(map(tuple, xy[(c + np.arange(-lo, n - lo)) % n].tolist()))
        return IsoCurveSegment(level, seg, lo, scale, True, polarity, True)
    a = max(0, c - k)
    b = min(n, c + k + 1)
    return IsoCurveSegment(level, tuple(map(tuple, xy[a:b].tolist())), c - a, scale, (b - a) < 2 * k + 1,
                           polarity, False)


def segment_around(chains: Sequence[IsoCurve], p: Point, k: int, *, polarity: int = 1,
                   scale: float = 0.0) -> IsoCurveSegment:
    """The 2k+1 points centred on ``p`` along the chain that carries it.

    Closed chains wrap (capped at the whole chain); open chains are
    truncated at their ends. Either cut sets ``truncated``.
    """
    p = (int(p[0]), int(p[1]))
    for cv in chains:
        if cv.width:
            # canonical crack: first existing side of p in top/right/bottom/left order
            base = (p[1] * cv.width + p[0]) * 4
            hit = np.flatnonzero((cv.cracks >= base) & (cv.cracks < base + 4))
            if hit.size:
                c = int(cv.crack_point[hit[np.argmin(cv.cracks[hit])]])
                return _cut(cv, c, k, cv.level, polarity, scale)
        elif p in cv.points:
            return _cut(cv, cv.points.index(p), k, cv.level, polarity, scale)
    raise PointNotOnCurve(f"{p} lies on none of the {len(chains)} chains")


def segment_at(ls: LevelSet, p: Point, k: int, *, polarity: int = 1,
               scale: float = 0.0) -> Optional[tuple[IsoCurveSegment, Point]]:
    """Segment on the boundary pixel nearest ``p`` and that pixel."""
    q = ls.nearest(p)
    if q is None:
        return None
    curve, c = ls.locate(q)
    return _cut(curve, c, k, ls.level, polarity, scale), q


# ------------------------------------------------------------ correspondents

def _nearest_index(xy: np.ndarray, p) -> int:
    d = (xy[:, 0] - p[0]) ** 2 + (xy[:, 1] - p[1]) ** 2
    return int(np.argmin(d))


def correspondent(ls: LevelSet, segment: IsoCurveSegment) -> IsoCurveSegment:
    """Portion of ``ls``'s curves matching ``segment`` (see ``find_up_down``)."""
    q = ls.nearest(segment.center)
    if q is None:
        raise NoCorrespondent(f"level {ls.level} has no boundary")
    curve, _ = ls.locate(q)
    xy = curve.xy()
    ends = np.array((segment.points[0], segment.points[-1]), dtype=np.int64)
    d = ((xy[None, :, :] - ends[:, None, :]) ** 2).sum(axis=2)
    i0, i1 = (int(v) for v in d.argmin(axis=1))
    n = len(xy)
    if not curve.closed:
        idx = np.arange(i0, i1 + 1) if i0 <= i1 else np.arange(i0, i1 - 1, -1)
    else:
        fwd = (i0 + np.arange((i1 - i0) % n + 1)) % n
        bwd = (i0 - np.arange((i0 - i1) % n + 1)) % n
        mx, my = segment.points[len(segment.points) // 2]

        def gap(arc):
            x, y = xy[arc[len(arc) // 2]]
            return (int(x) - mx) ** 2 + (int(y) - my) ** 2

        idx = bwd if gap(bwd) < gap(fwd) else fwd
    if len(idx) < (len(segment.points) + 1) // 2:
        # collapsed onto a tiny unrelated curve: the segment did not survive the level change
        raise NoCorrespondent(f"correspondent at level {ls.level} has {len(idx)} points")
    pts = tuple(map(tuple, xy[idx].tolist()))
    return IsoCurveSegment(ls.level, pts, len(pts) // 2, segment.scale, False,
                           segment.polarity, curve.closed)


def _clamp_level(v: int) -> int:
    return min(max(v, 0), 255)


def find_up_down(segment: IsoCurveSegment, block: GrayImage, delta: int) -> tuple[IsoCurveSegment, IsoCurveSegment]:
    """Correspondents of ``segment`` on the iso-curves at ``level +- delta``.

    Each is cut from the curve passing nearest the segment centre, between the
    curve points nearest the two segment endpoints; on a closed curve the arc
    whose middle point is nearer the segment's middle point is kept.
    A correspondent shorter than half the segment counts as vanished.
    Levels outside [0, 255] are clamped.
    """
    data = _oriented(block, segment.polarity)
    up = correspondent(LevelSet(data, _clamp_level(segment.level + delta)), segment)
    down = correspondent(LevelSet(data, _clamp_level(segment.level - delta)), segment)
    return up, down


def weighted_delta_area(up: IsoCurveSegment, down: IsoCurveSegment, weights: Optional[WeightField] = None,
                        shape: Optional[tuple[int, int]] = None) -> float:
    """Weight mass of the pixels enclosed by ``up``, ``reversed(down)`` and the two end connectors.

    A pixel is enclosed when its lattice point passes an even-odd test
    against the closed polygon.  ``shape`` (h, w) bounds the scan when no
    weight field is given.
    """
    if len(up.points) == 0 or len(down.points) == 0:
        raise EmptyCurve("up/down segment is empty")
    if up.points == down.points:
        return 0.0
    hw = (weights.height, weights.width) if weights is not None else (shape or (None, None))
    inside = _enclosed(up, down, *hw)
    if weights is None:
        return float(np.count_nonzero(inside))
    return math.fsum(weights.weights[inside].tolist())


def _enclosed(up: IsoCurveSegment, down: IsoCurveSegment, h: Optional[int], w: Optional[int]) -> np.ndarray:
    poly = np.asarray(up.points + tuple(reversed(down.points)), dtype=np.int64)
    xs = np.ascontiguousarray(poly[:, 0])
    ys = np.ascontiguousarray(poly[:, 1])
    if h is None:
        h, w = int(ys.max()) + 1, int(xs.max()) + 1
    return kernels.polygon_mask(xs, ys, int(h), int(w)).view(bool)


def _weighted_len(segment: IsoCurveSegment, weights: Optional[WeightField]) -> float:
    if weights is None:
        return float(len(segment.points))
    xy = segment.xy()
    return math.fsum(weights.weights[xy[:, 1], xy[:, 0]].tolist())


def stability_from(segment: IsoCurveSegment, up_ls: LevelSet, down_ls: LevelSet, delta: int,
                   weights: Optional[WeightField], shape) -> StabilityRecord:
    wl = _weighted_len(segment, weights)
    try:
        up = correspondent(up_ls, segment)
        down = correspondent(down_ls, segment)
    except NoCorrespondent:
        return StabilityRecord(0.0, 0.0, wl, delta)
    da = weighted_delta_area(up, down, weights, shape)
    rho = RHO_CAP if da <= 0 else wl / da
    return StabilityRecord(rho, da, wl, delta)


def stability(segment: IsoCurveSegment, block: GrayImage, delta: int,
              weights: Optional[WeightField] = None) -> StabilityRecord:
    """Stability rho = weighted length / weighted area swept between Up and Down.

    A vanished correspondent gives rho = 0; zero swept area gives ``RHO_CAP``.
    """
    data = _oriented(block, segment.polarity)
    up_ls = LevelSet(data, _clamp_level(segment.level + delta))
    down_ls = LevelSet(data, _clamp_level(segment.level - delta))
    return stability_from(segment, up_ls, down_ls, delta, weights, data.shape)


# --------------------------------------------------------------- level sweep

class LevelSweep:
    """Per-level segment and stability around one point, memoised on level-set identity.

    Two thresholds give the same mask exactly when no pixel value falls
    between them, so masks are cached by the number of distinct block values
    below the threshold, and stabilities by the triple of masks they read.
    """

    def __init__(self, block: GrayImage, p: Point, k: int, delta: int, sigma: Optional[float],
                 polarity: int, scale: float = 0.0):
        self.data = np.ascontiguousarray(_oriented(block, polarity))
        self.values = np.unique(self.data).tolist()
        self.p = (int(p[0]), int(p[1]))
        self.k = k
        self.delta = delta
        self.sigma = sigma
        self.polarity = polarity
        self.scale = scale
        self._sets: dict[int, LevelSet] = {}
        self._evals: dict[tuple, object] = {}
        self._wlen: dict[tuple, float] = {}

    def _key(self, level: int) -> int:
        return bisect_left(self.values, level)

    def level_set(self, level: int) -> LevelSet:
        key = self._key(level)
        ls = self._sets.get(key)
        if ls is None:
            ls = LevelSet(self.data, level)
            self._sets[key] = ls
        return ls

    def evaluate(self, level: int):
        """(segment, record, nearest pixel) at ``level`` or None if no usable segment."""
        lv = _clamp_level(level)
        up = _clamp_level(lv + self.delta)
        dn = _clamp_level(lv - self.delta)
        key = (self._key(lv), self._key(up), self._key(dn))
        if key in self._evals:
            hit = self._evals[key]
            if hit is None:
                return None
            seg, rec, q = hit
            if seg.level != lv:
                seg = IsoCurveSegment(lv, seg.points, seg.center_index, seg.scale, seg.truncated,
                                      seg.polarity, seg.closed_source)
            return seg, rec, q
        res = None
        found = segment_at(self.level_set(lv), self.p, self.k, polarity=self.polarity, scale=self.scale)
        if found is not None and len(found[0].points) >= self.k + 1:
            seg, q = found
            if seg.level != lv:
                # the cached level set may carry another threshold with the same mask
                seg = IsoCurveSegment(lv, seg.points, seg.center_index, seg.scale, seg.truncated,
                                      seg.polarity, seg.closed_source)
            rec = self._stability(seg, self.level_set(up), self.level_set(dn))
            res = (seg, rec, q)
        self._evals[key] = res
        return res

    def _stability(self, seg: IsoCurveSegment, up_ls: LevelSet, dn_ls: LevelSet) -> StabilityRecord:
        # same record as stability_from; weights are looked up only where they are summed
        h, w = self.data.shape
        try:
            up = correspondent(up_ls, seg)
            down = correspondent(dn_ls, seg)
        except NoCorrespondent:
            return StabilityRecord(0.0, 0.0, self._weighted_len(seg), self.delta)
        wl = self._weighted_len(seg)
        if up.points == down.points:
            return StabilityRecord(RHO_CAP, 0.0, wl, self.delta)
        inside = _enclosed(up, down, h, w)
        if self.sigma is None:
            da = float(np.count_nonzero(inside))
        else:
            ys, xs = np.nonzero(inside)
            da = math.fsum(weights_at(seg, self.sigma, xs, ys).tolist())
        return StabilityRecord(RHO_CAP if da <= 0 else wl / da, da, wl, self.delta)

    def _weighted_len(self, seg: IsoCurveSegment) -> float:
        if self.sigma is None:
            return float(len(seg.points))
        key = (seg.points, seg.center_index)
        hit = self._wlen.get(key)
        if hit is None:
            xy = seg.xy()
            hit = self._wlen[key] = math.fsum(weights_at(seg, self.sigma, xy[:, 0], xy[:, 1]).tolist())
        return hit

    def rho(self, level: int) -> float:
        if level < 0 or level > 255:
            return 0.0
        r = self.evaluate(level)
        return 0.0 if r is None else r[1].rho

    def maxima(self, lo: int = 0, hi: int = 255) -> list[tuple[int, int]]:
        """Plateaus ``(a, b)`` of rho > 0 with strictly lower neighbours, meeting [lo, hi]."""
        out = []
        lv = lo
        while lv <= hi:
            r = self.rho(lv)
            if r <= 0:
                lv += 1
                continue
            a = b = lv
            while b < 255 and self.rho(b + 1) == r:
                b += 1
            while a > 0 and self.rho(a - 1) == r:
                a -= 1
            if (a == 0 or self.rho(a - 1) < r) and (b == 255 or self.rho(b + 1) < r):
                out.append((a, b))
            lv = b + 1
        return out


def _candidates(sweep: LevelSweep, lo: int, hi: int):
    for a, b in sweep.maxima(lo, hi):
        m = (a + b) // 2
        seg, rec, q = sweep.evaluate(m)
        d2 = (q[0] - sweep.p[0]) ** 2 + (q[1] - sweep.p[1]) ** 2
        yield (d2, -rec.rho, 0 if sweep.polarity > 0 else 1, m), MSICS(seg, rec)


def find_msics(block: GrayImage, p: Point, k: int, delta: int = 5, sigma: Optional[float] = None, *,
               polarity: int = 0, levels: Optional[tuple[int, int]] = None,
               scale: float = 0.0) -> Optional[MSICS]:
    """Maximally stable segment through, or nearest to, ``p``.

    Stability is evaluated as a function of the level; its local maxima are
    the plateaus whose neighbours on both sides are strictly lower, each
    represented by its middle level.  ``levels`` restricts the plateaus to
    those meeting an inclusive level window; a plateau reaching past the
    window still reports its own middle.  Among the maxima the one whose curve passes closest to ``p``
    wins, then higher rho, then bright polarity, then lower level.

    ``sigma`` switches on Gaussian weighting along the segment (None = unweighted).
    ``polarity`` is +1 (bright sets), -1 (dark sets) or 0 (both).
    """
    w, h = block.width, block.height
    if not (0 <= p[0] < w and 0 <= p[1] < h):
        raise ValueError(f"p={p} outside the {w}x{h} block")
    lo, hi = (0, 255) if levels is None else (max(0, levels[0]), min(255, levels[1]))
    best = None
    for pol in ((1, -1) if polarity == 0 else (polarity,)):
        sweep = LevelSweep(block, p, k, delta, sigma, pol, scale)
        for key, m in _candidates(sweep, lo, hi):
            if best is None or key < best[0]:
                best = (key, m)
    return None if best is None else best[1]
