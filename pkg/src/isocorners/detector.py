"""Corner detection on maximally stable iso-curve segments.

Detection runs in two stages:

1. Initialisation.  Overlapping blocks of side ``B`` (shift ``B/2``) are
   swept with a component tree for both polarities.  Regions whose
   stability beats both their parent and their largest child are kept, and
   corners are picked on their boundaries at twice the final scale with no
   weighting.
2. Convergence.  Each initial corner is refined in a block of side ``B/2``
   centred on it: find the weighted maximally stable segment near the
   corner (level within +-delta of the previous one), re-detect the corner
   on it, and repeat until corner pixel and level no longer change.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from ._backend import kernels
from .cornerness import kappa_profile, nms_indices
from .errors import DegenerateSupport, FormatError, ImageTooSmall, NoStableCurve
from .isocurve import (MSICS, RHO_CAP, IsoCurveSegment, LevelSet, StabilityRecord, _cut,
                       _curve_from_cracks, find_msics)
from .raster import GrayImage

Point = tuple[int, int]


@dataclass(frozen=True)
class DetectorParams:
    scale_s: float = 8.4
    block_B: int = 100
    c_scale: float = 10.0 / 7.0
    delta: int = 5
    min_kappa: float = 0.05
    min_rho: float = 0.0
    max_iterations: int = 10
    sigma_factor: float = 0.7
    dedup_radius: float = 2.0

    def __post_init__(self):
        if self.scale_s <= 0 or self.block_B < 4 or self.delta < 1 or self.max_iterations < 1:
            raise ValueError(f"invalid detector parameters: {self}")

    @property
    def k(self) -> int:
        """Segment half-width at scale s."""
        return int(round(self.c_scale * self.scale_s))

    @property
    def sigma(self) -> float:
        return self.sigma_factor * self.k

    @property
    def conv_block(self) -> int:
        """f(s): B/2, kept even."""
        return 2 * int(round(self.block_B / 4.0))

    @property
    def nms_window(self) -> int:
        return max(1, self.k // 2)

    @property
    def init_k(self) -> int:
        return 2 * self.k

    @property
    def init_delta(self) -> int:
        return max(1, int(math.ceil(self.delta / 2.0)))


@dataclass(frozen=True)
class CurveFeature:
    position: Point
    scale: float
    kappa: float
    rho: float
    msics: MSICS
    iterations_used: int = 0
    converged: bool = False

    @property
    def level(self) -> int:
        return self.msics.segment.level

    @property
    def polarity(self) -> int:
        return self.msics.segment.polarity


@dataclass(frozen=True)
class FeatureSet:
    frame_id: int
    features: tuple = field(default_factory=tuple)

    def __len__(self):
        return len(self.features)

    def __iter__(self):
        return iter(self.features)


@dataclass(frozen=True)
class Calibration:
    params: DetectorParams
    count: int
    target: int

    @property
    def gap(self) -> int:
        return self.count - self.target


# ------------------------------------------------------------ initialisation

START_MERGE_RADIUS = 0.5  # detect: only same-pixel starts are merged

def block_origins(size: int, block: int) -> list[int]:
    """Block offsets with shift block/2, the last one flush with the far edge."""
    step = max(1, block // 2)
    out = list(range(0, size - block + 1, step))
    if out[-1] != size - block:
        out.append(size - block)
    return out


def _orient(data: np.ndarray, polarity: int) -> np.ndarray:
    return np.ascontiguousarray(data if polarity > 0 else 255 - data)


def _polarity_corners(data: np.ndarray, params: DetectorParams, pol: int, x0: int, y0: int):
    k2 = params.init_k
    sigma = params.sigma_factor * k2
    win = max(1, k2 // 2)
    h, w = data.shape
    level, size, perim, parent, seed = kernels.component_tree(data)
    rho, blev, big = kernels.tree_stability(level, size, perim, parent, params.init_delta,
                                            int(data.min()), RHO_CAP)
    pr = np.where(parent >= 0, rho[np.maximum(parent, 0)], 0.0)
    cr = np.where(big >= 0, rho[np.maximum(big, 0)], 0.0)
    maximal = np.flatnonzero((rho > 0) & (rho > pr) & (rho > cr) & (perim >= 2 * k2 + 1))
    out = []
    for n in maximal.tolist():
        L = int(blev[n])
        mask = kernels.component_mask(data, L, int(seed[n]))
        stab = StabilityRecord(float(rho[n]), float(perim[n]) / float(rho[n]), float(perim[n]),
                               params.init_delta)
        for cracks, closed in kernels.trace_all(mask):
            if cracks.size < 2 * k2 + 1:
                continue  # a chain never has more points than cracks
            cv = _curve_from_cracks(cracks, closed, w, L)
            npts = len(cv.points)
            if npts < 2 * k2 + 1:
                continue
            kap = kappa_profile(cv, sigma)
            for i in nms_indices(kap, win, params.min_kappa, periodic=cv.closed).tolist():
                if not cv.closed and (i < k2 // 2 or i >= npts - k2 // 2):
                    continue  # open chain ends are cut by the block border
                seg = _cut(cv, i, k2, L, pol, 2 * params.scale_s).translated(x0, y0)
                out.append((float(kap[i]), seg.center, MSICS(seg, stab)))
    return out


def _block_corners(args):
    data, params, x0, y0 = args
    out = []
    for pol in (1, -1):
        out.extend(_polarity_corners(_orient(data, pol), params, pol, x0, y0))
    return out


def _check_size(img: GrayImage, params: DetectorParams):
    if img.width < params.block_B or img.height < params.block_B:
        raise ImageTooSmall(f"{img.width}x{img.height} image is smaller than block {params.block_B}")


def _merge_initial(found, radius: float):
    found = sorted(found, key=lambda t: (-t[2].stability.rho, -t[0], t[1][1], t[1][0],
                                         -t[2].segment.polarity, t[2].segment.level))
    kept = []
    grid: dict[tuple[int, int], list] = {}
    cell = max(1, int(math.ceil(radius)))
    r2 = radius * radius
    for kap, p, m in found:
        gx, gy = p[0] // cell, p[1] // cell
        near = (q for dx in (-1, 0, 1) for dy in (-1, 0, 1) for q in grid.get((gx + dx, gy + dy), ()))
        if any((p[0] - q[0]) ** 2 + (p[1] - q[1]) ** 2 <= r2 for q in near):
            continue
        grid.setdefault((gx, gy), []).append(p)
        kept.append((kap, p, m))
    kept.sort(key=lambda t: (t[1][1], t[1][0]))
    return [(p, m) for _, p, m in kept]


def initialize(img: GrayImage, params: DetectorParams = DetectorParams(), *, workers: int = 1,
               merge_radius: Optional[float] = None):
    """Initial corners ``(point, MSICS)`` from overlapping blocks, sorted by (y, x).

    Corners closer than ``merge_radius`` (default: the NMS window) collapse
    onto the one with the highest rho.
    """
    _check_size(img, params)
    B = params.block_B
    jobs = [(np.ascontiguousarray(img.data[y0:y0 + B, x0:x0 + B]), params, x0, y0)
            for y0 in block_origins(img.height, B) for x0 in block_origins(img.width, B)]
    found = []
    for part in _map(_block_corners, jobs, workers):
        found.extend(part)
    # overlapping blocks see the same corner with slightly different support
    return _merge_initial(found, float(params.nms_window if merge_radius is None else merge_radius))


# --------------------------------------------------------------- convergence

@dataclass(frozen=True)
class _Step:
    corner: Point
    msics: MSICS
    kappa: float


def _mean_distance(a: IsoCurveSegment, b: IsoCurveSegment) -> float:
    pa = a.xy().astype(np.float64)
    pb = b.xy().astype(np.float64)
    d2 = ((pa[:, None, :] - pb[None, :, :]) ** 2).sum(-1)
    return float(np.sqrt(d2.min(axis=1)).mean())


def convergence_step(img: GrayImage, corner: Point, level: int, polarity: int,
                     params: DetectorParams) -> _Step:
    """One refinement step from state (corner, level, polarity)."""
    half = params.conv_block // 2
    cx, cy = corner
    x0, y0 = cx - half, cy - half
    side = params.conv_block
    if x0 < 0 or y0 < 0 or x0 + side > img.width or y0 + side > img.height:
        raise NoStableCurve(f"convergence block around {corner} leaves the image")
    block = img.crop(x0, y0, side, side)
    k, d = params.k, params.delta
    m = find_msics(block, (half, half), k, d, params.sigma, polarity=polarity,
                   levels=(level - d, level + d), scale=params.scale_s)
    if m is None:
        raise NoStableCurve(f"no stable segment near {corner}")
    seg = m.segment
    ls = LevelSet(_orient(block.data, seg.polarity), seg.level)
    curve, c = ls.locate(seg.center)
    ext = _cut(curve, c, 2 * k, seg.level, seg.polarity, params.scale_s)
    try:
        kap = kappa_profile(ext, params.sigma)
    except DegenerateSupport as exc:
        raise NoStableCurve(str(exc)) from exc
    periodic = ext.closed_source and ext.truncated
    best = None
    for i in nms_indices(kap, params.nms_window, params.min_kappa, periodic=periodic).tolist():
        if abs(i - ext.center_index) > k:
            continue
        px, py = ext.points[i]
        key = ((px - half) ** 2 + (py - half) ** 2, i)
        if best is None or key < best[0]:
            best = (key, i)
    if best is None:
        raise NoStableCurve(f"no corner on the stable segment near {corner}")
    i = best[1]
    px, py = ext.points[i]
    return _Step((px + x0, py + y0), MSICS(seg.translated(x0, y0), m.stability), float(kap[i]))


def converge(img: GrayImage, start, params: DetectorParams = DetectorParams(), *, cache=None) -> CurveFeature:
    """Iterate refinement steps to a fixed point of (corner, level).

    Raises NoStableCurve when a step finds nothing, or when the new segment
    strays from the previous one (mean point distance >= k/2).  Hitting
    ``max_iterations`` (or entering a cycle, which would run into it) returns a
    feature with ``converged=False``.
    """
    point, msics = start
    corner = (int(point[0]), int(point[1]))
    level, polarity = msics.segment.level, msics.segment.polarity
    prev_seg = msics.segment
    cache = {} if cache is None else cache
    step = None
    visited = set()
    for it in range(1, params.max_iterations + 1):
        key = (corner, level, polarity)
        if key in visited:
            break  # steps are deterministic, so a revisited state cycles until the cap
        visited.add(key)
        step = cache.get(key)
        if step is None:
            try:
                step = convergence_step(img, corner, level, polarity, params)
            except NoStableCurve as exc:
                step = exc
            cache[key] = step
        if isinstance(step, NoStableCurve):
            raise step
        if _mean_distance(step.msics.segment, prev_seg) >= params.k / 2.0:
            raise NoStableCurve(f"segment near {corner} is not similar in shape to the previous one")
        new_level = step.msics.segment.level
        if step.corner == corner and new_level == level:
            return CurveFeature(corner, params.scale_s, step.kappa, step.msics.stability.rho,
                                step.msics, it, True)
        corner, level, prev_seg = step.corner, new_level, step.msics.segment
    return CurveFeature(corner, params.scale_s, step.kappa, step.msics.stability.rho,
                        step.msics, params.max_iterations, False)


def _converge_chunk(args):
    img_data, starts, params = args
    img = GrayImage(img_data.shape[1], img_data.shape[0], img_data)
    cache = {}
    out = []
    for st in starts:
        try:
            out.append(converge(img, st, params, cache=cache))
        except NoStableCurve:
            out.append(None)
    return out


def _map(fn, jobs, workers: int):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, jobs))


def deduplicate(features: Sequence[CurveFeature], radius: float) -> list[CurveFeature]:
    """Keep the strongest feature of every cluster closer than ``radius``."""
    order = sorted(features, key=lambda f: (-f.rho, -f.kappa, f.position[1], f.position[0]))
    kept = []
    r2 = radius * radius
    for f in order:
        if any((f.position[0] - g.position[0]) ** 2 + (f.position[1] - g.position[1]) ** 2 <= r2 for g in kept):
            continue
        kept.append(f)
    kept.sort(key=lambda f: (f.position[1], f.position[0]))
    return kept


def candidates(img: GrayImage, params: DetectorParams = DetectorParams(), *, workers: int = 1) -> list[CurveFeature]:
    """Converged, deduplicated features before the rho / kappa thresholds."""
    runs = convergence_runs(img, params, workers=workers)
    return deduplicate([f for f in runs if f is not None and f.converged], params.dedup_radius)


def convergence_runs(img: GrayImage, params: DetectorParams = DetectorParams(), *,
                     workers: int = 1) -> list[Optional[CurveFeature]]:
    """Outcome of every convergence run: a feature (converged or capped) or None on failure.

    Runs start from every initial corner on a distinct pixel (corners that
    the initial merge would fold together often converge to different fixed
    points), then from the dual of every converged result.
    """
    starts = initialize(img, params, workers=workers, merge_radius=START_MERGE_RADIUS)
    runs = _converge_all(img, starts, params, workers)
    # the same corner seen from the other side of its curve: the complementary
    # level set puts it one pixel over, and either version may be the one reached
    seen = {(f.position, f.polarity) for f in runs if f is not None and f.converged}
    duals = []
    for f in runs:
        if f is None or not f.converged:
            continue
        d = dual_start(f)
        if (d[0], d[1].segment.polarity) not in seen:
            seen.add((d[0], d[1].segment.polarity))
            duals.append(d)
    return runs + _converge_all(img, duals, params, workers)


def dual_start(feature: CurveFeature):
    """Start state on the complementary level set of ``feature``'s segment."""
    seg = feature.msics.segment
    level = min(256 - seg.level, 255)
    dual = IsoCurveSegment(level, seg.points, seg.center_index, seg.scale, seg.truncated,
                           -seg.polarity, seg.closed_source)
    return feature.position, MSICS(dual, feature.msics.stability)


def _converge_all(img: GrayImage, starts, params: DetectorParams, workers: int) -> list[Optional[CurveFeature]]:
    if not starts:
        return []
    nchunk = max(1, workers) * 4 if workers > 1 else 1
    chunks = [starts[i::nchunk] for i in range(nchunk)]
    res = _map(_converge_chunk, [(img.data, c, params) for c in chunks], workers)
    # undo the striding so the run order does not depend on the worker count
    out: list = [None] * len(starts)
    for i, part in enumerate(res):
        out[i::nchunk] = part
    return out


def threshold(features: Sequence[CurveFeature], params: DetectorParams) -> list[CurveFeature]:
    return [f for f in features if f.rho >= params.min_rho and f.kappa >= params.min_kappa]


def detect(img: GrayImage, params: DetectorParams = DetectorParams(), *, frame_id: int = 0,
           workers: int = 1) -> FeatureSet:
    """Full detection: initialise, converge, deduplicate, threshold."""
    return FeatureSet(frame_id, tuple(threshold(candidates(img, params, workers=workers), params)))


def calibrate_count(img: GrayImage, params: DetectorParams, target_n: int, *, workers: int = 1,
                    pool: Optional[Sequence[CurveFeature]] = None) -> Calibration:
    """Pick min_rho so the detection count is as close to ``target_n`` as possible.

    Thresholding is a pure filter on the candidate pool, so the search runs
    over the sorted rho values of the pool.  Ties at the chosen rho may push
    the count above the target; the result reports the achieved count.
    """
    if target_n < 1:
        raise ValueError("target_n must be >= 1")
    pool = candidates(img, params, workers=workers) if pool is None else list(pool)
    current = len(threshold(pool, params))
    if current == target_n:
        return Calibration(params, current, target_n)
    eligible = [f for f in pool if f.kappa >= params.min_kappa]
    rhos = sorted((f.rho for f in eligible), reverse=True)
    if not rhos or target_n >= len(rhos):
        return Calibration(replace(params, min_rho=0.0), len(rhos), target_n)
    best = None
    for v in sorted(set(rhos)):
        n = sum(1 for r in rhos if r >= v)
        key = (abs(n - target_n), -v)
        if best is None or key < best[0]:
            best = (key, v, n)
    _, v, n = best
    return Calibration(replace(params, min_rho=v), n, target_n)


# ------------------------------------------------------------- serialization

def _fmt(v: float) -> str:
    return repr(float(v))


def format_features(fs: FeatureSet) -> str:
    """One line per feature: ``frame_id; x,y; scale; kappa; rho; level; curve points``.

    ``level`` carries a polarity suffix (``+`` bright set, ``-`` dark set).
    """
    lines = []
    for f in fs.features:
        seg = f.msics.segment
        pts = " ".join(f"{x},{y}" for x, y in seg.points)
        sign = "+" if seg.polarity > 0 else "-"
        lines.append(f"{fs.frame_id}; {f.position[0]},{f.position[1]}; {_fmt(f.scale)}; "
                     f"{_fmt(f.kappa)}; {_fmt(f.rho)}; {seg.level}{sign}; {pts}")
    return "".join(line + "\n" for line in lines)


def parse_features(text: str) -> FeatureSet:
    frame = 0
    feats = []
    for n, raw in enumerate(text.splitlines(), 1):
        if not raw.strip():
            continue
        parts = [p.strip() for p in raw.split(";")]
        if len(parts) != 7:
            raise FormatError(f"line {n}: expected 7 fields, got {len(parts)}")
        try:
            frame = int(parts[0])
            x, y = (int(v) for v in parts[1].split(","))
            scale, kap, rho = float(parts[2]), float(parts[3]), float(parts[4])
            pol = -1 if parts[5].endswith("-") else 1
            level = int(parts[5].rstrip("+-"))
            pts = tuple(tuple(int(v) for v in tok.split(",")) for tok in parts[6].split())
        except ValueError as exc:
            raise FormatError(f"line {n}: {exc}") from exc
        ci = pts.index((x, y)) if (x, y) in pts else len(pts) // 2
        seg = IsoCurveSegment(level, pts, ci, scale, False, pol)
        rec = StabilityRecord(rho, 0.0, float(len(pts)), 0)
        feats.append(CurveFeature((x, y), scale, kap, rho, MSICS(seg, rec), 0, True))
    return FeatureSet(frame, tuple(feats))


def default_workers() -> int:
    return max(1, min(4, os.cpu_count() or 1))
