"""Frame-to-frame matching with SSD computed separately on each side of the curve.

A feature's patch is split by its iso-curve into the side inside the level
set (``+``) and the side outside (``-``).  Two patches are compared on the
four side pairings and the smallest per-pixel SSD wins, so a feature on an
object boundary can still match when the background behind it changes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import FormatError, NoAdmissiblePairing, PatchOutOfBounds
from .isocurve import LevelSet

PAIRINGS = ("++", "+-", "-+", "--")
_FOUR = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


@dataclass(frozen=True)
class MatcherParams:
    radius_r: float = 20.0
    patch_side: int = 23
    threshold: float = 300.0
    min_side_pixels: int = 40

    def __post_init__(self):
        if self.radius_r <= 0 or self.patch_side < 3 or self.patch_side % 2 == 0:
            raise ValueError(f"invalid matcher parameters: {self}")


@dataclass(frozen=True, eq=False)
class SidedPatch:
    intensities: np.ndarray
    mask_pos: np.ndarray
    mask_neg: np.ndarray
    curve_cells: np.ndarray

    def side(self, sign: str) -> np.ndarray:
        return self.mask_pos if sign == "+" else self.mask_neg

    def is_split(self, min_pixels: int) -> bool:
        return int(self.mask_pos.sum()) >= min_pixels and int(self.mask_neg.sum()) >= min_pixels


@dataclass(frozen=True)
class MatchRecord:
    frame_a: int
    frame_b: int
    feature_a: int
    feature_b: int
    ssd: float
    pairing: str


def _components4(free: np.ndarray) -> tuple[np.ndarray, int]:
    """4-connected labels (1..n) of the True cells."""
    h, w = free.shape
    lab = np.zeros((h, w), dtype=np.int32)
    n = 0
    for y0 in range(h):
        for x0 in range(w):
            if not free[y0, x0] or lab[y0, x0]:
                continue
            n += 1
            lab[y0, x0] = n
            stack = [(y0, x0)]
            while stack:
                y, x = stack.pop()
                for ny, nx in ((y - 1, x), (y + 1, x), (y, x - 1), (y, x + 1)):
                    if 0 <= ny < h and 0 <= nx < w and free[ny, nx] and not lab[ny, nx]:
                        lab[ny, nx] = n
                        stack.append((ny, nx))
    return lab, n


def split_patch(inside: np.ndarray, curve: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Side masks: components of the non-curve cells, each assigned by majority membership."""
    lab, n = _components4(~curve)
    pos = np.zeros_like(curve)
    neg = np.zeros_like(curve)
    for c in range(1, n + 1):
        comp = lab == c
        if 2 * int((comp & inside).sum()) >= int(comp.sum()):
            pos |= comp
        else:
            neg |= comp
    return pos, neg


def _extract(img, cx: int, cy: int, side: int) -> np.ndarray:
    half = side // 2
    x0, y0 = cx - half, cy - half
    if x0 < 0 or y0 < 0 or x0 + side > img.width or y0 + side > img.height:
        raise PatchOutOfBounds(f"{side}x{side} patch at ({cx}, {cy}) leaves the image")
    return img.data[y0:y0 + side, x0:x0 + side]


def make_sided_patch(img, feature, params: MatcherParams = MatcherParams()) -> SidedPatch:
    """Patch around ``feature`` split by the feature's iso-curve.

    The curve is the whole boundary chain, at the feature's level and
    polarity, passing through the feature inside the patch, plus the
    feature's own segment points that fall in the patch.
    """
    side = params.patch_side
    half = side // 2
    cx, cy = feature.position
    raw = _extract(img, cx, cy, side)
    seg = feature.msics.segment
    oriented = raw if seg.polarity > 0 else 255 - raw
    ls = LevelSet(np.ascontiguousarray(oriented), seg.level)
    inside = ls.mask.astype(bool)
    curve = np.zeros((side, side), dtype=bool)
    hit = ls.locate((half, half))
    if hit is not None:
        xy = hit[0].xy()
        curve[xy[:, 1], xy[:, 0]] = True
    for x, y in seg.points:
        px, py = x - cx + half, y - cy + half
        if 0 <= px < side and 0 <= py < side and inside[py, px]:
            curve[py, px] = True
    pos, neg = split_patch(inside, curve)
    data = raw.astype(np.float64)
    data.setflags(write=False)
    return SidedPatch(data, pos, neg, curve)


def full_patch(img, feature, params: MatcherParams = MatcherParams()) -> SidedPatch:
    """Unsplit patch: everything on the ``+`` side."""
    side = params.patch_side
    data = _extract(img, *feature.position, side).astype(np.float64)
    ones = np.ones((side, side), dtype=bool)
    zeros = np.zeros((side, side), dtype=bool)
    return SidedPatch(data, ones, zeros, zeros)


def masked_ssd(a: np.ndarray, b: np.ndarray, mask: np.ndarray) -> float:
    n = int(mask.sum())
    if n == 0:
        raise NoAdmissiblePairing("empty mask")
    d = a[mask] - b[mask]
    return float(np.dot(d, d) / n)


def sided_ssd(a: SidedPatch, b: SidedPatch, min_side_pixels: int = 40) -> tuple[float, str]:
    """Smallest per-pixel SSD over the four side pairings with enough overlap."""
    best = None
    for pairing in PAIRINGS:
        m = a.side(pairing[0]) & b.side(pairing[1])
        if int(m.sum()) < min_side_pixels:
            continue
        d = masked_ssd(a.intensities, b.intensities, m)
        if best is None or d < best[0]:
            best = (d, pairing)
    if best is None:
        raise NoAdmissiblePairing(f"no pairing overlaps by {min_side_pixels} pixels")
    return best


def full_ssd(a: SidedPatch, b: SidedPatch) -> float:
    return masked_ssd(a.intensities, b.intensities, np.ones(a.intensities.shape, dtype=bool))


def _patches(fs, img, params, maker):
    out = []
    for f in fs.features:
        try:
            out.append(maker(img, f, params))
        except PatchOutOfBounds:
            out.append(None)
    return out


def _score(pa: SidedPatch, pb: SidedPatch, params: MatcherParams, sided: bool) -> Optional[tuple[float, str]]:
    if not sided:
        return full_ssd(pa, pb), "full"
    if not (pa.is_split(params.min_side_pixels) and pb.is_split(params.min_side_pixels)):
        return full_ssd(pa, pb), "full"
    try:
        return sided_ssd(pa, pb, params.min_side_pixels)
    except NoAdmissiblePairing:
        return None


def _match(f1, img1, f2, img2, params: MatcherParams, sided: bool) -> list[MatchRecord]:
    maker = make_sided_patch if sided else full_patch
    p1 = _patches(f1, img1, params, maker)
    p2 = _patches(f2, img2, params, maker)
    pos2 = np.asarray([f.position for f in f2.features], dtype=np.float64).reshape(-1, 2)
    r2 = params.radius_r ** 2
    proposals = []
    for i, fa in enumerate(f1.features):
        if p1[i] is None or pos2.size == 0:
            continue
        d2 = ((pos2 - np.asarray(fa.position, dtype=np.float64)) ** 2).sum(axis=1)
        best = None
        for j in np.flatnonzero(d2 < r2).tolist():
            if p2[j] is None:
                continue
            sc = _score(p1[i], p2[j], params, sided)
            if sc is None:
                continue
            key = (sc[0], j)
            if best is None or key < best[0]:
                best = (key, j, sc)
        if best is not None and best[2][0] < params.threshold:
            proposals.append((best[2][0], i, best[1], best[2][1]))
    proposals.sort()
    used_a, used_b, out = set(), set(), []
    for d, i, j, pairing in proposals:
        if i in used_a or j in used_b:
            continue
        used_a.add(i)
        used_b.add(j)
        out.append(MatchRecord(f1.frame_id, f2.frame_id, i, j, d, pairing))
    out.sort(key=lambda m: (m.feature_a, m.feature_b))
    return out


def match_frames(f1, img1, f2, img2, params: MatcherParams = MatcherParams()) -> list[MatchRecord]:
    """Side-separated matching of ``f1`` against ``f2``, one-to-one by ascending SSD."""
    return _match(f1, img1, f2, img2, params, True)


def full_patch_ssd_baseline(f1, img1, f2, img2, params: MatcherParams = MatcherParams()) -> list[MatchRecord]:
    """Same protocol with a single full-patch SSD."""
    return _match(f1, img1, f2, img2, params, False)


def format_matches(matches: Sequence[MatchRecord]) -> str:
    """``frame_a,frame_b; idx_a; idx_b; ssd; pairing`` per line."""
    return "".join(f"{m.frame_a},{m.frame_b}; {m.feature_a}; {m.feature_b}; {float(m.ssd)!r}; {m.pairing}\n"
                   for m in matches)


def parse_matches(text: str) -> list[MatchRecord]:
    out = []
    for n, raw in enumerate(text.splitlines(), 1):
        if not raw.strip():
            continue
        parts = [p.strip() for p in raw.split(";")]
        try:
            fa, fb = (int(v) for v in parts[0].split(","))
            out.append(MatchRecord(fa, fb, int(parts[1]), int(parts[2]), float(parts[3]), parts[4]))
        except (ValueError, IndexError) as exc:
            raise FormatError(f"line {n}: malformed match record") from exc
    return out
