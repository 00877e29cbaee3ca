"""Images, image files and the low-level numeric kernels.

Points are ``(x, y)`` pairs throughout; arrays are indexed ``[y, x]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ._backend import kernels
from .errors import EmptyCurve, FormatError, ImageIOError

Point = tuple[int, int]


@dataclass(frozen=True, eq=False)
class GrayImage:
    """8-bit single channel raster. ``data`` is a read-only (height, width) array."""

    width: int
    height: int
    data: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data, dtype=np.uint8)
        if arr.shape != (self.height, self.width):
            raise ValueError(f"data shape {arr.shape} != ({self.height}, {self.width})")
        if arr is self.data:
            arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @classmethod
    def from_array(cls, arr) -> "GrayImage":
        a = np.asarray(arr)
        if a.ndim != 2:
            raise ValueError("expected a 2D array")
        if a.size and (a.min() < 0 or a.max() > 255):
            raise ValueError("intensities must lie in [0, 255]")
        return cls(a.shape[1], a.shape[0], a.astype(np.uint8))

    def __eq__(self, other):
        if not isinstance(other, GrayImage):
            return NotImplemented
        return self.width == other.width and self.height == other.height and np.array_equal(self.data, other.data)

    def crop(self, x0: int, y0: int, w: int, h: int) -> "GrayImage":
        return GrayImage(w, h, self.data[y0:y0 + h, x0:x0 + w])


@dataclass(frozen=True, eq=False)
class WeightField:
    width: int
    height: int
    weights: np.ndarray


@dataclass(frozen=True, eq=False)
class LabeledDistanceMap:
    """Euclidean distance to the nearest curve point and that point's index."""

    width: int
    height: int
    distance: np.ndarray
    label: np.ndarray


def _read_pgm(raw: bytes) -> GrayImage:
    # header: magic, width, height, maxval separated by whitespace; '#' comments
    fields: list[bytes] = []
    i = 2
    n = len(raw)
    while len(fields) < 3:
        while i < n and raw[i:i + 1].isspace():
            i += 1
        if i < n and raw[i:i + 1] == b"#":
            while i < n and raw[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        j = i
        while j < n and not raw[j:j + 1].isspace():
            j += 1
        if j == i:
            raise FormatError("truncated PGM header")
        fields.append(raw[i:j])
        i = j
    if i >= n:
        raise FormatError("truncated PGM header")
    i += 1  # single whitespace byte before the raster
    try:
        w, h, maxval = (int(f) for f in fields)
    except ValueError as exc:
        raise FormatError("non-numeric PGM header field") from exc
    if w <= 0 or h <= 0 or maxval != 255:
        raise FormatError(f"unsupported PGM geometry/maxval: {w}x{h}, maxval {maxval}")
    body = raw[i:i + w * h]
    if len(body) != w * h:
        raise FormatError("truncated PGM raster")
    return GrayImage(w, h, np.frombuffer(body, dtype=np.uint8).reshape(h, w))


def load_image(path) -> GrayImage:
    """Read a binary PGM (P5, maxval 255) exactly, or a PNG converted to luma."""
    p = Path(path)
    try:
        raw = p.read_bytes()
    except OSError as exc:
        raise ImageIOError(f"cannot read {p}: {exc.strerror or exc}") from exc
    if raw[:2] == b"P5":
        return _read_pgm(raw)
    if raw[:8] == b"\x89PNG\r\n\x1a\n":
        from PIL import Image

        try:
            with Image.open(p) as im:
                # ITU-R 601-2 luma, as implemented by Pillow's "L" conversion
                return GrayImage.from_array(np.asarray(im.convert("L")))
        except OSError as exc:
            raise FormatError(f"unreadable PNG {p}: {exc}") from exc
    raise FormatError(f"{p}: not a P5 PGM or PNG file")


def save_pgm(img: GrayImage, path) -> None:
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    try:
        Path(path).write_bytes(header + img.data.tobytes())
    except OSError as exc:
        raise ImageIOError(f"cannot write {path}: {exc}") from exc


def resize_to_height(img: GrayImage, target_h: int) -> GrayImage:
    """Bilinear resize to ``target_h`` rows keeping the aspect ratio.

    Pixel centres are aligned (``src = (dst + 0.5) * scale - 0.5``) and
    sample coordinates are clamped to the image.
    """
    if target_h < 1:
        raise ValueError("target_h must be >= 1")
    if target_h == img.height:
        return img
    target_w = max(1, int(round(img.width * target_h / img.height)))
    a = img.data.astype(np.float64)
    sy = img.height / target_h
    sx = img.width / target_w
    ys = np.clip((np.arange(target_h) + 0.5) * sy - 0.5, 0, img.height - 1)
    xs = np.clip((np.arange(target_w) + 0.5) * sx - 0.5, 0, img.width - 1)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, img.height - 1)
    x1 = np.minimum(x0 + 1, img.width - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    top = a[np.ix_(y0, x0)] * (1 - fx) + a[np.ix_(y0, x1)] * fx
    bot = a[np.ix_(y1, x0)] * (1 - fx) + a[np.ix_(y1, x1)] * fx
    out = top * (1 - fy) + bot * fy
    return GrayImage(target_w, target_h, np.clip(np.rint(out), 0, 255).astype(np.uint8))


def _seed_grid(points: Sequence[Point], w: int, h: int, rank=None) -> np.ndarray:
    """Per-pixel curve index; a pixel hit twice keeps the lowest ``rank`` (then index)."""
    if len(points) == 0:
        raise EmptyCurve("curve has no points")
    seeds = np.full((h, w), -1, dtype=np.int32)
    pts = np.asarray(points, dtype=np.int64).reshape(-1, 2)
    if (pts[:, 0] < 0).any() or (pts[:, 0] >= w).any() or (pts[:, 1] < 0).any() or (pts[:, 1] >= h).any():
        raise ValueError("curve point outside the raster")
    idx = np.arange(len(pts))
    key = idx if rank is None else np.asarray(rank)
    # reversed stable sort so the preferred index is written last
    order = np.lexsort((-idx, -key))
    seeds[pts[order, 1], pts[order, 0]] = idx[order]
    return seeds


def labeled_distance_transform(curve: Sequence[Point], w: int, h: int, rank=None) -> LabeledDistanceMap:
    """Exact Euclidean distance transform with nearest-point labels.

    Two separable lower-envelope passes (columns, then rows).
    """
    seeds = _seed_grid(curve, w, h, rank)
    d2, lab = kernels.edt_labeled(seeds)
    return LabeledDistanceMap(w, h, np.sqrt(d2), lab)


_MODES = {"clamp": 0, "zero": 1, "wrap": 2}


def iterated_box_filter_1d(values, radius: int, passes: int, mode: str = "clamp") -> np.ndarray:
    """``passes`` centred moving averages of width ``2 * radius + 1``.

    ``mode`` picks the edge extension: ``clamp`` (repeat end samples),
    ``zero`` or ``wrap`` (periodic).
    """
    if radius < 1 or passes < 1:
        raise ValueError("radius and passes must be >= 1")
    v = np.ascontiguousarray(values, dtype=np.float64)
    return np.asarray(kernels.box_filter_1d(v, int(radius), int(passes), _MODES[mode]))


def box_variance(radius: int, passes: int) -> float:
    """Variance of the kernel of ``passes`` iterated boxes of radius ``radius``."""
    return passes * radius * (radius + 1) / 3.0


def box_radius_for_sigma(sigma: float, passes: int = 3) -> int:
    """Smallest-error integer radius whose iterated box matches ``sigma``."""
    target = sigma * sigma
    r = max(1, int(math.floor((-1 + math.sqrt(1 + 12 * target / passes)) / 2)))
    return min((r, r + 1), key=lambda k: (abs(box_variance(k, passes) - target), k))


def arc_weights(n: int, center: int, sigma: float) -> np.ndarray:
    d = np.arange(n) - center
    return np.exp(-(d * d) / (2.0 * sigma * sigma))


def _rank_table(n: int, sigma: float) -> np.ndarray:
    r = np.arange(n, dtype=np.float64)
    return np.exp(-(r * r) / (2.0 * sigma * sigma))


def nearest_point_ranks(curve, xs, ys) -> np.ndarray:
    """Index distance from the centre of each pixel's nearest curve point.

    Equidistant curve points resolve to the one nearest the centre, so the
    pixel gets the largest of their weights.
    """
    pts = np.asarray(curve.points, dtype=np.int64).reshape(-1, 2)
    if len(pts) == 0:
        raise EmptyCurve("curve has no points")
    rank = np.abs(np.arange(len(pts)) - curve.center_index)
    xs = np.asarray(xs, dtype=np.int64).reshape(-1, 1)
    ys = np.asarray(ys, dtype=np.int64).reshape(-1, 1)
    d2 = (xs - pts[:, 0]) ** 2 + (ys - pts[:, 1]) ** 2
    key = d2 * (len(pts) + 1) + rank
    return rank[key.argmin(axis=1)]


def weights_at(curve, sigma: float, xs, ys) -> np.ndarray:
    """Weight-field values at the given pixels (see ``gaussian_weight_field``)."""
    return _rank_table(len(curve.points), sigma)[nearest_point_ranks(curve, xs, ys)]


def gaussian_weight_field(curve, block_w: int, block_h: int, sigma: float) -> WeightField:
    """Spread Gaussian arc-length weights of a curve segment over a block.

    Each curve point weighs ``exp(-d^2 / 2 sigma^2)`` with ``d`` its index
    distance from ``curve.center_index``; every pixel takes the weight of
    its nearest curve point (the segment is short, so the search is
    exhaustive).
    """
    if len(curve.points) == 0:
        raise EmptyCurve("curve has no points")
    ys, xs = np.mgrid[0:block_h, 0:block_w]
    w = weights_at(curve, sigma, xs.ravel(), ys.ravel())
    return WeightField(block_w, block_h, w.reshape(block_h, block_w))
