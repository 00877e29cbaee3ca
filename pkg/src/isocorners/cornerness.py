"""Cornerness of iso-curve points from the spread of nearby curve points.

Around chain index ``t`` the points are Gaussian weighted by their index
distance; the weighted covariance Sigma has cornerness
``kappa = det(Sigma) / trace(Sigma)^2`` which is 0 on a straight run and
0.25 when the spread is isotropic.

Two evaluation paths:

* ``box`` (production): the Gaussian is replaced by three passes of a box
  filter over the moment sequences (1, x, y, x^2, xy, y^2).
* ``exact``: true Gaussian weights truncated at the same support (three box
  radii), summed directly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateSupport
from .raster import box_radius_for_sigma, iterated_box_filter_1d

PASSES = 3
_NEGLIGIBLE = 1e-12


@dataclass(frozen=True)
class CurvePointScore:
    index: int
    kappa: float
    eigen_major: float
    eigen_minor: float


def support_for_sigma(sigma: float) -> int:
    """Half-width of the box cascade that approximates a Gaussian of ``sigma``."""
    return PASSES * box_radius_for_sigma(sigma, PASSES)


def _coords(segment) -> np.ndarray:
    pts = segment.points if hasattr(segment, "points") else segment
    return np.asarray(pts, dtype=np.float64).reshape(-1, 2)


def is_periodic(segment) -> bool:
    """True when the chain is a whole closed loop, so windows wrap around it."""
    if getattr(segment, "closed", False):
        return True
    return bool(getattr(segment, "closed_source", False) and getattr(segment, "truncated", False))


def gaussian_window(sigma: float, support: int) -> np.ndarray:
    d = np.arange(-support, support + 1, dtype=np.float64)
    return np.exp(-(d * d) / (2.0 * sigma * sigma))


def covariance_at(segment, index: int, sigma: float, *, support: int | None = None,
                  periodic: bool | None = None) -> np.ndarray:
    """Exact Gaussian-weighted covariance of the chain points around ``index``."""
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    xy = _coords(segment)
    n = len(xy)
    if not 0 <= index < n:
        raise IndexError(index)
    s = support_for_sigma(sigma) if support is None else support
    per = is_periodic(segment) if periodic is None else periodic
    d = np.arange(-s, s + 1)
    g = gaussian_window(sigma, s)
    j = index + d
    if per:
        j = j % n
    else:
        keep = (j >= 0) & (j < n)
        j, g = j[keep], g[keep]
    if np.unique(j[g > _NEGLIGIBLE]).size < 3:
        raise DegenerateSupport(f"fewer than 3 weighted points around index {index}")
    pts = xy[j]
    wsum = g.sum()
    mu = (g[:, None] * pts).sum(axis=0) / wsum
    c = pts - mu
    return (g[:, None, None] * c[:, :, None] * c[:, None, :]).sum(axis=0) / wsum


def eigen_2x2(cov) -> tuple[float, float]:
    a, b, c = float(cov[0][0]), float(cov[0][1]), float(cov[1][1])
    half_tr = 0.5 * (a + c)
    disc = np.hypot(0.5 * (a - c), b)
    return half_tr + disc, max(half_tr - disc, 0.0)


def kappa(cov) -> float:
    """det / trace^2 of a 2x2 covariance; 0 for a zero matrix."""
    a, b, c = float(cov[0][0]), float(cov[0][1]), float(cov[1][1])
    tr = a + c
    if tr <= 0.0:
        return 0.0
    det = a * c - b * b
    return min(max(det / (tr * tr), 0.0), 0.25)


def _moment_covariances(xy: np.ndarray, sigma: float, periodic: bool) -> np.ndarray:
    r = box_radius_for_sigma(sigma, PASSES)
    mode = "wrap" if periodic else "zero"
    c = xy - xy.mean(axis=0)
    x, y = c[:, 0], c[:, 1]
    f = lambda v: iterated_box_filter_1d(v, r, PASSES, mode)
    s0 = f(np.ones(len(xy)))
    mx, my = f(x) / s0, f(y) / s0
    sxx = f(x * x) / s0 - mx * mx
    sxy = f(x * y) / s0 - mx * my
    syy = f(y * y) / s0 - my * my
    return np.stack([np.stack([sxx, sxy], -1), np.stack([sxy, syy], -1)], -2)


def _kappa_eigen(covs: np.ndarray):
    a, b, c = covs[..., 0, 0], covs[..., 0, 1], covs[..., 1, 1]
    tr = a + c
    det = a * c - b * b
    with np.errstate(divide="ignore", invalid="ignore"):
        kap = np.where(tr > 0, det / (tr * tr), 0.0)
    kap = np.clip(kap, 0.0, 0.25)
    half = 0.5 * tr
    disc = np.hypot(0.5 * (a - c), b)
    return kap, half + disc, np.maximum(half - disc, 0.0)


def kappa_profile(segment, sigma: float, *, method: str = "box", periodic: bool | None = None) -> np.ndarray:
    """kappa at every chain index as an array."""
    return _profile(segment, sigma, method, periodic)[0]


def _profile(segment, sigma, method, periodic):
    xy = _coords(segment)
    if len(xy) < 3:
        raise DegenerateSupport("chain shorter than 3 points")
    per = is_periodic(segment) if periodic is None else periodic
    if method == "box":
        covs = _moment_covariances(xy, sigma, per)
    elif method == "exact":
        covs = np.zeros((len(xy), 2, 2))
        for i in range(len(xy)):
            try:
                covs[i] = covariance_at(xy, i, sigma, periodic=per)
            except DegenerateSupport:
                pass
    else:
        raise ValueError(f"unknown method {method!r}")
    return _kappa_eigen(covs)


def score_curve(segment, sigma: float, *, method: str = "box", periodic: bool | None = None) -> list[CurvePointScore]:
    """kappa at every chain index (each index the centre of its own Gaussian window)."""
    kap, big, small = _profile(segment, sigma, method, periodic)
    return [CurvePointScore(i, float(kap[i]), float(big[i]), float(small[i])) for i in range(kap.size)]


def nms_indices(k: np.ndarray, window: int, min_kappa: float = 0.0, *, periodic: bool = False) -> np.ndarray:
    """Indices surviving non-maximal suppression on a kappa profile.

    Index i survives when it is strictly above every neighbour before it and
    at least equal to every neighbour after it within +-window (so the lower
    index wins a tie); on a periodic chain neighbours wrap, on an open one
    they stop at the ends.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    k = np.asarray(k, dtype=np.float64)
    n = k.size
    if n == 0:
        return np.empty(0, dtype=np.int64)
    ok = k >= min_kappa
    if n == 1:
        return np.flatnonzero(ok)
    if periodic:
        # neighbours i-d and i+d for d <= window, counting each distinct index once
        wl = min(window, n - 1)
        left = np.full(n, -np.inf)
        right = np.full(n, -np.inf)
        idx = np.arange(n)
        for d in range(1, wl + 1):
            j = (idx - d) % n
            before = j < idx
            # a wrapped index counts as "before" only by its actual position
            left = np.maximum(left, np.where(before, k[j], -np.inf))
            right = np.maximum(right, np.where(before, -np.inf, k[j]))
            j = (idx + d) % n
            after = j > idx
            right = np.maximum(right, np.where(after, k[j], -np.inf))
            left = np.maximum(left, np.where(after, -np.inf, k[j]))
        return np.flatnonzero(ok & (k > left) & (k >= right))
    pad = np.full(window, -np.inf)
    ext = np.concatenate([pad, k, pad])
    view = np.lib.stride_tricks.sliding_window_view(ext, window)
    left = view[:n].max(axis=1)
    right = view[window + 1:window + 1 + n].max(axis=1)
    return np.flatnonzero(ok & (k > left) & (k >= right))


def nms_along_curve(scores: Sequence[CurvePointScore], window: int, min_kappa: float = 0.0, *,
                    periodic: bool = False) -> list[CurvePointScore]:
    """Points beating every neighbour within +-window; equal kappa goes to the lower index."""
    k = np.asarray([s.kappa for s in scores], dtype=np.float64)
    return [scores[i] for i in nms_indices(k, window, min_kappa, periodic=periodic)]
