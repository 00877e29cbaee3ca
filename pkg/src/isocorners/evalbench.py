"""Track tables, residual-match scores and the synthetic moving-object scene.

``M_score(i, n)`` is the share of features detected at frame ``i - n``
that are matched consistently through every frame up to ``i``.  Scores are
split by where the frame ``i - n`` feature sits on the foreground object:
within ``band`` pixels of its frontier (boundary) or deeper (interior).
Off-object features are left out of every class.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from ._backend import kernels
from .errors import DimensionMismatch, FormatError, InconsistentInput, TrajectoryOutOfBounds
from .raster import GrayImage

CLASSES = ("boundary", "non_boundary", "overall")
BG_REACH = 1.5  # dark-side curve pixels sit just outside the object


# ------------------------------------------------------------------- tracks

@dataclass(frozen=True)
class Chain:
    start: int
    indices: tuple

    def __len__(self):
        return len(self.indices)

    @property
    def end(self) -> int:
        return self.start + len(self.indices) - 1

    def index_at(self, frame: int) -> Optional[int]:
        if self.start <= frame <= self.end:
            return self.indices[frame - self.start]
        return None


@dataclass(frozen=True)
class TrackTable:
    frames: tuple
    matches: tuple
    chains: tuple

    def __len__(self):
        return len(self.frames)


def build_tracks(frames: Sequence) -> TrackTable:
    """Chain features through consecutive one-to-one matches.

    ``frames[t]`` is ``(FeatureSet, matches from t to t + 1)``; the last
    entry's matches are ignored.
    """
    fsets = tuple(f for f, _ in frames)
    links = tuple(tuple(m) for _, m in frames[:-1]) if frames else ()
    nxt = []
    has_prev = [set() for _ in fsets]
    for t, ms in enumerate(links):
        na, nb = len(fsets[t]), len(fsets[t + 1])
        fwd = {}
        for m in ms:
            if not (0 <= m.feature_a < na and 0 <= m.feature_b < nb):
                raise InconsistentInput(f"match {m} references an unknown feature")
            if m.feature_a in fwd or m.feature_b in has_prev[t + 1]:
                raise InconsistentInput(f"matches between frames {t} and {t + 1} are not one-to-one")
            fwd[m.feature_a] = m.feature_b
            has_prev[t + 1].add(m.feature_b)
        nxt.append(fwd)
    chains = []
    for t, fs in enumerate(fsets):
        for i in range(len(fs)):
            if i in has_prev[t]:
                continue
            idx = [i]
            u = t
            while u < len(nxt) and idx[-1] in nxt[u]:
                idx.append(nxt[u][idx[-1]])
                u += 1
            chains.append(Chain(t, tuple(idx)))
    return TrackTable(fsets, links, tuple(chains))


def residual_chains(table: TrackTable, i: int, n: int) -> list[Chain]:
    """Chains covering every frame from ``i - n`` to ``i``."""
    return [c for c in table.chains if c.start <= i - n and c.end >= i]


def groundtruth_matches(table: TrackTable, n: int = 5) -> list[Chain]:
    """Chains consistent over at least ``n`` frames, taken as true matches."""
    if len(table) < n + 1:
        raise InconsistentInput(f"need at least {n + 1} frames, have {len(table)}")
    return [c for c in table.chains if len(c) >= n]


# ----------------------------------------------------------------- regions

@dataclass(frozen=True, eq=False)
class RegionMask:
    fg: np.ndarray

    @classmethod
    def from_image(cls, img: GrayImage) -> "RegionMask":
        return cls(img.data > 127)

    def to_image(self) -> GrayImage:
        return GrayImage.from_array(np.where(self.fg, 255, 0).astype(np.uint8))

    @property
    def shape(self):
        return self.fg.shape


def _distance_to(seed_mask: np.ndarray) -> np.ndarray:
    seeds = np.where(seed_mask, 0, -1).astype(np.int32)
    if not seed_mask.any():
        return np.full(seed_mask.shape, np.inf)
    d2, _ = kernels.edt_labeled(np.ascontiguousarray(seeds))
    return np.sqrt(d2)


def region_classes(mask: RegionMask, band: float = 5.0) -> np.ndarray:
    """Per-pixel class: 0 off-object, 1 boundary, 2 interior."""
    fg = np.asarray(mask.fg, dtype=bool)
    to_bg = _distance_to(~fg)
    to_fg = _distance_to(fg)
    out = np.zeros(fg.shape, dtype=np.uint8)
    out[fg & (to_bg <= band)] = 1
    out[fg & (to_bg > band)] = 2
    out[~fg & (to_fg <= BG_REACH)] = 1
    return out


def boundary_split(features, mask: RegionMask, band: float = 5.0, *, classes: Optional[np.ndarray] = None):
    """(boundary, interior, off_object) index lists for a feature set."""
    feats = list(features)
    if classes is None:
        classes = region_classes(mask, band)
    h, w = classes.shape
    out = ([], [], [])
    for i, f in enumerate(feats):
        x, y = f.position
        if not (0 <= x < w and 0 <= y < h):
            raise DimensionMismatch(f"feature at {f.position} outside the {w}x{h} mask")
        c = classes[y, x]
        out[{1: 0, 2: 1, 0: 2}[int(c)]].append(i)
    return out


# ------------------------------------------------------------------ scores

@dataclass(frozen=True)
class ScoreRow:
    frame: int
    i: int
    n: int
    cls: str
    resm: int
    n_detected: int
    method: str = "sided"

    @property
    def ratio(self) -> Fraction:
        return Fraction(self.resm, self.n_detected) if self.n_detected else Fraction(0)

    @property
    def m_score(self) -> float:
        return float(self.ratio * 100)


@dataclass(frozen=True)
class ScoreReport:
    rows: tuple
    n: int

    def average(self, cls: str, method: Optional[str] = None) -> float:
        sel = [r for r in self.rows if r.cls == cls and (method is None or r.method == method)]
        return float(sum(r.m_score for r in sel) / len(sel)) if sel else 0.0

    def average_resm(self, cls: str, method: Optional[str] = None) -> float:
        sel = [r for r in self.rows if r.cls == cls and (method is None or r.method == method)]
        return float(sum(r.resm for r in sel) / len(sel)) if sel else 0.0

    @property
    def methods(self) -> list[str]:
        seen = []
        for r in self.rows:
            if r.method not in seen:
                seen.append(r.method)
        return seen


def m_score(table: TrackTable, i: int, n: int, mask: Optional[RegionMask] = None, *, band: float = 5.0,
            method: str = "sided") -> list[ScoreRow]:
    """Rows for each region class of ``M_score(i, n) = ResM_{i,n} / N_{i-n}``."""
    ref = i - n
    if ref < 0 or i >= len(table):
        raise InconsistentInput(f"frames {ref}..{i} outside the table")
    survivors = {c.index_at(ref) for c in residual_chains(table, i, n)}
    fs = table.frames[ref]
    fid = fs.frame_id
    if mask is None:
        det = list(range(len(fs)))
        res = sum(1 for k in det if k in survivors)
        return [ScoreRow(fid, i, n, "overall", res, len(det), method)]
    bnd, inner, _ = boundary_split(fs.features, mask, band)
    rows = []
    for cls, sel in (("boundary", bnd), ("non_boundary", inner), ("overall", bnd + inner)):
        res = sum(1 for k in sel if k in survivors)
        rows.append(ScoreRow(fid, i, n, cls, res, len(sel), method))
    return rows


def score_sequence(table: TrackTable, masks: Optional[Sequence[RegionMask]] = None, *, n: int = 5,
                   every: int = 5, band: float = 5.0, method: str = "sided") -> ScoreReport:
    """Score frames ``i = n, n + every, ...``."""
    rows = []
    for i in range(n, len(table), every):
        mask = None if masks is None else masks[i - n]
        rows.extend(m_score(table, i, n, mask, band=band, method=method))
    return ScoreReport(tuple(rows), n)


def merge_reports(*reports: ScoreReport) -> ScoreReport:
    rows = tuple(r for rep in reports for r in rep.rows)
    return ScoreReport(rows, reports[0].n if reports else 5)


CSV_HEADER = ("frame", "i", "n", "class", "m_score", "resm", "n_detected", "method")


def report_csv(report: ScoreReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in report.rows:
        w.writerow((r.frame, r.i, r.n, r.cls, f"{r.m_score:.4f}", r.resm, r.n_detected, r.method))
    return buf.getvalue()


def report_table(report: ScoreReport) -> str:
    """Aligned summary: average M_score and ResM per method and class."""
    classes = [c for c in CLASSES if any(r.cls == c for r in report.rows)]
    head = ["method", "measure"] + classes
    lines = [head]
    for m in report.methods:
        lines.append([m, f"M_score({report.n})"] + [f"{report.average(c, m):.1f}" for c in classes])
        lines.append([m, f"ResM({report.n})"] + [f"{report.average_resm(c, m):.1f}" for c in classes])
    widths = [max(len(row[k]) for row in lines) for k in range(len(head))]
    out = []
    for j, row in enumerate(lines):
        out.append("  ".join(v.ljust(widths[k]) if k < 2 else v.rjust(widths[k]) for k, v in enumerate(row)).rstrip())
        if j == 0:
            out.append("  ".join("-" * wd for wd in widths))
    return "\n".join(out) + "\n"


# ------------------------------------------------------------------ scenes

@dataclass(frozen=True)
class SyntheticScene:
    frames: int = 20
    width: int = 400
    height: int = 400
    sprite_w: int = 140
    sprite_h: int = 110
    textured: bool = True
    start: tuple = (130, 140)
    velocity: tuple = (3, 1)
    bg_mode: str = "regenerate"
    scroll: tuple = (2, 0)
    noise: float = 0.0
    seed: int = 0
    trajectory: Optional[tuple] = field(default=None)

    def __post_init__(self):
        if self.bg_mode not in ("static", "scrolling", "regenerate"):
            raise ValueError(f"unknown bg_mode {self.bg_mode!r}")
        if self.frames < 1 or self.width < 8 or self.height < 8:
            raise ValueError("scene too small")

    def offsets(self) -> list[tuple[int, int]]:
        if self.trajectory is not None:
            return [tuple(map(int, p)) for p in self.trajectory]
        return [(self.start[0] + t * self.velocity[0], self.start[1] + t * self.velocity[1])
                for t in range(self.frames)]


def _value_noise(rng, h: int, w: int, cell: int) -> np.ndarray:
    gh, gw = h // cell + 2, w // cell + 2
    grid = rng.random((gh, gw))
    ys = np.arange(h) / cell
    xs = np.arange(w) / cell
    y0 = ys.astype(int)
    x0 = xs.astype(int)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    g = grid
    top = g[np.ix_(y0, x0)] * (1 - fx) + g[np.ix_(y0, x0 + 1)] * fx
    bot = g[np.ix_(y0 + 1, x0)] * (1 - fx) + g[np.ix_(y0 + 1, x0 + 1)] * fx
    return top * (1 - fy) + bot * fy


def background(spec: SyntheticScene, frame: int, h: int, w: int) -> np.ndarray:
    """Overlapping flat-ish rectangles ("books") on a shaded base, intensities within [20, 140]."""
    rng = np.random.default_rng([spec.seed, frame])
    bg = 20.0 + rng.uniform(0, 40) + 15.0 * _value_noise(rng, h, w, 24)
    for _ in range(max(4, h * w // 2500)):
        rw, rh = (int(v) for v in rng.integers(15, 80, 2))
        x0 = int(rng.integers(-10, w))
        y0 = int(rng.integers(-10, h))
        ys, xs = slice(max(0, y0), max(0, y0 + rh)), slice(max(0, x0), max(0, x0 + rw))
        shade = 15.0 * _value_noise(rng, rh, rw, 24)
        tile = bg[ys, xs]
        tile[...] = rng.uniform(20, 140) + shade[:tile.shape[0], :tile.shape[1]]
    return np.clip(bg, 20, 140)


def sprite(spec: SyntheticScene) -> tuple[np.ndarray, np.ndarray]:
    """(intensity, mask) of the foreground object: a notched block, values in [170, 235]."""
    rng = np.random.default_rng([spec.seed, 1_000_003])
    h, w = spec.sprite_h, spec.sprite_w
    mask = np.ones((h, w), dtype=bool)
    # notches give the outline concave and convex corners
    nw, nh = w // 4, h // 4
    mask[:nh, :nw] = False
    mask[h - nh:, w - nw:] = False
    mask[h // 2 - nh // 2:h // 2 + nh // 2, :nw // 2] = False
    if not spec.textured:
        return np.where(mask, 210.0, 0.0), mask
    yy, xx = np.mgrid[0:h, 0:w]
    val = 185.0 + 20.0 * xx / max(1, w - 1)
    for _ in range(6):
        rw = int(rng.integers(12, max(13, w // 3)))
        rh = int(rng.integers(12, max(13, h // 3)))
        x0 = int(rng.integers(nw // 2 + 4, max(nw // 2 + 5, w - rw - 4)))
        y0 = int(rng.integers(4, max(5, h - rh - 4)))
        val[y0:y0 + rh, x0:x0 + rw] = rng.uniform(170, 235)
    return np.where(mask, np.clip(val, 170, 235), 0.0), mask


def generate_scene(spec: SyntheticScene) -> list[tuple[GrayImage, RegionMask]]:
    """Frames with the sprite composited at each offset, plus exact foreground masks."""
    offs = spec.offsets()
    if len(offs) != spec.frames:
        raise ValueError("trajectory length differs from frame count")
    sp, sm = sprite(spec)
    sh, sw = sm.shape
    for x, y in offs:
        if x < 0 or y < 0 or x + sw > spec.width or y + sh > spec.height:
            raise TrajectoryOutOfBounds(f"sprite at ({x}, {y}) leaves the {spec.width}x{spec.height} frame")
    H, W = spec.height, spec.width
    if spec.bg_mode != "regenerate":
        sx, sy = spec.scroll if spec.bg_mode == "scrolling" else (0, 0)
        pad_x = abs(sx) * spec.frames
        pad_y = abs(sy) * spec.frames
        canvas = background(spec, 0, H + pad_y, W + pad_x)
    out = []
    for t, (x, y) in enumerate(offs):
        if spec.bg_mode == "regenerate":
            bg = background(spec, t, H, W)
        else:
            ox = t * sx if sx >= 0 else pad_x + t * sx
            oy = t * sy if sy >= 0 else pad_y + t * sy
            bg = canvas[oy:oy + H, ox:ox + W].copy()
        frame = bg
        region = frame[y:y + sh, x:x + sw]
        region[sm] = sp[sm]
        if spec.noise > 0:
            frame = frame + np.random.default_rng([spec.seed, t, 7]).normal(0, spec.noise, frame.shape)
        fg = np.zeros((H, W), dtype=bool)
        fg[y:y + sh, x:x + sw] = sm
        img = GrayImage.from_array(np.clip(np.rint(frame), 0, 255).astype(np.uint8))
        out.append((img, RegionMask(fg)))
    return out


# ------------------------------------------------------------ scene config

_INT = ("frames", "width", "height", "sprite_w", "sprite_h", "seed")
_PAIR = ("start", "velocity", "scroll")


def parse_scene_config(text: str) -> SyntheticScene:
    """``key = value`` lines; ``#`` starts a comment.  Pairs are written ``x,y``."""
    kw = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"line {n}: expected key = value")
        key, val = (p.strip() for p in line.split("=", 1))
        try:
            if key in _INT:
                kw[key] = int(val)
            elif key in _PAIR:
                a, b = val.split(",")
                kw[key] = (int(a), int(b))
            elif key == "noise":
                kw[key] = float(val)
            elif key == "textured":
                kw[key] = val.lower() in ("1", "true", "yes", "on")
            elif key == "bg_mode":
                kw[key] = val
            elif key == "trajectory":
                kw[key] = tuple(tuple(int(v) for v in tok.split(",")) for tok in val.split())
            else:
                raise FormatError(f"line {n}: unknown key {key!r}")
        except ValueError as exc:
            raise FormatError(f"line {n}: bad value for {key}: {val!r}") from exc
    if "trajectory" in kw and "frames" not in kw:
        kw["frames"] = len(kw["trajectory"])
    return SyntheticScene(**kw)


def format_scene_config(spec: SyntheticScene) -> str:
    lines = []
    for key in ("frames", "width", "height", "sprite_w", "sprite_h", "textured", "start", "velocity",
                "bg_mode", "scroll", "noise", "seed"):
        v = getattr(spec, key)
        if isinstance(v, tuple):
            v = f"{v[0]},{v[1]}"
        elif isinstance(v, bool):
            v = "true" if v else "false"
        lines.append(f"{key} = {v}")
    if spec.trajectory is not None:
        lines.append("trajectory = " + " ".join(f"{x},{y}" for x, y in spec.trajectory))
    return "\n".join(lines) + "\n"
