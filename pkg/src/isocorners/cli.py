"""Command-line interface: ``isocorners {detect,match,track,eval,synth,render}``.

Parameters resolve as command-line flag, then ``--config`` file, then the
built-in default.  Outputs go to ``--out``, which defaults to
``$ISOCORNERS_OUT`` or the current directory.

Exit status: 0 success, 1 usage error, 2 file I/O or format error,
3 processing error.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import fields, replace
from pathlib import Path
from typing import Optional, Sequence

from . import detector, evalbench, matcher
from .errors import FormatError, ImageIOError, IsoCornersError
from .raster import GrayImage, load_image, save_pgm

EXIT_USAGE, EXIT_IO, EXIT_PROCESSING = 1, 2, 3
OUT_ENV = "ISOCORNERS_OUT"

# overlay colours (RGB) and glyph sizes
COLOR_CURVE_BRIGHT = (0, 200, 0)
COLOR_CURVE_DARK = (0, 160, 255)
COLOR_CORNER = (255, 0, 0)
COLOR_MOTION = (255, 255, 0)
CROSS_HALF = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


_DET_FIELDS = [f.name for f in fields(detector.DetectorParams)]
_MATCH_FIELDS = [f.name for f in fields(matcher.MatcherParams)]
_EVAL_DEFAULTS = {"n": 5, "every": 5, "band": 5.0}


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or .)")
    p.add_argument("--config", help="key = value parameter file")
    p.add_argument("--workers", type=int, default=None, help="worker processes (default 1)")


def _add_detector(p):
    g = p.add_argument_group("detector")
    for f in fields(detector.DetectorParams):
        g.add_argument(_flag(f.name), dest=f.name, type=type(f.default), default=None,
                       help=f"default {f.default}")


def _add_matcher(p):
    g = p.add_argument_group("matcher")
    for f in fields(matcher.MatcherParams):
        g.add_argument(_flag(f.name), dest=f.name, type=type(f.default), default=None,
                       help=f"default {f.default}")


def _add_eval(p):
    g = p.add_argument_group("evaluation")
    g.add_argument("--n", type=int, default=None, help="chain span n (default 5)")
    g.add_argument("--every", type=int, default=None, help="score every k-th frame (default 5)")
    g.add_argument("--band", type=float, default=None, help="boundary band in pixels (default 5)")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="isocorners", description="Iso-curve corner detection, matching and evaluation")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("detect", help="detect features in one image")
    p.add_argument("image")
    p.add_argument("--frame-id", type=int, default=0)
    p.add_argument("--no-overlay", action="store_true")
    _add_common(p)
    _add_detector(p)

    p = sub.add_parser("match", help="match two feature files")
    p.add_argument("features_a")
    p.add_argument("image_a")
    p.add_argument("features_b")
    p.add_argument("image_b")
    p.add_argument("--baseline", action="store_true", help="full-patch SSD instead of sided SSD")
    _add_common(p)
    _add_matcher(p)

    p = sub.add_parser("track", help="detect and match over a frame sequence")
    p.add_argument("frames", nargs="+", help="frame images in order, or one directory of frames")
    p.add_argument("--baseline", action="store_true", help="also write full-patch SSD matches")
    p.add_argument("--no-overlay", action="store_true")
    _add_common(p)
    _add_detector(p)
    _add_matcher(p)

    p = sub.add_parser("eval", help="score track outputs")
    p.add_argument("tracks", help="directory written by 'track'")
    p.add_argument("--masks", nargs="+", help="foreground masks (PGM) per frame, or one directory")
    p.add_argument("--overall-only", action="store_true", help="skip the boundary/non-boundary split")
    p.add_argument("--baseline", action="store_true", help="add rows for the full-patch baseline")
    _add_common(p)
    _add_eval(p)

    p = sub.add_parser("synth", help="write a synthetic scene")
    p.add_argument("--scene", help="scene config file (key = value)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--frames", type=int, default=None)
    p.add_argument("--bg-mode", choices=("static", "scrolling", "regenerate"), default=None)
    _add_common(p)

    p = sub.add_parser("render", help="draw features (and motion) over an image")
    p.add_argument("image")
    p.add_argument("features")
    p.add_argument("--previous", help="features of the previous frame, for motion vectors")
    p.add_argument("--matches", help="matches from --previous to this frame")
    p.add_argument("--name", default=None, help="output file name (default <image>.overlay.png)")
    _add_common(p)
    return ap


# ----------------------------------------------------------------- config

def read_config(path: Optional[str]) -> dict:
    """Flat ``key = value`` pairs; keys may use '-' or '_'."""
    if not path:
        return {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ImageIOError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"{path}:{n}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k.replace("-", "_")] = v
    return out


def _resolve(cls, names, args, cfg):
    base = cls()
    kw = {}
    for f in fields(cls):
        v = getattr(args, f.name, None)
        if v is None and f.name in cfg:
            try:
                v = type(f.default)(cfg[f.name])
            except ValueError as exc:
                raise FormatError(f"config: bad value for {f.name}: {cfg[f.name]!r}") from exc
        if v is not None:
            kw[f.name] = v
    try:
        return replace(base, **kw)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _setting(name, args, cfg, default, conv):
    v = getattr(args, name, None)
    if v is not None:
        return v
    if name in cfg:
        try:
            return conv(cfg[name])
        except ValueError as exc:
            raise FormatError(f"config: bad value for {name}: {cfg[name]!r}") from exc
    return default


def _out_dir(args) -> Path:
    d = Path(args.out or os.environ.get(OUT_ENV) or ".")
    try:
        d.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ImageIOError(f"cannot create output directory {d}: {exc.strerror or exc}") from exc
    return d


def _write(path: Path, text: str):
    try:
        path.write_text(text)
    except OSError as exc:
        raise ImageIOError(f"cannot write {path}: {exc.strerror or exc}") from exc


def _read(path) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise ImageIOError(f"cannot read {path}: {exc.strerror or exc}") from exc


def _workers(args, cfg) -> int:
    w = _setting("workers", args, cfg, 1, int)
    if w < 1:
        raise UsageError("--workers must be >= 1")
    return w


_IMAGE_SUFFIXES = (".pgm", ".png")


def _expand(paths: Sequence[str], *, masks: bool = False) -> list[Path]:
    # a directory from 'synth' holds frame_* and mask_* side by side
    if len(paths) == 1 and Path(paths[0]).is_dir():
        imgs = sorted(p for p in Path(paths[0]).iterdir() if p.suffix.lower() in _IMAGE_SUFFIXES)
        tagged = [p for p in imgs if p.name.startswith("mask_")]
        if masks:
            return tagged or imgs
        return [p for p in imgs if not p.name.startswith("mask_")]
    return [Path(p) for p in paths]


# ---------------------------------------------------------------- overlays

def render_overlay(img: GrayImage, fs, *, previous=None, matches=()):
    """RGB Pillow image: curves, corner crosses and optional motion vectors."""
    from PIL import Image, ImageDraw

    rgb = Image.fromarray(img.data).convert("RGB")
    draw = ImageDraw.Draw(rgb)
    for f in fs.features:
        seg = f.msics.segment
        col = COLOR_CURVE_BRIGHT if seg.polarity > 0 else COLOR_CURVE_DARK
        for x, y in seg.points:
            draw.point((x, y), fill=col)
    for f in fs.features:
        x, y = f.position
        draw.line([(x - CROSS_HALF, y), (x + CROSS_HALF, y)], fill=COLOR_CORNER)
        draw.line([(x, y - CROSS_HALF), (x, y + CROSS_HALF)], fill=COLOR_CORNER)
    if previous is not None:
        for m in matches:
            a = previous.features[m.feature_a].position
            b = fs.features[m.feature_b].position
            draw.line([a, b], fill=COLOR_MOTION)
    return rgb


def _save_png(im, path: Path):
    try:
        im.save(path, format="PNG")
    except OSError as exc:
        raise ImageIOError(f"cannot write {path}: {exc}") from exc


# ---------------------------------------------------------------- commands

def cmd_detect(args, cfg) -> int:
    params = _resolve(detector.DetectorParams, _DET_FIELDS, args, cfg)
    img = load_image(args.image)
    out = _out_dir(args)
    fs = detector.detect(img, params, frame_id=args.frame_id, workers=_workers(args, cfg))
    stem = Path(args.image).stem
    _write(out / f"{stem}.features.txt", detector.format_features(fs))
    if not args.no_overlay:
        _save_png(render_overlay(img, fs), out / f"{stem}.overlay.png")
    print(f"{len(fs)} features -> {out / (stem + '.features.txt')}")
    return 0


def _load_features(path) -> detector.FeatureSet:
    return detector.parse_features(_read(path))


def cmd_match(args, cfg) -> int:
    mp = _resolve(matcher.MatcherParams, _MATCH_FIELDS, args, cfg)
    fa, fb = _load_features(args.features_a), _load_features(args.features_b)
    ia, ib = load_image(args.image_a), load_image(args.image_b)
    fn = matcher.full_patch_ssd_baseline if args.baseline else matcher.match_frames
    ms = fn(fa, ia, fb, ib, mp)
    out = _out_dir(args)
    prefix = "baseline_matches" if args.baseline else "matches"
    path = out / f"{prefix}_{fa.frame_id:03d}_{fb.frame_id:03d}.txt"
    _write(path, matcher.format_matches(ms))
    print(f"{len(ms)} matches -> {path}")
    return 0


def format_chains(table: evalbench.TrackTable) -> str:
    """``start; idx0 idx1 ...; x0,y0 x1,y1 ...`` per chain of two or more frames."""
    lines = []
    for c in table.chains:
        if len(c) < 2:
            continue
        pos = [table.frames[c.start + t].features[i].position for t, i in enumerate(c.indices)]
        lines.append(f"{c.start}; " + " ".join(map(str, c.indices)) + "; "
                     + " ".join(f"{x},{y}" for x, y in pos))
    return "".join(line + "\n" for line in lines)


def cmd_track(args, cfg) -> int:
    params = _resolve(detector.DetectorParams, _DET_FIELDS, args, cfg)
    mp = _resolve(matcher.MatcherParams, _MATCH_FIELDS, args, cfg)
    paths = _expand(args.frames)
    if len(paths) < 2:
        raise UsageError("track needs at least 2 frames")
    workers = _workers(args, cfg)
    imgs = [load_image(p) for p in paths]
    out = _out_dir(args)
    fsets = []
    for t, img in enumerate(imgs):
        fs = detector.detect(img, params, frame_id=t, workers=workers)
        fsets.append(fs)
        _write(out / f"frame_{t:03d}.features.txt", detector.format_features(fs))
    _write(out / "frames.txt", "".join(f"{t}; {p}\n" for t, p in enumerate(paths)))
    runs = [("matches", matcher.match_frames)]
    if args.baseline:
        runs.append(("baseline_matches", matcher.full_patch_ssd_baseline))
    for prefix, fn in runs:
        links = []
        for t in range(len(imgs) - 1):
            ms = fn(fsets[t], imgs[t], fsets[t + 1], imgs[t + 1], mp)
            links.append(ms)
            _write(out / f"{prefix}_{t:03d}_{t + 1:03d}.txt", matcher.format_matches(ms))
        table = evalbench.build_tracks(list(zip(fsets, links + [[]])))
        name = "chains.txt" if prefix == "matches" else "baseline_chains.txt"
        _write(out / name, format_chains(table))
        if prefix == "matches" and not args.no_overlay:
            for t, img in enumerate(imgs):
                prev = fsets[t - 1] if t else None
                ms = links[t - 1] if t else ()
                _save_png(render_overlay(img, fsets[t], previous=prev, matches=ms),
                          out / f"track_{t:03d}.png")
    print(f"{len(imgs)} frames tracked -> {out}")
    return 0


def _read_frames_list(d: Path) -> list[Path]:
    out = []
    for n, raw in enumerate(_read(d / "frames.txt").splitlines(), 1):
        if not raw.strip():
            continue
        try:
            _, p = raw.split(";", 1)
        except ValueError as exc:
            raise FormatError(f"frames.txt:{n}: expected 'index; path'") from exc
        out.append(Path(p.strip()))
    return out


def _load_table(d: Path, prefix: str, count: int) -> evalbench.TrackTable:
    fsets = [_load_features(d / f"frame_{t:03d}.features.txt") for t in range(count)]
    fsets = [detector.FeatureSet(t, fs.features) for t, fs in enumerate(fsets)]
    links = [matcher.parse_matches(_read(d / f"{prefix}_{t:03d}_{t + 1:03d}.txt")) for t in range(count - 1)]
    return evalbench.build_tracks(list(zip(fsets, links + [[]])))


def cmd_eval(args, cfg) -> int:
    d = Path(args.tracks)
    n = _setting("n", args, cfg, _EVAL_DEFAULTS["n"], int)
    every = _setting("every", args, cfg, _EVAL_DEFAULTS["every"], int)
    band = _setting("band", args, cfg, _EVAL_DEFAULTS["band"], float)
    if n < 1 or every < 1:
        raise UsageError("--n and --every must be >= 1")
    if not args.overall_only and not args.masks:
        raise UsageError("the boundary/non-boundary split needs --masks (or pass --overall-only)")
    count = len(_read_frames_list(d))
    masks = None
    if not args.overall_only:
        mpaths = _expand(args.masks, masks=True)
        if len(mpaths) != count:
            raise UsageError(f"{len(mpaths)} masks given for {count} frames")
        masks = [evalbench.RegionMask.from_image(load_image(p)) for p in mpaths]
    reports = [evalbench.score_sequence(_load_table(d, "matches", count), masks, n=n, every=every,
                                        band=band, method="sided")]
    if args.baseline:
        reports.append(evalbench.score_sequence(_load_table(d, "baseline_matches", count), masks, n=n,
                                                every=every, band=band, method="full"))
    rep = evalbench.merge_reports(*reports)
    out = _out_dir(args)
    _write(out / "scores.csv", evalbench.report_csv(rep))
    table = evalbench.report_table(rep)
    _write(out / "scores.txt", table)
    sys.stdout.write(table)
    return 0


def cmd_synth(args, cfg) -> int:
    spec = evalbench.parse_scene_config(_read(args.scene)) if args.scene else evalbench.SyntheticScene()
    kw = {k: getattr(args, k) for k in ("seed", "frames", "bg_mode") if getattr(args, k) is not None}
    try:
        spec = replace(spec, **kw)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    frames = evalbench.generate_scene(spec)
    out = _out_dir(args)
    for t, (img, mask) in enumerate(frames):
        save_pgm(img, out / f"frame_{t:03d}.pgm")
        save_pgm(mask.to_image(), out / f"mask_{t:03d}.pgm")
    _write(out / "scene.txt", evalbench.format_scene_config(spec))
    print(f"{len(frames)} frames -> {out}")
    return 0


def cmd_render(args, cfg) -> int:
    img = load_image(args.image)
    fs = _load_features(args.features)
    prev, ms = None, ()
    if (args.previous is None) != (args.matches is None):
        raise UsageError("--previous and --matches go together")
    if args.previous is not None:
        prev = _load_features(args.previous)
        ms = matcher.parse_matches(_read(args.matches))
    out = _out_dir(args)
    name = args.name or f"{Path(args.image).stem}.overlay.png"
    try:
        im = render_overlay(img, fs, previous=prev, matches=ms)
    except IndexError as exc:
        raise FormatError("matches reference features missing from the feature files") from exc
    _save_png(im, out / name)
    return 0


COMMANDS = {"detect": cmd_detect, "match": cmd_match, "track": cmd_track, "eval": cmd_eval,
            "synth": cmd_synth, "render": cmd_render}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = read_config(args.config)
        return COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        print(f"isocorners {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ImageIOError, FormatError, OSError) as exc:
        print(f"isocorners {args.command}: {exc}", file=sys.stderr)
        return EXIT_IO
    except (IsoCornersError, ValueError) as exc:
        print(f"isocorners {args.command}: {exc}", file=sys.stderr)
        return EXIT_PROCESSING


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
