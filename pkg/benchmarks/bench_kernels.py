"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]

Each kernel runs on the same inputs under both backends; the table lists
the best-of-N wall time per call and the speed-up.  A full ``detect`` on a
synthetic frame is timed last with each backend selected process-wide.
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from isocorners import _backend


def _inputs(rng):
    block = (rng.random((50, 50)) * 255).astype(np.uint8)
    mask = np.ascontiguousarray(block >= 128, dtype=np.uint8)
    seeds = np.full((64, 64), -1, np.int32)
    for i in range(25):
        seeds[rng.integers(64), rng.integers(64)] = i
    xs = rng.integers(0, 50, 40).astype(np.int64)
    ys = rng.integers(0, 50, 40).astype(np.int64)
    values = rng.random(400)
    return block, mask, seeds, xs, ys, values


def _cases(k, block, mask, seeds, xs, ys, values):
    tree = k.component_tree(block)
    return {
        "trace_all": lambda: k.trace_all(mask),
        "component_tree": lambda: k.component_tree(block),
        "tree_stability": lambda: k.tree_stability(*tree[:4], 3, int(block.min()), 1e6),
        "edt_labeled": lambda: k.edt_labeled(seeds),
        "polygon_mask": lambda: k.polygon_mask(xs, ys, 50, 50),
        "box_filter_1d": lambda: k.box_filter_1d(values, 3, 3, 1),
    }


_DETECT = """
import time
from isocorners import detector, evalbench
img = evalbench.generate_scene(evalbench.SyntheticScene(frames=1, width=200, height=200, sprite_w=80,
                                                        sprite_h=60, start=(60, 70)))[0][0]
t = time.perf_counter(); fs = detector.detect(img); print(time.perf_counter() - t, len(fs))
"""


def _detect_time(pure: bool) -> tuple[float, int]:
    env = dict(os.environ, ISOCORNERS_PURE_PYTHON="1" if pure else "0")
    out = subprocess.run([sys.executable, "-c", _DETECT], env=env, check=True, capture_output=True, text=True)
    t, n = out.stdout.split()
    return float(t), int(n)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--skip-detect", action="store_true")
    args = ap.parse_args(argv)
    backends = _backend.available()
    if "cython" not in backends:
        print("compiled extension not built; only the fallback is available")
    data = _inputs(np.random.default_rng(0))
    rows = []
    per = {name: _cases(k, *data) for name, k in backends.items()}
    for case in per["python"]:
        times = {}
        for name, cases in per.items():
            fn = cases[case]
            n = max(1, int(0.05 / max(timeit.timeit(fn, number=1), 1e-7)))
            times[name] = min(timeit.repeat(fn, number=n, repeat=args.repeat)) / n
        rows.append((case, times))
    print(f"{'kernel':<16}{'python (ms)':>14}{'cython (ms)':>14}{'speed-up':>10}")
    for case, t in rows:
        c = t.get("cython")
        cs = f"{c * 1e3:14.4f}" if c else f"{'-':>14}"
        sp = f"{t['python'] / c:9.1f}x" if c else f"{'-':>10}"
        print(f"{case:<16}{t['python'] * 1e3:14.4f}{cs}{sp}")
    if not args.skip_detect:
        tp, np_ = _detect_time(True)
        print(f"\ndetect 200x200: python {tp:.2f} s ({np_} features)", end="")
        if "cython" in backends:
            tc, nc = _detect_time(False)
            print(f", cython {tc:.2f} s ({nc} features), speed-up {tp / tc:.1f}x")
        else:
            print()
    return 0


if __name__ == "__main__":
    sys.exit(main())
