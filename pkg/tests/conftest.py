import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from isocorners.raster import GrayImage  # noqa: E402

# criterion number -> (passed, detail), filled in by test_acceptance
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


def square_image(size=120, lo=40, hi=200, x0=35, y0=35, side=50):
    a = np.full((size, size), lo, dtype=np.uint8)
    a[y0:y0 + side, x0:x0 + side] = hi
    return GrayImage.from_array(a)


@pytest.fixture
def square():
    return square_image()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_block(rng, hmin=20, hmax=50):
    """Flat field with a few random rectangles and mild noise."""
    h, w = (int(v) for v in rng.integers(hmin, hmax + 1, 2))
    a = np.full((h, w), rng.uniform(30, 200))
    for _ in range(int(rng.integers(1, 5))):
        x0, y0 = int(rng.integers(0, w)), int(rng.integers(0, h))
        rw, rh = (int(v) for v in rng.integers(5, 30, 2))
        a[y0:y0 + rh, x0:x0 + rw] = rng.uniform(0, 255)
    a += rng.normal(0, rng.uniform(0, 6), a.shape)
    return GrayImage.from_array(np.clip(np.rint(a), 0, 255).astype(np.uint8))
