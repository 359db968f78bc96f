"""Reference computations that share no code with the package."""

from fractions import Fraction

import numpy as np


def raster_iou_int(a, b):
    """IoU by counting unit cells of an integer grid covered by each box."""
    lo = min(a[0], b[0], a[1], b[1])
    hi = max(a[2], b[2], a[3], b[3])
    size = hi - lo
    grid_a = np.zeros((size, size), dtype=bool)
    grid_b = np.zeros((size, size), dtype=bool)
    grid_a[a[1] - lo : a[3] - lo, a[0] - lo : a[2] - lo] = True
    grid_b[b[1] - lo : b[3] - lo, b[0] - lo : b[2] - lo] = True
    union = np.count_nonzero(grid_a | grid_b)
    return np.count_nonzero(grid_a & grid_b) / union


def raster_iou_real(a, b):
    """IoU on the non-uniform grid spanned by both boxes' edges, in exact rationals."""
    a = [Fraction(v) for v in a]
    b = [Fraction(v) for v in b]
    xs = sorted({a[0], a[2], b[0], b[2]})
    ys = sorted({a[1], a[3], b[1], b[3]})
    both = either = Fraction(0)
    for x0, x1 in zip(xs, xs[1:]):
        for y0, y1 in zip(ys, ys[1:]):
            cx, cy = (x0 + x1) / 2, (y0 + y1) / 2
            in_a = a[0] < cx < a[2] and a[1] < cy < a[3]
            in_b = b[0] < cx < b[2] and b[1] < cy < b[3]
            cell = (x1 - x0) * (y1 - y0)
            both += cell if in_a and in_b else 0
            either += cell if in_a or in_b else 0
    return float(both / either)


def random_int_box(rng, span=40):
    x1, y1 = (int(v) for v in rng.integers(0, span, 2))
    w, h = (int(v) for v in rng.integers(1, span // 2, 2))
    return (x1, y1, x1 + w, y1 + h)


def random_real_box(rng, span=100.0):
    x1, y1 = rng.uniform(0, span, 2)
    w, h = rng.uniform(0.01, span / 2, 2)
    return (float(x1), float(y1), float(x1 + w), float(y1 + h))
