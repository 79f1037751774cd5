"""Independent oracles the tests check the library against.

Everything here is written the slow, obviously-correct way on purpose:
counting grids instead of interval algebra, permutation enumeration
instead of an LP solver. If a test disagrees with the library, trust
this file first.
"""

from __future__ import annotations

import itertools

import numpy as np

from ipdkit import BBox


def grid_iou(a: BBox, b: BBox, cells: int = 1000) -> float:
    """IOU by counting cells of a raster laid over the two boxes.

    The raster is separable: a cell column is inside a box iff its
    center x is inside, same for rows, so counting reduces to two 1D
    problems multiplied. Cell centers avoid edge ambiguity.
    """
    ax1, ay1, ax2, ay2 = a.corners()
    bx1, by1, bx2, by2 = b.corners()
    lo_x, hi_x = min(ax1, bx1), max(ax2, bx2)
    lo_y, hi_y = min(ay1, by1), max(ay2, by2)
    xs = lo_x + (np.arange(cells) + 0.5) * (hi_x - lo_x) / cells
    ys = lo_y + (np.arange(cells) + 0.5) * (hi_y - lo_y) / cells

    in_ax = (xs >= ax1) & (xs <= ax2)
    in_ay = (ys >= ay1) & (ys <= ay2)
    in_bx = (xs >= bx1) & (xs <= bx2)
    in_by = (ys >= by1) & (ys <= by2)

    inter = (in_ax & in_bx).sum() * (in_ay & in_by).sum()
    area_a = in_ax.sum() * in_ay.sum()
    area_b = in_bx.sum() * in_by.sum()
    union = area_a + area_b - inter
    if union == 0:
        return 0.0
    return float(inter) / float(union)


def brute_force_assignment(cost: np.ndarray) -> float:
    """Minimum total cost over all maximal one-to-one assignments by
    enumerating permutations; rows/columns beyond the smaller dimension
    stay unassigned. Summation follows row order so totals are
    bit-comparable with a solver that sums the same pairs."""
    cost = np.asarray(cost, dtype=float)
    n_rows, n_cols = cost.shape
    best = None
    if n_rows <= n_cols:
        for cols in itertools.permutations(range(n_cols), n_rows):
            total = 0.0
            for r, c in enumerate(cols):
                total += cost[r, c]
            if best is None or total < best:
                best = total
    else:
        for rows in itertools.permutations(range(n_rows), n_cols):
            total = 0.0
            for c, r in enumerate(rows):
                total += cost[r, c]
            if best is None or total < best:
                best = total
    return best


def random_box(rng: np.random.Generator, confidence: bool = False) -> BBox:
    conf = float(rng.uniform(0.0, 1.0)) if confidence else None
    return BBox(
        cx=float(rng.uniform(-50.0, 50.0)),
        cy=float(rng.uniform(-50.0, 50.0)),
        w=float(rng.uniform(0.5, 40.0)),
        h=float(rng.uniform(0.5, 40.0)),
        confidence=conf,
    )


def overlapping_box_pair(rng: np.random.Generator) -> tuple[BBox, BBox]:
    """Box pairs biased toward partial overlap, the regime where an IOU
    bug would hide; disjoint and nested pairs still occur."""
    a = random_box(rng)
    b = BBox(
        cx=a.cx + float(rng.normal(0.0, a.w)),
        cy=a.cy + float(rng.normal(0.0, a.h)),
        w=a.w * float(rng.uniform(0.3, 2.5)),
        h=a.h * float(rng.uniform(0.3, 2.5)),
    )
    return a, b
