"""Axis-aligned boxes, 2D points and affine transforms.

Everything downstream (registration, matching, the performance metric)
is built on these few types and pure functions. Boxes are stored as
center/width/height in one consistent coordinate unit; callers that read
normalized label files convert to pixels before constructing a BBox.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateSampleError, InputValidationError

# Relative determinant threshold under which a 3-point sample counts as
# collinear. Scaled by the squared extent of the source triple so the
# test is invariant to the coordinate unit.
DEGENERACY_RTOL = 1e-9


def _require_finite(name: str, value: float) -> float:
    v = float(value)
    if not math.isfinite(v):
        raise InputValidationError(f"{name} must be finite, got {value!r}")
    return v


@dataclass(frozen=True)
class Point2:
    """A 2D point in image coordinates."""

    x: float
    y: float

    def __post_init__(self):
        object.__setattr__(self, "x", _require_finite("x", self.x))
        object.__setattr__(self, "y", _require_finite("y", self.y))


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box, center/width/height, optional detection confidence."""

    cx: float
    cy: float
    w: float
    h: float
    confidence: float | None = None
    class_id: int = 0

    def __post_init__(self):
        # coerce to plain python scalars so equality and serialization do
        # not depend on the caller's numeric types
        for name in ("cx", "cy", "w", "h"):
            object.__setattr__(self, name, _require_finite(name, getattr(self, name)))
        object.__setattr__(self, "class_id", int(self.class_id))
        if self.w <= 0 or self.h <= 0:
            raise InputValidationError(
                f"box sides must be positive, got w={self.w}, h={self.h}"
            )
        if self.confidence is not None:
            c = _require_finite("confidence", self.confidence)
            if not 0.0 <= c <= 1.0:
                raise InputValidationError(f"confidence must be in [0,1], got {c}")
            object.__setattr__(self, "confidence", c)

    @property
    def area(self) -> float:
        return self.w * self.h

    def corners(self) -> tuple[float, float, float, float]:
        """(x1, y1, x2, y2) with x1 < x2 and y1 < y2."""
        hw, hh = self.w / 2.0, self.h / 2.0
        return (self.cx - hw, self.cy - hh, self.cx + hw, self.cy + hh)


@dataclass(frozen=True)
class AffineTransform2D:
    """Row-major 2x3 affine map p -> A @ p + t."""

    a11: float
    a12: float
    a21: float
    a22: float
    tx: float
    ty: float

    def __post_init__(self):
        for name in ("a11", "a12", "a21", "a22", "tx", "ty"):
            object.__setattr__(self, name, _require_finite(name, getattr(self, name)))

    @property
    def det(self) -> float:
        return self.a11 * self.a22 - self.a12 * self.a21

    @classmethod
    def identity(cls) -> "AffineTransform2D":
        return cls(1.0, 0.0, 0.0, 1.0, 0.0, 0.0)

    @classmethod
    def translation(cls, tx: float, ty: float) -> "AffineTransform2D":
        return cls(1.0, 0.0, 0.0, 1.0, tx, ty)

    @classmethod
    def from_params(cls, params: Sequence[float]) -> "AffineTransform2D":
        a11, a12, a21, a22, tx, ty = (float(p) for p in params)
        return cls(a11, a12, a21, a22, tx, ty)

    def params(self) -> tuple[float, float, float, float, float, float]:
        return (self.a11, self.a12, self.a21, self.a22, self.tx, self.ty)


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two axis-aligned boxes, in [0, 1].

    Boxes that only touch along an edge or corner have zero intersection
    area and therefore IOU 0.
    """
    ax1, ay1, ax2, ay2 = a.corners()
    bx1, by1, bx2, by2 = b.corners()
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = a.area + b.area - inter
    return inter / union


def bbox_center(b: BBox) -> Point2:
    return Point2(b.cx, b.cy)


def apply_affine(t: AffineTransform2D, p: Point2) -> Point2:
    return Point2(
        t.a11 * p.x + t.a12 * p.y + t.tx,
        t.a21 * p.x + t.a22 * p.y + t.ty,
    )


def compose(outer: AffineTransform2D, inner: AffineTransform2D) -> AffineTransform2D:
    """Transform equivalent to applying `inner` first, then `outer`."""
    a11 = outer.a11 * inner.a11 + outer.a12 * inner.a21
    a12 = outer.a11 * inner.a12 + outer.a12 * inner.a22
    a21 = outer.a21 * inner.a11 + outer.a22 * inner.a21
    a22 = outer.a21 * inner.a12 + outer.a22 * inner.a22
    tx = outer.a11 * inner.tx + outer.a12 * inner.ty + outer.tx
    ty = outer.a21 * inner.tx + outer.a22 * inner.ty + outer.ty
    return AffineTransform2D(a11, a12, a21, a22, tx, ty)


def triple_extent(points: Sequence[Point2]) -> float:
    """Largest axis-aligned extent of a point set; 0 for coincident points."""
    xs = [p.x for p in points]
    ys = [p.y for p in points]
    return max(max(xs) - min(xs), max(ys) - min(ys))


def fit_affine_3pt(
    src: Sequence[Point2], dst: Sequence[Point2]
) -> AffineTransform2D:
    """Exact affine transform mapping three source points onto three
    destination points.

    Solves the six-unknown linear system; the residual on the defining
    pairs is zero up to floating point. Collinear or coincident source
    points leave the system singular and raise DegenerateSampleError so
    sampling loops can discard the draw.
    """
    if len(src) != 3 or len(dst) != 3:
        raise InputValidationError("fit_affine_3pt needs exactly 3 source and 3 destination points")
    extent = triple_extent(src)
    m = np.array([[p.x, p.y, 1.0] for p in src], dtype=np.float64)
    det = float(np.linalg.det(m))
    if abs(det) <= DEGENERACY_RTOL * extent * extent:
        raise DegenerateSampleError(
            f"source points are collinear or coincident (|det|={abs(det):.3e}, extent={extent:.3e})"
        )
    rhs = np.array([[p.x, p.y] for p in dst], dtype=np.float64)
    sol = np.linalg.solve(m, rhs)  # columns: x-row params, y-row params
    return AffineTransform2D(
        a11=float(sol[0, 0]),
        a12=float(sol[1, 0]),
        a21=float(sol[0, 1]),
        a22=float(sol[1, 1]),
        tx=float(sol[2, 0]),
        ty=float(sol[2, 1]),
    )


def points_to_array(points: Sequence[Point2] | np.ndarray) -> np.ndarray:
    """(n, 2) float64 array from Point2 sequences or array-likes."""
    if isinstance(points, np.ndarray):
        arr = np.asarray(points, dtype=np.float64)
    else:
        arr = np.array([(p.x, p.y) for p in points], dtype=np.float64)
    if arr.size == 0:
        return arr.reshape(0, 2)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise InputValidationError(f"expected an (n, 2) point array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InputValidationError("points must be finite")
    return arr


def transform_points(t: AffineTransform2D, pts: np.ndarray) -> np.ndarray:
    """Apply an affine transform to an (n, 2) array."""
    a = np.array([[t.a11, t.a12], [t.a21, t.a22]], dtype=np.float64)
    return pts @ a.T + np.array([t.tx, t.ty], dtype=np.float64)
