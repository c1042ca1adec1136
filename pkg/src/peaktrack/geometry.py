"""Box and keypoint geometry shared by every stage of the pipeline.

Coordinate conventions:
  * x is the column axis, y the row axis, origin at the image top-left.
  * Boxes are (x1, y1, w, h) in input-image pixels, top-left corner plus extent.
  * The detection anchor ("top point") of a box sits at half its width and
    one tenth of its height below the top edge.
  * Grids are downsampled by an integer factor R; a continuous pixel point p
    maps to the cell floor(p / R) with a fractional offset in [0, 1).

All types here are immutable values and safe to share across workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


TOP_HEIGHT_FRACTION = 0.1


def _require_finite(name: str, *values: float) -> None:
    for v in values:
        if not math.isfinite(v):
            raise ValueError(f"{name} must be finite, got {v!r}")


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box: top-left corner (x1, y1) and positive extent (w, h)."""

    x1: float
    y1: float
    w: float
    h: float

    def __post_init__(self) -> None:
        _require_finite("BBox", self.x1, self.y1, self.w, self.h)
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"BBox extent must be positive, got w={self.w}, h={self.h}")

    @property
    def x2(self) -> float:
        return self.x1 + self.w

    @property
    def y2(self) -> float:
        return self.y1 + self.h

    def corners(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)


@dataclass(frozen=True)
class TopPoint:
    """Continuous detection anchor in input-image pixels."""

    x: float
    y: float

    def __post_init__(self) -> None:
        _require_finite("TopPoint", self.x, self.y)


@dataclass(frozen=True)
class GridPoint:
    """Integer heatmap cell index (col along x, row along y)."""

    col: int
    row: int


@dataclass(frozen=True)
class Detection:
    """One decoded object: anchor point, source cell, box size, score and motion.

    `displacement` is the predicted motion from the previous frame to the
    current one, in pixels; `top` is already offset-corrected back to image
    coordinates.
    """

    top: TopPoint
    cell: GridPoint
    size: tuple[float, float]
    score: float
    class_id: int
    displacement: tuple[float, float]

    def __post_init__(self) -> None:
        w, h = self.size
        if w <= 0 or h <= 0:
            raise ValueError(f"Detection size must be positive, got {self.size}")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"Detection score must be in [0, 1], got {self.score}")

    def bbox(self) -> BBox:
        x1, y1, x2, y2 = corners_from_top(self.top, self.size)
        return BBox(x1, y1, x2 - x1, y2 - y1)


@dataclass(frozen=True)
class PipelineConfig:
    """Knobs for decoding and association.

    Defaults: downsample factor 4, at most 100 peaks per frame, score
    threshold 0.4, one object class, association gate of 1x the detection's
    larger box side, size-loss weight 0.1 and focal exponents (2, 4).
    """

    downsample: int = 4
    max_peaks: int = 100
    score_threshold: float = 0.4
    num_classes: int = 1
    gate_scale: float = 1.0
    size_loss_weight: float = 0.1
    focal_alpha: float = 2.0
    focal_beta: float = 4.0

    def __post_init__(self) -> None:
        if self.downsample < 1:
            raise ValueError("downsample must be >= 1")
        if self.max_peaks < 1:
            raise ValueError("max_peaks must be >= 1")
        if not 0.0 <= self.score_threshold <= 1.0:
            raise ValueError("score_threshold must be in [0, 1]")
        if self.num_classes < 1:
            raise ValueError("num_classes must be >= 1")
        if self.gate_scale <= 0:
            raise ValueError("gate_scale must be positive")
        if self.size_loss_weight <= 0:
            raise ValueError("size_loss_weight must be positive")


def top_point_from_bbox(box: BBox) -> TopPoint:
    """Anchor of a box: (x1 + w/2, y1 + h/10)."""
    return TopPoint(box.x1 + box.w / 2.0, box.y1 + box.h * TOP_HEIGHT_FRACTION)


def quantize_point(p: TopPoint, downsample: int) -> tuple[GridPoint, tuple[float, float]]:
    """Split a pixel point into its grid cell and sub-cell offset.

    Returns (cell, (ox, oy)) with cell = floor(p / R) componentwise and each
    offset component in [0, 1), so (cell + offset) * R reconstructs p.
    Points with negative coordinates have no valid cell and are rejected.
    """
    if downsample < 1:
        raise ValueError("downsample must be >= 1")
    _require_finite("point", p.x, p.y)
    if p.x < 0 or p.y < 0:
        raise ValueError(f"point {p} lies outside the grid")
    cx = p.x / downsample
    cy = p.y / downsample
    col = math.floor(cx)
    row = math.floor(cy)
    return GridPoint(col, row), (cx - col, cy - row)


def corners_from_top(top: TopPoint, size: tuple[float, float]) -> tuple[float, float, float, float]:
    """Rebuild box corners (x1, y1, x2, y2) from an anchor point and a size.

    Inverse of `top_point_from_bbox`: the anchor sits at half the width and
    one tenth of the height, so the box spans h/10 above and 9h/10 below it.
    """
    w, h = size
    if w <= 0 or h <= 0:
        raise ValueError(f"size must be positive, got {size}")
    return (
        top.x - w / 2.0,
        top.y - h * TOP_HEIGHT_FRACTION,
        top.x + w / 2.0,
        top.y + h * (1.0 - TOP_HEIGHT_FRACTION),
    )


def bbox_from_top(top: TopPoint, size: tuple[float, float]) -> BBox:
    """Corner-form reconstruction returned as an (x1, y1, w, h) box."""
    x1, y1, x2, y2 = corners_from_top(top, size)
    return BBox(x1, y1, x2 - x1, y2 - y1)
