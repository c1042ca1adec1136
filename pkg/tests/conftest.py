"""Shared builders for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from peaktrack import (
    BBox,
    Detection,
    FrameAnnotations,
    ObjectAnnotation,
    Track,
    TopPoint,
    quantize_point,
)


def make_detection(
    x: float,
    y: float,
    w: float = 12.0,
    h: float = 30.0,
    score: float = 1.0,
    class_id: int = 0,
    disp: tuple[float, float] = (0.0, 0.0),
    downsample: int = 4,
) -> Detection:
    top = TopPoint(x, y)
    cell, _ = quantize_point(top, downsample)
    return Detection(
        top=top,
        cell=cell,
        size=(w, h),
        score=score,
        class_id=class_id,
        displacement=disp,
    )


def make_track(
    track_id: int,
    x: float,
    y: float,
    w: float = 12.0,
    h: float = 30.0,
    class_id: int = 0,
    frame: int = 1,
) -> Track:
    return Track(
        id=track_id,
        class_id=class_id,
        last_top=TopPoint(x, y),
        last_size=(w, h),
        last_frame=frame,
    )


def separated_annotations(
    rng: np.random.Generator,
    frame_index: int,
    n_objects: int,
    image_size: tuple[int, int] = (640, 640),
    downsample: int = 4,
    min_cell_gap: int = 3,
    num_classes: int = 1,
) -> FrameAnnotations:
    """Random frame whose top cells are pairwise >= min_cell_gap apart.

    Boxes use integer corners, even widths and heights divisible by 10, so
    every geometric operation downstream is exact in float arithmetic.
    """
    h_px, w_px = image_size
    cells: list[tuple[int, int]] = []
    objects: list[ObjectAnnotation] = []
    attempts = 0
    while len(objects) < n_objects:
        attempts += 1
        if attempts > 20000:
            raise RuntimeError("could not place separated objects; lower n_objects")
        w = 2 * int(rng.integers(4, 31))      # even, 8..60
        h = 10 * int(rng.integers(1, 13))     # multiple of 10, 10..120
        top_x = int(rng.integers(w // 2, w_px - w // 2 + 1))
        top_y = int(rng.integers(h // 10, h_px - (h - h // 10) + 1))
        col, row = top_x // downsample, top_y // downsample
        if any(max(abs(col - c), abs(row - r)) < min_cell_gap for c, r in cells):
            continue
        cells.append((col, row))
        objects.append(
            ObjectAnnotation(
                track_id=len(objects) + 1,
                class_id=int(rng.integers(num_classes)),
                bbox=BBox(float(top_x - w // 2), float(top_y - h // 10), float(w), float(h)),
            )
        )
    return FrameAnnotations(frame_index, tuple(objects))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240817)
