"""Displacement-conditioned data association and track lifecycle.

Each detection carries a predicted displacement from the previous frame, so
subtracting it yields where the object was one frame ago.  Matching
compares those predicted previous positions against the last known
positions of live tracks.  The default matcher is greedy (confident
detections claim the nearest track first); a Hungarian matcher solving the
same gated problem optimally is provided for comparisons.

Lifecycle is deliberately local: unmatched tracks are deleted immediately,
unmatched detections always start new tracks, and ids are never reused.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .geometry import BBox, Detection, PipelineConfig, TopPoint

ACTIVE = "active"
DELETED = "deleted"

MATCHERS = ("greedy", "hungarian")


@dataclass
class Track:
    id: int
    class_id: int
    last_top: TopPoint
    last_size: tuple[float, float]
    last_frame: int
    state: str = ACTIVE
    history: list[tuple[int, BBox]] = field(default_factory=list)


@dataclass
class TrackerState:
    """Per-sequence mutable state: live tracks plus monotone counters."""

    active: list[Track] = field(default_factory=list)
    next_id: int = 1
    frame: int = 0


@dataclass(frozen=True)
class TrackOutput:
    """One result row: where track `track_id` is in frame `frame`."""

    frame: int
    track_id: int
    bbox: BBox
    score: float


MatchResult = tuple[list[tuple[int, int]], list[int], list[int]]


def predict_prev_positions(dets: Sequence[Detection]) -> list[TopPoint]:
    """Where each detection says its object was in the previous frame."""
    return [
        TopPoint(d.top.x - d.displacement[0], d.top.y - d.displacement[1]) for d in dets
    ]


def _check_active(tracks: Sequence[Track]) -> None:
    for t in tracks:
        if t.state != ACTIVE:
            raise ValueError(f"track {t.id} is not active")


def _gate(det: Detection, gate_scale: float) -> float:
    return gate_scale * max(det.size)


def greedy_match(
    tracks: Sequence[Track],
    dets: Sequence[Detection],
    gate_scale: float,
) -> MatchResult:
    """Greedy association of detections to tracks.

    Detections are processed in descending score order (ties: lower index).
    Each takes the nearest still-unmatched track of its class, measured as
    the Euclidean distance between the track's last position and the
    detection's predicted previous position, provided that distance is
    within gate_scale * max(det width, det height).  Distance ties go to
    the earliest-created track.

    Returns (matches as (track_id, det_index) pairs in processing order,
    unmatched track ids, unmatched detection indices).
    """
    _check_active(tracks)
    predicted = predict_prev_positions(dets)
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))
    taken: set[int] = set()
    matches: list[tuple[int, int]] = []
    matched_dets: set[int] = set()
    for di in order:
        det = dets[di]
        gate = _gate(det, gate_scale)
        best_ti = -1
        best_dist = math.inf
        for ti, track in enumerate(tracks):
            if ti in taken or track.class_id != det.class_id:
                continue
            dist = math.hypot(
                track.last_top.x - predicted[di].x, track.last_top.y - predicted[di].y
            )
            if dist <= gate and dist < best_dist:
                best_ti = ti
                best_dist = dist
        if best_ti >= 0:
            taken.add(best_ti)
            matched_dets.add(di)
            matches.append((tracks[best_ti].id, di))
    unmatched_tracks = [t.id for i, t in enumerate(tracks) if i not in taken]
    unmatched_dets = [i for i in range(len(dets)) if i not in matched_dets]
    return matches, unmatched_tracks, unmatched_dets


def hungarian_match(
    tracks: Sequence[Track],
    dets: Sequence[Detection],
    gate_scale: float,
) -> MatchResult:
    """Optimal gated assignment on the same problem `greedy_match` solves.

    Pairs outside the gate (or across classes) can never match; among the
    remaining pairs the result is a maximum-cardinality matching of minimum
    total Euclidean distance.  Matches are returned sorted by detection
    index.
    """
    _check_active(tracks)
    n, m = len(tracks), len(dets)
    if n == 0 or m == 0:
        return [], [t.id for t in tracks], list(range(m))
    predicted = predict_prev_positions(dets)
    dist = np.zeros((n, m))
    feasible = np.zeros((n, m), dtype=bool)
    for ti, track in enumerate(tracks):
        for di, det in enumerate(dets):
            d = math.hypot(
                track.last_top.x - predicted[di].x, track.last_top.y - predicted[di].y
            )
            dist[ti, di] = d
            feasible[ti, di] = track.class_id == det.class_id and d <= _gate(
                det, gate_scale
            )
    if not feasible.any():
        return [], [t.id for t in tracks], list(range(m))
    # A forbidden pair costing more than every feasible cost combined makes
    # the solver maximize feasible cardinality first, then minimize distance.
    big = float(dist[feasible].sum()) + 1.0
    cost = np.where(feasible, dist, big)
    rows, cols = linear_sum_assignment(cost)
    matches = [
        (tracks[ti].id, int(di))
        for ti, di in zip(rows.tolist(), cols.tolist())
        if feasible[ti, di]
    ]
    matches.sort(key=lambda pair: pair[1])
    matched_tracks = {tid for tid, _ in matches}
    matched_dets = {di for _, di in matches}
    unmatched_tracks = [t.id for t in tracks if t.id not in matched_tracks]
    unmatched_dets = [i for i in range(m) if i not in matched_dets]
    return matches, unmatched_tracks, unmatched_dets


def step(
    state: TrackerState,
    dets: Sequence[Detection],
    cfg: PipelineConfig,
    matcher: str = "greedy",
) -> list[TrackOutput]:
    """Advance the tracker by one frame and return its result rows.

    Matched tracks adopt their detection's position, size and box; unmatched
    detections spawn new tracks with fresh ids (ascending detection index);
    unmatched tracks are deleted on the spot.  Rows come back sorted by
    track id.
    """
    if matcher not in MATCHERS:
        raise ValueError(f"unknown matcher {matcher!r}, expected one of {MATCHERS}")
    state.frame += 1
    match_fn = greedy_match if matcher == "greedy" else hungarian_match
    matches, unmatched_tracks, unmatched_dets = match_fn(
        state.active, dets, cfg.gate_scale
    )

    by_id = {t.id: t for t in state.active}
    outputs: list[TrackOutput] = []
    for track_id, di in matches:
        det = dets[di]
        track = by_id[track_id]
        box = det.bbox()
        track.last_top = det.top
        track.last_size = det.size
        track.last_frame = state.frame
        track.history.append((state.frame, box))
        outputs.append(TrackOutput(state.frame, track.id, box, det.score))
    for track_id in unmatched_tracks:
        by_id[track_id].state = DELETED
    state.active = [t for t in state.active if t.state == ACTIVE]
    for di in sorted(unmatched_dets):
        det = dets[di]
        box = det.bbox()
        track = Track(
            id=state.next_id,
            class_id=det.class_id,
            last_top=det.top,
            last_size=det.size,
            last_frame=state.frame,
            history=[(state.frame, box)],
        )
        state.next_id += 1
        state.active.append(track)
        outputs.append(TrackOutput(state.frame, track.id, box, det.score))
    outputs.sort(key=lambda row: row.track_id)
    return outputs
