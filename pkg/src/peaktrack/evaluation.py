"""CLEAR-MOT metrics and IDF1 over frame-aligned box sequences.

Sequences are mappings from 1-based frame index to a list of
(id, BBox) pairs.  Correspondence between ground truth and predictions is
kept frame to frame: a pair matched earlier persists while it still
overlaps, everything else is re-matched by maximizing IoU, and a ground
truth identity whose matched prediction id changes counts one identity
switch.  IDF1 instead scores a single global pairing of whole
trajectories.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .geometry import BBox

FrameBoxes = Sequence[tuple[int, BBox]]
Sequence_ = Mapping[int, FrameBoxes]

IOU_THRESHOLD = 0.5
MOSTLY_TRACKED_COVERAGE = 0.8
MOSTLY_LOST_COVERAGE = 0.2


@dataclass(frozen=True)
class FrameTally:
    tp: int
    fp: int
    fn: int
    idsw: int
    iou_sum: float
    matches: tuple[tuple[int, int], ...]


@dataclass(frozen=True)
class MetricsReport:
    """Sequence-level scores; `mota` is exactly 1 - (fp+fn+idsw)/gt_total."""

    mota: float
    motp: float
    idf1: float
    mt: float
    ml: float
    fp: int
    fn: int
    idsw: int
    gt_total: int


def bbox_iou(a: BBox, b: BBox) -> float:
    ix1 = max(a.x1, b.x1)
    iy1 = max(a.y1, b.y1)
    ix2 = min(a.x2, b.x2)
    iy2 = min(a.y2, b.y2)
    iw = max(ix2 - ix1, 0.0)
    ih = max(iy2 - iy1, 0.0)
    inter = iw * ih
    union = a.w * a.h + b.w * b.h - inter
    return inter / union if union > 0 else 0.0


def match_frame(
    gt_boxes: FrameBoxes,
    pred_boxes: FrameBoxes,
    prev_correspondence: Mapping[int, int],
    iou_threshold: float = IOU_THRESHOLD,
) -> tuple[FrameTally, dict[int, int]]:
    """Match one frame and update the gt-id -> pred-id correspondence.

    Remembered pairs that still overlap at `iou_threshold` are kept first
    (conflicts resolved by higher IoU); the remainder is matched by a
    maximum-IoU assignment.  A ground truth matched to a different
    prediction id than its remembered one contributes one identity switch.
    """
    corr = dict(prev_correspondence)
    gt_ids = [gid for gid, _ in gt_boxes]
    pred_ids = [pid for pid, _ in pred_boxes]

    iou = np.zeros((len(gt_boxes), len(pred_boxes)))
    for i, (_, gbox) in enumerate(gt_boxes):
        for j, (_, pbox) in enumerate(pred_boxes):
            iou[i, j] = bbox_iou(gbox, pbox)

    matched_g: dict[int, int] = {}
    matched_p: set[int] = set()

    pred_index = {pid: j for j, pid in enumerate(pred_ids)}
    persisting = []
    for i, gid in enumerate(gt_ids):
        j = pred_index.get(corr.get(gid))
        if j is not None and iou[i, j] >= iou_threshold:
            persisting.append((-iou[i, j], gid, i, j))
    for _, _, i, j in sorted(persisting):
        if i not in matched_g and j not in matched_p:
            matched_g[i] = j
            matched_p.add(j)

    rest_g = [i for i in range(len(gt_ids)) if i not in matched_g]
    rest_p = [j for j in range(len(pred_ids)) if j not in matched_p]
    if rest_g and rest_p:
        sub = iou[np.ix_(rest_g, rest_p)]
        rows, cols = linear_sum_assignment(-sub)
        for r, c in zip(rows.tolist(), cols.tolist()):
            if sub[r, c] >= iou_threshold:
                matched_g[rest_g[r]] = rest_p[c]
                matched_p.add(rest_p[c])

    idsw = 0
    iou_sum = 0.0
    matches = []
    for i, j in sorted(matched_g.items()):
        gid, pid = gt_ids[i], pred_ids[j]
        before = prev_correspondence.get(gid)
        if before is not None and before != pid:
            idsw += 1
        corr[gid] = pid
        iou_sum += float(iou[i, j])
        matches.append((gid, pid))

    tp = len(matched_g)
    tally = FrameTally(
        tp=tp,
        fp=len(pred_boxes) - tp,
        fn=len(gt_boxes) - tp,
        idsw=idsw,
        iou_sum=iou_sum,
        matches=tuple(matches),
    )
    return tally, corr


def _check_sequences(gt: Sequence_, pred: Sequence_) -> tuple[int, int]:
    if not gt or all(len(v) == 0 for v in gt.values()):
        raise ValueError("ground truth sequence is empty; metrics are undefined")
    lo, hi = min(gt), max(gt)
    stray = [f for f in pred if f < lo or f > hi]
    if stray:
        raise ValueError(
            f"prediction frames {sorted(stray)} lie outside the ground truth "
            f"range [{lo}, {hi}]"
        )
    return lo, hi


def compute_clear(
    gt: Sequence_,
    pred: Sequence_,
    iou_threshold: float = IOU_THRESHOLD,
) -> MetricsReport:
    """Score a whole sequence; see MetricsReport for the fields."""
    lo, hi = _check_sequences(gt, pred)

    corr: dict[int, int] = {}
    fp = fn = idsw = tp = 0
    iou_sum = 0.0
    present: dict[int, int] = {}
    covered: dict[int, int] = {}
    for frame in range(lo, hi + 1):
        gt_boxes = gt.get(frame, [])
        pred_boxes = pred.get(frame, [])
        tally, corr = match_frame(gt_boxes, pred_boxes, corr, iou_threshold)
        fp += tally.fp
        fn += tally.fn
        idsw += tally.idsw
        tp += tally.tp
        iou_sum += tally.iou_sum
        matched_gids = {gid for gid, _ in tally.matches}
        for gid, _ in gt_boxes:
            present[gid] = present.get(gid, 0) + 1
            if gid in matched_gids:
                covered[gid] = covered.get(gid, 0) + 1

    gt_total = sum(present.values())
    coverages = [covered.get(gid, 0) / n for gid, n in present.items()]
    mt = sum(c >= MOSTLY_TRACKED_COVERAGE for c in coverages) / len(coverages)
    ml = sum(c <= MOSTLY_LOST_COVERAGE for c in coverages) / len(coverages)
    return MetricsReport(
        mota=1.0 - (fp + fn + idsw) / gt_total,
        motp=iou_sum / tp if tp else 0.0,
        idf1=compute_idf1(gt, pred, iou_threshold),
        mt=mt,
        ml=ml,
        fp=fp,
        fn=fn,
        idsw=idsw,
        gt_total=gt_total,
    )


def compute_idf1(
    gt: Sequence_,
    pred: Sequence_,
    iou_threshold: float = IOU_THRESHOLD,
) -> float:
    """Identity F1: one global trajectory pairing maximizing per-frame hits.

    A ground-truth and a predicted trajectory agree on a frame when both are
    present and overlap at `iou_threshold`; the optimal pairing maximizes the
    total agreement (equivalently minimizes ID false positives plus
    negatives), giving IDF1 = 2*IDTP / (gt boxes + pred boxes).
    """
    _check_sequences(gt, pred)

    gt_traj: dict[int, dict[int, BBox]] = {}
    for frame, boxes in gt.items():
        for gid, box in boxes:
            gt_traj.setdefault(gid, {})[frame] = box
    pred_traj: dict[int, dict[int, BBox]] = {}
    for frame, boxes in pred.items():
        for pid, box in boxes:
            pred_traj.setdefault(pid, {})[frame] = box

    total_gt = sum(len(t) for t in gt_traj.values())
    total_pred = sum(len(t) for t in pred_traj.values())
    if total_pred == 0:
        return 0.0

    g_ids = sorted(gt_traj)
    p_ids = sorted(pred_traj)
    overlap = np.zeros((len(g_ids), len(p_ids)))
    for i, gid in enumerate(g_ids):
        for j, pid in enumerate(p_ids):
            track = gt_traj[gid]
            hits = 0
            for frame, pbox in pred_traj[pid].items():
                gbox = track.get(frame)
                if gbox is not None and bbox_iou(gbox, pbox) >= iou_threshold:
                    hits += 1
            overlap[i, j] = hits
    rows, cols = linear_sum_assignment(-overlap)
    idtp = float(overlap[rows, cols].sum())
    return 2.0 * idtp / (total_gt + total_pred)
