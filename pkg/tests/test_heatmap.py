import math

import numpy as np
import pytest

from peaktrack import (
    BBox,
    FrameAnnotations,
    HeadOutput,
    ObjectAnnotation,
    PipelineConfig,
    decode_detections,
    extract_peaks,
    gaussian_sigma,
    render_gt_heatmap,
    top_point_from_bbox,
)
from peaktrack.geometry import GridPoint
from peaktrack.heatmap import _draw_gaussian, place_objects
from peaktrack.simulator import synthesize_head_outputs

from .conftest import separated_annotations
from .oracles import iou_radius_oracle

# frozen output of iou_radius_oracle(24, 24) recorded before the main build
RADIUS_24 = 1.9600796815910932


class TestGaussianSigma:
    def test_tiny_objects_clamp(self):
        assert gaussian_sigma((1.0, 1.0), 4) == pytest.approx(2.0 / 3.0)
        assert gaussian_sigma((4.0, 4.0), 4) == pytest.approx(2.0 / 3.0)

    def test_mid_size_matches_radius_oracle(self):
        assert iou_radius_oracle(24.0, 24.0) == pytest.approx(RADIUS_24, abs=1e-12)
        expected = (2.0 * RADIUS_24 + 1.0) / 6.0
        assert gaussian_sigma((96.0, 96.0), 4) == pytest.approx(expected, abs=1e-12)

    def test_matches_oracle_on_random_sizes(self, rng):
        for _ in range(200):
            w = float(rng.uniform(20, 400))
            h = float(rng.uniform(20, 400))
            r = iou_radius_oracle(w / 4.0, h / 4.0)
            expected = max((2.0 * r + 1.0) / 6.0, 2.0 / 3.0)
            assert gaussian_sigma((w, h), 4) == pytest.approx(expected, rel=1e-12)

    def test_monotone_in_size(self, rng):
        for _ in range(100):
            w = float(rng.uniform(4, 300))
            h = float(rng.uniform(4, 300))
            assert gaussian_sigma((2 * w, 2 * h), 4) >= gaussian_sigma((w, h), 4)

    def test_nonpositive_rejected(self):
        with pytest.raises(ValueError):
            gaussian_sigma((0.0, 4.0), 4)


class TestRender:
    def test_center_cell_is_one(self):
        ann = FrameAnnotations(1, (ObjectAnnotation(1, 0, BBox(10, 20, 40, 100)),))
        hm = render_gt_heatmap(ann, (256, 256), 4)
        top = top_point_from_bbox(ann.objects[0].bbox)
        assert hm[int(top.y // 4), int(top.x // 4), 0] == 1.0

    def test_gaussian_profile_value(self):
        # two cells right of the center with sigma 2: exp(-4 / 8)
        channel = np.zeros((21, 21))
        _draw_gaussian(channel, GridPoint(10, 10), 2.0)
        assert channel[10, 12] == pytest.approx(math.exp(-0.5), abs=1e-12)
        assert channel[10, 10] == 1.0

    def test_same_cell_objects_keep_larger_bump(self):
        small = ObjectAnnotation(1, 0, BBox(118, 112, 20, 80))
        large = ObjectAnnotation(2, 0, BBox(88, 104, 80, 160))
        # same top point (128, 120) by construction
        t1 = top_point_from_bbox(small.bbox)
        t2 = top_point_from_bbox(large.bbox)
        assert (t1.x, t1.y) == (t2.x, t2.y)
        both = render_gt_heatmap(FrameAnnotations(1, (small, large)), (512, 512), 4)
        only_large = render_gt_heatmap(FrameAnnotations(1, (large,)), (512, 512), 4)
        np.testing.assert_array_equal(both, only_large)

    def test_order_invariance(self, rng):
        ann = separated_annotations(rng, 1, 12, image_size=(320, 320), min_cell_gap=1)
        shuffled = list(ann.objects)
        rng.shuffle(shuffled)
        a = render_gt_heatmap(ann, (320, 320), 4)
        b = render_gt_heatmap(FrameAnnotations(1, tuple(shuffled)), (320, 320), 4)
        np.testing.assert_array_equal(a, b)

    def test_values_in_unit_range(self, rng):
        ann = separated_annotations(rng, 1, 30, image_size=(640, 640), min_cell_gap=1)
        hm = render_gt_heatmap(ann, (640, 640), 4)
        assert hm.min() >= 0.0 and hm.max() <= 1.0

    def test_off_frame_top_clamped_or_skipped(self):
        # top at x = -2: inside the one-cell margin, clamped onto the border
        near = ObjectAnnotation(1, 0, BBox(-22.0, 40.0, 40.0, 50.0))
        hm = render_gt_heatmap(FrameAnnotations(1, (near,)), (256, 256), 4)
        assert (hm == 1.0).sum() == 1
        assert hm[:, 0, 0].max() == 1.0
        # top far outside the margin: dropped entirely
        far = ObjectAnnotation(1, 0, BBox(-200.0, 40.0, 40.0, 50.0))
        hm = render_gt_heatmap(FrameAnnotations(1, (far,)), (256, 256), 4)
        assert hm.max() == 0.0

    def test_bad_dims_rejected(self):
        ann = FrameAnnotations(1, ())
        with pytest.raises(ValueError):
            render_gt_heatmap(ann, (254, 256), 4)

    def test_duplicate_track_ids_rejected(self):
        objs = (
            ObjectAnnotation(1, 0, BBox(0, 0, 10, 10)),
            ObjectAnnotation(1, 0, BBox(50, 50, 10, 10)),
        )
        with pytest.raises(ValueError):
            FrameAnnotations(1, objs)


class TestExtractPeaks:
    def test_isolated_objects_found_exactly(self, rng):
        ann = separated_annotations(rng, 1, 5, image_size=(320, 320))
        hm = render_gt_heatmap(ann, (320, 320), 4)
        peaks = extract_peaks(hm, max_peaks=100, score_threshold=0.5)
        assert len(peaks) == 5
        assert all(score == 1.0 for _, _, score in peaks)
        expected_cells = {(p.cell.col, p.cell.row) for p in place_objects(ann, (320, 320), 4)}
        assert {(c.col, c.row) for c, _, _ in peaks} == expected_cells

    def test_uniform_field_truncates_in_tiebreak_order(self):
        hm = np.full((5, 5, 1), 0.6)
        peaks = extract_peaks(hm, max_peaks=7, score_threshold=0.5)
        cells = [(c.row, c.col) for c, _, _ in peaks]
        assert cells == [(0, 0), (0, 1), (0, 2), (0, 3), (0, 4), (1, 0), (1, 1)]

    def test_threshold_above_peak_gives_nothing(self):
        hm = np.zeros((9, 9, 1))
        _draw_gaussian(hm[:, :, 0], GridPoint(4, 4), 1.0, peak=0.55)
        assert extract_peaks(hm, 100, 0.6) == []

    def test_peak_rule_soundness_on_noise(self, rng):
        hm = rng.uniform(0.0, 1.0, size=(24, 24, 2))
        for cell, ch, score in extract_peaks(hm, 1000, 0.1):
            r, c = cell.row, cell.col
            neigh = hm[max(r - 1, 0) : r + 2, max(c - 1, 0) : c + 2, ch]
            assert score >= neigh.max()

    def test_channel_tiebreak(self):
        hm = np.zeros((3, 3, 2))
        hm[1, 1, 0] = 0.7
        hm[1, 1, 1] = 0.7
        peaks = extract_peaks(hm, 10, 0.5)
        assert [ch for _, ch, _ in peaks][:2] == [0, 1]


class TestDecode:
    def test_single_object_exact_recovery(self):
        ann = FrameAnnotations(1, (ObjectAnnotation(1, 0, BBox(10, 20, 40, 100)),))
        head = synthesize_head_outputs(ann, None, (256, 256), 4)
        dets = decode_detections(head, PipelineConfig())
        assert len(dets) == 1
        d = dets[0]
        top = top_point_from_bbox(ann.objects[0].bbox)
        assert abs(d.top.x - top.x) < 1e-6 and abs(d.top.y - top.y) < 1e-6
        box = d.bbox()
        assert box.corners() == ann.objects[0].bbox.corners()

    def test_zero_heatmap_decodes_empty(self):
        shape = (32, 32)
        head = HeadOutput(
            np.zeros(shape + (1,)),
            np.zeros(shape + (2,)),
            np.zeros(shape + (2,)),
            np.zeros(shape + (2,)),
            4,
        )
        assert decode_detections(head, PipelineConfig()) == []

    def test_fifty_objects_round_trip(self, rng):
        ann = separated_annotations(rng, 1, 50, image_size=(640, 640))
        head = synthesize_head_outputs(ann, None, (640, 640), 4)
        dets = decode_detections(head, PipelineConfig())
        assert len(dets) == 50
        by_top = {(top_point_from_bbox(o.bbox).x, top_point_from_bbox(o.bbox).y): o for o in ann.objects}
        for d in dets:
            key = min(by_top, key=lambda t: (t[0] - d.top.x) ** 2 + (t[1] - d.top.y) ** 2)
            assert math.hypot(key[0] - d.top.x, key[1] - d.top.y) < 1e-6
            assert d.bbox().corners() == by_top[key].bbox.corners()

    def test_multiclass_detection_carries_class(self):
        objs = (
            ObjectAnnotation(1, 0, BBox(40, 40, 20, 50)),
            ObjectAnnotation(2, 1, BBox(160, 160, 20, 50)),
        )
        head = synthesize_head_outputs(FrameAnnotations(1, objs), None, (256, 256), 4, num_classes=2)
        dets = decode_detections(head, PipelineConfig(num_classes=2))
        assert sorted(d.class_id for d in dets) == [0, 1]

    def test_inconsistent_grids_rejected(self):
        with pytest.raises(ValueError):
            HeadOutput(
                np.zeros((8, 8, 1)),
                np.zeros((8, 9, 2)),
                np.zeros((8, 8, 2)),
                np.zeros((8, 8, 2)),
                4,
            )
        head = HeadOutput(
            np.zeros((8, 8, 2)),
            np.zeros((8, 8, 2)),
            np.zeros((8, 8, 2)),
            np.zeros((8, 8, 2)),
            4,
        )
        with pytest.raises(ValueError):
            decode_detections(head, PipelineConfig(num_classes=1))

    def test_nonpositive_size_dropped(self):
        hm = np.zeros((16, 16, 1))
        hm[5, 5, 0] = 1.0
        head = HeadOutput(hm, np.zeros((16, 16, 2)), np.zeros((16, 16, 2)), np.zeros((16, 16, 2)), 4)
        assert decode_detections(head, PipelineConfig()) == []
