"""Synthetic scenes, ideal head outputs, and controlled corruption.

The generator moves constant-velocity agents inside the frame (velocities
flip at the borders so boxes never leave it) and hands out persistent ids,
which gives the rest of the pipeline a deterministic desk-scale test bed.
`synthesize_head_outputs` converts annotations into the exact grids a
perfect network would emit, and `corrupt` degrades them with the usual
failure modes: dropped objects, spurious peaks, position jitter, heatmap
noise and a temporally jittered reference frame.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import BBox, TopPoint, quantize_point
from .heatmap import (
    FrameAnnotations,
    HeadOutput,
    ObjectAnnotation,
    _draw_gaussian,
    _grid_dims,
    gaussian_sigma,
    place_objects,
)


@dataclass(frozen=True)
class SceneConfig:
    """Scene geometry and dynamics; image dims are (height, width) pixels."""

    height: int
    width: int
    frames: int
    min_objects: int
    max_objects: int
    min_size: float
    max_size: float
    min_speed: float
    max_speed: float
    downsample: int = 4
    spawn_prob: float = 0.0
    despawn_prob: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.height % self.downsample or self.width % self.downsample:
            raise ValueError("image dims must be divisible by the downsample factor")
        if self.frames < 1:
            raise ValueError("frames must be >= 1")
        if not 1 <= self.min_objects <= self.max_objects:
            raise ValueError("need 1 <= min_objects <= max_objects")
        if not 0 < self.min_size <= self.max_size:
            raise ValueError("need 0 < min_size <= max_size")
        if self.max_size > min(self.width, self.height):
            raise ValueError("objects larger than the frame cannot be placed")
        if not 0 <= self.min_speed <= self.max_speed:
            raise ValueError("need 0 <= min_speed <= max_speed")
        for name in ("spawn_prob", "despawn_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")

    @property
    def image_size(self) -> tuple[int, int]:
        return (self.height, self.width)


@dataclass(frozen=True)
class CorruptionConfig:
    """Rates for the supported degradations; all-zero means identity."""

    fn_rate: float = 0.0
    fp_rate: float = 0.0
    jitter_sigma: float = 0.0
    hm_noise_sigma: float = 0.0
    temporal_jitter_k: int = 0
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.fn_rate <= 1.0:
            raise ValueError("fn_rate must be in [0, 1]")
        if self.fp_rate < 0 or self.jitter_sigma < 0 or self.hm_noise_sigma < 0:
            raise ValueError("corruption rates must be non-negative")
        if not 0 <= self.temporal_jitter_k <= 3:
            raise ValueError("temporal_jitter_k must be in 0..3")

    @property
    def is_identity(self) -> bool:
        return (
            self.fn_rate == 0
            and self.fp_rate == 0
            and self.jitter_sigma == 0
            and self.hm_noise_sigma == 0
            and self.temporal_jitter_k == 0
        )


@dataclass
class _Agent:
    id: int
    w: float
    h: float
    x: float
    y: float
    vx: float
    vy: float


def _spawn_agent(rng: np.random.Generator, cfg: SceneConfig, agent_id: int) -> _Agent:
    w = float(rng.uniform(cfg.min_size, cfg.max_size))
    h = float(rng.uniform(cfg.min_size, cfg.max_size))
    x = float(rng.uniform(0.0, cfg.width - w))
    y = float(rng.uniform(0.0, cfg.height - h))
    vx = float(rng.uniform(cfg.min_speed, cfg.max_speed))
    vy = float(rng.uniform(cfg.min_speed, cfg.max_speed))
    if rng.random() < 0.5:
        vx = -vx
    if rng.random() < 0.5:
        vy = -vy
    return _Agent(agent_id, w, h, x, y, vx, vy)


def _reflect(pos: float, vel: float, hi: float) -> tuple[float, float]:
    # Fold the position back into [0, hi], flipping direction per bounce.
    if hi <= 0.0:
        return 0.0, 0.0
    while pos < 0.0 or pos > hi:
        if pos < 0.0:
            pos = -pos
        else:
            pos = 2.0 * hi - pos
        vel = -vel
    return pos, vel


def gen_scene(cfg: SceneConfig) -> list[FrameAnnotations]:
    """Generate annotations for `cfg.frames` frames.

    Agents keep their velocity until they bounce off a frame border; each
    frame every agent may despawn (permanently) with `despawn_prob` and one
    new agent may spawn with `spawn_prob` while below `max_objects`.  Boxes
    always lie fully inside the frame.
    """
    rng = np.random.default_rng(cfg.seed)
    next_id = 1
    agents: list[_Agent] = []
    for _ in range(int(rng.integers(cfg.min_objects, cfg.max_objects + 1))):
        agents.append(_spawn_agent(rng, cfg, next_id))
        next_id += 1

    frames: list[FrameAnnotations] = []
    for frame_index in range(1, cfg.frames + 1):
        if frame_index > 1:
            agents = [a for a in agents if rng.random() >= cfg.despawn_prob]
            for a in agents:
                a.x, a.vx = _reflect(a.x + a.vx, a.vx, cfg.width - a.w)
                a.y, a.vy = _reflect(a.y + a.vy, a.vy, cfg.height - a.h)
            if len(agents) < cfg.max_objects and rng.random() < cfg.spawn_prob:
                agents.append(_spawn_agent(rng, cfg, next_id))
                next_id += 1
        frames.append(
            FrameAnnotations(
                frame_index,
                tuple(
                    ObjectAnnotation(a.id, 0, BBox(a.x, a.y, a.w, a.h)) for a in agents
                ),
            )
        )
    return frames


def synthesize_head_outputs(
    ann_t: FrameAnnotations,
    ann_prev: FrameAnnotations | None,
    image_size: tuple[int, int],
    downsample: int,
    num_classes: int = 1,
) -> HeadOutput:
    """Grids a perfect network would produce for this frame pair.

    The heatmap is the rendered ground truth; at each object's top cell the
    size, quantization offset and displacement (current top minus previous
    top, zero for objects without a previous-frame match) are written.  All
    other cells stay zero.
    """
    rows, cols = _grid_dims(image_size, downsample)
    heatmap = np.zeros((rows, cols, num_classes))
    size_map = np.zeros((rows, cols, 2))
    offset_map = np.zeros((rows, cols, 2))
    disp_map = np.zeros((rows, cols, 2))

    prev_tops: dict[int, TopPoint] = {}
    if ann_prev is not None:
        for p in place_objects(ann_prev, image_size, downsample, num_classes):
            prev_tops[p.annotation.track_id] = p.top

    for p in place_objects(ann_t, image_size, downsample, num_classes):
        _draw_gaussian(heatmap[:, :, p.annotation.class_id], p.cell, p.sigma)
        r, c = p.cell.row, p.cell.col
        size_map[r, c] = (p.annotation.bbox.w, p.annotation.bbox.h)
        offset_map[r, c] = p.offset
        prev = prev_tops.get(p.annotation.track_id)
        disp_map[r, c] = (p.top.x - prev.x, p.top.y - prev.y) if prev else (0.0, 0.0)
    return HeadOutput(heatmap, size_map, offset_map, disp_map, downsample)


def pick_reference_frame(
    frame_index: int,
    total_frames: int,
    jitter_k: int,
    rng: np.random.Generator,
) -> int | None:
    """Index of the frame used as the displacement reference.

    With no jitter this is simply the previous frame (None for the first).
    A jitter of k picks uniformly from [t-k, t+k] clamped to the sequence.
    """
    if jitter_k == 0:
        return frame_index - 1 if frame_index > 1 else None
    lo = max(frame_index - jitter_k, 1)
    hi = min(frame_index + jitter_k, total_frames)
    return int(rng.integers(lo, hi + 1))


def corrupt(
    ann_t: FrameAnnotations,
    ann_prev: FrameAnnotations | None,
    image_size: tuple[int, int],
    downsample: int,
    corruption: CorruptionConfig,
    num_classes: int = 1,
    rng: np.random.Generator | None = None,
) -> HeadOutput:
    """Synthesize head outputs for a frame, then degrade them.

    Each object is dropped with probability `fn_rate` before rendering and
    the survivors' boxes are shifted by N(0, jitter_sigma^2).  A
    Poisson(fp_rate)-distributed number of spurious peaks is injected at
    uniform positions with sizes resampled from the frame's objects, each
    carrying believable size/offset entries and a score in [0.5, 1].
    Finally Gaussian noise of scale `hm_noise_sigma` is added to the heatmap
    and clamped back to [0, 1].  Pass `rng` to thread one stream through a
    whole sequence; otherwise a fresh one is seeded from the config.
    """
    if rng is None:
        rng = np.random.default_rng(corruption.seed)
    h_px, w_px = image_size

    kept: list[ObjectAnnotation] = []
    for obj in ann_t.objects:
        if rng.random() >= corruption.fn_rate:
            kept.append(obj)
    if corruption.jitter_sigma > 0:
        jittered = []
        for obj in kept:
            dx, dy = rng.normal(0.0, corruption.jitter_sigma, size=2)
            box = obj.bbox
            jittered.append(
                ObjectAnnotation(
                    obj.track_id,
                    obj.class_id,
                    BBox(box.x1 + float(dx), box.y1 + float(dy), box.w, box.h),
                )
            )
        kept = jittered

    head = synthesize_head_outputs(
        FrameAnnotations(ann_t.frame_index, tuple(kept)),
        ann_prev,
        image_size,
        downsample,
        num_classes,
    )
    heatmap = head.heatmap
    size_map = head.size_map
    offset_map = head.offset_map
    disp_map = head.disp_map

    size_pool = [(o.bbox.w, o.bbox.h) for o in ann_t.objects]
    for _ in range(int(rng.poisson(corruption.fp_rate))):
        # keep strictly inside the frame so the cell index stays in range
        x = min(float(rng.uniform(0.0, w_px)), w_px - 1e-6)
        y = min(float(rng.uniform(0.0, h_px)), h_px - 1e-6)
        if size_pool:
            base_w, base_h = size_pool[int(rng.integers(len(size_pool)))]
            scale = float(rng.uniform(0.5, 1.5))
            fp_w = min(base_w * scale, float(w_px))
            fp_h = min(base_h * scale, float(h_px))
        else:
            fp_w = float(rng.uniform(w_px / 16.0, w_px / 4.0))
            fp_h = float(rng.uniform(h_px / 16.0, h_px / 4.0))
        cell, offset = quantize_point(TopPoint(x, y), downsample)
        class_id = int(rng.integers(num_classes))
        peak = float(rng.uniform(0.5, 1.0))
        sigma = gaussian_sigma((fp_w, fp_h), downsample)
        _draw_gaussian(heatmap[:, :, class_id], cell, sigma, peak=peak)
        size_map[cell.row, cell.col] = (fp_w, fp_h)
        offset_map[cell.row, cell.col] = offset
        disp_map[cell.row, cell.col] = (0.0, 0.0)

    if corruption.hm_noise_sigma > 0:
        heatmap += rng.normal(0.0, corruption.hm_noise_sigma, size=heatmap.shape)
        np.clip(heatmap, 0.0, 1.0, out=heatmap)

    return HeadOutput(heatmap, size_map, offset_map, disp_map, downsample)


def simulate_static_pair(
    ann: FrameAnnotations,
    image_size: tuple[int, int],
    scale_range: tuple[float, float],
    translate_range: tuple[float, float],
    seed: int,
) -> tuple[FrameAnnotations, FrameAnnotations]:
    """Fake a previous frame for a single static frame.

    One scale s and translation (tx, ty) are drawn and treated as the motion
    from the synthetic previous frame to the current one (p_now = s * p_prev
    + t, sizes scaled by s), so the previous boxes are the inverse image of
    the given ones.  Objects then carry consistent non-trivial displacements.
    Fails if the sampled transform pushes every box outside the frame.
    """
    lo_s, hi_s = scale_range
    if not 0 < lo_s <= hi_s:
        raise ValueError("scale_range must be positive and ordered")
    lo_t, hi_t = translate_range
    if lo_t > hi_t:
        raise ValueError("translate_range must be ordered")
    rng = np.random.default_rng(seed)
    s = float(rng.uniform(lo_s, hi_s))
    tx = float(rng.uniform(lo_t, hi_t))
    ty = float(rng.uniform(lo_t, hi_t))

    h_px, w_px = image_size
    prev_objects = []
    any_inside = not ann.objects
    for obj in ann.objects:
        box = obj.bbox
        prev_box = BBox((box.x1 - tx) / s, (box.y1 - ty) / s, box.w / s, box.h / s)
        if prev_box.x2 > 0 and prev_box.x1 < w_px and prev_box.y2 > 0 and prev_box.y1 < h_px:
            any_inside = True
        prev_objects.append(ObjectAnnotation(obj.track_id, obj.class_id, prev_box))
    if not any_inside:
        raise ValueError("transform pushed every box outside the frame")
    prev = FrameAnnotations(max(ann.frame_index - 1, 1), tuple(prev_objects))
    return prev, ann
