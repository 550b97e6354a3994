"""
Synthetic moving-shape videos with exact optical flow

Every video shows one salient shape (optionally with an attached second
part) translating over a textured background that drifts with its own
velocity. Distractor shapes are painted into the background and drift with
it. Occluders hide part of the salient object for a run of frames whose
length grows with `difficulty`. Flow is the exact integer displacement of
every pixel from frame t to t+1, colour coded with the Middlebury wheel.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from tqdm import tqdm

from ..errors import ArgumentError
from .dataset_io import SNIPPET_LEN, VideoSample

logger = logging.getLogger(__name__)

# flow magnitude that maps to a fully saturated colour
FLOW_MAX = 4.0
SHAPES = ("ellipse", "rectangle", "polygon")

_COLOR_WHEEL: Optional[np.ndarray] = None


def color_wheel() -> np.ndarray:
    """Middlebury colour wheel: 55 RGB hues in [0, 1]"""
    global _COLOR_WHEEL
    if _COLOR_WHEEL is not None:
        return _COLOR_WHEEL
    segments = [(15, 0, 1), (6, 1, 0), (4, 1, 2), (11, 2, 1), (13, 2, 0), (6, 0, 2)]
    rows = []
    # each segment holds one primary at 1 and ramps another up or down
    for steps, full, ramp in segments:
        block = np.zeros((steps, 3))
        block[:, full] = 1.0
        up = np.arange(steps) / steps
        rising = (full, ramp) in ((0, 1), (1, 2), (2, 0))
        block[:, ramp] = up if rising else 1.0 - up
        rows.append(block)
    _COLOR_WHEEL = np.concatenate(rows)
    return _COLOR_WHEEL


def flow_to_rgb(dy: np.ndarray, dx: np.ndarray, max_magnitude: float = FLOW_MAX) -> np.ndarray:
    """
    Encode a displacement field as a 3 x H x W image in [0, 1].

    Hue follows direction, saturation follows magnitude; zero motion is white.
    """
    wheel = color_wheel()
    n_colors = wheel.shape[0]
    angle = np.arctan2(-dy, -dx) / np.pi
    magnitude = np.clip(np.hypot(dx, dy) / max_magnitude, 0.0, 1.0)

    idx = (angle + 1.0) / 2.0 * (n_colors - 1)
    idx0 = np.floor(idx).astype(np.int64)
    idx1 = (idx0 + 1) % n_colors
    alpha = (idx - idx0)[..., None]
    col = (1.0 - alpha) * wheel[idx0] + alpha * wheel[idx1]
    col = 1.0 - magnitude[..., None] * (1.0 - col)
    return np.transpose(col, (2, 0, 1))


def quantize(values: np.ndarray) -> np.ndarray:
    """Snap to multiples of 1/255 so the 8-bit on-disk form is lossless"""
    return np.clip(np.rint(values * 255.0), 0, 255) / 255.0


# Shape rasterisation on a local canvas, sampled at pixel centres

def _ellipse(h: int, w: int) -> np.ndarray:
    yy, xx = np.mgrid[0:h, 0:w] + 0.5
    cy, cx = h / 2.0, w / 2.0
    return ((yy - cy) / (h / 2.0)) ** 2 + ((xx - cx) / (w / 2.0)) ** 2 <= 1.0


def _rectangle(h: int, w: int) -> np.ndarray:
    return np.ones((h, w), dtype=bool)


def _polygon(h: int, w: int, rng: np.random.Generator) -> np.ndarray:
    n_vertices = int(rng.integers(5, 9))
    angles = np.sort(rng.uniform(0.0, 2.0 * np.pi, n_vertices))
    cy, cx = h / 2.0, w / 2.0
    vy = cy + (h / 2.0) * np.sin(angles)
    vx = cx + (w / 2.0) * np.cos(angles)
    yy, xx = np.mgrid[0:h, 0:w] + 0.5
    inside = np.ones((h, w), dtype=bool)
    # vertices are in counter-clockwise order, keep the left side of every edge
    for i in range(n_vertices):
        j = (i + 1) % n_vertices
        cross = (vx[j] - vx[i]) * (yy - vy[i]) - (vy[j] - vy[i]) * (xx - vx[i])
        inside &= cross >= 0
    if not inside.any():
        return _ellipse(h, w)
    return inside


def rasterize(kind: str, h: int, w: int, rng: np.random.Generator) -> np.ndarray:
    if kind == "ellipse":
        return _ellipse(h, w)
    if kind == "rectangle":
        return _rectangle(h, w)
    if kind == "polygon":
        return _polygon(h, w, rng)
    raise ArgumentError(f"unknown shape {kind!r}")


@dataclass
class SceneSpec:
    """Everything random about one video, drawn once from its generator"""

    shape: str
    canvas: Tuple[int, int]
    object_velocity: Tuple[int, int]
    background_velocity: Tuple[int, int]
    start: Tuple[int, int]
    n_distractors: int
    second_part: bool
    occluded_frames: Tuple[int, ...]


def draw_scene(
    rng: np.random.Generator,
    length: int,
    height: int,
    width: int,
    difficulty: float,
) -> SceneSpec:
    """Pick shape, motion and occlusion so the object stays inside the frame"""
    travel = max(1, length - 1)
    vmax_y = min(2, (height // 2) // travel)
    vmax_x = min(2, (width // 2) // travel)

    def velocity_component(vmax: int) -> int:
        return int(rng.integers(-vmax, vmax + 1)) if vmax > 0 else 0

    velocity = (0, 0)
    if vmax_y or vmax_x:
        while velocity == (0, 0):
            velocity = (velocity_component(vmax_y), velocity_component(vmax_x))

    background = velocity
    while background == velocity:
        background = (int(rng.integers(-1, 2)), int(rng.integers(-1, 2)))

    canvas_h = int(rng.integers(height // 4, height // 2 + 1))
    canvas_w = int(rng.integers(width // 4, width // 2 + 1))

    def start_component(extent: int, size: int, v: int) -> int:
        lo = max(0, -v * (length - 1))
        hi = extent - size - max(0, v * (length - 1))
        return int(rng.integers(lo, hi + 1))

    start = (start_component(height, canvas_h, velocity[0]), start_component(width, canvas_w, velocity[1]))

    n_hidden = int(round(difficulty * 0.25 * length))
    occluded: Tuple[int, ...] = ()
    if n_hidden > 0:
        first = int(rng.integers(0, length - n_hidden + 1))
        occluded = tuple(range(first, first + n_hidden))

    return SceneSpec(
        shape=SHAPES[int(rng.integers(len(SHAPES)))],
        canvas=(canvas_h, canvas_w),
        object_velocity=velocity,
        background_velocity=background,
        start=start,
        n_distractors=int(rng.integers(0, 3)),
        second_part=bool(rng.random() < 0.3),
        occluded_frames=occluded,
    )


def _texture(rng: np.random.Generator, height: int, width: int, base: np.ndarray, amplitude: float) -> np.ndarray:
    """Periodic 3 x H x W texture: integer-frequency sinusoids around a base colour"""
    yy, xx = np.mgrid[0:height, 0:width]
    tex = np.repeat(base[:, None, None], height, axis=1).repeat(width, axis=2).astype(np.float64)
    for _ in range(3):
        fy, fx = rng.integers(1, 5, size=2)
        phase = rng.uniform(0, 2 * np.pi)
        wave = np.sin(2 * np.pi * (fy * yy / height + fx * xx / width) + phase)
        tex += amplitude * rng.uniform(-1, 1, size=3)[:, None, None] * wave
    return np.clip(tex, 0.0, 1.0)


def render_video(
    video_id: str,
    rng: np.random.Generator,
    length: int,
    height: int,
    width: int,
    difficulty: float = 0.0,
    spec: Optional[SceneSpec] = None,
) -> VideoSample:
    """Render one video; `spec` overrides the randomly drawn scene"""
    spec = spec or draw_scene(rng, length, height, width, difficulty)
    ch, cw = spec.canvas
    vy, vx = spec.object_velocity
    by, bx = spec.background_velocity

    background = _texture(rng, height, width, rng.uniform(0.2, 0.8, size=3), 0.12)
    for _ in range(spec.n_distractors):
        dh = int(rng.integers(height // 8, height // 4 + 1))
        dw = int(rng.integers(width // 8, width // 4 + 1))
        shape = rasterize(SHAPES[int(rng.integers(len(SHAPES)))], dh, dw, rng)
        y0, x0 = int(rng.integers(0, height)), int(rng.integers(0, width))
        rows = (np.arange(dh) + y0) % height
        cols = (np.arange(dw) + x0) % width
        patch = background[:, rows[:, None], cols[None, :]]
        color = rng.uniform(0.0, 1.0, size=3)[:, None, None]
        background[:, rows[:, None], cols[None, :]] = np.where(shape, color, patch)

    footprint = rasterize(spec.shape, ch, cw, rng)
    if spec.second_part:
        ph, pw = max(2, ch // 2), max(2, cw // 2)
        oy, ox = int(rng.integers(0, ch - ph + 1)), int(rng.integers(0, cw - pw + 1))
        footprint = footprint.copy()
        footprint[oy:oy + ph, ox:ox + pw] |= _ellipse(ph, pw)
    appearance = _texture(rng, ch, cw, rng.uniform(0.0, 1.0, size=3), 0.2)

    occluder_w = max(1, int(round(cw * rng.uniform(0.5, 1.0))))
    occluder_color = rng.uniform(0.0, 1.0, size=3)[:, None, None]

    frames = np.empty((length, 3, height, width))
    masks = np.zeros((length, height, width), dtype=np.uint8)
    displacements = np.empty((length, 2, height, width))
    for t in range(length):
        frame = np.roll(background, shift=(t * by, t * bx), axis=(1, 2))
        y0, x0 = spec.start[0] + t * vy, spec.start[1] + t * vx
        region = (slice(y0, y0 + ch), slice(x0, x0 + cw))
        window = frame[:, region[0], region[1]]
        frame[:, region[0], region[1]] = np.where(footprint, appearance, window)

        visible = footprint.copy()
        moving = footprint.copy()
        if t in spec.occluded_frames:
            frame[:, region[0], x0:x0 + occluder_w] = occluder_color
            visible[:, :occluder_w] = False
            moving[:, :occluder_w] = True
        masks[t][region] = visible

        displacements[t, 0] = by
        displacements[t, 1] = bx
        displacements[t, 0][region] = np.where(moving, vy, by)
        displacements[t, 1][region] = np.where(moving, vx, bx)
        frames[t] = quantize(frame)

    flows = np.stack([quantize(flow_to_rgb(d[0], d[1])) for d in displacements])
    return VideoSample(video_id, frames, flows, masks, displacements=displacements)


def _validate(n_videos: int, length: int, height: int, width: int, difficulty: float) -> None:
    if n_videos < 1:
        raise ArgumentError(f"n_videos must be >= 1, got {n_videos}")
    if length < SNIPPET_LEN:
        raise ArgumentError(f"videos need at least {SNIPPET_LEN} frames, got {length}")
    if height < 16 or width < 16 or height % 16 or width % 16:
        raise ArgumentError(f"frame size must be a positive multiple of 16, got {height}x{width}")
    if not 0.0 <= difficulty <= 1.0:
        raise ArgumentError(f"difficulty must lie in [0, 1], got {difficulty}")


def gen_synthetic(
    seed: int,
    n_videos: int,
    length: int,
    height: int,
    width: int,
    difficulty: float = 0.5,
    jobs: int = 1,
    show_progress: bool = False,
) -> List[VideoSample]:
    """
    Generate a seeded synthetic dataset.

    Args:
        seed: Dataset seed; video i draws from the generator seeded with (seed, i)
        n_videos: Number of videos
        length: Frames per video
        height: Frame height, a multiple of 16
        width: Frame width, a multiple of 16
        difficulty: 0 disables occluders, 1 hides the object in 25% of frames
        jobs: Worker threads
        show_progress: Whether to show a progress bar

    Returns:
        List of VideoSample with ids vid_0000, vid_0001, ...
    """
    _validate(n_videos, length, height, width, difficulty)

    def one(index: int) -> VideoSample:
        rng = np.random.default_rng([seed, index])
        return render_video(f"vid_{index:04d}", rng, length, height, width, difficulty)

    with tqdm(total=n_videos, desc="Generating videos", disable=not show_progress) as pbar:
        if jobs <= 1:
            videos = []
            for index in range(n_videos):
                videos.append(one(index))
                pbar.update(1)
        else:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                videos = []
                for video in pool.map(one, range(n_videos)):
                    videos.append(video)
                    pbar.update(1)
    logger.info("Generated %d synthetic videos (%dx%d, L=%d, difficulty=%.2f)", n_videos, height, width, length, difficulty)
    return videos
