"""
Video samples, snippet sampling, and the on-disk NetPBM dataset layout

    root/manifest.txt            one line per video: "<id> <L> <H> <W>"
    root/<id>/frame_%04d.ppm     binary P6, maxval 255
    root/<id>/flow_%04d.ppm      binary P6
    root/<id>/mask_%04d.pgm      binary P5, values 0 or 255

A mask tree (predictions written by `infer`) has the same manifest and only
the mask files.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from PIL import Image, UnidentifiedImageError
from tqdm import tqdm

from ..errors import ArgumentError, DatasetIOError, DatasetValidationError

logger = logging.getLogger(__name__)

MANIFEST = "manifest.txt"
FRAME_PATTERN = "frame_{:04d}.ppm"
FLOW_PATTERN = "flow_{:04d}.ppm"
MASK_PATTERN = "mask_{:04d}.pgm"
SNIPPET_LEN = 4

PathLike = Union[str, Path]


@dataclass
class VideoSample:
    """
    Aligned frames, flow maps and ground-truth masks of one video.

    frames and flows are L x 3 x H x W float64 in [0, 1]; masks are
    L x H x W uint8 in {0, 1}.
    """
    id: str
    frames: np.ndarray
    flows: np.ndarray
    masks: np.ndarray
    # L x 2 x H x W (dy, dx) per-pixel motion; generator output only, never persisted
    displacements: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    @property
    def length(self) -> int:
        return self.frames.shape[0]

    @property
    def height(self) -> int:
        return self.frames.shape[2]

    @property
    def width(self) -> int:
        return self.frames.shape[3]

    def validate(self) -> None:
        if self.frames.ndim != 4 or self.frames.shape[1] != 3 or self.frames.shape[0] < 1:
            raise DatasetValidationError(f"{self.id}: frames must be L x 3 x H x W, got {self.frames.shape}")
        if self.flows.shape != self.frames.shape:
            raise DatasetValidationError(f"{self.id}: flows {self.flows.shape} do not match frames {self.frames.shape}")
        expected = (self.length, self.height, self.width)
        if self.masks.shape != expected:
            raise DatasetValidationError(f"{self.id}: masks {self.masks.shape} do not match {expected}")
        if not np.isin(self.masks, (0, 1)).all():
            raise DatasetValidationError(f"{self.id}: masks are not binary")


@dataclass
class Snippet:
    """Consecutive frames [start, start + len) of one video"""
    video_id: str
    start: int
    frames: np.ndarray
    flows: np.ndarray
    masks: np.ndarray

    @property
    def indices(self) -> List[int]:
        return list(range(self.start, self.start + self.frames.shape[0]))


def sample_snippet(
    dataset: Sequence[VideoSample],
    rng: np.random.Generator,
    length: int = SNIPPET_LEN,
) -> Snippet:
    """Uniform video choice, then a uniform start in [0, L - length]"""
    if not dataset:
        raise ArgumentError("cannot sample a snippet from an empty dataset")
    video = dataset[int(rng.integers(len(dataset)))]
    if video.length < length:
        raise ArgumentError(f"video {video.id} has {video.length} frames, snippets need {length}")
    start = int(rng.integers(0, video.length - length + 1))
    stop = start + length
    return Snippet(video.id, start, video.frames[start:stop], video.flows[start:stop], video.masks[start:stop])


def sample_from_sources(
    sources: Sequence[Sequence[VideoSample]],
    rng: np.random.Generator,
    length: int = SNIPPET_LEN,
) -> Snippet:
    """Pick a dataset with equal probability, then a snippet from it"""
    sources = [s for s in sources if s]
    if not sources:
        raise ArgumentError("cannot sample a snippet: every dataset is empty")
    if len(sources) == 1:
        return sample_snippet(sources[0], rng, length)
    return sample_snippet(sources[int(rng.integers(len(sources)))], rng, length)


# Image codecs

def _to_bytes(values: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(values * 255.0), 0, 255).astype(np.uint8)


def _write_ppm(path: Path, chw: np.ndarray) -> None:
    Image.fromarray(_to_bytes(np.transpose(chw, (1, 2, 0)))).save(path, format="PPM")


def _write_pgm(path: Path, mask: np.ndarray) -> None:
    Image.fromarray(mask.astype(np.uint8) * 255).save(path, format="PPM")


def _read_image(path: Path, mode: str, size: Tuple[int, int]) -> np.ndarray:
    if not path.exists():
        raise DatasetValidationError(f"manifest lists {path.name} but the file is missing: {path}")
    try:
        with Image.open(path) as img:
            img.load()
            if img.mode != mode:
                raise DatasetIOError(path, f"expected a {mode} image, found {img.mode}")
            if img.size != size:
                raise DatasetValidationError(
                    f"{path}: image is {img.size[0]}x{img.size[1]}, manifest says {size[0]}x{size[1]}"
                )
            return np.asarray(img)
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        if isinstance(exc, DatasetIOError):
            raise
        raise DatasetIOError(path, f"cannot decode image ({exc})") from exc


def _read_mask(path: Path, size: Tuple[int, int]) -> np.ndarray:
    grid = _read_image(path, "L", size)
    if not np.isin(grid, (0, 255)).all():
        raise DatasetValidationError(f"{path}: mask values must be 0 or 255")
    return (grid == 255).astype(np.uint8)


# Manifest

def write_manifest(root: Path, entries: Sequence[Tuple[str, int, int, int]]) -> None:
    lines = [f"{vid} {length} {height} {width}\n" for vid, length, height, width in entries]
    (root / MANIFEST).write_text("".join(lines), encoding="utf-8")


def read_manifest(root: PathLike) -> List[Tuple[str, int, int, int]]:
    path = Path(root) / MANIFEST
    if not path.exists():
        raise DatasetIOError(path, "manifest not found")
    entries = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 4:
            raise DatasetValidationError(f"{path}:{lineno}: expected 'id L H W', got {line!r}")
        try:
            length, height, width = (int(p) for p in parts[1:])
        except ValueError as exc:
            raise DatasetValidationError(f"{path}:{lineno}: non-integer extent in {line!r}") from exc
        if min(length, height, width) < 1:
            raise DatasetValidationError(f"{path}:{lineno}: extents must be positive in {line!r}")
        entries.append((parts[0], length, height, width))
    return entries


class DatasetStore:
    """Reads and writes datasets and mask trees under one root directory"""

    def __init__(self, root: PathLike, jobs: int = 1, show_progress: bool = False):
        """
        Args:
            root: Dataset or mask-tree directory
            jobs: Worker threads for per-video file I/O
            show_progress: Whether to show a progress bar
        """
        self.root = Path(root)
        self.jobs = max(1, jobs)
        self.show_progress = show_progress

    def _map(self, func, items: Sequence, desc: str) -> List:
        with tqdm(total=len(items), desc=desc, disable=not self.show_progress) as pbar:
            if self.jobs == 1:
                results = []
                for item in items:
                    results.append(func(item))
                    pbar.update(1)
                return results
            with ThreadPoolExecutor(max_workers=self.jobs) as pool:
                results = []
                for result in pool.map(func, items):
                    results.append(result)
                    pbar.update(1)
                return results

    def save(self, dataset: Sequence[VideoSample]) -> Path:
        self.root.mkdir(parents=True, exist_ok=True)
        for video in dataset:
            video.validate()
        self._map(self._save_video, list(dataset), "Writing videos")
        write_manifest(self.root, [(v.id, v.length, v.height, v.width) for v in dataset])
        logger.info("Dataset written: %s (%d videos)", self.root, len(dataset))
        return self.root

    def _save_video(self, video: VideoSample) -> None:
        folder = self.root / video.id
        folder.mkdir(parents=True, exist_ok=True)
        for t in range(video.length):
            _write_ppm(folder / FRAME_PATTERN.format(t), video.frames[t])
            _write_ppm(folder / FLOW_PATTERN.format(t), video.flows[t])
            _write_pgm(folder / MASK_PATTERN.format(t), video.masks[t])

    def load(self) -> List[VideoSample]:
        entries = read_manifest(self.root)
        dataset = self._map(self._load_video, entries, "Reading videos")
        logger.info("Dataset loaded: %s (%d videos)", self.root, len(dataset))
        return dataset

    def _load_video(self, entry: Tuple[str, int, int, int]) -> VideoSample:
        vid, length, height, width = entry
        folder = self.root / vid
        size = (width, height)
        frames = np.empty((length, 3, height, width))
        flows = np.empty((length, 3, height, width))
        masks = np.empty((length, height, width), dtype=np.uint8)
        for t in range(length):
            frames[t] = np.transpose(_read_image(folder / FRAME_PATTERN.format(t), "RGB", size), (2, 0, 1)) / 255.0
            flows[t] = np.transpose(_read_image(folder / FLOW_PATTERN.format(t), "RGB", size), (2, 0, 1)) / 255.0
            masks[t] = _read_mask(folder / MASK_PATTERN.format(t), size)
        return VideoSample(vid, frames, flows, masks)

    def save_masks(self, masks: Dict[str, np.ndarray]) -> Path:
        """Write a mask-only tree: {video id: L x H x W binary masks}"""
        self.root.mkdir(parents=True, exist_ok=True)
        ids = sorted(masks)
        for vid in ids:
            folder = self.root / vid
            folder.mkdir(parents=True, exist_ok=True)
            for t, mask in enumerate(masks[vid]):
                _write_pgm(folder / MASK_PATTERN.format(t), mask)
        write_manifest(self.root, [(vid, *masks[vid].shape) for vid in ids])
        logger.info("Mask tree written: %s (%d videos)", self.root, len(ids))
        return self.root

    def load_masks(self) -> Dict[str, np.ndarray]:
        entries = read_manifest(self.root)

        def read_one(entry):
            vid, length, height, width = entry
            folder = self.root / vid
            return vid, np.stack([_read_mask(folder / MASK_PATTERN.format(t), (width, height)) for t in range(length)])

        return dict(self._map(read_one, entries, "Reading masks"))


def save_dataset(dataset: Sequence[VideoSample], root: PathLike, jobs: int = 1) -> Path:
    return DatasetStore(root, jobs=jobs).save(dataset)


def load_dataset(root: PathLike, jobs: int = 1) -> List[VideoSample]:
    return DatasetStore(root, jobs=jobs).load()


def save_mask_tree(masks: Dict[str, np.ndarray], root: PathLike) -> Path:
    return DatasetStore(root).save_masks(masks)


def load_mask_tree(root: PathLike, jobs: int = 1) -> Dict[str, np.ndarray]:
    return DatasetStore(root, jobs=jobs).load_masks()
