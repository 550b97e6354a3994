"""
Snippet training loop and whole-video inference
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
from tqdm import tqdm

from ..errors import ArgumentError
from ..utils.dataset_io import SNIPPET_LEN, Snippet, VideoSample, sample_from_sources
from ..utils.reporting import ResultTable
from . import functional as F
from .checkpoint import file_hash
from .ifa import bank_cache_key, load_bank, sample_reference_indices, save_bank
from .network import DpaModel
from .optim import Adam, cosine_lr
from .tensor import Tensor, no_grad

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    """Optimisation settings; one optimizer step averages batch_size snippets"""

    snippet_len: int = SNIPPET_LEN
    batch_size: int = 2
    steps: int = 200
    lr_max: float = 1e-4
    lr_min: float = 1e-5
    seed: int = 0
    n_refs: int = 4
    log_every: int = 10

    def validate(self) -> None:
        if self.snippet_len != SNIPPET_LEN:
            raise ArgumentError(f"snippets are {SNIPPET_LEN} frames long, got snippet_len={self.snippet_len}")
        if self.batch_size < 1 or self.steps < 1:
            raise ArgumentError(f"batch_size and steps must be >= 1, got {self.batch_size} and {self.steps}")
        if not 0 < self.lr_min <= self.lr_max:
            raise ArgumentError(f"need 0 < lr_min <= lr_max, got {self.lr_min} and {self.lr_max}")
        if self.n_refs < 1:
            raise ArgumentError(f"n_refs must be >= 1, got {self.n_refs}")
        if self.log_every < 1:
            raise ArgumentError(f"log_every must be >= 1, got {self.log_every}")

    def to_dict(self) -> Dict[str, Union[int, float]]:
        return asdict(self)


@dataclass
class LossRecord:
    step: int
    lr: float
    loss: float


@dataclass
class TrainResult:
    losses: List[LossRecord] = field(default_factory=list)
    checkpoint: Optional[Path] = None

    @property
    def final_loss(self) -> float:
        return self.losses[-1].loss

    def loss_table(self) -> ResultTable:
        return ResultTable.from_records(
            "Training loss",
            [asdict(r) for r in self.losses],
            columns=["step", "lr", "loss"],
            float_format="{:.8e}",
        )


def snippet_loss(model: DpaModel, snippet: Snippet) -> Tensor:
    """Mean cross entropy over a snippet whose memory banks come from the snippet"""
    logits = model.forward_clip(list(snippet.frames), list(snippet.flows), snippet.indices)
    losses = [F.cross_entropy(lg, mask) for lg, mask in zip(logits, snippet.masks)]
    total = losses[0]
    for loss in losses[1:]:
        total = total + loss
    return total * (1.0 / len(losses))


def train(
    model: DpaModel,
    dataset: Sequence[VideoSample],
    config: TrainConfig,
    *,
    more_datasets: Sequence[Sequence[VideoSample]] = (),
    checkpoint_path: Optional[Union[str, Path]] = None,
    profile: str = "custom",
    show_progress: bool = False,
) -> TrainResult:
    """
    Train on randomly sampled 4-frame snippets with Adam and a cosine rate.

    Args:
        model: Model to optimise in place
        dataset: Training videos
        config: Optimisation settings
        more_datasets: Further sources; each source is drawn with equal probability
        checkpoint_path: Where to write the final weights (skipped if None)
        profile: Profile name recorded in the checkpoint sidecar
        show_progress: Whether to show a progress bar

    Returns:
        TrainResult with one LossRecord per step
    """
    config.validate()
    sources = [dataset, *more_datasets]
    if not any(sources):
        raise ArgumentError("training needs at least one video")

    rng = np.random.default_rng(config.seed)
    optimizer = Adam(model.parameters(), lr=config.lr_max)
    result = TrainResult()
    horizon = max(1, config.steps - 1)

    for step in tqdm(range(config.steps), desc="Training", disable=not show_progress):
        lr = cosine_lr(step, horizon, config.lr_max, config.lr_min)
        optimizer.zero_grad()
        running = 0.0
        for _ in range(config.batch_size):
            snippet = sample_from_sources(sources, rng, config.snippet_len)
            loss = snippet_loss(model, snippet)
            (loss * (1.0 / config.batch_size)).backward()
            running += loss.item()
        optimizer.step(lr)

        record = LossRecord(step, lr, running / config.batch_size)
        result.losses.append(record)
        logger.debug("step %d lr %.3e loss %.6f", step, lr, record.loss)
        if (step + 1) % config.log_every == 0 or step == config.steps - 1:
            logger.info("step %d/%d  lr %.3e  loss %.4f", step + 1, config.steps, lr, record.loss)

    if checkpoint_path is not None:
        result.checkpoint = model.save(checkpoint_path, profile=profile)
    return result


def infer_video(
    model: DpaModel,
    video: VideoSample,
    n_refs: int,
    frame_indices: Optional[Sequence[int]] = None,
    cache_dir: Optional[Union[str, Path]] = None,
    checkpoint: Optional[Union[str, Path]] = None,
) -> np.ndarray:
    """
    Predict binary masks for a video.

    The memory banks are built once from the evenly sampled reference frames
    and only read afterwards, so the mask of a frame does not depend on which
    other frames are predicted in the same call. With `cache_dir` and
    `checkpoint` set, banks are reused across calls.

    Returns:
        len(frame_indices) x H x W uint8 masks (all frames by default)
    """
    refs = sample_reference_indices(video.length, n_refs)
    if frame_indices is None:
        frame_indices = range(video.length)
    frame_indices = list(frame_indices)
    for t in frame_indices:
        if not 0 <= t < video.length:
            raise ArgumentError(f"frame {t} is outside video {video.id} of length {video.length}")

    with no_grad():
        bank_a, bank_m = _banks_for(model, video, refs, cache_dir, checkpoint)
        masks = np.empty((len(frame_indices), video.height, video.width), dtype=np.uint8)
        for out, t in enumerate(frame_indices):
            logits = model.forward_frame(video.frames[t], video.flows[t], bank_a, bank_m)
            masks[out] = np.argmax(logits.data, axis=0).astype(np.uint8)
    return masks


def _banks_for(model, video, refs, cache_dir, checkpoint):
    if not model.config.use_ifa:
        return None, None
    cache_file = None
    if cache_dir is not None and checkpoint is not None:
        key = bank_cache_key(video.id, len(refs), file_hash(checkpoint))
        cache_file = Path(cache_dir) / f"{key}.dpat"
        if cache_file.exists():
            banks = load_bank(cache_file)
            logger.debug("Memory bank cache hit for %s", video.id)
            return banks.get("a"), banks.get("m")
    bank_a, bank_m = model.build_banks(video.frames[refs], video.flows[refs], refs)
    if cache_file is not None:
        save_bank(cache_file, {k: b for k, b in (("a", bank_a), ("m", bank_m)) if b is not None})
    return bank_a, bank_m


def infer_dataset(
    model: DpaModel,
    dataset: Sequence[VideoSample],
    n_refs: int,
    jobs: int = 1,
    cache_dir: Optional[Union[str, Path]] = None,
    checkpoint: Optional[Union[str, Path]] = None,
    show_progress: bool = False,
) -> Dict[str, np.ndarray]:
    """Masks for every video, optionally in parallel across videos"""

    def one(video: VideoSample):
        return video.id, infer_video(model, video, n_refs, cache_dir=cache_dir, checkpoint=checkpoint)

    results = {}
    with tqdm(total=len(dataset), desc="Inferring", disable=not show_progress) as pbar:
        if jobs <= 1:
            for video in dataset:
                vid, masks = one(video)
                results[vid] = masks
                pbar.update(1)
        else:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                for vid, masks in pool.map(one, dataset):
                    results[vid] = masks
                    pbar.update(1)
    return results
