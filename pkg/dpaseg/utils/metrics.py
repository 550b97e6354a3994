"""
Region similarity J, boundary accuracy F and their mean G
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy import ndimage

from ..errors import ArgumentError, DimensionError
from .reporting import ResultTable

logger = logging.getLogger(__name__)

BOUNDARY_FRACTION = 0.0075
_CROSS = ndimage.generate_binary_structure(2, 1)


def _pair(pred: np.ndarray, gt: np.ndarray) -> tuple:
    pred, gt = np.asarray(pred).astype(bool), np.asarray(gt).astype(bool)
    if pred.shape != gt.shape or pred.ndim != 2:
        raise DimensionError(f"masks must be equal-size H x W grids, got {pred.shape} and {gt.shape}")
    return pred, gt


def region_similarity(pred: np.ndarray, gt: np.ndarray) -> float:
    """Intersection over union; two empty masks score 1"""
    pred, gt = _pair(pred, gt)
    union = np.count_nonzero(pred | gt)
    if union == 0:
        return 1.0
    return np.count_nonzero(pred & gt) / union


def boundary_map(mask: np.ndarray) -> np.ndarray:
    """Foreground pixels 4-adjacent to background or to the image edge"""
    mask = np.asarray(mask).astype(bool)
    return mask & ~ndimage.binary_erosion(mask, structure=_CROSS, border_value=0)


def boundary_tolerance(height: int, width: int) -> int:
    return max(1, int(round(BOUNDARY_FRACTION * np.hypot(height, width))))


def disk(radius: int) -> np.ndarray:
    yy, xx = np.mgrid[-radius:radius + 1, -radius:radius + 1]
    return yy * yy + xx * xx <= radius * radius


def boundary_accuracy(pred: np.ndarray, gt: np.ndarray) -> float:
    """
    Boundary F-measure. A boundary pixel is matched when a boundary pixel of
    the other mask lies within the tolerance disk around it.
    """
    pred, gt = _pair(pred, gt)
    pred_b, gt_b = boundary_map(pred), boundary_map(gt)
    n_pred, n_gt = np.count_nonzero(pred_b), np.count_nonzero(gt_b)
    if n_pred == 0 and n_gt == 0:
        return 1.0
    if n_pred == 0 or n_gt == 0:
        return 0.0

    footprint = disk(boundary_tolerance(*pred.shape))
    gt_zone = ndimage.binary_dilation(gt_b, structure=footprint)
    pred_zone = ndimage.binary_dilation(pred_b, structure=footprint)
    precision = np.count_nonzero(pred_b & gt_zone) / n_pred
    recall = np.count_nonzero(gt_b & pred_zone) / n_gt
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


@dataclass
class SequenceScore:
    id: str
    j: float
    f: float
    frame_j: List[float] = field(default_factory=list, repr=False)
    frame_f: List[float] = field(default_factory=list, repr=False)

    @property
    def g(self) -> float:
        return (self.j + self.f) / 2.0


@dataclass
class MetricReport:
    """Per-sequence means and their averages across sequences"""
    per_sequence: List[SequenceScore]

    @property
    def j_mean(self) -> float:
        return float(np.mean([s.j for s in self.per_sequence]))

    @property
    def f_mean(self) -> float:
        return float(np.mean([s.f for s in self.per_sequence]))

    @property
    def g_mean(self) -> float:
        return (self.j_mean + self.f_mean) / 2.0

    def summary_line(self) -> str:
        return f"J_M={self.j_mean:.3f} F_M={self.f_mean:.3f} G_M={self.g_mean:.3f}"

    def to_table(self, title: str = "Segmentation metrics") -> ResultTable:
        records = [{"sequence": s.id, "J": s.j, "F": s.f, "G": s.g} for s in self.per_sequence]
        records.append({"sequence": "mean", "J": self.j_mean, "F": self.f_mean, "G": self.g_mean})
        return ResultTable.from_records(title, records, columns=["sequence", "J", "F", "G"])


def score_sequence(seq_id: str, preds: Sequence[np.ndarray], gts: Sequence[np.ndarray]) -> SequenceScore:
    if len(preds) != len(gts):
        raise ArgumentError(f"sequence {seq_id}: {len(preds)} predicted frames for {len(gts)} ground-truth frames")
    if len(gts) == 0:
        raise ArgumentError(f"sequence {seq_id} has no frames")
    frame_j = [region_similarity(p, g) for p, g in zip(preds, gts)]
    frame_f = [boundary_accuracy(p, g) for p, g in zip(preds, gts)]
    return SequenceScore(seq_id, float(np.mean(frame_j)), float(np.mean(frame_f)), frame_j, frame_f)


def evaluate(
    pred_masks: Sequence[Sequence[np.ndarray]],
    gt_masks: Sequence[Sequence[np.ndarray]],
    ids: Optional[Sequence[str]] = None,
    jobs: int = 1,
) -> MetricReport:
    """
    Score predicted mask sequences against ground truth.

    Args:
        pred_masks: One stack of H x W masks per sequence
        gt_masks: Matching ground-truth stacks
        ids: Sequence names (defaults to seq_0000, seq_0001, ...)
        jobs: Worker threads across sequences

    Returns:
        MetricReport with per-sequence and global means
    """
    if len(pred_masks) != len(gt_masks):
        raise ArgumentError(f"{len(pred_masks)} predicted sequences for {len(gt_masks)} ground-truth sequences")
    if len(gt_masks) == 0:
        raise ArgumentError("nothing to evaluate")
    ids = list(ids) if ids is not None else [f"seq_{i:04d}" for i in range(len(gt_masks))]
    if len(ids) != len(gt_masks):
        raise ArgumentError(f"{len(ids)} ids for {len(gt_masks)} sequences")

    args = list(zip(ids, pred_masks, gt_masks))
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            scores = list(pool.map(lambda a: score_sequence(*a), args))
    else:
        scores = [score_sequence(*a) for a in args]
    report = MetricReport(scores)
    logger.debug("Evaluated %d sequences: %s", len(scores), report.summary_line())
    return report
