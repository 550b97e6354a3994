"""
Ablation grid runner and cost benchmark
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..config.profiles import ModelProfile, get_ablation_profiles
from ..core.network import DpaModel
from ..core.tensor import no_grad
from ..core.training import TrainConfig, infer_dataset, train
from ..errors import ArgumentError
from .dataset_io import VideoSample
from .metrics import MetricReport, evaluate
from .reporting import ResultTable

logger = logging.getLogger(__name__)

ABLATION_COLUMNS = [
    "row", "ima", "ifa", "N", "seeds", "params", "J", "F", "G", "J_ref", "F_ref", "G_ref",
]


@dataclass
class AblationCell:
    """Seed-averaged scores of one grid row"""
    profile: ModelProfile
    params: int
    reports: List[MetricReport] = field(default_factory=list)

    @property
    def j(self) -> float:
        return float(np.mean([r.j_mean for r in self.reports]))

    @property
    def f(self) -> float:
        return float(np.mean([r.f_mean for r in self.reports]))

    @property
    def g(self) -> float:
        return (self.j + self.f) / 2.0

    def record(self) -> Dict:
        p = self.profile
        return {
            "row": p.name,
            "ima": p.ima_label,
            "ifa": p.ifa_label,
            "N": p.n_refs if p.use_ifa else "-",
            "seeds": len(self.reports),
            "params": self.params,
            "J": self.j,
            "F": self.f,
            "G": self.g,
            "J_ref": p.reference_j,
            "F_ref": p.reference_f,
            "G_ref": p.reference_g,
        }


@dataclass
class AblationResult:
    cells: List[AblationCell]

    def by_row(self) -> Dict[str, AblationCell]:
        return {cell.profile.name: cell for cell in self.cells}

    def to_table(self) -> ResultTable:
        return ResultTable.from_records(
            "Component ablation (reference columns: published scores, not reproduced)",
            [cell.record() for cell in self.cells],
            columns=ABLATION_COLUMNS,
        )


def _run_cell(
    profile: ModelProfile,
    seed: int,
    train_set: Sequence[VideoSample],
    test_set: Sequence[VideoSample],
    resolution: int,
    widths: Tuple[int, ...],
    train_config: TrainConfig,
) -> Tuple[int, MetricReport]:
    model = DpaModel(profile.create_model_config(resolution=resolution, widths=widths, seed=seed))
    train(model, train_set, replace(train_config, seed=seed, n_refs=profile.n_refs))
    shortest = min(v.length for v in test_set)
    masks = infer_dataset(model, test_set, n_refs=min(profile.n_refs, shortest))
    report = evaluate([masks[v.id] for v in test_set], [v.masks for v in test_set], ids=[v.id for v in test_set])
    logger.info("row %s seed %d: %s", profile.name, seed, report.summary_line())
    return model.parameter_count(), report


def ablate(
    train_set: Sequence[VideoSample],
    test_set: Sequence[VideoSample],
    rows: Optional[Sequence[str]] = None,
    seeds: Sequence[int] = (0, 1, 2),
    resolution: int = 64,
    widths: Tuple[int, ...] = (16, 32, 64, 96, 128),
    train_config: Optional[TrainConfig] = None,
    jobs: int = 1,
) -> AblationResult:
    """
    Train and evaluate every requested grid row once per seed.

    Args:
        train_set: Training videos
        test_set: Evaluation videos
        rows: Profile names (all eleven rows by default)
        seeds: Seeds averaged per row; the seed drives init and snippet sampling
        resolution: Frame size of both datasets
        widths: Encoder channel widths
        train_config: Optimisation settings shared by all cells
        jobs: Cells trained concurrently

    Returns:
        AblationResult with one seed-averaged cell per row
    """
    profiles = get_ablation_profiles()
    rows = list(rows) if rows else list(profiles)
    unknown = [r for r in rows if r.upper() not in profiles]
    if unknown:
        raise ArgumentError(f"unknown ablation rows: {unknown}")
    if not seeds:
        raise ArgumentError("ablation needs at least one seed")
    if not train_set or not test_set:
        raise ArgumentError("ablation needs nonempty train and test sets")
    train_config = train_config or TrainConfig()

    tasks = [(profiles[r.upper()], seed) for r in rows for seed in seeds]

    def run(task):
        profile, seed = task
        return _run_cell(profile, seed, train_set, test_set, resolution, tuple(widths), train_config)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(run, tasks))
    else:
        outcomes = [run(t) for t in tasks]

    cells: Dict[str, AblationCell] = {}
    for (profile, _), (params, report) in zip(tasks, outcomes):
        cell = cells.setdefault(profile.name, AblationCell(profile, params))
        cell.reports.append(report)
    return AblationResult([cells[r.upper()] for r in dict.fromkeys(rows)])


@dataclass
class BenchResult:
    """Parameter count and per-frame timings of one model"""
    name: str
    params: int
    breakdown: Dict[str, int]
    frame_seconds: List[float]
    bank_seconds: List[float]

    @property
    def mean_frame(self) -> float:
        return float(np.mean(self.frame_seconds))

    @property
    def mean_with_bank(self) -> float:
        return float(np.mean(self.bank_seconds))

    @property
    def cv(self) -> float:
        """Coefficient of variation of the per-frame timings"""
        mean = self.mean_frame
        return float(np.std(self.frame_seconds) / mean) if mean > 0 else 0.0

    @property
    def fps(self) -> float:
        return 1.0 / self.mean_frame if self.mean_frame > 0 else float("inf")

    def record(self) -> Dict:
        return {
            "model": self.name,
            "params": self.params,
            **{f"params_{k}": v for k, v in self.breakdown.items()},
            "sec_per_frame": self.mean_frame,
            "sec_per_frame_with_bank": self.mean_with_bank,
            "fps": self.fps,
            "cv": self.cv,
        }


def bench(
    model: DpaModel,
    repeats: int = 50,
    warmup: int = 2,
    seed: int = 0,
    name: str = "model",
) -> BenchResult:
    """
    Time forward_frame with a prebuilt bank, and with the bank build included.

    The bank-inclusive timing builds the bank from the model's n_refs frames
    for every repeat, which is what a single-frame video would cost.
    """
    if repeats < 1:
        raise ArgumentError(f"repeats must be >= 1, got {repeats}")
    res = model.config.resolution
    n_refs = model.config.n_refs
    rng = np.random.default_rng(seed)
    frames = rng.random((n_refs, 3, res, res))
    flows = rng.random((n_refs, 3, res, res))
    refs = list(range(n_refs))

    frame_times, bank_times = [], []
    with no_grad():
        bank_a, bank_m = model.build_banks(frames, flows, refs)
        for _ in range(warmup):
            model.forward_frame(frames[0], flows[0], bank_a, bank_m)
        for _ in range(repeats):
            start = time.perf_counter()
            model.forward_frame(frames[0], flows[0], bank_a, bank_m)
            frame_times.append(time.perf_counter() - start)
        for _ in range(repeats):
            start = time.perf_counter()
            banks = model.build_banks(frames, flows, refs)
            model.forward_frame(frames[0], flows[0], *banks)
            bank_times.append(time.perf_counter() - start)

    result = BenchResult(name, model.parameter_count(), model.parameter_breakdown(), frame_times, bank_times)
    logger.info(
        "bench %s: %d params, %.4fs/frame (%.4fs with bank), cv %.3f",
        name, result.params, result.mean_frame, result.mean_with_bank, result.cv,
    )
    return result


def bench_table(results: Sequence[BenchResult]) -> ResultTable:
    return ResultTable.from_records("Cost analysis", [r.record() for r in results], float_format="{:.6f}")
