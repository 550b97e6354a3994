"""
Inter-frame attention: reference sampling, the per-video memory bank, and
the temporal read that propagates reference context into a query frame
"""

import hashlib
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Union

import numpy as np

from ..errors import ArgumentError, ContractError, DimensionError
from . import functional as F
from .checkpoint import load_records, save_records
from .layers import Conv2d, Module, uniform_init
from .prototype import PrototypeSet, RegionAxis, generate_prototypes
from .tensor import Parameter, Tensor

logger = logging.getLogger(__name__)


def sample_reference_indices(video_len: int, n_refs: int) -> List[int]:
    """
    Evenly spaced reference frames: floor(i * (L - 1) / (N - 1)) for i < N.

    A single reference is the first frame.
    """
    if video_len < 1 or n_refs < 1:
        raise ArgumentError(f"need L >= 1 and N >= 1, got L={video_len}, N={n_refs}")
    if n_refs > video_len:
        raise ArgumentError(f"cannot sample {n_refs} reference frames from a {video_len}-frame video")
    if n_refs == 1:
        return [0]
    return [i * (video_len - 1) // (n_refs - 1) for i in range(n_refs)]


@dataclass(frozen=True)
class MemoryBank:
    """Keys and values of N reference frames, D x N*D' each"""
    keys: Tensor
    values: Tensor
    frame_indices: tuple

    @property
    def n_frames(self) -> int:
        return len(self.frame_indices)

    @property
    def is_empty(self) -> bool:
        return self.n_frames == 0 or self.keys.ndim != 2 or self.keys.shape[1] == 0

    def detach(self) -> "MemoryBank":
        return MemoryBank(self.keys.detach(), self.values.detach(), self.frame_indices)


class IfaBlock(Module):
    """Query refinement from a memory bank of reference-frame prototypes"""

    def __init__(
        self,
        channels: int,
        rng: np.random.Generator,
        use_prototypes: bool = True,
        n_refs: int = 4,
        region_axis: RegionAxis = RegionAxis.SPATIAL,
    ):
        if channels < 1:
            raise ArgumentError(f"IfaBlock needs a positive channel count, got {channels}")
        if n_refs < 1:
            raise ArgumentError(f"n_refs must be >= 1, got {n_refs}")
        self.channels = channels
        self.use_prototypes = use_prototypes
        self.n_refs = n_refs
        self.region_axis = region_axis
        self.q_embed = Parameter(uniform_init(rng, (channels, channels), channels))
        self.k_embed = Parameter(uniform_init(rng, (channels, channels), channels))
        self.v_embed = Parameter(uniform_init(rng, (channels, channels), channels))
        self.fuse_conv = Conv2d(2 * channels, channels, 3, rng)

    def _flatten(self, x: Tensor) -> Tensor:
        if x.ndim != 3 or x.shape[0] != self.channels:
            raise DimensionError(f"IfaBlock expects a {self.channels} x H x W map, got {x.shape}")
        c, h, w = x.shape
        return F.reshape(x, (c, h * w))

    def prototypes(self, x: Tensor) -> PrototypeSet:
        return generate_prototypes(self._flatten(x), self.use_prototypes, self.region_axis)

    def forward(self, y: Tensor, bank: MemoryBank) -> Tensor:
        return ifa_forward(y, bank, self)


def build_memory(
    ref_features: Sequence[Tensor],
    block: IfaBlock,
    frame_indices: Optional[Sequence[int]] = None,
) -> MemoryBank:
    """Embed every reference frame separately and stack along the prototype axis"""
    if len(ref_features) == 0:
        raise ContractError("build_memory: no reference frames given")
    first = ref_features[0].shape
    for feat in ref_features[1:]:
        if feat.shape != first:
            raise DimensionError(f"build_memory: reference maps {first} and {feat.shape} differ")
    if frame_indices is None:
        frame_indices = range(len(ref_features))
    frame_indices = tuple(int(i) for i in frame_indices)
    if len(frame_indices) != len(ref_features):
        raise ArgumentError(f"build_memory: {len(frame_indices)} indices for {len(ref_features)} frames")

    keys, values = [], []
    for feat in ref_features:
        protos = block.prototypes(feat).protos
        keys.append(F.matmul(block.k_embed, protos))
        values.append(F.matmul(block.v_embed, protos))
    return MemoryBank(F.concat(keys, axis=1), F.concat(values, axis=1), frame_indices)


def temporal_read(query_protos: PrototypeSet, bank: MemoryBank, block: IfaBlock) -> Tensor:
    """R = (softmax(Q^T K) V^T)^T; every column of R is a convex mix of bank values"""
    if bank is None or bank.is_empty:
        raise ContractError("temporal_read: the memory bank is empty")
    if query_protos.feature_size != bank.keys.shape[0]:
        raise DimensionError(
            f"temporal_read: query prototypes {query_protos.protos.shape} and bank keys "
            f"{bank.keys.shape} disagree on feature size"
        )
    q = F.matmul(block.q_embed, query_protos.protos)
    phi = F.matmul(F.transpose(q), bank.keys)
    attn = F.softmax(phi, axis=1)
    return F.transpose(F.matmul(attn, F.transpose(bank.values)))


def temporal_context(y: Tensor, bank: MemoryBank, block: IfaBlock) -> Tensor:
    """Context map of a D x H x W query: cosine of read against query pixels, D' x HW"""
    flat = block._flatten(y)
    query = generate_prototypes(flat, block.use_prototypes, block.region_axis)
    read = temporal_read(query, bank, block)
    if not block.use_prototypes:
        # pixel-level bank: the read is already D x HW
        return read
    return F.matmul(F.transpose(F.l2_normalize(read, axis=0)), F.l2_normalize(flat, axis=0))


def ifa_forward(y: Tensor, bank: MemoryBank, block: IfaBlock) -> Tensor:
    """Refine a D x H x W query map with context read from the bank"""
    context = temporal_context(y, bank, block)
    _, h, w = y.shape
    stacked = F.concat([y, F.reshape(context, (context.shape[0], h, w))], axis=0)
    return F.relu(block.fuse_conv(stacked))


def bank_cache_key(video_id: str, n_refs: int, checkpoint_hash: str) -> str:
    return hashlib.sha256(f"{video_id}|{n_refs}|{checkpoint_hash}".encode("utf-8")).hexdigest()


def save_bank(path: Union[str, Path], banks: Mapping[str, MemoryBank]) -> Path:
    """Persist per-stream banks (detached) as one tensor record file"""
    records: Dict[str, np.ndarray] = {}
    for stream, bank in banks.items():
        records[f"{stream}.keys"] = bank.keys.data
        records[f"{stream}.values"] = bank.values.data
        records[f"{stream}.frames"] = np.asarray(bank.frame_indices, dtype=np.float64)
    path = save_records(path, records)
    logger.debug("Memory bank cached: %s", path)
    return path


def load_bank(path: Union[str, Path]) -> Dict[str, MemoryBank]:
    records = load_records(path)
    streams = sorted({name.split(".", 1)[0] for name in records})
    return {
        stream: MemoryBank(
            Tensor(records[f"{stream}.keys"]),
            Tensor(records[f"{stream}.values"]),
            tuple(int(i) for i in records[f"{stream}.frames"]),
        )
        for stream in streams
    }
