"""
Two-stream encoder-decoder with inter-modality and inter-frame attention
"""

import logging
from dataclasses import asdict, dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from ..errors import ArgumentError, DatasetValidationError
from . import functional as F
from .checkpoint import load_checkpoint, save_checkpoint
from .ifa import IfaBlock, MemoryBank, build_memory
from .ima import EmbeddingMode, ImaBlock
from .layers import ASPP, Conv2d, ConvBlock, Module, UpBlock
from .prototype import RegionAxis
from .tensor import Tensor, as_tensor

logger = logging.getLogger(__name__)

N_BLOCKS = 5


class IfaStreams(Enum):
    """Which encoder streams read from a memory bank at block 5"""
    BOTH = "both"
    APPEARANCE = "appearance"


@dataclass
class ModelConfig:
    """Architecture switches and sizes of a DpaModel"""

    resolution: int = 64
    widths: Tuple[int, ...] = (16, 32, 64, 96, 128)
    use_ima: bool = True
    use_ifa: bool = True
    ima_prototypes: bool = True
    ifa_prototypes: bool = True
    n_refs: int = 4
    ifa_streams: IfaStreams = IfaStreams.BOTH
    embedding: EmbeddingMode = EmbeddingMode.HW_FC
    region_axis: RegionAxis = RegionAxis.SPATIAL
    seed: int = 0

    def validate(self) -> None:
        if self.resolution < 16 or self.resolution % 16 != 0:
            raise ArgumentError(f"resolution must be a positive multiple of 16, got {self.resolution}")
        if len(self.widths) != N_BLOCKS or any(w < 1 for w in self.widths):
            raise ArgumentError(f"widths must be {N_BLOCKS} positive channel counts, got {self.widths}")
        if self.n_refs < 1:
            raise ArgumentError(f"n_refs must be >= 1, got {self.n_refs}")

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["widths"] = list(self.widths)
        for key in ("ifa_streams", "embedding", "region_axis"):
            data[key] = data[key].value
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ModelConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = sorted(set(data) - known)
        if unknown:
            raise DatasetValidationError(f"unknown model config keys: {unknown}")
        values = dict(data)
        if "widths" in values:
            values["widths"] = tuple(int(w) for w in values["widths"])
        if "ifa_streams" in values:
            values["ifa_streams"] = IfaStreams(values["ifa_streams"])
        if "embedding" in values:
            values["embedding"] = EmbeddingMode(values["embedding"])
        if "region_axis" in values:
            values["region_axis"] = RegionAxis(values["region_axis"])
        config = cls(**values)
        config.validate()
        return config


class EncodedFrame(NamedTuple):
    """Encoder outputs of one frame: decoder skips and block-5 features"""
    skips: List[Tensor]
    feat_a: Tensor
    feat_m: Tensor


class DpaModel(Module):
    """
    Appearance and motion encoders of five conv blocks each. IMA refines the
    block-4 pair; at block 5 IMA and per-stream IFA run in parallel and are
    fused per stream, then the streams are summed and passed through ASPP and
    a skip-connected decoder.
    """

    def __init__(self, config: Optional[ModelConfig] = None):
        self.config = config or ModelConfig()
        self.config.validate()
        cfg = self.config
        rng = np.random.default_rng(cfg.seed)
        widths = cfg.widths

        self.encoder_a = self._encoder(rng)
        self.encoder_m = self._encoder(rng)

        if cfg.use_ima:
            side4 = cfg.resolution // 8
            side5 = cfg.resolution // 16
            common = dict(use_prototypes=cfg.ima_prototypes, embedding=cfg.embedding, region_axis=cfg.region_axis)
            self.ima4 = ImaBlock(widths[3], side4, side4, rng, **common)
            self.ima5 = ImaBlock(widths[4], side5, side5, rng, **common)

        if cfg.use_ifa:
            common = dict(use_prototypes=cfg.ifa_prototypes, n_refs=cfg.n_refs, region_axis=cfg.region_axis)
            self.ifa5_a = IfaBlock(widths[4], rng, **common)
            if cfg.ifa_streams is IfaStreams.BOTH:
                self.ifa5_m = IfaBlock(widths[4], rng, **common)

        if cfg.use_ima and cfg.use_ifa:
            self.fuse_a = Conv2d(2 * widths[4], widths[4], 1, rng)
            if cfg.ifa_streams is IfaStreams.BOTH:
                self.fuse_m = Conv2d(2 * widths[4], widths[4], 1, rng)

        self.aspp = ASPP(widths[4], widths[4], rng)
        self.decoder = [
            UpBlock(widths[k + 1], widths[k], widths[k], rng)
            for k in reversed(range(N_BLOCKS - 1))
        ]
        self.head = Conv2d(widths[0], 2, 1, rng)
        self.assign_names()

    def _encoder(self, rng: np.random.Generator) -> List[ConvBlock]:
        blocks, c_in = [], 3
        for width in self.config.widths:
            blocks.append(ConvBlock(c_in, width, rng))
            c_in = width
        return blocks

    @property
    def has_motion_ifa(self) -> bool:
        return self.config.use_ifa and self.config.ifa_streams is IfaStreams.BOTH

    def _check_input(self, rgb: Tensor, flow: Tensor) -> None:
        res = self.config.resolution
        if rgb.ndim != 3 or rgb.shape[0] != 3 or rgb.shape != flow.shape:
            raise ArgumentError(f"expected matching 3 x H x W frame and flow, got {rgb.shape} and {flow.shape}")
        _, h, w = rgb.shape
        if h % 16 or w % 16:
            raise ArgumentError(f"frame size {h}x{w} is not divisible by 16")
        if (h, w) != (res, res):
            raise ArgumentError(f"model is configured for {res}x{res} frames, got {h}x{w}")

    def encode_frame(self, rgb: Union[Tensor, np.ndarray], flow: Union[Tensor, np.ndarray]) -> EncodedFrame:
        """Run both encoders up to block 5, with IMA on the block-4 pair"""
        x_a, x_m = as_tensor(rgb), as_tensor(flow)
        self._check_input(x_a, x_m)
        skips: List[Tensor] = []
        for k in range(N_BLOCKS - 1):
            x_a = self.encoder_a[k](x_a)
            x_m = self.encoder_m[k](x_m)
            if k == 3 and self.config.use_ima:
                x_a, x_m = self.ima4(x_a, x_m)
            skips.append(x_a)
            x_a, x_m = F.avg_pool2x(x_a), F.avg_pool2x(x_m)
        x_a = self.encoder_a[N_BLOCKS - 1](x_a)
        x_m = self.encoder_m[N_BLOCKS - 1](x_m)
        return EncodedFrame(skips, x_a, x_m)

    def build_banks(
        self,
        frames: Sequence[Union[Tensor, np.ndarray]],
        flows: Sequence[Union[Tensor, np.ndarray]],
        frame_indices: Optional[Sequence[int]] = None,
    ) -> Tuple[Optional[MemoryBank], Optional[MemoryBank]]:
        """Per-stream memory banks from reference frames; (None, None) without IFA"""
        if not self.config.use_ifa:
            return None, None
        encoded = [self.encode_frame(rgb, flow) for rgb, flow in zip(frames, flows)]
        bank_a = build_memory([e.feat_a for e in encoded], self.ifa5_a, frame_indices)
        bank_m = None
        if self.has_motion_ifa:
            bank_m = build_memory([e.feat_m for e in encoded], self.ifa5_m, frame_indices)
        return bank_a, bank_m

    def _fuse_block5(
        self,
        feat_a: Tensor,
        feat_m: Tensor,
        bank_a: Optional[MemoryBank],
        bank_m: Optional[MemoryBank],
    ) -> Tensor:
        cfg = self.config
        ima_a, ima_m = self.ima5(feat_a, feat_m) if cfg.use_ima else (feat_a, feat_m)
        if not cfg.use_ifa:
            return ima_a + ima_m

        out_a = self.ifa5_a(feat_a, bank_a)
        if cfg.use_ima:
            out_a = F.relu(self.fuse_a(F.concat([ima_a, out_a], axis=0)))
        if self.has_motion_ifa:
            out_m = self.ifa5_m(feat_m, bank_m)
            if cfg.use_ima:
                out_m = F.relu(self.fuse_m(F.concat([ima_m, out_m], axis=0)))
        else:
            out_m = ima_m
        return out_a + out_m

    def decode(self, x: Tensor, skips: Sequence[Tensor]) -> Tensor:
        x = self.aspp(x)
        for block, skip in zip(self.decoder, reversed(skips)):
            x = block(x, skip)
        return self.head(x)

    def forward_frame(
        self,
        rgb: Union[Tensor, np.ndarray],
        flow: Union[Tensor, np.ndarray],
        bank_a: Optional[MemoryBank] = None,
        bank_m: Optional[MemoryBank] = None,
    ) -> Tensor:
        """2 x H x W logits for one frame"""
        encoded = self.encode_frame(rgb, flow)
        fused = self._fuse_block5(encoded.feat_a, encoded.feat_m, bank_a, bank_m)
        return self.decode(fused, encoded.skips)

    def forward(self, rgb, flow, bank_a=None, bank_m=None) -> Tensor:
        return self.forward_frame(rgb, flow, bank_a, bank_m)

    def forward_clip(
        self,
        frames: Sequence[Union[Tensor, np.ndarray]],
        flows: Sequence[Union[Tensor, np.ndarray]],
        frame_indices: Optional[Sequence[int]] = None,
    ) -> List[Tensor]:
        """
        Logits for every frame of a clip whose banks are built from the clip
        itself. Each frame is encoded once and reused for bank and query.
        """
        encoded = [self.encode_frame(rgb, flow) for rgb, flow in zip(frames, flows)]
        bank_a = bank_m = None
        if self.config.use_ifa:
            bank_a = build_memory([e.feat_a for e in encoded], self.ifa5_a, frame_indices)
            if self.has_motion_ifa:
                bank_m = build_memory([e.feat_m for e in encoded], self.ifa5_m, frame_indices)
        return [
            self.decode(self._fuse_block5(e.feat_a, e.feat_m, bank_a, bank_m), e.skips)
            for e in encoded
        ]

    def parameter_breakdown(self) -> Dict[str, int]:
        """Parameter counts per component, keyed encoder/ima/ifa/fusion/aspp/decoder"""
        groups = {
            "encoder": ("encoder_a", "encoder_m"),
            "ima": ("ima4", "ima5"),
            "ifa": ("ifa5_a", "ifa5_m"),
            "fusion": ("fuse_a", "fuse_m"),
            "aspp": ("aspp",),
            "decoder": ("decoder", "head"),
        }
        breakdown = {name: 0 for name in groups}
        for param_name, param in self.named_parameters():
            top = param_name.split(".", 1)[0]
            for group, members in groups.items():
                if top in members:
                    breakdown[group] += param.size
        return breakdown

    def copy_appearance_to_motion(self) -> None:
        """Initialise the motion encoder with the appearance encoder's weights"""
        for src, dst in zip(self.encoder_a, self.encoder_m):
            for (_, p_src), (_, p_dst) in zip(src.named_parameters(), dst.named_parameters()):
                p_dst.data = p_src.data.copy()

    def save(self, path: Union[str, Path], profile: str = "custom") -> Path:
        metadata = {"format": "dpaseg-checkpoint", "profile": profile, "model": self.config.to_dict()}
        return save_checkpoint(path, self.state_dict(), metadata)


def load_model(path: Union[str, Path]) -> Tuple[DpaModel, Dict[str, Any]]:
    """Rebuild a model from a checkpoint and its sidecar"""
    state, metadata = load_checkpoint(path)
    if "model" not in metadata:
        raise DatasetValidationError(f"checkpoint sidecar of {path} has no model config")
    model = DpaModel(ModelConfig.from_dict(metadata["model"]))
    model.load_state_dict(state)
    return model, metadata
