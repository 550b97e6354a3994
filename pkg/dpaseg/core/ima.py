"""
Inter-modality attention between the appearance and motion streams

Each stream's feature map is summarised by its prototype self-correlation,
embedded into keys and values, and the prototype-level correspondence between
the two streams' keys decides how values move across modalities. Each stream
then refines itself with what it received.
"""

import logging
from enum import Enum
from typing import Tuple

import numpy as np

from ..errors import ArgumentError, DimensionError
from . import functional as F
from .layers import Conv2d, Module, uniform_init
from .prototype import RegionAxis, correlation_features
from .tensor import Parameter, Tensor

logger = logging.getLogger(__name__)

BRANCHES = ("a", "m")
ROLES = ("k", "v")


class EmbeddingMode(Enum):
    """How the key/value embeddings act on a C' x HW correlation map"""
    HW_FC = "hw_fc"             # HW x HW map shared by all prototype rows
    CHANNEL_FC = "channel_fc"   # C' x C' map shared by all pixels


def correspondence(k_a: Tensor, k_m: Tensor) -> Tensor:
    """Prototype-to-prototype affinities K_A K_M^T"""
    if k_a.shape != k_m.shape:
        raise DimensionError(f"correspondence: keys {k_a.shape} and {k_m.shape} differ")
    return F.matmul(k_a, F.transpose(k_m))


def transfer(phi: Tensor, v_a: Tensor, v_m: Tensor) -> Tuple[Tensor, Tensor]:
    """
    Move values across modalities.

    The appearance branch reads motion values under row-softmax(phi); the
    motion branch reads appearance values under row-softmax(phi^T).
    """
    if v_a.shape != v_m.shape or phi.shape != (v_a.shape[0], v_a.shape[0]):
        raise DimensionError(
            f"transfer: affinity {phi.shape} does not fit values {v_a.shape} / {v_m.shape}"
        )
    t_a = F.matmul(F.softmax(phi, axis=1), v_m)
    t_m = F.matmul(F.softmax(F.transpose(phi), axis=1), v_a)
    return t_a, t_m


class ImaBlock(Module):
    """Mutual appearance/motion refinement at one encoder stage"""

    def __init__(
        self,
        channels: int,
        height: int,
        width: int,
        rng: np.random.Generator,
        use_prototypes: bool = True,
        embedding: EmbeddingMode = EmbeddingMode.HW_FC,
        region_axis: RegionAxis = RegionAxis.SPATIAL,
    ):
        if channels < 1 or height < 1 or width < 1:
            raise ArgumentError(f"ImaBlock needs positive sizes, got C={channels} H={height} W={width}")
        self.channels = channels
        self.height = height
        self.width = width
        self.use_prototypes = use_prototypes
        self.embedding = embedding
        self.region_axis = region_axis

        side = height * width if embedding is EmbeddingMode.HW_FC else channels
        self.sigma_k_a = Parameter(uniform_init(rng, (side, side), side))
        self.sigma_v_a = Parameter(uniform_init(rng, (side, side), side))
        self.sigma_k_m = Parameter(uniform_init(rng, (side, side), side))
        self.sigma_v_m = Parameter(uniform_init(rng, (side, side), side))
        # prototype count equals channel count, so the fused input is 2C
        self.fuse_conv_a = Conv2d(2 * channels, channels, 3, rng)
        self.fuse_conv_m = Conv2d(2 * channels, channels, 3, rng)

    @property
    def hw(self) -> int:
        return self.height * self.width

    def sigma(self, which: str, branch: str) -> Parameter:
        which, branch = which.lower(), branch.lower()
        if which not in ROLES or branch not in BRANCHES:
            raise ArgumentError(f"unknown embedding {which!r}/{branch!r}")
        return getattr(self, f"sigma_{which}_{branch}")

    def embed_kv(self, psi: Tensor, which: str, branch: str) -> Tensor:
        """Apply the key or value embedding of one branch to a C' x HW map"""
        if psi.ndim != 2 or psi.shape[1] != self.hw:
            raise DimensionError(
                f"embed_kv: map {psi.shape} does not match configured resolution "
                f"{self.height}x{self.width} (HW={self.hw})"
            )
        weight = self.sigma(which, branch)
        if self.embedding is EmbeddingMode.HW_FC:
            return F.matmul(psi, weight)
        return F.matmul(weight, psi)

    def _as_matrix(self, x: Tensor) -> Tensor:
        if x.ndim == 3:
            if x.shape != (self.channels, self.height, self.width):
                raise DimensionError(
                    f"ImaBlock expects {(self.channels, self.height, self.width)}, got {x.shape}"
                )
            return F.reshape(x, (self.channels, self.hw))
        if x.shape != (self.channels, self.hw):
            raise DimensionError(f"ImaBlock expects {(self.channels, self.hw)}, got {x.shape}")
        return x

    def _refine(self, x: Tensor, t: Tensor, conv: Conv2d) -> Tensor:
        shape = (self.channels, self.height, self.width)
        stacked = F.concat([F.reshape(x, shape), F.reshape(t, shape)], axis=0)
        return F.relu(conv(stacked))

    def forward(self, x_a: Tensor, x_m: Tensor) -> Tuple[Tensor, Tensor]:
        if x_a.shape != x_m.shape:
            raise DimensionError(f"ImaBlock: appearance {x_a.shape} and motion {x_m.shape} differ")
        flat_a, flat_m = self._as_matrix(x_a), self._as_matrix(x_m)
        logger.debug(
            "IMA %dx%dx%d embedding=%s prototypes=%s",
            self.channels, self.height, self.width, self.embedding.value, self.use_prototypes,
        )

        psi_a = correlation_features(flat_a, self.use_prototypes, self.region_axis)
        psi_m = correlation_features(flat_m, self.use_prototypes, self.region_axis)

        k_a = self.embed_kv(psi_a, "k", "a")
        v_a = self.embed_kv(psi_a, "v", "a")
        k_m = self.embed_kv(psi_m, "k", "m")
        v_m = self.embed_kv(psi_m, "v", "m")

        phi = correspondence(k_a, k_m)
        t_a, t_m = transfer(phi, v_a, v_m)

        out_a = self._refine(flat_a, t_a, self.fuse_conv_a)
        out_m = self._refine(flat_m, t_m, self.fuse_conv_m)
        if x_a.ndim == 2:
            return F.reshape(out_a, (self.channels, self.hw)), F.reshape(out_m, (self.channels, self.hw))
        return out_a, out_m


def ima_forward(block: ImaBlock, x_a: Tensor, x_m: Tensor) -> Tuple[Tensor, Tensor]:
    """Refine an appearance/motion pair; outputs keep the input shapes"""
    return block(x_a, x_m)
