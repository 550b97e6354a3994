"""
Prototype generation and prototype-to-pixel self-correlation

A feature map X (C x HW) is turned into C soft regions, each region
aggregates the pixel features it covers into one prototype, and every
prototype is compared with every pixel by cosine similarity. Both attention
blocks build on these three steps.
"""

from dataclasses import dataclass
from enum import Enum

from ..errors import DimensionError
from . import functional as F
from .tensor import Tensor


class RegionAxis(Enum):
    """Axis the soft-region softmax normalises over"""
    SPATIAL = "spatial"   # each channel is a spatial attention map
    CHANNEL = "channel"   # each pixel distributes over channels


@dataclass
class PrototypeSet:
    """Feature-size x prototype-count matrix of aggregated features"""
    protos: Tensor

    @property
    def feature_size(self) -> int:
        return self.protos.shape[0]

    @property
    def count(self) -> int:
        return self.protos.shape[1]


@dataclass
class CorrelationMap:
    """Prototype-count x HW cosine similarities"""
    corr: Tensor

    @property
    def shape(self):
        return self.corr.shape


def _check_matrix(x: Tensor, what: str) -> None:
    if x.ndim != 2:
        raise DimensionError(f"{what}: expected a C x HW matrix, got shape {x.shape}")


def soft_regions(x: Tensor, axis: RegionAxis = RegionAxis.SPATIAL) -> Tensor:
    _check_matrix(x, "soft_regions")
    return F.softmax(x, axis=1 if axis is RegionAxis.SPATIAL else 0)


def aggregate(x: Tensor, s: Tensor) -> PrototypeSet:
    """P = X S^T; with spatially normalised S every column is a convex mix of pixels"""
    _check_matrix(x, "aggregate")
    if x.shape != s.shape:
        raise DimensionError(f"aggregate: features {x.shape} and regions {s.shape} differ")
    return PrototypeSet(F.matmul(x, F.transpose(s)))


def self_correlate(protos: PrototypeSet, x: Tensor) -> CorrelationMap:
    _check_matrix(x, "self_correlate")
    if protos.feature_size != x.shape[0]:
        raise DimensionError(
            f"self_correlate: prototypes {protos.protos.shape} and features {x.shape} disagree on feature size"
        )
    p_hat = F.l2_normalize(protos.protos, axis=0)
    x_hat = F.l2_normalize(x, axis=0)
    return CorrelationMap(F.matmul(F.transpose(p_hat), x_hat))


def generate_prototypes(
    x: Tensor,
    use_prototypes: bool = True,
    axis: RegionAxis = RegionAxis.SPATIAL,
) -> PrototypeSet:
    """
    Soft regions followed by aggregation.

    With use_prototypes off the pixel features themselves stand in for the
    prototypes, so the set is C x HW instead of C x C.
    """
    _check_matrix(x, "generate_prototypes")
    if not use_prototypes:
        return PrototypeSet(x)
    return aggregate(x, soft_regions(x, axis))


def correlation_features(
    x: Tensor,
    use_prototypes: bool = True,
    axis: RegionAxis = RegionAxis.SPATIAL,
) -> Tensor:
    """
    C' x HW input for the key/value embeddings: the self-correlation map, or
    X itself when prototypes are bypassed (C' = C in both cases).
    """
    if not use_prototypes:
        _check_matrix(x, "correlation_features")
        return x
    return self_correlate(generate_prototypes(x, True, axis), x).corr
