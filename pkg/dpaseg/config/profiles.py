"""
Model profiles: the component ablation grid as named configurations
"""

from dataclasses import dataclass
from typing import Dict, Optional, Tuple

from ..core.ima import EmbeddingMode
from ..core.network import IfaStreams, ModelConfig
from ..core.prototype import RegionAxis
from ..errors import ArgumentError

DEFAULT_PROFILE = "IV"


@dataclass
class ModelProfile:
    """One row of the ablation grid"""

    name: str
    description: str
    use_ima: bool
    use_ifa: bool
    ima_prototypes: bool = True
    ifa_prototypes: bool = True
    n_refs: int = 4
    # published scores at 352x352 on real data, for context only
    reference_g: Optional[float] = None
    reference_j: Optional[float] = None
    reference_f: Optional[float] = None

    def create_model_config(
        self,
        resolution: int = 64,
        widths: Tuple[int, ...] = (16, 32, 64, 96, 128),
        seed: int = 0,
        ifa_streams: IfaStreams = IfaStreams.BOTH,
        embedding: EmbeddingMode = EmbeddingMode.HW_FC,
        region_axis: RegionAxis = RegionAxis.SPATIAL,
    ) -> ModelConfig:
        """Model configuration for this row at the given size"""
        config = ModelConfig(
            resolution=resolution,
            widths=tuple(widths),
            use_ima=self.use_ima,
            use_ifa=self.use_ifa,
            ima_prototypes=self.ima_prototypes,
            ifa_prototypes=self.ifa_prototypes,
            n_refs=self.n_refs,
            ifa_streams=ifa_streams,
            embedding=embedding,
            region_axis=region_axis,
            seed=seed,
        )
        config.validate()
        return config

    @property
    def ifa_label(self) -> str:
        if not self.use_ifa:
            return "off"
        return "w/ P" if self.ifa_prototypes else "w/o P"

    @property
    def ima_label(self) -> str:
        if not self.use_ima:
            return "off"
        return "w/ P" if self.ima_prototypes else "w/o P"


def get_ablation_profiles() -> Dict[str, ModelProfile]:
    """Rows I-XI: component toggles, reference-frame sweep, prototype bypass"""
    return {
        "I": ModelProfile("I", "Baseline: no IMA, no IFA", False, False,
                          reference_g=83.4, reference_j=83.2, reference_f=83.5),
        "II": ModelProfile("II", "IMA only", True, False,
                           reference_g=85.9, reference_j=85.4, reference_f=86.3),
        "III": ModelProfile("III", "IFA only", False, True,
                            reference_g=85.4, reference_j=85.0, reference_f=85.8),
        "IV": ModelProfile("IV", "IMA + IFA (default)", True, True,
                           reference_g=86.9, reference_j=86.3, reference_f=87.4),
        "V": ModelProfile("V", "IMA + IFA, N=1", True, True, n_refs=1,
                          reference_g=86.3, reference_j=85.8, reference_f=86.9),
        "VI": ModelProfile("VI", "IMA + IFA, N=2", True, True, n_refs=2,
                           reference_g=86.5, reference_j=86.0, reference_f=87.1),
        "VII": ModelProfile("VII", "IMA + IFA, N=3", True, True, n_refs=3,
                            reference_g=86.8, reference_j=86.2, reference_f=87.5),
        "VIII": ModelProfile("VIII", "IMA + IFA, N=5", True, True, n_refs=5,
                             reference_g=86.9, reference_j=86.3, reference_f=87.5),
        "IX": ModelProfile("IX", "IMA without prototypes", True, True, ima_prototypes=False,
                           reference_g=86.1, reference_j=85.5, reference_f=86.6),
        "X": ModelProfile("X", "IFA without prototypes", True, True, ifa_prototypes=False,
                          reference_g=86.3, reference_j=85.7, reference_f=87.1),
        "XI": ModelProfile("XI", "Neither block uses prototypes", True, True,
                           ima_prototypes=False, ifa_prototypes=False,
                           reference_g=85.3, reference_j=84.6, reference_f=86.0),
    }


# published parameter counts (millions) and per-frame seconds of rows I-IV
REFERENCE_COST = {
    "I": (39.5, 0.0164),
    "II": (41.5, 0.0183),
    "III": (40.5, 0.0322),
    "IV": (43.5, 0.0414),
}


def get_profile(name: str) -> ModelProfile:
    profiles = get_ablation_profiles()
    key = name.upper()
    if key not in profiles:
        raise ArgumentError(f"unknown profile {name!r}; choose one of {', '.join(profiles)}")
    return profiles[key]
