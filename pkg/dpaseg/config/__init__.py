"""
Configuration and profiles
"""

from .profiles import ModelProfile, get_ablation_profiles

__all__ = ["ModelProfile", "get_ablation_profiles"]
