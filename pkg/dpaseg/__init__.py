"""
Dual prototype attention for two-stream video object segmentation
"""

__version__ = "1.0.0"
