"""
Tensors, layers and the segmentation model
"""
