"""Liver CT segmentation pipeline: I/O codecs, preprocessing, cascaded
segmentation, evaluation metrics, 3D reconstruction, and a job service."""

from .types import LabelMask, Volume

__all__ = ["Volume", "LabelMask"]
__version__ = "0.1.0"
