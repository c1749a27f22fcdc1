"""Compressed-domain tri-stream video features at desk scale.

Motion vectors, residuals and sparse anchor frames are extracted from a frame
sequence, fused by sigmoid gates, aligned to appearance change with a
contrastive objective, and injected into a token sequence out of place.
"""
__version__ = "0.1.0"

from .errors import FormatError, InputError  # noqa: E402
