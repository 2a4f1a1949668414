"""Metric-learning speaker diarization toolkit.

Triplet / quadruplet losses with fixed or batch-adaptive margins, random /
semi-hard / distance-weighted negative sampling, x-means clustering and DER
scoring, plus a seeded synthetic corpus for desk-scale experiments.
"""

__version__ = "0.1.0"

from .kernels import BACKEND as KERNEL_BACKEND  # noqa: E402

__all__ = ["KERNEL_BACKEND", "__version__"]
