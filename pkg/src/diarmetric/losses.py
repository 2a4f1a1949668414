"""Triplet and quadruplet hinge losses on squared embedding distances, and the
fixed / batch-adaptive margin rules.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from . import kernels

FIXED = "fixed"
ADAPTIVE = "adaptive"


@dataclass(frozen=True)
class MarginSpec:
    mode: str = FIXED
    alpha1: float = 0.8
    alpha2: float = 0.4
    floor1: float = 0.8
    floor2: float = 0.4

    def __post_init__(self):
        if self.mode not in (FIXED, ADAPTIVE):
            raise ValueError(f"margin mode must be 'fixed' or 'adaptive', got {self.mode!r}")
        if min(self.alpha1, self.alpha2, self.floor1, self.floor2) <= 0:
            raise ValueError("margins and floors must be positive")

    def resolve(
        self,
        dap: Sequence[float],
        dan: Sequence[float],
        dqn: Optional[Sequence[float]] = None,
    ) -> Tuple[float, float]:
        """Margins ``(alpha1, alpha2)`` for a batch with the given squared distances.

        Fixed mode ignores the distances.  Adaptive mode raises each margin to
        the gap between the negative and positive mean squared distances,
        never below its floor.
        """
        if self.mode == FIXED:
            return self.alpha1, self.alpha2
        a1 = adaptive_margin(dan, dap, self.floor1)
        a2 = adaptive_margin(dqn, dap, self.floor2) if dqn is not None and len(dqn) else self.floor2
        return a1, a2


@dataclass(frozen=True)
class LossOutput:
    value: float
    grads: Tuple[np.ndarray, ...]


def _pair(zi, zj) -> Tuple[np.ndarray, np.ndarray]:
    zi = np.asarray(zi, dtype=np.float64)
    zj = np.asarray(zj, dtype=np.float64)
    if zi.shape != zj.shape or zi.ndim != 1:
        raise ValueError(f"embedding dimension mismatch: {zi.shape} vs {zj.shape}")
    return zi, zj


def sq_dist(zi, zj) -> float:
    zi, zj = _pair(zi, zj)
    d = zi - zj
    return float(d @ d)


def triplet_loss(za, zp, zn, alpha: float) -> LossOutput:
    """``max(0, |za-zp|^2 - |za-zn|^2 + alpha)`` and its gradients (a, p, n)."""
    za, zp = _pair(za, zp)
    za, zn = _pair(za, zn)
    h = sq_dist(za, zp) - sq_dist(za, zn) + alpha
    if h <= 0:
        zero = np.zeros_like(za)
        return LossOutput(0.0, (zero, zero.copy(), zero.copy()))
    return LossOutput(h, (2.0 * (zn - zp), 2.0 * (zp - za), 2.0 * (za - zn)))


def quadruplet_loss(za, zp, zn, zq, alpha1: float, alpha2: float) -> LossOutput:
    """Triplet hinge plus ``max(0, |za-zp|^2 - |zq-zn|^2 + alpha2)``; grads (a, p, n, q)."""
    first = triplet_loss(za, zp, zn, alpha1)
    za, zq = _pair(za, zq)
    zp = np.asarray(zp, dtype=np.float64)
    zn = np.asarray(zn, dtype=np.float64)
    ga, gp, gn = (g.copy() for g in first.grads)
    gq = np.zeros_like(za)
    h2 = sq_dist(za, zp) - sq_dist(zq, zn) + alpha2
    value = first.value
    if h2 > 0:
        value += h2
        ga += 2.0 * (za - zp)
        gp += 2.0 * (zp - za)
        gn += 2.0 * (zq - zn)
        gq += 2.0 * (zn - zq)
    return LossOutput(value, (ga, gp, gn, gq))


def adaptive_margin(anchor_negative_sqdists, anchor_positive_sqdists, floor: float) -> float:
    an = np.asarray(anchor_negative_sqdists, dtype=np.float64)
    ap = np.asarray(anchor_positive_sqdists, dtype=np.float64)
    if an.size == 0 or ap.size == 0:
        raise ValueError("adaptive margin needs non-empty distance lists")
    if floor <= 0:
        raise ValueError("floor must be positive")
    return max(floor, float(an.mean() - ap.mean()))


def tuple_sq_dists(Z, tuples) -> Tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]:
    """Squared distances (a-p, a-n, q-n) for every tuple in a batch."""
    Z = np.asarray(Z, dtype=np.float64)
    t = np.asarray(tuples, dtype=np.int64).reshape(-1, np.shape(tuples)[1] if len(tuples) else 3)
    dap = np.sum((Z[t[:, 0]] - Z[t[:, 1]]) ** 2, axis=1)
    dan = np.sum((Z[t[:, 0]] - Z[t[:, 2]]) ** 2, axis=1)
    dqn = np.sum((Z[t[:, 3]] - Z[t[:, 2]]) ** 2, axis=1) if t.shape[1] == 4 else None
    return dap, dan, dqn


def batch_loss(Z, tuples, alpha1: float, alpha2: float = 0.4) -> Tuple[float, np.ndarray]:
    """Mean hinge loss over ``tuples`` and its gradient with respect to ``Z``."""
    values, G = kernels.tuple_hinge(Z, tuples, float(alpha1), float(alpha2))
    m = len(values)
    if m == 0:
        return 0.0, G
    return float(values.mean()), G / m
