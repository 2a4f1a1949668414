"""P x K mini-batches and negative selection (random, semi-hard, distance-weighted)."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import List, Optional, Sequence

import numpy as np

from . import kernels
from .errors import CapacityError
from .features import Corpus

RANDOM = "random"
SEMIHARD = "semihard"
DISTANCE_WEIGHTED = "dw"
STRATEGIES = (RANDOM, SEMIHARD, DISTANCE_WEIGHTED)

TRIPLET = "triplet"
QUADRUPLET = "quadruplet"


@dataclass(frozen=True)
class SamplingStrategy:
    kind: str = RANDOM
    d_min: float = 0.1
    # weight by inverse hypersphere pair density instead of plain inverse distance
    density_weighting: bool = False

    def __post_init__(self):
        if self.kind not in STRATEGIES:
            raise ValueError(f"unknown sampling strategy {self.kind!r}; choose from {STRATEGIES}")
        if not self.d_min > 0:
            raise ValueError("d_min must be positive")


@dataclass(frozen=True)
class PkBatch:
    """``P`` speakers x ``K`` segments, item ``i`` has label ``labels[i]``.

    ``segments`` holds the corpus records in item order; ``embeddings`` is
    filled in by the caller once the current model has embedded them.
    """

    P: int
    K: int
    labels: np.ndarray
    segments: tuple
    embeddings: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.labels)

    def with_embeddings(self, Z) -> "PkBatch":
        Z = np.asarray(Z, dtype=np.float64)
        if Z.shape[0] != len(self.labels):
            raise ValueError("one embedding per batch item required")
        return replace(self, embeddings=Z)

    def features(self) -> np.ndarray:
        return np.stack([s.features for s in self.segments]).astype(np.float64)

    def sq_dists(self) -> np.ndarray:
        if self.embeddings is None:
            raise ValueError("batch has no embeddings yet")
        return kernels.pairwise_sq_dists(self.embeddings)


def make_pk_batch(corpus: Corpus, P: int, K: int, rng: np.random.Generator) -> PkBatch:
    if P < 1 or K < 1:
        raise ValueError("P and K must be positive")
    by_spk = corpus.by_speaker()
    eligible = [s for s in sorted(by_spk) if len(by_spk[s]) >= K]
    if len(eligible) < P:
        raise CapacityError(
            f"need {P} speakers with >= {K} labelled segments, corpus has {len(eligible)}"
        )
    chosen = rng.choice(len(eligible), size=P, replace=False)
    labels: List[str] = []
    segs = []
    for ci in chosen:
        spk = eligible[ci]
        pool = by_spk[spk]
        for si in rng.choice(len(pool), size=K, replace=False):
            labels.append(spk)
            segs.append(pool[si])
    return PkBatch(P, K, np.array(labels), tuple(segs))


def batch_from_labels(labels: Sequence, embeddings=None) -> PkBatch:
    """Ad-hoc batch from a label list (P and K inferred; K is the largest class size)."""
    labels = np.asarray(labels)
    uniq, counts = np.unique(labels, return_counts=True)
    Z = None if embeddings is None else np.asarray(embeddings, dtype=np.float64)
    return PkBatch(len(uniq), int(counts.max()), labels, (), Z)


def _negatives(labels: np.ndarray, anchor: int, exclude=()) -> np.ndarray:
    mask = labels != labels[anchor]
    for lab in exclude:
        mask &= labels != lab
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        raise CapacityError(f"no eligible negative for item {anchor}")
    return idx


def random_negative(batch: PkBatch, anchor: int, rng: np.random.Generator) -> int:
    cands = _negatives(batch.labels, anchor)
    return int(cands[rng.integers(cands.size)])


def _semi_hard_pick(cands: np.ndarray, d: np.ndarray, dap: float, alpha: float, rng) -> int:
    semi = (d >= dap) & (d <= dap + alpha)
    if semi.any():
        pool = cands[semi]
        return int(pool[rng.integers(pool.size)])
    beyond = d > dap + alpha
    if beyond.any():
        # easiest hard negative: smallest distance past the margin
        return int(cands[beyond][np.argmin(d[beyond])])
    return int(cands[rng.integers(cands.size)])


def semi_hard_negative(
    batch: PkBatch,
    anchor: int,
    positive: int,
    alpha: float,
    rng: np.random.Generator,
    sq_dists: Optional[np.ndarray] = None,
) -> int:
    """Uniform pick among negatives with ``D_ap^2 <= D_an^2 <= D_ap^2 + alpha``.

    Falls back to the closest negative beyond the margin, then to a uniform
    random negative.
    """
    if batch.labels[anchor] != batch.labels[positive]:
        raise ValueError("anchor and positive must share a label")
    D = batch.sq_dists() if sq_dists is None else sq_dists
    cands = _negatives(batch.labels, anchor)
    return _semi_hard_pick(cands, D[anchor, cands], D[anchor, positive], alpha, rng)


def dw_probs(anchor_negative_dists, d_min: float = 0.1) -> np.ndarray:
    """Selection probabilities proportional to ``1 / max(dist, d_min)``."""
    d = np.asarray(anchor_negative_dists, dtype=np.float64)
    if d.size == 0:
        raise ValueError("dw_probs needs at least one distance")
    if np.any(d < 0):
        raise ValueError("distances must be non-negative")
    w = 1.0 / np.maximum(d, d_min)
    return w / w.sum()


def dw_density_probs(anchor_negative_dists, dim: int, d_min: float = 0.1) -> np.ndarray:
    """Probabilities inversely proportional to the pair-distance density on the
    unit hypersphere in ``dim`` dimensions,
    ``q(d) ~ d^(dim-2) (1 - d^2/4)^((dim-3)/2)``.
    """
    d = np.clip(np.asarray(anchor_negative_dists, dtype=np.float64), d_min, 2.0 - 1e-6)
    if d.size == 0:
        raise ValueError("dw_density_probs needs at least one distance")
    log_q = (dim - 2.0) * np.log(d) + 0.5 * (dim - 3.0) * np.log1p(-0.25 * d * d)
    log_w = -log_q
    w = np.exp(log_w - log_w.max())
    return w / w.sum()


def _dw_pick(cands, sqd, strategy: SamplingStrategy, dim: int, rng) -> int:
    dist = np.sqrt(np.maximum(sqd, 0.0))
    if strategy.density_weighting:
        probs = dw_density_probs(dist, dim, strategy.d_min)
    else:
        probs = dw_probs(dist, strategy.d_min)
    return int(cands[rng.choice(cands.size, p=probs)])


def distance_weighted_negative(
    batch: PkBatch,
    anchor: int,
    rng: np.random.Generator,
    strategy: SamplingStrategy = SamplingStrategy(DISTANCE_WEIGHTED),
    sq_dists: Optional[np.ndarray] = None,
) -> int:
    D = batch.sq_dists() if sq_dists is None else sq_dists
    cands = _negatives(batch.labels, anchor)
    return _dw_pick(cands, D[anchor, cands], strategy, batch.embeddings.shape[1], rng)


def build_tuples(
    batch: PkBatch,
    loss_kind: str,
    strategy: SamplingStrategy,
    margin: float,
    rng: np.random.Generator,
    margin2: Optional[float] = None,
) -> np.ndarray:
    """Index tuples for every ordered anchor-positive pair in the batch.

    Returns an ``(m, 3)`` array of (a, p, n) for triplets or ``(m, 4)`` of
    (a, p, n, q) for quadruplets.  The fourth item comes from a class other
    than those of a and n and is chosen by the same strategy, measured from n
    (semi-hard uses ``margin2``).
    """
    if loss_kind not in (TRIPLET, QUADRUPLET):
        raise ValueError(f"loss kind must be 'triplet' or 'quadruplet', got {loss_kind!r}")
    labels = batch.labels
    n_classes = len(np.unique(labels))
    if n_classes < 2:
        raise CapacityError("a batch needs at least 2 speakers")
    quad = loss_kind == QUADRUPLET
    if quad and n_classes < 3:
        raise CapacityError("quadruplets need at least 3 speakers per batch")
    if margin2 is None:
        margin2 = margin
    need_dists = strategy.kind != RANDOM
    D = batch.sq_dists() if need_dists else None
    dim = batch.embeddings.shape[1] if need_dists else 0

    def pick(cands, ref, dap, alpha):
        if strategy.kind == RANDOM:
            return int(cands[rng.integers(cands.size)])
        d = D[ref, cands]
        if strategy.kind == SEMIHARD:
            return _semi_hard_pick(cands, d, dap, alpha, rng)
        return _dw_pick(cands, d, strategy, dim, rng)

    out = []
    for a in range(len(labels)):
        same = np.flatnonzero(labels == labels[a])
        negs = _negatives(labels, a)
        for p in same:
            if p == a:
                continue
            dap = D[a, p] if need_dists else 0.0
            n = pick(negs, a, dap, margin)
            if quad:
                qc = _negatives(labels, a, exclude=(labels[n],))
                q = pick(qc, n, dap, margin2)
                out.append((a, int(p), n, q))
            else:
                out.append((a, int(p), n))
    width = 4 if quad else 3
    return np.array(out, dtype=np.int64).reshape(-1, width)


def check_tuples(labels, tuples) -> None:
    """Raise ``AssertionError`` if any tuple breaks the label constraints."""
    labels = np.asarray(labels)
    for t in np.asarray(tuples):
        a, p, n = t[:3]
        assert a != p and labels[a] == labels[p], f"bad anchor/positive in {t}"
        assert labels[n] != labels[a], f"negative shares the anchor label in {t}"
        if len(t) == 4:
            assert labels[t[3]] not in (labels[a], labels[n]), f"bad fourth item in {t}"
