"""Embed -> cluster -> annotate, and scoring against corpus speaker labels."""

from __future__ import annotations

from typing import Dict, Optional, Sequence

import numpy as np

from .clustering import xmeans
from .der import Annotation, DerBreakdown, Turn, corpus_der, merge_adjacent
from .embedder import EmbedderModel, forward_batch
from .features import Corpus, SegmentRecord

DEFAULT_K_MAX = 10


def embed_segments(model: EmbedderModel, segments: Sequence[SegmentRecord], chunk: int = 512) -> np.ndarray:
    out = []
    for i in range(0, len(segments), chunk):
        X = np.stack([s.features for s in segments[i:i + chunk]]).astype(np.float64)
        out.append(forward_batch(model, X)[0])
    if not out:
        return np.zeros((0, model.config.embed_dim))
    return np.concatenate(out)


def reference_annotation(conv_id: str, segments: Sequence[SegmentRecord]) -> Annotation:
    turns = [Turn(s.onset, s.duration, s.speaker) for s in segments if s.speaker is not None]
    return merge_adjacent(Annotation(conv_id, turns))


def reference_annotations(corpus: Corpus) -> Dict[str, Annotation]:
    return {cid: reference_annotation(cid, segs) for cid, segs in corpus.conversations.items()}


# Embedding clusters are elongated, so splits are judged along the principal axis.
SPLIT_TEST = "projected"
MIN_CHILD = 8


def cluster_labels(Z: np.ndarray, seed: int = 0, k_max: Optional[int] = None,
                   split_test: str = SPLIT_TEST, min_child: int = MIN_CHILD) -> np.ndarray:
    n = len(Z)
    if n < 2:
        return np.zeros(n, dtype=np.int64)
    k_max = min(n, k_max or DEFAULT_K_MAX)
    return xmeans(Z, 2, max(2, k_max), seed, split_test=split_test, min_child=min_child).labels


def diarize_conversation(model: EmbedderModel, conv_id: str, segments: Sequence[SegmentRecord],
                         seed: int = 0, k_max: Optional[int] = None) -> Annotation:
    """One hypothesis turn per segment, labelled by its cluster."""
    labels = cluster_labels(embed_segments(model, segments), seed, k_max)
    return Annotation(conv_id, [Turn(s.onset, s.duration, f"C{l}") for s, l in zip(segments, labels)])


def diarize_corpus(model: EmbedderModel, corpus: Corpus, seed: int = 0,
                   k_max: Optional[int] = None) -> Dict[str, Annotation]:
    return {
        cid: diarize_conversation(model, cid, segs, seed, k_max)
        for cid, segs in sorted(corpus.conversations.items())
    }


def evaluate(model: EmbedderModel, corpus: Corpus, seed: int = 0, collar: float = 0.25,
             skip_overlap: bool = True, k_max: Optional[int] = None) -> DerBreakdown:
    """Corpus-level (time-weighted) DER of diarizing every conversation."""
    hyps = diarize_corpus(model, corpus, seed, k_max)
    return corpus_der(reference_annotations(corpus), hyps, collar, skip_overlap)
