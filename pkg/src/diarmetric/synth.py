"""Seeded synthetic corpora with controllable speaker separation.

Every speaker has an archetype mean vector and a lower-triangular temporal
colouring map; a segment's frames are the mean plus coloured unit-variance
Gaussian noise.  Optionally each segment also carries a random "channel"
offset confined to a low-dimensional nuisance subspace; that subspace depends
only on ``world_seed``, so corpora generated with different seeds (e.g. train
and unseen-speaker eval sets) share it and a learned metric can suppress it.
Conversations interleave the segments of a few speakers in consecutive
fixed-length slots.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Dict, List

import numpy as np

from .errors import CapacityError
from .features import Corpus, SegmentRecord


@dataclass(frozen=True)
class SynthSpec:
    n_speakers: int = 8
    segments_per_speaker: int = 20
    frames_per_segment: int = 50
    dim: int = 12
    separation: float = 6.0
    seed: int = 0
    speakers_per_conversation: int = 2
    segment_duration: float = 2.0
    colored: bool = True
    speaker_prefix: str = "spk"
    conversation_prefix: str = "conv"
    nuisance_dims: int = 0
    nuisance_scale: float = 0.0
    world_seed: int = 0

    def __post_init__(self):
        for name in ("n_speakers", "segments_per_speaker", "frames_per_segment", "dim",
                     "speakers_per_conversation"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.separation < 0:
            raise ValueError("separation must be >= 0")
        if not self.segment_duration > 0:
            raise ValueError("segment_duration must be positive")
        if not 0 <= self.nuisance_dims <= self.dim or self.nuisance_scale < 0:
            raise ValueError("need 0 <= nuisance_dims <= dim and nuisance_scale >= 0")

    def to_dict(self) -> dict:
        return asdict(self)


def archetype_means(n: int, dim: int, separation: float, rng: np.random.Generator) -> np.ndarray:
    """``n`` mean vectors whose pairwise distances are ``separation``.

    Exact when ``n <= dim`` (scaled orthonormal frame in a random rotation);
    otherwise random Gaussian means with that expected pairwise distance.
    """
    if n <= dim:
        Q, _ = np.linalg.qr(rng.normal(size=(dim, dim)))
        return separation / np.sqrt(2.0) * Q[:, :n].T
    return rng.normal(scale=separation / np.sqrt(2.0 * dim), size=(n, dim))


def coloring_map(T: int, rng: np.random.Generator) -> np.ndarray:
    """Random lower-triangular ``T x T`` map with unit-norm rows (keeps unit variance)."""
    L = np.tril(rng.normal(size=(T, T)))
    # emphasise the recent past so neighbouring frames are correlated
    L *= np.tril(np.exp(-(np.arange(T)[:, None] - np.arange(T)[None, :]) / 3.0))
    L /= np.linalg.norm(L, axis=1, keepdims=True)
    return L


def nuisance_basis(dim: int, n: int, world_seed: int) -> np.ndarray:
    """Orthonormal ``dim x n`` basis of the shared nuisance subspace."""
    rng = np.random.default_rng([world_seed, 0x5EED])
    Q, _ = np.linalg.qr(rng.normal(size=(dim, dim)))
    return Q[:, :n]


def generate_corpus(spec: SynthSpec) -> Corpus:
    rng = np.random.default_rng(spec.seed)
    T, d = spec.frames_per_segment, spec.dim
    basis = nuisance_basis(d, spec.nuisance_dims, spec.world_seed) if spec.nuisance_dims else None
    means = archetype_means(spec.n_speakers, d, spec.separation, rng)
    colors = [coloring_map(T, rng) if spec.colored else None for _ in range(spec.n_speakers)]
    names = [f"{spec.speaker_prefix}{s:03d}" for s in range(spec.n_speakers)]

    order = rng.permutation(spec.n_speakers)
    groups = [order[i:i + spec.speakers_per_conversation]
              for i in range(0, spec.n_speakers, spec.speakers_per_conversation)]
    conversations: Dict[str, List[SegmentRecord]] = {}
    for ci, group in enumerate(groups):
        conv_id = f"{spec.conversation_prefix}{ci:03d}"
        slots = np.repeat(np.sort(group), spec.segments_per_speaker)
        slots = slots[rng.permutation(slots.size)]
        segs = []
        for j, s in enumerate(slots):
            noise = rng.normal(size=(T, d))
            if colors[s] is not None:
                noise = colors[s] @ noise
            if basis is not None:
                noise = noise + basis @ rng.normal(scale=spec.nuisance_scale, size=spec.nuisance_dims)
            feats = (means[s] + noise).astype(np.float32)
            segs.append(SegmentRecord(conv_id, names[s], j * spec.segment_duration,
                                      spec.segment_duration, feats))
        conversations[conv_id] = segs
    tags = {c: {"source": "synth", "n_speakers": str(len(g))} for c, g in
            zip(conversations, groups)}
    return Corpus(conversations, T, d, tags)


def concatenate_conversations(corpus: Corpus, group_size: int, rng: np.random.Generator) -> Corpus:
    """Join random groups of ``group_size`` conversations end to end.

    Onsets are re-based so each source follows the previous one.  Speaker
    labels that collide across sources within a group are prefixed with their
    source conversation id.  When the conversation count is not a multiple of
    ``group_size`` the last group is smaller.
    """
    if group_size < 1:
        raise ValueError("group_size must be >= 1")
    ids = sorted(corpus.conversations)
    if len(ids) < group_size:
        raise CapacityError(f"need {group_size} conversations, corpus has {len(ids)}")
    ids = [ids[i] for i in rng.permutation(len(ids))]
    conversations: Dict[str, List[SegmentRecord]] = {}
    tags: Dict[str, Dict[str, str]] = {}
    for gi in range(0, len(ids), group_size):
        group = ids[gi:gi + group_size]
        new_id = "+".join(group)
        owners: Dict[str, set] = {}
        for cid in group:
            for seg in corpus.conversations[cid]:
                owners.setdefault(seg.speaker, set()).add(cid)
        segs: List[SegmentRecord] = []
        offset = 0.0
        for cid in group:
            src = corpus.conversations[cid]
            start = src[0].onset if src else 0.0
            for seg in src:
                spk = seg.speaker
                if spk is not None and len(owners[spk]) > 1:
                    spk = f"{cid}/{spk}"
                segs.append(SegmentRecord(new_id, spk, offset + seg.onset - start,
                                          seg.duration, seg.features))
            if src:
                offset += max(s.end for s in src) - start
        conversations[new_id] = segs
        merged: Dict[str, set] = {}
        for cid in group:
            for k, v in corpus.tags.get(cid, {}).items():
                merged.setdefault(k, set()).add(v)
        tags[new_id] = {k: "+".join(sorted(v)) for k, v in merged.items()}
        if len(group) > 1:
            tags[new_id]["n_speakers"] = str(len(owners))
    return Corpus(conversations, corpus.frames_per_segment, corpus.dim, tags)
