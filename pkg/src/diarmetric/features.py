"""Feature-matrix ingestion: FMAT binary files, fixed-length segmentation and
JSON corpus manifests.

A feature matrix is a ``T x d`` float32 numpy array holding one frame per row.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .errors import FormatError, TruncationError, ValidationError

FMAT_MAGIC = b"FMAT"
FMAT_VERSION = 1
_HEADER = struct.Struct("<4sBII")

# 2 s of frames at a 10 ms hop (25 ms window, 15 ms overlap).
DEFAULT_FRAMES_PER_SEGMENT = 200
DEFAULT_DIM = 60

_OVERLAP_TOL = 1e-9


def as_feature_matrix(data, name: str = "matrix") -> np.ndarray:
    """Validate ``data`` and return it as a C-contiguous float32 ``T x d`` array."""
    m = np.ascontiguousarray(data, dtype=np.float32)
    if m.ndim != 2:
        raise ValidationError(f"{name}: expected a 2-D matrix, got shape {m.shape}")
    if m.shape[0] < 1 or m.shape[1] < 1:
        raise ValidationError(f"{name}: empty matrix of shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValidationError(f"{name}: contains non-finite values")
    return m


def encode_feature_matrix(m) -> bytes:
    m = as_feature_matrix(m)
    t, d = m.shape
    return _HEADER.pack(FMAT_MAGIC, FMAT_VERSION, t, d) + m.astype("<f4").tobytes()


def decode_feature_matrix(buf: bytes, offset: int = 0, exact: bool = True) -> Tuple[np.ndarray, int]:
    """Decode one FMAT block starting at ``offset``.

    Returns the matrix and the offset just past the block.  With ``exact``
    the block must end the buffer.
    """
    if len(buf) - offset < _HEADER.size:
        raise TruncationError(f"header truncated: {len(buf) - offset} bytes")
    magic, version, t, d = _HEADER.unpack_from(buf, offset)
    if magic != FMAT_MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != FMAT_VERSION:
        raise FormatError(f"unsupported FMAT version {version}")
    start = offset + _HEADER.size
    end = start + 4 * t * d
    if len(buf) < end or (exact and len(buf) != end):
        raise TruncationError(
            f"declared {t}x{d} needs {4 * t * d} payload bytes, found {len(buf) - start}"
        )
    m = np.frombuffer(buf, dtype="<f4", count=t * d, offset=start).reshape(t, d)
    return as_feature_matrix(m.astype(np.float32)), end


def read_feature_file(path) -> np.ndarray:
    with open(path, "rb") as fh:
        buf = fh.read()
    try:
        m, _ = decode_feature_matrix(buf)
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from None
    return m


def write_feature_file(m, path) -> None:
    data = encode_feature_matrix(m)
    with open(path, "wb") as fh:
        fh.write(data)


def segment_sequence(full, frames_per_segment: int = DEFAULT_FRAMES_PER_SEGMENT) -> List[np.ndarray]:
    """Cut ``full`` into consecutive non-overlapping chunks of equal length.

    Trailing frames that do not fill a whole chunk are dropped.
    """
    if frames_per_segment <= 0:
        raise ValueError(f"frames_per_segment must be positive, got {frames_per_segment}")
    full = np.asarray(full)
    n = full.shape[0] // frames_per_segment
    return [full[i * frames_per_segment:(i + 1) * frames_per_segment] for i in range(n)]


@dataclass(frozen=True)
class SegmentRecord:
    conversation_id: str
    speaker: Optional[str]
    onset: float
    duration: float
    features: np.ndarray = field(repr=False, compare=False)

    @property
    def end(self) -> float:
        return self.onset + self.duration


@dataclass
class Corpus:
    """Labelled segments grouped by conversation, sharing one feature geometry."""

    conversations: Dict[str, List[SegmentRecord]]
    frames_per_segment: int
    dim: int
    tags: Dict[str, Dict[str, str]] = field(default_factory=dict)

    def __post_init__(self):
        for conv_id in list(self.conversations):
            segs = sorted(self.conversations[conv_id], key=lambda s: s.onset)
            self.conversations[conv_id] = segs
            check_segments(conv_id, segs, self.frames_per_segment, self.dim)
            self.tags.setdefault(conv_id, {})

    @property
    def geometry(self) -> Tuple[int, int]:
        return self.frames_per_segment, self.dim

    def segments(self) -> Iterator[SegmentRecord]:
        for conv_id in sorted(self.conversations):
            yield from self.conversations[conv_id]

    def speakers(self) -> List[str]:
        return sorted({s.speaker for s in self.segments() if s.speaker is not None})

    def by_speaker(self) -> Dict[str, List[SegmentRecord]]:
        out: Dict[str, List[SegmentRecord]] = {}
        for seg in self.segments():
            if seg.speaker is not None:
                out.setdefault(seg.speaker, []).append(seg)
        return out

    def is_labeled(self) -> bool:
        return all(s.speaker is not None for s in self.segments())

    def require_labeled(self) -> None:
        for seg in self.segments():
            if seg.speaker is None:
                raise ValidationError(
                    f"unlabelled segment at {seg.onset:.3f}s in {seg.conversation_id!r}"
                )

    def __len__(self) -> int:
        return sum(len(v) for v in self.conversations.values())


def check_segments(conv_id: str, segs: Sequence[SegmentRecord], frames: int, dim: int) -> None:
    prev_end = -np.inf
    for i, seg in enumerate(segs):
        where = f"conversation {conv_id!r} segment {i} (onset {seg.onset:.3f})"
        if seg.onset < 0 or not seg.duration > 0:
            raise ValidationError(f"{where}: onset must be >= 0 and duration > 0")
        if seg.features.shape != (frames, dim):
            raise ValidationError(
                f"{where}: features {seg.features.shape[0]}x{seg.features.shape[1]} "
                f"do not match corpus geometry {frames}x{dim}"
            )
        if seg.onset < prev_end - _OVERLAP_TOL:
            raise ValidationError(f"{where}: overlaps the previous segment")
        prev_end = seg.end


def parse_manifest(path) -> Corpus:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from None
    try:
        frames = int(doc["frames_per_segment"])
        dim = int(doc["dim"])
        entries = doc["conversations"]
    except (KeyError, TypeError) as exc:
        raise FormatError(f"{path}: missing manifest field {exc}") from None
    if frames < 1 or dim < 1:
        raise ValidationError(f"{path}: frames_per_segment and dim must be positive")

    base = path.parent
    conversations: Dict[str, List[SegmentRecord]] = {}
    tags: Dict[str, Dict[str, str]] = {}
    for entry in entries:
        conv_id = str(entry["id"])
        if conv_id in conversations:
            raise ValidationError(f"{path}: duplicate conversation id {conv_id!r}")
        tags[conv_id] = {str(k): str(v) for k, v in (entry.get("tags") or {}).items()}
        segs = []
        for seg in entry["segments"]:
            fpath = base / seg["file"]
            if not fpath.is_file():
                raise FileNotFoundError(f"{path}: feature file {fpath} not found")
            speaker = seg.get("speaker")
            segs.append(
                SegmentRecord(
                    conversation_id=conv_id,
                    speaker=None if speaker is None else str(speaker),
                    onset=float(seg["onset"]),
                    duration=float(seg["duration"]),
                    features=read_feature_file(fpath),
                )
            )
        conversations[conv_id] = segs
    return Corpus(conversations, frames, dim, tags)


def write_manifest(corpus: Corpus, out_dir, feature_subdir: str = "features") -> Path:
    """Write ``corpus`` as ``manifest.json`` plus one FMAT file per segment."""
    out_dir = Path(out_dir)
    (out_dir / feature_subdir).mkdir(parents=True, exist_ok=True)
    entries = []
    for conv_id in sorted(corpus.conversations):
        segs = []
        for i, seg in enumerate(corpus.conversations[conv_id]):
            rel = f"{feature_subdir}/{_safe_name(conv_id)}_{i:05d}.fmat"
            write_feature_file(seg.features, out_dir / rel)
            segs.append(
                {"speaker": seg.speaker, "onset": seg.onset, "duration": seg.duration, "file": rel}
            )
        entries.append({"id": conv_id, "tags": dict(corpus.tags.get(conv_id, {})), "segments": segs})
    doc = {"frames_per_segment": corpus.frames_per_segment, "dim": corpus.dim, "conversations": entries}
    manifest = out_dir / "manifest.json"
    manifest.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    return manifest


def _safe_name(s: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in s) or "conv"


def corpus_from_path(path) -> Corpus:
    """Accept either a manifest file or a directory containing ``manifest.json``."""
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    if not os.path.exists(path):
        raise FileNotFoundError(f"manifest {path} not found")
    return parse_manifest(path)
