"""Diarization error rate with reference-boundary collars, optional overlap
exclusion and an optimal one-to-one speaker mapping.

Intervals are half-open ``[onset, onset + duration)`` in seconds.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import EvaluationError, FormatError

Interval = Tuple[float, float]


@dataclass(frozen=True)
class Turn:
    onset: float
    duration: float
    speaker: str

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError(f"turn duration must be positive, got {self.duration}")

    @property
    def end(self) -> float:
        return self.onset + self.duration


@dataclass
class Annotation:
    file_id: str
    turns: List[Turn] = field(default_factory=list)

    def __post_init__(self):
        self.turns = sorted(self.turns, key=lambda t: (t.onset, t.end, t.speaker))

    def labels(self) -> List[str]:
        return sorted({t.speaker for t in self.turns})

    def has_overlap(self) -> bool:
        return any(
            b.onset < a.end and a.speaker != b.speaker
            for i, a in enumerate(self.turns)
            for b in self.turns[i + 1:]
        )

    def relabel(self, mapping: Dict[str, str]) -> "Annotation":
        return Annotation(
            self.file_id, [Turn(t.onset, t.duration, mapping.get(t.speaker, t.speaker)) for t in self.turns]
        )


@dataclass(frozen=True)
class DerBreakdown:
    missed: float = 0.0
    false_alarm: float = 0.0
    confusion: float = 0.0
    total: float = 0.0

    @property
    def der(self) -> float:
        if self.total <= 0:
            raise EvaluationError("no scorable reference speech")
        return (self.missed + self.false_alarm + self.confusion) / self.total

    def __add__(self, other: "DerBreakdown") -> "DerBreakdown":
        return DerBreakdown(
            self.missed + other.missed,
            self.false_alarm + other.false_alarm,
            self.confusion + other.confusion,
            self.total + other.total,
        )

    def to_dict(self) -> dict:
        return {
            "missed": self.missed,
            "false_alarm": self.false_alarm,
            "confusion": self.confusion,
            "total": self.total,
            "der": self.der if self.total > 0 else None,
        }


# -- interval helpers --------------------------------------------------------

def _merge(intervals: Iterable[Interval]) -> List[Interval]:
    out: List[Interval] = []
    for s, e in sorted(i for i in intervals if i[1] > i[0]):
        if out and s <= out[-1][1]:
            out[-1] = (out[-1][0], max(out[-1][1], e))
        else:
            out.append((s, e))
    return out


def _subtract(keep: List[Interval], remove: List[Interval]) -> List[Interval]:
    out: List[Interval] = []
    remove = _merge(remove)
    for s, e in keep:
        cur = s
        for rs, re in remove:
            if re <= cur or rs >= e:
                continue
            if rs > cur:
                out.append((cur, rs))
            cur = max(cur, re)
            if cur >= e:
                break
        if cur < e:
            out.append((cur, e))
    return out


def _pieces(boundaries: Iterable[float], regions: List[Interval]) -> List[Interval]:
    """Elementary intervals of ``regions`` cut at every boundary."""
    cuts = sorted(set(boundaries))
    out = []
    for s, e in regions:
        inner = [c for c in cuts if s < c < e]
        edges = [s] + inner + [e]
        out.extend(zip(edges[:-1], edges[1:]))
    return out


def _active(ann: Annotation, s: float, e: float) -> set:
    mid = 0.5 * (s + e)
    return {t.speaker for t in ann.turns if t.onset <= mid < t.end}


def scoring_regions(ref: Annotation, collar: float = 0.25, skip_overlap: bool = True) -> List[Interval]:
    """Reference speech minus collars around every reference boundary, and
    minus multi-speaker regions when ``skip_overlap``.
    """
    if collar < 0:
        raise ValueError("collar must be non-negative")
    speech = _merge((t.onset, t.end) for t in ref.turns)
    remove: List[Interval] = []
    if collar > 0:
        for t in ref.turns:
            remove.append((t.onset - collar, t.onset + collar))
            remove.append((t.end - collar, t.end + collar))
    if skip_overlap:
        bounds = [b for t in ref.turns for b in (t.onset, t.end)]
        for s, e in _pieces(bounds, speech):
            if len(_active(ref, s, e)) >= 2:
                remove.append((s, e))
    return _subtract(speech, remove)


def _scored_pieces(ref: Annotation, hyp: Annotation, regions: List[Interval]):
    bounds = [b for a in (ref, hyp) for t in a.turns for b in (t.onset, t.end)]
    for s, e in _pieces(bounds, regions):
        yield e - s, _active(ref, s, e), _active(hyp, s, e)


def cooccurrence(ref: Annotation, hyp: Annotation, regions: List[Interval]):
    """``(ref_labels, hyp_labels, M)`` with ``M[i, j]`` the time both are active."""
    ref_labels, hyp_labels = ref.labels(), hyp.labels()
    ri = {l: i for i, l in enumerate(ref_labels)}
    hi = {l: j for j, l in enumerate(hyp_labels)}
    M = np.zeros((len(ref_labels), len(hyp_labels)))
    for dur, R, H in _scored_pieces(ref, hyp, regions):
        for r in R:
            for h in H:
                M[ri[r], hi[h]] += dur
    return ref_labels, hyp_labels, M


def matched_duration(M: np.ndarray, pairs: Iterable[Tuple[int, int]]) -> float:
    return math.fsum(M[i, j] for i, j in pairs)


def optimal_mapping(ref: Annotation, hyp: Annotation, regions: Optional[List[Interval]] = None) -> Dict[str, str]:
    """One-to-one hypothesis -> reference mapping maximising co-occurring time.

    Hypothesis labels matched with zero overlap are left unmapped.
    """
    if regions is None:
        regions = _merge((t.onset, t.end) for a in (ref, hyp) for t in a.turns)
    ref_labels, hyp_labels, M = cooccurrence(ref, hyp, regions)
    if M.size == 0:
        return {}
    rows, cols = linear_sum_assignment(M, maximize=True)
    return {hyp_labels[j]: ref_labels[i] for i, j in zip(rows, cols) if M[i, j] > 0}


def compute_der(ref: Annotation, hyp: Annotation, collar: float = 0.25, skip_overlap: bool = True) -> DerBreakdown:
    regions = scoring_regions(ref, collar, skip_overlap)
    mapping = optimal_mapping(ref, hyp, regions)
    missed = fa = conf = total = 0.0
    for dur, R, H in _scored_pieces(ref, hyp, regions):
        n_ref, n_hyp = len(R), len(H)
        correct = sum(1 for h in H if mapping.get(h) in R)
        total += n_ref * dur
        missed += max(0, n_ref - n_hyp) * dur
        fa += max(0, n_hyp - n_ref) * dur
        conf += (min(n_ref, n_hyp) - correct) * dur
    if total <= 0:
        raise EvaluationError(f"{ref.file_id}: no scorable reference speech")
    return DerBreakdown(missed, fa, conf, total)


def corpus_der(refs: Dict[str, Annotation], hyps: Dict[str, Annotation], collar: float = 0.25,
               skip_overlap: bool = True) -> DerBreakdown:
    """Time-weighted DER over files; a file missing from ``hyps`` is all missed."""
    acc = DerBreakdown()
    for fid in sorted(refs):
        hyp = hyps.get(fid, Annotation(fid))
        acc = acc + compute_der(refs[fid], hyp, collar, skip_overlap)
    if acc.total <= 0:
        raise EvaluationError("no scorable reference speech in any file")
    return acc


# -- RTTM --------------------------------------------------------------------

def format_rttm_line(file_id: str, turn: Turn) -> str:
    return (
        f"SPEAKER {file_id} 1 {turn.onset:.3f} {turn.duration:.3f} "
        f"<NA> <NA> {turn.speaker} <NA> <NA>"
    )


def write_rttm(annotations: Iterable[Annotation], path) -> None:
    lines = []
    for ann in annotations:
        lines.extend(format_rttm_line(ann.file_id, t) for t in ann.turns)
    Path(path).write_text("".join(l + "\n" for l in lines))


def parse_rttm_line(line: str) -> Tuple[str, Turn]:
    fields = line.split()
    if len(fields) != 10 or fields[0] != "SPEAKER":
        raise FormatError(f"malformed RTTM line: {line!r}")
    try:
        onset, dur = float(fields[3]), float(fields[4])
    except ValueError:
        raise FormatError(f"bad onset/duration in RTTM line: {line!r}") from None
    return fields[1], Turn(onset, dur, fields[7])


def read_rttm(path) -> Dict[str, Annotation]:
    turns: Dict[str, List[Turn]] = defaultdict(list)
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip() or line.startswith(("#", ";")):
            continue
        try:
            fid, turn = parse_rttm_line(line)
        except (FormatError, ValueError) as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from None
        turns[fid].append(turn)
    return {fid: Annotation(fid, ts) for fid, ts in turns.items()}


def merge_adjacent(ann: Annotation, gap: float = 1e-6) -> Annotation:
    """Join consecutive same-speaker turns that touch (within ``gap``)."""
    out: List[Turn] = []
    for t in ann.turns:
        if out and out[-1].speaker == t.speaker and t.onset - out[-1].end <= gap:
            prev = out[-1]
            out[-1] = Turn(prev.onset, max(prev.end, t.end) - prev.onset, prev.speaker)
        else:
            out.append(t)
    return Annotation(ann.file_id, out)
