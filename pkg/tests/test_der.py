import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diarmetric.der import (
    Annotation,
    DerBreakdown,
    Turn,
    compute_der,
    cooccurrence,
    corpus_der,
    format_rttm_line,
    merge_adjacent,
    optimal_mapping,
    parse_rttm_line,
    read_rttm,
    scoring_regions,
    write_rttm,
)
from diarmetric.errors import EvaluationError, FormatError


def ann(*turns, fid="f"):
    return Annotation(fid, [Turn(s, e - s, spk) for s, e, spk in turns])


@st.composite
def annotations(draw, prefix="S", max_spk=4):
    n = draw(st.integers(1, 7))
    t, turns = 0.0, []
    for _ in range(n):
        t += draw(st.integers(0, 10)) / 10
        dur = draw(st.integers(5, 40)) / 10
        turns.append(Turn(t, dur, f"{prefix}{draw(st.integers(0, max_spk - 1))}"))
        t += dur
    return Annotation("f", turns)


class TestTurn:
    def test_positive_duration(self):
        with pytest.raises(ValueError):
            Turn(0, 0, "A")


class TestScoringRegions:
    def test_single_turn(self):
        assert scoring_regions(ann((0, 10, "A"))) == [(0.25, 9.75)]

    def test_interior_boundary(self):
        assert scoring_regions(ann((0, 5, "A"), (5, 10, "A"))) == [(0.25, 4.75), (5.25, 9.75)]

    def test_overlap_removed(self):
        assert scoring_regions(ann((0, 6, "A"), (4, 10, "B")), collar=0.25) == [(0.25, 3.75), (6.25, 9.75)]

    def test_overlap_kept_when_not_skipping(self):
        assert scoring_regions(ann((0, 6, "A"), (4, 10, "B")), collar=0, skip_overlap=False) == [(0, 10)]

    def test_negative_collar(self):
        with pytest.raises(ValueError):
            scoring_regions(ann((0, 1, "A")), collar=-0.1)

    @settings(max_examples=80, deadline=None)
    @given(annotations(), st.floats(0, 0.5))
    def test_collar_never_adds_time(self, ref, collar):
        length = lambda regs: sum(e - s for s, e in regs)  # noqa: E731
        assert length(scoring_regions(ref, 0.0)) >= length(scoring_regions(ref, collar)) - 1e-12

    @settings(max_examples=80, deadline=None)
    @given(annotations(), st.floats(0, 0.5), st.booleans())
    def test_disjoint_sorted(self, ref, collar, skip):
        regs = scoring_regions(ref, collar, skip)
        assert all(s < e for s, e in regs)
        assert all(a[1] <= b[0] for a, b in zip(regs, regs[1:]))


class TestMapping:
    def test_renaming_recovered(self):
        ref = ann((0, 3, "A"), (3, 5, "B"), (5, 9, "C"))
        hyp = ref.relabel({"A": "x", "B": "y", "C": "z"})
        assert optimal_mapping(ref, hyp) == {"x": "A", "y": "B", "z": "C"}

    def test_two_by_two(self):
        # co-occurrence [[3, 1], [1, 3]]
        ref = ann((0, 4, "A"), (4, 8, "B"))
        hyp = ann((0, 3, "x"), (3, 4, "y"), (4, 5, "x"), (5, 8, "y"))
        regions = scoring_regions(ref, 0, False)
        _, _, M = cooccurrence(ref, hyp, regions)
        np.testing.assert_allclose(M, [[3, 1], [1, 3]])
        mapping = optimal_mapping(ref, hyp, regions)
        assert mapping == {"x": "A", "y": "B"}

    def test_three_speaker_brute_force(self):
        ref = ann((0, 4, "A"), (4, 7, "B"), (7, 12, "C"))
        hyp = ann((0, 2, "p"), (2, 6, "q"), (6, 9, "r"), (9, 12, "p"))
        regions = scoring_regions(ref, 0, False)
        rl, hl, M = cooccurrence(ref, hyp, regions)
        best = max(math.fsum(M[i, perm[i]] for i in range(3)) for perm in itertools.permutations(range(3)))
        mapping = optimal_mapping(ref, hyp, regions)
        assert math.fsum(M[rl.index(r), hl.index(h)] for h, r in mapping.items()) == best

    def test_zero_overlap_left_unmapped(self):
        ref = ann((0, 4, "A"))
        hyp = ann((0, 4, "x"), (5, 6, "y"))
        assert optimal_mapping(ref, hyp, scoring_regions(ref, 0)) == {"x": "A"}

    def test_empty(self):
        assert optimal_mapping(Annotation("f"), Annotation("f")) == {}


class TestComputeDer:
    def test_identical(self):
        ref = ann((0, 4, "A"), (4, 9, "B"))
        assert compute_der(ref, ref).der == 0

    def test_permuted_labels(self):
        ref = ann((0, 4, "A"), (4, 9, "B"), (9, 12, "A"))
        assert compute_der(ref, ref.relabel({"A": "B", "B": "A"})).der == 0

    def test_hand_geometry(self):
        b = compute_der(ann((0, 5, "A"), (5, 10, "B")), ann((0, 6, "A"), (6, 10, "B")), collar=0)
        assert (b.missed, b.false_alarm, b.confusion, b.total) == (0, 0, 1, 10)
        assert abs(b.der - 0.1) <= 1e-9

    def test_hand_geometry_with_collar(self):
        # collar removes [4.75, 5.25]; confusion is the 0.75 s in [5.25, 6]
        b = compute_der(ann((0, 5, "A"), (5, 10, "B")), ann((0, 6, "A"), (6, 10, "B")))
        assert b.confusion == pytest.approx(0.75) and b.total == pytest.approx(9.0)

    def test_missed_and_false_alarm(self):
        ref = ann((0, 4, "A"), (4, 8, "B"))
        hyp = ann((0, 2, "x"), (8, 9, "y"))
        b = compute_der(ref, hyp, collar=0)
        assert b.missed == pytest.approx(6) and b.false_alarm == 0 and b.confusion == 0

    def test_no_scorable_speech(self):
        with pytest.raises(EvaluationError):
            compute_der(ann((0, 0.4, "A")), ann((0, 0.4, "A")))

    @settings(max_examples=100, deadline=None)
    @given(annotations(), annotations(prefix="H"))
    def test_properties(self, ref, hyp):
        try:
            base = compute_der(ref, hyp, collar=0.1)
        except EvaluationError:
            return
        assert min(base.missed, base.false_alarm, base.confusion) >= 0 and base.der >= 0
        assert compute_der(ref, ref, collar=0.1).der == 0
        labels = hyp.labels()
        renamed = hyp.relabel({l: f"z{i}" for i, l in enumerate(reversed(labels))})
        assert compute_der(ref, renamed, collar=0.1).der == pytest.approx(base.der, abs=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(annotations(max_spk=3))
    def test_swap_label_carriers(self, ref):
        # same geometry, labels renamed both ways: confusion is symmetric
        other = ref.relabel({"S0": "S1", "S1": "S0"})
        try:
            a, b = compute_der(ref, other, 0), compute_der(other, ref, 0)
        except EvaluationError:
            return
        assert a.der == pytest.approx(b.der, abs=1e-12)


class TestCorpus:
    def test_time_weighted(self):
        refs = {"a": ann((0, 10, "A"), fid="a"), "b": ann((0, 2, "A"), (2, 4, "B"), fid="b")}
        hyps = {"a": ann((0, 10, "x"), fid="a"), "b": ann((0, 4, "x"), fid="b")}
        b = corpus_der(refs, hyps, collar=0)
        assert b.der == pytest.approx(2 / 14)

    def test_missing_hypothesis_is_missed(self):
        refs = {"a": ann((0, 10, "A"), fid="a")}
        assert corpus_der(refs, {}, collar=0).der == 1

    def test_breakdown_zero_total(self):
        with pytest.raises(EvaluationError):
            DerBreakdown().der
        assert DerBreakdown().to_dict()["der"] is None


class TestRttm:
    def test_format(self):
        assert format_rttm_line("conv1", Turn(1.5, 2.0, "C0")) == (
            "SPEAKER conv1 1 1.500 2.000 <NA> <NA> C0 <NA> <NA>")

    def test_round_trip(self, tmp_path):
        anns = [ann((0, 2, "A"), (2, 4.5, "B"), fid="x"), ann((1, 3, "C"), fid="y")]
        write_rttm(anns, tmp_path / "o.rttm")
        back = read_rttm(tmp_path / "o.rttm")
        assert back["x"].turns == anns[0].turns and back["y"].turns == anns[1].turns

    @pytest.mark.parametrize("line", [
        "SPEAKER f 1 0.0 1.0 <NA> <NA> A <NA>",
        "LEXEME f 1 0.0 1.0 <NA> <NA> A <NA> <NA>",
        "SPEAKER f 1 zero 1.0 <NA> <NA> A <NA> <NA>",
    ])
    def test_malformed(self, line):
        with pytest.raises(FormatError):
            parse_rttm_line(line)

    def test_read_reports_line_number(self, tmp_path):
        (tmp_path / "r.rttm").write_text("SPEAKER f 1 0 1 <NA> <NA> A <NA> <NA>\nSPEAKER f 1 0 -1 <NA> <NA> A <NA> <NA>\n")
        with pytest.raises(FormatError, match=":2:"):
            read_rttm(tmp_path / "r.rttm")

    def test_merge_adjacent(self):
        merged = merge_adjacent(ann((0, 2, "A"), (2, 4, "A"), (4, 5, "B"), (6, 7, "B")))
        assert [(t.onset, t.end, t.speaker) for t in merged.turns] == [(0, 4, "A"), (4, 5, "B"), (6, 7, "B")]
