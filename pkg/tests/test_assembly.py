"""Frame expansion, relative positions and interval-to-frame rounding."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from singsynth.assembly import (
    acoustic_model_matrix,
    compute_frame_pos,
    expand_to_frames,
    featurize_utterance,
    intervals_to_durations,
    lf0_model_matrix,
)
from singsynth.corpus import IntervalEntry, ScoreEntry, Utterance, build_vocabulary
from singsynth.errors import ValidationError

PERIOD = 0.0125


def brute_force_rounding(durations_sec, period):
    """Independent oracle: exhaustive largest-remainder allocation.

    Total frames are fixed by the rounded total length; per-interval
    floors are topped up one frame at a time in remainder order, then
    zero-count intervals steal a frame from the current largest.
    """
    raw = np.asarray(durations_sec, dtype=np.float64) / period
    total = int(round(raw.sum()))
    counts = np.floor(raw).astype(int)
    remainders = raw - counts
    while counts.sum() < total:
        order = sorted(range(len(raw)), key=lambda i: (-remainders[i], i))
        for i in order:
            if counts.sum() == total:
                break
            counts[i] += 1
            remainders[i] = -1  # consumed
    while counts.sum() > total:
        order = sorted(range(len(raw)), key=lambda i: (remainders[i], i))
        for i in order:
            if counts.sum() == total:
                break
            if counts[i] > 1:
                counts[i] -= 1
                remainders[i] = 2.0
    while (counts == 0).any():
        i = int(np.argmax(counts == 0))
        counts[i] += 1
        counts[int(np.argmax(counts))] -= 1
    return counts


class TestFramePos:
    def test_single_frame_is_zero(self):
        np.testing.assert_array_equal(compute_frame_pos(1), [0.0])

    def test_endpoints_and_spacing(self):
        pos = compute_frame_pos(5)
        np.testing.assert_allclose(pos, [0.0, 0.25, 0.5, 0.75, 1.0])

    def test_nonpositive_rejected(self):
        with pytest.raises(ValidationError):
            compute_frame_pos(0)

    @given(st.integers(min_value=2, max_value=500))
    def test_range_and_monotone(self, n):
        pos = compute_frame_pos(n)
        assert pos[0] == 0.0 and pos[-1] == 1.0
        assert (np.diff(pos) > 0).all()


class TestExpansion:
    def test_repeats_rows_and_appends_position(self):
        frames = expand_to_frames(
            phoneme_id=np.array([5, 6]),
            pitch_id=np.array([60, 64]),
            slur=np.array([0, 1]),
            durations=np.array([2, 3]),
        )
        assert len(frames) == 5
        np.testing.assert_array_equal(frames.phoneme_id, [5, 5, 6, 6, 6])
        np.testing.assert_array_equal(frames.pitch_id, [60, 60, 64, 64, 64])
        np.testing.assert_array_equal(frames.slur, [0, 0, 1, 1, 1])
        np.testing.assert_allclose(frames.frame_pos[:2], [0.0, 1.0])
        np.testing.assert_allclose(frames.frame_pos[2:], [0.0, 0.5, 1.0])

    def test_single_frame_phoneme_gets_position_zero(self):
        frames = expand_to_frames(
            np.array([1, 2]), np.array([60, 62]), np.array([0, 0]), np.array([1, 2])
        )
        assert frames.frame_pos[0] == 0.0

    def test_zero_duration_rejected(self):
        with pytest.raises(ValidationError):
            expand_to_frames(
                np.array([1, 2]), np.array([60, 62]), np.array([0, 0]), np.array([3, 0])
            )

    def test_float_durations_rejected(self):
        with pytest.raises(ValidationError):
            expand_to_frames(
                np.array([1]), np.array([60]), np.array([0]), np.array([2.0])
            )

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValidationError):
            expand_to_frames(
                np.array([1, 2]), np.array([60]), np.array([0, 0]), np.array([3, 1])
            )

    @given(
        st.lists(st.integers(min_value=1, max_value=30), min_size=1, max_size=20)
    )
    @settings(max_examples=40, deadline=None)
    def test_each_phoneme_contributes_its_count(self, durations):
        n = len(durations)
        ids = np.arange(n)
        frames = expand_to_frames(
            ids, ids + 50, np.zeros(n, dtype=np.int64), np.array(durations)
        )
        assert len(frames) == sum(durations)
        np.testing.assert_array_equal(frames.phoneme_id, np.repeat(ids, durations))
        # positions restart at each phoneme boundary
        starts = np.concatenate([[0], np.cumsum(durations)[:-1]])
        assert (frames.frame_pos[starts] == 0.0).all()


class TestIntervalRounding:
    def test_frozen_case(self):
        # [0.30, 0.07, 0.63] s at 12.5 ms: raw [24, 5.6, 50.4] -> total 80,
        # floors sum 79, largest remainder .6 at index 1 -> [24, 6, 50]
        ivs = [
            IntervalEntry("a", 0.0, 0.30),
            IntervalEntry("b", 0.30, 0.37),
            IntervalEntry("c", 0.37, 1.0),
        ]
        counts = intervals_to_durations(ivs, PERIOD)
        np.testing.assert_array_equal(counts, [24, 6, 50])

    def test_total_is_rounded_span(self):
        ivs = [IntervalEntry("a", 0.0, 0.1301), IntervalEntry("b", 0.1301, 0.26)]
        counts = intervals_to_durations(ivs, PERIOD)
        assert counts.sum() == round(0.26 / PERIOD)

    def test_every_interval_gets_a_frame(self):
        ivs = [
            IntervalEntry("a", 0.0, 0.492),
            IntervalEntry("b", 0.492, 0.5),  # 8 ms, above half a period
            IntervalEntry("c", 0.5, 1.0),
        ]
        counts = intervals_to_durations(ivs, PERIOD)
        assert (counts >= 1).all()
        assert counts.sum() == 80

    def test_below_half_period_rejected(self):
        ivs = [IntervalEntry("a", 0.0, 0.004), IntervalEntry("b", 0.004, 0.5)]
        with pytest.raises(ValidationError):
            intervals_to_durations(ivs, PERIOD)

    @given(
        st.lists(
            st.floats(min_value=0.007, max_value=0.8, allow_nan=False),
            min_size=1,
            max_size=15,
        )
    )
    @settings(max_examples=60, deadline=None)
    def test_matches_brute_force_oracle(self, spans):
        starts = np.concatenate([[0.0], np.cumsum(spans)[:-1]])
        ivs = [
            IntervalEntry("p", float(s), float(s + d))
            for s, d in zip(starts, spans)
        ]
        total = round(sum(iv.duration for iv in ivs) / PERIOD)
        if total < len(ivs):
            # more intervals than frames: one-per-interval is impossible
            with pytest.raises(ValidationError):
                intervals_to_durations(ivs, PERIOD)
            return
        counts = intervals_to_durations(ivs, PERIOD)
        oracle = brute_force_rounding([iv.duration for iv in ivs], PERIOD)
        assert counts.sum() == oracle.sum()
        np.testing.assert_array_equal(counts, oracle)


class TestMatrices:
    def make_utterance(self):
        entries = [
            ScoreEntry("a", "C4", 0.25, False),
            ScoreEntry("i", "E4", 0.125, True),
        ]
        intervals = [IntervalEntry("a", 0.0, 0.25), IntervalEntry("i", 0.25, 0.375)]
        return Utterance("u0", "singing", "teacher", entries, intervals)

    def test_featurize_shapes(self):
        utt = self.make_utterance()
        vocab = build_vocabulary([self.make_utterance()])
        phon, durations, frames = featurize_utterance(utt, vocab, PERIOD)
        assert phon.matrix().shape == (2, 3)
        assert durations.sum() == 30
        assert frames.phoneme_id.shape[0] == 30

    def test_lf0_matrix_columns(self):
        utt = self.make_utterance()
        vocab = build_vocabulary([self.make_utterance()])
        _, _, frames = featurize_utterance(utt, vocab, PERIOD)
        m = lf0_model_matrix(frames)
        assert m.shape == (30, 4)
        # pitch ids live in column 1 and change at the note boundary
        assert m[0, 1] != m[-1, 1]

    def test_am_matrix_appends_speaker_style_lf0(self):
        utt = self.make_utterance()
        vocab = build_vocabulary([self.make_utterance()])
        _, _, frames = featurize_utterance(utt, vocab, PERIOD)
        lf0 = np.linspace(5.0, 5.5, 30).astype(np.float32)
        m = acoustic_model_matrix(frames, speaker_id=1, style_id=0, lf0=lf0)
        assert m.shape == (30, 5)
        np.testing.assert_allclose(m[:, 4], lf0, rtol=1e-6)

    def test_am_matrix_length_mismatch_rejected(self):
        utt = self.make_utterance()
        vocab = build_vocabulary([self.make_utterance()])
        _, _, frames = featurize_utterance(utt, vocab, PERIOD)
        with pytest.raises(ValidationError):
            acoustic_model_matrix(frames, 0, 0, np.zeros(29, dtype=np.float32))
