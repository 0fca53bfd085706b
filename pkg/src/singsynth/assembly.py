"""Frame-level feature assembly.

Phoneme-level score features are expanded to frame level by repeating
each phoneme's row across its duration and attaching a within-phoneme
position ramp. The same expansion serves training (durations derived
from aligned intervals) and inference (durations sampled from the
duration model); LF0 is an explicit argument for the same reason, so
extracted and predicted tracks flow through identical code.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import (
    IntervalEntry,
    PhonemeVocabulary,
    Utterance,
    STYLE_IDS,
    pitch_to_midi,
)
from .errors import ValidationError


@dataclass
class PhonemeFeatures:
    """Duration-model inputs, one row per phoneme."""

    phoneme_id: np.ndarray  # (N,) int64
    slur: np.ndarray  # (N,) int64, 0 or 1
    note_dur: np.ndarray  # (N,) float32 seconds

    def __len__(self) -> int:
        return self.phoneme_id.shape[0]

    def matrix(self) -> np.ndarray:
        """Stack as float32 columns [phoneme_id, slur, note_dur]."""
        return np.stack(
            [
                self.phoneme_id.astype(np.float32),
                self.slur.astype(np.float32),
                self.note_dur.astype(np.float32),
            ],
            axis=1,
        )


@dataclass
class FrameFeatures:
    """Frame-expanded score features shared by the LF0 and acoustic models."""

    phoneme_id: np.ndarray  # (T,) int64
    pitch_id: np.ndarray  # (T,) int64, MIDI number or 0 for REST
    slur: np.ndarray  # (T,) int64
    frame_pos: np.ndarray  # (T,) float32 in [0, 1]

    def __len__(self) -> int:
        return self.phoneme_id.shape[0]


def compute_frame_pos(n_frames: int) -> np.ndarray:
    """Within-phoneme position ramp: i / (N - 1), or [0] for N = 1."""
    if n_frames <= 0:
        raise ValidationError(f"frame position needs at least one frame, got {n_frames}")
    if n_frames == 1:
        return np.zeros(1, dtype=np.float32)
    return (np.arange(n_frames) / (n_frames - 1)).astype(np.float32)


def expand_to_frames(
    phoneme_id: np.ndarray,
    pitch_id: np.ndarray,
    slur: np.ndarray,
    durations: np.ndarray,
) -> FrameFeatures:
    """Repeat phoneme-level rows across their frame counts.

    durations are integer frame counts, all >= 1.
    """
    phoneme_id = np.asarray(phoneme_id, dtype=np.int64)
    pitch_id = np.asarray(pitch_id, dtype=np.int64)
    slur = np.asarray(slur, dtype=np.int64)
    durations = np.asarray(durations)
    if not (phoneme_id.shape == pitch_id.shape == slur.shape == durations.shape):
        raise ValidationError("phoneme-level feature arrays must share one length")
    if phoneme_id.size == 0:
        raise ValidationError("cannot expand an empty phoneme sequence")
    if not np.issubdtype(durations.dtype, np.integer):
        raise ValidationError("durations must be integer frame counts")
    if np.any(durations < 1):
        raise ValidationError("every phoneme needs at least one frame")
    durations = durations.astype(np.int64)
    pos = np.concatenate([compute_frame_pos(int(d)) for d in durations])
    return FrameFeatures(
        phoneme_id=np.repeat(phoneme_id, durations),
        pitch_id=np.repeat(pitch_id, durations),
        slur=np.repeat(slur, durations),
        frame_pos=pos,
    )


def lf0_model_matrix(frames: FrameFeatures) -> np.ndarray:
    """Stack LF0-model inputs as float32 columns.

    Columns: phoneme_id, pitch_id, slur, frame_pos.
    """
    return np.stack(
        [
            frames.phoneme_id.astype(np.float32),
            frames.pitch_id.astype(np.float32),
            frames.slur.astype(np.float32),
            frames.frame_pos.astype(np.float32),
        ],
        axis=1,
    )


def acoustic_model_matrix(
    frames: FrameFeatures, speaker_id: int, style_id: int, lf0: np.ndarray
) -> np.ndarray:
    """Stack acoustic-model inputs as float32 columns.

    Columns: phoneme_id, frame_pos, speaker_id, style_id, lf0. The LF0
    column is the explicit source the caller chose (extracted during
    training, predicted or reference at synthesis).
    """
    t = len(frames)
    lf0 = np.asarray(lf0, dtype=np.float32)
    if lf0.shape != (t,):
        raise ValidationError(
            f"LF0 length {lf0.shape} does not match {t} expanded frames"
        )
    return np.stack(
        [
            frames.phoneme_id.astype(np.float32),
            frames.frame_pos.astype(np.float32),
            np.full(t, speaker_id, dtype=np.float32),
            np.full(t, style_id, dtype=np.float32),
            lf0,
        ],
        axis=1,
    )


def intervals_to_durations(
    intervals: list[IntervalEntry], frame_period: float
) -> np.ndarray:
    """Convert aligned intervals to integer frame counts.

    The total count is round(total_length / frame_period); per-interval
    counts are assigned by largest-remainder rounding so they always sum
    to the total, with ties broken toward earlier intervals. Every
    interval gets at least one frame; an interval shorter than half a
    frame period cannot honestly claim one and is an error.
    """
    if not intervals:
        raise ValidationError("no intervals to convert")
    if frame_period <= 0:
        raise ValidationError(f"frame period must be positive, got {frame_period}")
    lengths = np.array([iv.duration for iv in intervals], dtype=np.float64)
    if np.any(lengths < 0.5 * frame_period):
        short = int(np.argmin(lengths))
        raise ValidationError(
            f"interval {short} ({intervals[short].phoneme!r}) lasts "
            f"{lengths[short]:.6f}s, shorter than half a frame period"
        )
    total = int(round(lengths.sum() / frame_period))
    raw = lengths / frame_period
    base = np.floor(raw).astype(np.int64)
    remainder = raw - base
    leftover = total - int(base.sum())
    if leftover > 0:
        # ties broken by earlier index: stable sort on negated remainder
        order = np.argsort(-remainder, kind="stable")
        base[order[:leftover]] += 1
    elif leftover < 0:
        order = np.argsort(remainder, kind="stable")
        take = 0
        for idx in order:
            if take == -leftover:
                break
            if base[idx] > 1:
                base[idx] -= 1
                take += 1
        if take != -leftover:
            raise ValidationError("cannot allocate at least one frame per interval")
    while np.any(base < 1):
        idx = int(np.argmin(base))
        donor = int(np.argmax(base))
        if base[donor] <= 1:
            raise ValidationError("cannot allocate at least one frame per interval")
        base[idx] += 1
        base[donor] -= 1
    assert int(base.sum()) == total
    return base


def featurize_utterance(
    utt: Utterance, vocab: PhonemeVocabulary, frame_period: float
) -> tuple[PhonemeFeatures, np.ndarray, FrameFeatures]:
    """Phoneme features, interval-derived durations, and their expansion."""
    phoneme_id = np.array([vocab.id(e.phoneme) for e in utt.entries], dtype=np.int64)
    pitch_id = np.array([pitch_to_midi(e.pitch) for e in utt.entries], dtype=np.int64)
    slur = np.array([int(e.slur) for e in utt.entries], dtype=np.int64)
    note_dur = np.array([e.note_dur for e in utt.entries], dtype=np.float32)
    durations = intervals_to_durations(utt.intervals, frame_period)
    frames = expand_to_frames(phoneme_id, pitch_id, slur, durations)
    return PhonemeFeatures(phoneme_id, slur, note_dur), durations, frames


def style_id(style: str) -> int:
    try:
        return STYLE_IDS[style]
    except KeyError:
        raise ValidationError(f"unknown style {style!r}")
