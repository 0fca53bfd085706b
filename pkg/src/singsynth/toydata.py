"""Deterministic synthetic corpus for end-to-end runs and tests.

Singing items are harmonic tones that follow a random diatonic melody;
speaking items share the same eight-phoneme vocabulary but wander in
pitch like speech. Each phoneme owns a fixed harmonic amplitude profile
so the acoustic model has phoneme-dependent structure to learn, and
note boundaries carry short amplitude ramps so the within-phoneme
position input matters. All note and interval lengths are integer
multiples of the frame period, which makes interval files, frame
counts and mel lengths agree exactly, and everything derives from one
seeded generator, so the corpus is byte-identical across runs.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .config import PipelineConfig
from .corpus import (
    REST,
    ScoreEntry,
    IntervalEntry,
    midi_to_hz,
    write_intervals,
    write_manifest,
    write_score,
)
from .signal import save_wav

TOY_PHONEMES = ("a", "i", "u", "e", "o", "ka", "sa", "to")
# diatonic C major from A3 to C5
_SCALE = (57, 59, 60, 62, 64, 65, 67, 69, 71, 72)
_N_HARMONICS = 4
_TEACHER = "teacher"
_STUDENT = "student"


def _harmonic_profiles(rng: np.random.Generator) -> dict:
    profiles = {}
    for tok in TOY_PHONEMES:
        weights = rng.uniform(0.2, 1.0, size=_N_HARMONICS)
        weights[0] = 1.0  # keep the fundamental dominant for clean F0 tracking
        weights[1:] *= 0.5
        profiles[tok] = weights / np.abs(weights).sum()
    return profiles


def _render(f0_per_sample: np.ndarray, bounds: list[tuple[int, int, str]], profiles, sr: int):
    """Additive harmonic rendering with continuous phase and edge ramps."""
    n = f0_per_sample.shape[0]
    phase = 2.0 * np.pi * np.cumsum(f0_per_sample) / sr
    audio = np.zeros(n)
    envelope = np.zeros(n)
    ramp = max(1, int(0.01 * sr))
    for start, end, tok in bounds:
        seg = np.ones(end - start)
        k = min(ramp, (end - start) // 2)
        if k > 0:
            edge = 0.5 - 0.5 * np.cos(np.linspace(0.0, np.pi, k))
            seg[:k] = edge
            seg[-k:] = edge[::-1]
        envelope[start:end] = seg
        weights = profiles[tok]
        for h in range(_N_HARMONICS):
            audio[start:end] += weights[h] * np.sin((h + 1) * phase[start:end])
    return 0.45 * audio * envelope


def _make_singing(rng, profiles, cfg: PipelineConfig):
    hop = cfg.audio.hop_samples
    period = cfg.audio.frame_period
    n_notes = int(rng.integers(5, 11))
    entries = []
    intervals = []
    f0_chunks = []
    bounds = []
    cursor_frames = 0
    for _ in range(n_notes):
        tok = str(rng.choice(TOY_PHONEMES))
        midi = int(rng.choice(_SCALE))
        frames = int(rng.integers(8, 21))
        slur = bool(rng.random() < 0.15)
        start_s = cursor_frames * period
        end_s = (cursor_frames + frames) * period
        entries.append(ScoreEntry(tok, _midi_name(midi), frames * period, slur))
        intervals.append(IntervalEntry(tok, start_s, end_s))
        f0_chunks.append(np.full(frames * hop, midi_to_hz(midi)))
        bounds.append((cursor_frames * hop, (cursor_frames + frames) * hop, tok))
        cursor_frames += frames
    f0 = np.concatenate(f0_chunks)
    audio = _render(f0, bounds, profiles, cfg.audio.sample_rate)
    return entries, intervals, audio


def _make_speaking(rng, profiles, cfg: PipelineConfig):
    hop = cfg.audio.hop_samples
    period = cfg.audio.frame_period
    n_tokens = int(rng.integers(5, 11))
    tokens = []
    intervals = []
    bounds = []
    frame_lengths = []
    cursor_frames = 0
    for _ in range(n_tokens):
        tok = str(rng.choice(TOY_PHONEMES))
        frames = int(rng.integers(6, 15))
        start_s = cursor_frames * period
        end_s = (cursor_frames + frames) * period
        tokens.append(tok)
        intervals.append(IntervalEntry(tok, start_s, end_s))
        bounds.append((cursor_frames * hop, (cursor_frames + frames) * hop, tok))
        frame_lengths.append(frames)
        cursor_frames += frames
    # frame-rate pitch random walk in a speech-like band, then upsampled
    total_frames = cursor_frames
    walk = np.empty(total_frames)
    walk[0] = rng.uniform(180.0, 230.0)
    steps = rng.normal(0.0, 2.5, size=total_frames - 1)
    for i in range(1, total_frames):
        walk[i] = np.clip(walk[i - 1] + steps[i - 1], 160.0, 260.0)
    frame_centers = (np.arange(total_frames) + 0.5) * hop
    f0 = np.interp(np.arange(total_frames * hop), frame_centers, walk)
    audio = _render(f0, bounds, profiles, cfg.audio.sample_rate)
    return tokens, intervals, audio


_NOTE_NAMES = ("C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B")


def _midi_name(midi: int) -> str:
    return f"{_NOTE_NAMES[midi % 12]}{midi // 12 - 1}"


def make_toy_corpus(
    outdir,
    cfg: PipelineConfig | None = None,
    n_singing: int = 10,
    n_speaking: int = 10,
    seed: int = 0,
) -> Path:
    """Generate the corpus under outdir and return the manifest path."""
    cfg = cfg or PipelineConfig()
    outdir = Path(outdir)
    (outdir / "wav").mkdir(parents=True, exist_ok=True)
    (outdir / "labels").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    profiles = _harmonic_profiles(rng)
    records = []
    for i in range(n_singing):
        utt_id = f"sing_{i:03d}"
        entries, intervals, audio = _make_singing(rng, profiles, cfg)
        write_score(entries, outdir / "labels" / f"{utt_id}.score.tsv")
        write_intervals(intervals, outdir / "labels" / f"{utt_id}.intervals.tsv")
        save_wav(outdir / "wav" / f"{utt_id}.wav", audio, cfg.audio)
        records.append(
            {
                "id": utt_id,
                "style": "singing",
                "speaker": _TEACHER,
                "score_path": f"labels/{utt_id}.score.tsv",
                "interval_path": f"labels/{utt_id}.intervals.tsv",
                "audio_path": f"wav/{utt_id}.wav",
            }
        )
    for i in range(n_speaking):
        utt_id = f"speak_{i:03d}"
        tokens, intervals, audio = _make_speaking(rng, profiles, cfg)
        (outdir / "labels" / f"{utt_id}.txt").write_text(" ".join(tokens) + "\n")
        write_intervals(intervals, outdir / "labels" / f"{utt_id}.intervals.tsv")
        save_wav(outdir / "wav" / f"{utt_id}.wav", audio, cfg.audio)
        records.append(
            {
                "id": utt_id,
                "style": "speaking",
                "speaker": _STUDENT,
                "score_path": f"labels/{utt_id}.txt",
                "interval_path": f"labels/{utt_id}.intervals.tsv",
                "audio_path": f"wav/{utt_id}.wav",
            }
        )
    manifest = outdir / "manifest.jsonl"
    write_manifest(records, manifest)
    return manifest
