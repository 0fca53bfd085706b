"""Signal layer: framing, mel analysis, F0 tracking, inversion.

Frozen values in here were computed with standalone oracles that avoid
this package: the HTK mel formula written out longhand for the band
lookup, and numpy FFTs on known sines for the frequency checks.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from singsynth.config import AudioConfig
from singsynth.errors import ValidationError
from singsynth.signal import (
    F0_CLIP_MAX,
    F0_CLIP_MIN,
    autocorrelation_f0,
    extract_lf0,
    extract_mel,
    frame_count,
    invert_mel,
    lf0_from_f0,
    load_wav,
    mel_center_frequencies,
    mel_filterbank,
    save_wav,
)

CFG = AudioConfig()


def sine(freq, seconds, sr=CFG.sample_rate, amp=0.4):
    t = np.arange(int(round(seconds * sr))) / sr
    return (amp * np.sin(2 * np.pi * freq * t)).astype(np.float64)


def dominant_frequency(audio, sr=CFG.sample_rate):
    spectrum = np.abs(np.fft.rfft(audio * np.hanning(len(audio))))
    return np.argmax(spectrum) * sr / len(audio)


class TestFraming:
    def test_frame_count_is_ceil(self):
        hop = CFG.hop_samples
        assert frame_count(1, CFG) == 1
        assert frame_count(hop, CFG) == 1
        assert frame_count(hop + 1, CFG) == 2
        assert frame_count(24000, CFG) == 80  # one second at 12.5 ms hop

    @given(st.integers(min_value=1, max_value=40000))
    @settings(max_examples=30, deadline=None)
    def test_mel_frames_match_frame_count(self, n):
        audio = np.zeros(n)
        audio[0] = 0.1  # keep it non-silent without changing length
        mel = extract_mel(audio, CFG.sample_rate, CFG)
        assert len(mel) == frame_count(n, CFG)

    def test_empty_audio_rejected(self):
        with pytest.raises(ValidationError):
            extract_mel(np.zeros(0), CFG.sample_rate, CFG)


class TestMelAnalysis:
    def test_filterbank_shape_and_coverage(self):
        fb = mel_filterbank(CFG)
        assert fb.shape == (CFG.n_mels, CFG.n_fft // 2 + 1)
        assert (fb >= 0).all()
        # every band has support
        assert (fb.sum(axis=1) > 0).all()

    def test_band_centers_bracket_range(self):
        centers = mel_center_frequencies(CFG)
        assert centers.shape == (CFG.n_mels,)
        assert centers[0] > CFG.fmin
        assert centers[-1] < CFG.fmax
        assert (np.diff(centers) > 0).all()

    def test_440hz_lands_in_frozen_band(self):
        # Band index from the HTK formula evaluated independently:
        # edges = mel^-1(linspace(mel(40), mel(12000), 82)); the center
        # nearest 440 Hz is index 11 (427.54 Hz).
        mel = extract_mel(sine(440.0, 1.0), CFG.sample_rate, CFG)
        hot = np.argmax(np.median(mel.frames, axis=0))
        assert hot == 11

    def test_silence_hits_log_floor(self):
        mel = extract_mel(np.zeros(2400), CFG.sample_rate, CFG)
        np.testing.assert_allclose(
            mel.frames, math.log(CFG.amplitude_floor), atol=1e-6
        )

    def test_louder_signal_larger_values(self):
        quiet = extract_mel(sine(440.0, 0.5, amp=0.1), CFG.sample_rate, CFG)
        loud = extract_mel(sine(440.0, 0.5, amp=0.4), CFG.sample_rate, CFG)
        assert loud.frames.max() > quiet.frames.max()

    def test_determinism(self):
        audio = sine(330.0, 0.5)
        a = extract_mel(audio, CFG.sample_rate, CFG)
        b = extract_mel(audio, CFG.sample_rate, CFG)
        np.testing.assert_array_equal(a.frames, b.frames)


class TestF0Tracking:
    @pytest.mark.parametrize("freq", [110.0, 220.0, 440.0, 660.0, 880.0])
    def test_sine_recovered_within_3_percent(self, freq):
        track = extract_lf0(sine(freq, 1.0), CFG.sample_rate, CFG)
        voiced_hz = np.exp(track.values[track.voiced_mask].astype(np.float64))
        assert voiced_hz.size > 40
        np.testing.assert_allclose(voiced_hz, freq, rtol=0.03)

    def test_harmonic_stack_does_not_halve(self):
        # fundamental plus strong harmonics; a naive peak picker locks
        # onto the double period here
        t = np.arange(24000) / CFG.sample_rate
        audio = (
            0.4 * np.sin(2 * np.pi * 220.0 * t)
            + 0.25 * np.sin(2 * np.pi * 440.0 * t)
            + 0.15 * np.sin(2 * np.pi * 660.0 * t)
        )
        track = extract_lf0(audio, CFG.sample_rate, CFG)
        voiced_hz = np.exp(track.values[track.voiced_mask].astype(np.float64))
        np.testing.assert_allclose(voiced_hz, 220.0, rtol=0.03)

    def test_silence_is_unvoiced(self):
        audio = np.concatenate([sine(220.0, 0.4), np.zeros(9600), sine(220.0, 0.4)])
        track = extract_lf0(audio, CFG.sample_rate, CFG)
        mid = slice(35, 45)  # frames well inside the 0.4 s gap
        assert not track.voiced_mask[mid].any()

    def test_gap_interpolated_continuously(self):
        audio = np.concatenate([sine(200.0, 0.4), np.zeros(4800), sine(250.0, 0.4)])
        track = extract_lf0(audio, CFG.sample_rate, CFG)
        values = track.values.astype(np.float64)
        # no jumps anywhere near an octave
        assert np.abs(np.diff(values)).max() < 0.2
        # gap values lie between the flanking notes
        gap = values[~track.voiced_mask]
        assert gap.min() > math.log(150.0) and gap.max() < math.log(300.0)

    def test_white_noise_rejected(self):
        rng = np.random.default_rng(3)
        with pytest.raises(ValidationError, match="no voiced frames"):
            extract_lf0(rng.normal(0, 0.3, 24000), CFG.sample_rate, CFG)

    def test_custom_tracker_is_used(self):
        def fake_tracker(frames, cfg):
            t = frames.shape[0]
            return np.full(t, 123.0), np.ones(t, dtype=bool)

        track = extract_lf0(sine(440.0, 0.3), CFG.sample_rate, CFG, tracker=fake_tracker)
        np.testing.assert_allclose(np.exp(track.values), 123.0, rtol=1e-5)


class TestContinuousLf0:
    def test_interior_gap_linear_in_hz(self):
        f0 = np.array([200.0, 0.0, 0.0, 0.0, 300.0])
        voiced = f0 > 0
        track = lf0_from_f0(f0, voiced)
        expected_hz = np.array([200.0, 225.0, 250.0, 275.0, 300.0])
        np.testing.assert_allclose(np.exp(track.values), expected_hz, rtol=1e-5)

    def test_edges_take_nearest_voiced(self):
        f0 = np.array([0.0, 0.0, 220.0, 0.0])
        track = lf0_from_f0(f0, f0 > 0)
        np.testing.assert_allclose(np.exp(track.values), 220.0, rtol=1e-5)

    def test_clipping_bounds(self):
        f0 = np.array([10.0, 5000.0])
        track = lf0_from_f0(f0, np.ones(2, dtype=bool))
        np.testing.assert_allclose(
            np.exp(track.values), [F0_CLIP_MIN, F0_CLIP_MAX], rtol=1e-5
        )

    def test_all_unvoiced_rejected(self):
        with pytest.raises(ValidationError):
            lf0_from_f0(np.zeros(4), np.zeros(4, dtype=bool))

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValidationError):
            lf0_from_f0(np.zeros(4), np.zeros(5, dtype=bool))


class TestInversion:
    def test_sample_count_exactly_frames_times_hop(self):
        mel = extract_mel(sine(440.0, 0.73), CFG.sample_rate, CFG)
        audio = invert_mel(mel, CFG, iterations=5)
        assert audio.shape[0] == len(mel) * CFG.hop_samples

    def test_roundtrip_preserves_dominant_frequency(self):
        mel = extract_mel(sine(440.0, 1.0), CFG.sample_rate, CFG)
        audio = invert_mel(mel, CFG)
        rebuilt = dominant_frequency(audio.astype(np.float64))
        assert abs(rebuilt - 440.0) / 440.0 < 0.02

    def test_floor_mel_inverts_to_silence(self):
        frames = np.full((40, CFG.n_mels), math.log(CFG.amplitude_floor), np.float32)
        mel = extract_mel(np.zeros(40 * CFG.hop_samples), CFG.sample_rate, CFG)
        np.testing.assert_allclose(mel.frames, frames, atol=1e-5)
        audio = invert_mel(mel, CFG, iterations=10)
        assert float(np.sqrt(np.mean(audio**2))) < 1e-3

    def test_deterministic_for_fixed_seed(self):
        mel = extract_mel(sine(330.0, 0.4), CFG.sample_rate, CFG)
        a = invert_mel(mel, CFG, iterations=8, seed=5)
        b = invert_mel(mel, CFG, iterations=8, seed=5)
        np.testing.assert_array_equal(a, b)

    def test_empty_mel_inverts_to_empty(self):
        from singsynth.signal import MelSpectrogram

        mel = MelSpectrogram(
            frames=np.zeros((0, CFG.n_mels), np.float32),
            frame_period=CFG.frame_period,
            sample_rate=CFG.sample_rate,
        )
        assert invert_mel(mel, CFG).shape == (0,)


class TestWavIO:
    def test_roundtrip_16bit(self, tmp_path):
        audio = sine(440.0, 0.25, amp=0.5).astype(np.float32)
        path = tmp_path / "a.wav"
        save_wav(path, audio, CFG)
        back = load_wav(path, CFG)
        assert back.shape == audio.shape
        np.testing.assert_allclose(back, audio, atol=1e-3)

    def test_resampled_on_load(self, tmp_path):
        from scipy.io import wavfile

        sr = 48000
        t = np.arange(sr // 2) / sr
        audio = (0.4 * np.sin(2 * np.pi * 440.0 * t) * 32767).astype(np.int16)
        path = tmp_path / "a.wav"
        wavfile.write(path, sr, audio)
        back = load_wav(path, CFG)
        assert back.shape[0] == CFG.sample_rate // 2
        assert abs(dominant_frequency(back.astype(np.float64)) - 440.0) < 5.0

    def test_missing_file(self, tmp_path):
        from singsynth.errors import MissingArtifactError

        with pytest.raises(MissingArtifactError):
            load_wav(tmp_path / "gone.wav", CFG)
