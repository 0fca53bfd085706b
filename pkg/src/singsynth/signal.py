"""Waveform analysis and inversion.

Mel spectrograms and F0 tracks share one framing rule: frame t covers
samples [t * hop, t * hop + window) with zero padding at the tail, so
both features always have exactly ceil(n_samples / hop) frames and stay
frame-synchronous with each other and with phoneme durations. The F0
tracker uses a shorter analysis window on that grid so pitch changes
smear across fewer frames.

F0 is tracked by normalized autocorrelation by default, but any
per-frame tracker can be substituted, including values read from the
external one-float-per-line file format (see featio.read_f0_file).
LF0 tracks are made continuous by linearly interpolating unvoiced
stretches between their voiced neighbours.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

from .config import AudioConfig
from .errors import ValidationError, MissingArtifactError

# exp(LF0) is kept inside this band; the invariant holds regardless of
# what the tracker returns on pathological frames.
F0_CLIP_MIN = 50.0
F0_CLIP_MAX = 1200.0

_SILENCE_RMS = 1e-4


@dataclass
class MelSpectrogram:
    """Log-amplitude mel frames, shape (T, n_mels), float32."""

    frames: np.ndarray
    frame_period: float
    sample_rate: int

    def __len__(self) -> int:
        return self.frames.shape[0]


@dataclass
class LF0Track:
    """Continuous log-F0 per frame plus the original voicing mask."""

    values: np.ndarray  # (T,) float32, natural log of Hz
    voiced_mask: np.ndarray  # (T,) bool

    def __len__(self) -> int:
        return self.values.shape[0]


def frame_count(n_samples: int, cfg: AudioConfig) -> int:
    return int(math.ceil(n_samples / cfg.hop_samples))


def load_wav(path, cfg: AudioConfig) -> np.ndarray:
    """Read a WAV file as mono float32 in [-1, 1] at cfg.sample_rate.

    16-bit PCM is the expected input; other integer widths and float
    files are scaled too. Files at a different rate are resampled.
    """
    import pathlib

    if not pathlib.Path(path).exists():
        raise MissingArtifactError(f"audio file not found: {path}")
    sr, data = wavfile.read(path)
    if data.dtype == np.int16:
        audio = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        audio = data.astype(np.float64) / 2147483648.0
    elif data.dtype == np.uint8:
        audio = (data.astype(np.float64) - 128.0) / 128.0
    else:
        audio = data.astype(np.float64)
    if audio.ndim == 2:
        audio = audio.mean(axis=1)
    if sr != cfg.sample_rate:
        g = math.gcd(int(sr), cfg.sample_rate)
        audio = resample_poly(audio, cfg.sample_rate // g, sr // g)
    return audio.astype(np.float32)


def save_wav(path, audio: np.ndarray, cfg: AudioConfig) -> None:
    clipped = np.clip(np.asarray(audio, dtype=np.float64), -1.0, 1.0)
    wavfile.write(path, cfg.sample_rate, (clipped * 32767.0).astype(np.int16))


def _frame_signal(audio: np.ndarray, cfg: AudioConfig, win: int | None = None) -> np.ndarray:
    """Slice audio into (T, win) frames, zero padded at the tail."""
    hop = cfg.hop_samples
    win = cfg.win_samples if win is None else win
    n = audio.shape[0]
    if n == 0:
        raise ValidationError("cannot frame empty audio")
    t = frame_count(n, cfg)
    padded = np.zeros((t - 1) * hop + win, dtype=np.float64)
    padded[:n] = audio
    idx = np.arange(win)[None, :] + hop * np.arange(t)[:, None]
    return padded[idx]


def _hann(win: int) -> np.ndarray:
    # periodic window, required for clean overlap-add at hop = win / 4
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(win) / win)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_center_frequencies(cfg: AudioConfig) -> np.ndarray:
    """Center frequency in Hz of each mel band."""
    edges = np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax), cfg.n_mels + 2)
    return mel_to_hz(edges[1:-1])


def mel_filterbank(cfg: AudioConfig) -> np.ndarray:
    """Triangular mel filterbank, shape (n_mels, n_fft // 2 + 1)."""
    n_bins = cfg.n_fft // 2 + 1
    fft_freqs = np.arange(n_bins) * cfg.sample_rate / cfg.n_fft
    mel_points = mel_to_hz(
        np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax), cfg.n_mels + 2)
    )
    fb = np.zeros((cfg.n_mels, n_bins))
    for k in range(cfg.n_mels):
        left, center, right = mel_points[k : k + 3]
        up = (fft_freqs - left) / max(center - left, 1e-12)
        down = (right - fft_freqs) / max(right - center, 1e-12)
        fb[k] = np.clip(np.minimum(up, down), 0.0, None)
    return fb


def _stft_magnitude(frames: np.ndarray, cfg: AudioConfig) -> np.ndarray:
    window = _hann(cfg.win_samples)
    return np.abs(np.fft.rfft(frames * window, n=cfg.n_fft, axis=1))


def extract_mel(audio: np.ndarray, sample_rate: int, cfg: AudioConfig) -> MelSpectrogram:
    """Log-amplitude mel spectrogram with exactly ceil(n / hop) frames.

    Amplitudes are floored at cfg.amplitude_floor before the log, so
    silence maps to log(floor) rather than -inf.
    """
    audio = np.asarray(audio, dtype=np.float64)
    if audio.size == 0:
        raise ValidationError("cannot extract features from empty audio")
    if sample_rate != cfg.sample_rate:
        g = math.gcd(int(sample_rate), cfg.sample_rate)
        audio = resample_poly(audio, cfg.sample_rate // g, sample_rate // g)
    frames = _frame_signal(audio, cfg)
    mag = _stft_magnitude(frames, cfg)
    mel = mag @ mel_filterbank(cfg).T
    logmel = np.log(np.maximum(mel, cfg.amplitude_floor))
    return MelSpectrogram(
        frames=logmel.astype(np.float32),
        frame_period=cfg.frame_period,
        sample_rate=cfg.sample_rate,
    )


def autocorrelation_f0(frames: np.ndarray, cfg: AudioConfig) -> tuple[np.ndarray, np.ndarray]:
    """Per-frame F0 by normalized autocorrelation peak picking.

    Returns (f0_hz, voiced_mask). Unvoiced frames keep f0 = 0. A frame
    is voiced when its lag-compensated autocorrelation peak clears
    cfg.voicing_threshold and it is not near silent. Among peaks of
    comparable strength the shortest lag wins, which suppresses period
    doubling, and the winning lag is refined parabolically.
    """
    t, win = frames.shape
    centered = frames - frames.mean(axis=1, keepdims=True)
    rms = np.sqrt((centered**2).mean(axis=1))

    nfft = 1
    while nfft < 2 * win:
        nfft *= 2
    spec = np.fft.rfft(centered, n=nfft, axis=1)
    corr = np.fft.irfft(np.abs(spec) ** 2, n=nfft, axis=1)[:, :win]

    lag_min = max(2, int(cfg.sample_rate / F0_CLIP_MAX))
    lag_max = min(win - 2, int(math.ceil(cfg.sample_rate / cfg.f0_min)))
    if lag_max <= lag_min:
        raise ValidationError("analysis window too short for the configured F0 range")

    r0 = corr[:, 0]
    valid = (r0 > 0) & (rms > _SILENCE_RMS)
    norm = corr / np.where(r0 > 0, r0, 1.0)[:, None]
    lags = np.arange(lag_min, lag_max + 1)
    # fewer overlapping samples at long lags bias the peak down; undo it
    compensated = norm[:, lags] / (1.0 - lags / win)[None, :]

    peak = compensated.max(axis=1)
    # restrict to local maxima, then take the shortest near-maximal one;
    # this keeps period-doubled peaks (2*T0, 3*T0, ...) from winning
    interior = compensated[:, 1:-1]
    is_max = (interior >= compensated[:, :-2]) & (interior >= compensated[:, 2:])
    near = is_max & (interior >= 0.9 * np.maximum(peak, 1e-12)[:, None])
    has_peak = near.any(axis=1)
    first = np.where(has_peak, near.argmax(axis=1), interior.argmax(axis=1)) + 1
    valid = valid & has_peak
    best_lag = lags[first].astype(np.float64)

    # parabolic refinement on the raw normalized correlation
    li = lags[first]
    left = norm[np.arange(t), li - 1]
    mid = norm[np.arange(t), li]
    right = norm[np.arange(t), li + 1]
    denom = left - 2.0 * mid + right
    safe_denom = np.where(np.abs(denom) > 1e-12, denom, 1.0)
    shift = np.where(np.abs(denom) > 1e-12, 0.5 * (left - right) / safe_denom, 0.0)
    best_lag = best_lag + np.clip(shift, -0.5, 0.5)

    voiced = valid & (peak >= cfg.voicing_threshold)
    f0 = np.where(voiced, cfg.sample_rate / best_lag, 0.0)
    out_of_range = voiced & ((f0 < cfg.f0_min) | (f0 > cfg.f0_max))
    voiced = voiced & ~out_of_range
    f0 = np.where(voiced, f0, 0.0)
    return f0, voiced


def lf0_from_f0(f0_hz: np.ndarray, voiced_mask: np.ndarray) -> LF0Track:
    """Continuous log-F0 from a per-frame track with unvoiced gaps.

    Unvoiced frames are filled by linear interpolation between voiced
    neighbours; leading and trailing gaps take the nearest voiced value.
    A track with no voiced frame at all is rejected.
    """
    f0_hz = np.asarray(f0_hz, dtype=np.float64)
    voiced = np.asarray(voiced_mask, dtype=bool)
    if f0_hz.shape != voiced.shape or f0_hz.ndim != 1:
        raise ValidationError("f0 and voicing mask must be equal-length 1-D arrays")
    if not voiced.any():
        raise ValidationError("no voiced frames; cannot build a continuous LF0 track")
    idx = np.arange(f0_hz.shape[0])
    filled = np.interp(idx, idx[voiced], f0_hz[voiced])
    filled = np.clip(filled, F0_CLIP_MIN, F0_CLIP_MAX)
    return LF0Track(values=np.log(filled).astype(np.float32), voiced_mask=voiced)


def extract_lf0(
    audio: np.ndarray, sample_rate: int, cfg: AudioConfig, tracker=None
) -> LF0Track:
    """Continuous LF0 with the same frame grid as extract_mel.

    tracker(frames, cfg) -> (f0_hz, voiced_mask) may replace the
    built-in autocorrelation tracker.
    """
    audio = np.asarray(audio, dtype=np.float64)
    if audio.size == 0:
        raise ValidationError("cannot extract features from empty audio")
    if sample_rate != cfg.sample_rate:
        g = math.gcd(int(sample_rate), cfg.sample_rate)
        audio = resample_poly(audio, cfg.sample_rate // g, sample_rate // g)
    frames = _frame_signal(audio, cfg, win=cfg.f0_win_samples)
    if tracker is None:
        tracker = autocorrelation_f0
    f0, voiced = tracker(frames, cfg)
    return lf0_from_f0(f0, voiced)


def _mel_to_linear(amplitudes: np.ndarray, fb: np.ndarray, n_iter: int = 30) -> np.ndarray:
    """Invert the filterbank by multiplicative updates.

    Plain transpose projection snaps spectral peaks to band centers;
    a few NNLS-style updates keep tones where they belong.
    """
    v = amplitudes.T  # (n_mels, T)
    eps = 1e-12
    h = fb.T @ v + eps  # (n_bins, T)
    norm = fb.sum(axis=0)[:, None] + eps
    for _ in range(n_iter):
        h *= (fb.T @ (v / (fb @ h + eps))) / norm
    return h  # (n_bins, T)


def invert_mel(
    mel: MelSpectrogram, cfg: AudioConfig, iterations: int | None = None, seed: int = 0
) -> np.ndarray:
    """Griffin-Lim inversion of a log-mel spectrogram.

    Deterministic for a fixed seed (the seed fixes the initial phase).
    Output is float32 with exactly T * hop samples, so the audio
    duration always equals the frame count times the frame period.
    """
    t = len(mel)
    if t == 0:
        return np.zeros(0, dtype=np.float32)
    if iterations is None:
        iterations = cfg.griffin_lim_iterations
    hop, win = cfg.hop_samples, cfg.win_samples
    fb = mel_filterbank(cfg)
    amp = np.exp(mel.frames.astype(np.float64))
    mag = _mel_to_linear(amp, fb)  # (n_bins, T)

    rng = np.random.default_rng(seed)
    phase = rng.uniform(-np.pi, np.pi, size=mag.shape)
    window = _hann(win)
    wsum = np.zeros((t - 1) * hop + win)
    for i in range(t):
        wsum[i * hop : i * hop + win] += window**2
    wsum = np.maximum(wsum, 1e-8)

    def istft(spec):
        out = np.zeros((t - 1) * hop + win)
        segs = np.fft.irfft(spec, n=cfg.n_fft, axis=0)[:win].T * window  # (T, win)
        for i in range(t):
            out[i * hop : i * hop + win] += segs[i]
        return out / wsum

    def stft(x):
        idx = np.arange(win)[None, :] + hop * np.arange(t)[:, None]
        return np.fft.rfft(x[idx] * window, n=cfg.n_fft, axis=1).T

    spec = mag * np.exp(1j * phase)
    for _ in range(iterations):
        audio = istft(spec)
        spec = mag * np.exp(1j * np.angle(stft(audio)))
    audio = istft(spec)

    audio = audio[: t * hop]
    if audio.shape[0] < t * hop:
        audio = np.pad(audio, (0, t * hop - audio.shape[0]))
    peak = np.abs(audio).max()
    if peak > 1.0:
        audio = audio / peak
    return audio.astype(np.float32)
