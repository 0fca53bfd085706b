"""Static figure output for reports and synthesis dumps."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _mel_axes(ax, mel: np.ndarray, frame_period: float, title: str):
    t = mel.shape[0]
    extent = (0.0, t * frame_period, 0.0, mel.shape[1])
    ax.imshow(mel.T, origin="lower", aspect="auto", extent=extent, cmap="magma")
    ax.set_ylabel("mel band")
    ax.set_title(title)


def save_mel_comparison(path, reference: np.ndarray, predicted: np.ndarray, frame_period: float) -> Path:
    fig, axes = plt.subplots(2, 1, figsize=(8, 5), sharex=True)
    _mel_axes(axes[0], reference, frame_period, "reference mel")
    _mel_axes(axes[1], predicted, frame_period, "predicted mel")
    axes[1].set_xlabel("time (s)")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return Path(path)


def save_lf0_comparison(path, reference_hz: np.ndarray, predicted_hz: np.ndarray, frame_period: float) -> Path:
    t = np.arange(len(reference_hz)) * frame_period
    fig, ax = plt.subplots(figsize=(8, 3))
    ax.plot(t, reference_hz, label="reference", linewidth=1.2)
    ax.plot(t[: len(predicted_hz)], predicted_hz, label="predicted", linewidth=1.2)
    ax.set_xlabel("time (s)")
    ax.set_ylabel("F0 (Hz)")
    ax.legend(loc="best")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return Path(path)


def save_synthesis_overview(path, mel: np.ndarray, f0_hz: np.ndarray, frame_period: float) -> Path:
    fig, axes = plt.subplots(2, 1, figsize=(8, 5), sharex=True)
    _mel_axes(axes[0], mel, frame_period, "synthesized mel")
    t = np.arange(len(f0_hz)) * frame_period
    axes[1].plot(t, f0_hz, linewidth=1.2)
    axes[1].set_xlabel("time (s)")
    axes[1].set_ylabel("F0 (Hz)")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return Path(path)
