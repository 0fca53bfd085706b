"""Phoneme duration model.

A sequence-level encoder over score features (phoneme identity, slur
flag, note duration) feeding a mixture density head, K = 8 Gaussians
over the scalar frame count. Durations are sampled stochastically at
synthesis by default to keep natural variation; the deterministic
mean-of-max mode is available through the same switch.

Note durations enter as log seconds and frame-count targets are
z-scaled inside the model; both transforms are invertible and their
statistics live in the model state, so public inputs and outputs stay
in seconds and frames.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn as nn

from .config import DurationModelConfig
from .errors import ValidationError
from .mdn import MdnHead, mdn_nll, mdn_sample
from .nets import CBHG


class DurationModel(nn.Module):
    def __init__(self, vocab_size: int, cfg: DurationModelConfig, stats: dict):
        super().__init__()
        self.cfg = cfg
        self.vocab_size = vocab_size
        self.phoneme_embed = nn.Embedding(vocab_size, cfg.phoneme_embed_dim)
        self.slur_embed = nn.Embedding(2, cfg.slur_embed_dim)
        self.note_dur_dense = nn.Linear(1, cfg.note_dur_dim)
        in_dim = cfg.phoneme_embed_dim + cfg.slur_embed_dim + cfg.note_dur_dim
        self.input_proj = nn.Linear(in_dim, cfg.encoder_dim)
        self.encoder = CBHG(cfg.encoder_dim, cfg.bank_size, cfg.highway_layers)
        self.mdn = MdnHead(cfg.encoder_dim, cfg.n_components, out_dim=1)
        self.register_buffer(
            "note_dur_log_mean", torch.tensor(float(stats["note_dur_log_mean"]))
        )
        self.register_buffer(
            "note_dur_log_std", torch.tensor(float(stats["note_dur_log_std"]))
        )
        self.register_buffer("dur_mean", torch.tensor(float(stats["dur_mean"])))
        self.register_buffer("dur_std", torch.tensor(float(stats["dur_std"])))

    def normalize_targets(self, frames: torch.Tensor) -> torch.Tensor:
        return (frames - self.dur_mean) / self.dur_std

    def denormalize(self, scaled: torch.Tensor) -> torch.Tensor:
        return scaled * self.dur_std + self.dur_mean

    def forward(self, features: torch.Tensor):
        """features: (B, N, 3) float columns [phoneme_id, slur, note_dur]."""
        if features.ndim != 3 or features.shape[-1] != 3:
            raise ValidationError(
                f"duration features must be (B, N, 3), got {tuple(features.shape)}"
            )
        phon = self.phoneme_embed(features[..., 0].long())
        slur = self.slur_embed(features[..., 1].long())
        nd = torch.log(torch.clamp(features[..., 2:3], min=1e-4))
        nd = (nd - self.note_dur_log_mean) / self.note_dur_log_std
        nd = self.note_dur_dense(nd)
        h = self.input_proj(torch.cat([phon, slur, nd], dim=-1))
        return self.mdn(self.encoder(h))

    def predict(
        self, features: np.ndarray, seed: int | None = None, mode: str = "stochastic"
    ) -> np.ndarray:
        """Frame counts for one utterance, rounded and clamped to >= 1."""
        self.eval()
        x = torch.as_tensor(np.asarray(features, dtype=np.float32)).unsqueeze(0)
        with torch.no_grad():
            params = self(x)
            scaled = mdn_sample(params, seed=seed, mode=mode)
            frames = self.denormalize(scaled).squeeze(0).squeeze(-1)
        return durations_from_values(frames.numpy())


def durations_from_values(values: np.ndarray) -> np.ndarray:
    """Round real-valued frame predictions and clamp each to >= 1."""
    return np.maximum(np.rint(np.asarray(values)).astype(np.int64), 1)


def dm_train_step(model: DurationModel, batch: dict, optimizer) -> float:
    """One optimizer update; returns the scalar NLL.

    batch: features (B, N, 3), targets (B, N) frame counts, and mask
    (B, N) selecting real rows. Unmasked batches must align exactly.
    """
    model.train()
    features, targets = batch["features"], batch["targets"]
    mask = batch.get("mask")
    if features.shape[:2] != targets.shape:
        raise ValidationError(
            f"features {tuple(features.shape)} and targets {tuple(targets.shape)} disagree"
        )
    optimizer.zero_grad()
    params = model(features)
    loss = mdn_nll(params, model.normalize_targets(targets).unsqueeze(-1), mask)
    loss.backward()
    optimizer.step()
    return float(loss.detach())


def dm_predict(
    model: DurationModel,
    features: np.ndarray,
    seed: int | None = None,
    mode: str = "stochastic",
) -> np.ndarray:
    return model.predict(features, seed=seed, mode=mode)


def duration_accuracy(predicted, real) -> float:
    """1 - sum(|pred - real|) / sum(max(pred, real)), per-phoneme counts."""
    predicted = np.asarray(predicted, dtype=np.float64)
    real = np.asarray(real, dtype=np.float64)
    if predicted.shape != real.shape:
        raise ValidationError(
            f"length mismatch: {predicted.shape} predicted vs {real.shape} real"
        )
    if predicted.size == 0:
        raise ValidationError("cannot score empty duration sequences")
    denom = np.maximum(predicted, real).sum()
    if denom == 0:
        raise ValidationError("all durations are zero")
    return float(1.0 - np.abs(predicted - real).sum() / denom)
