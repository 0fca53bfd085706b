"""Frame-level LF0 model.

Same recipe as the duration model but over frame-expanded inputs
(phoneme id, score pitch, slur, within-phoneme position) with K = 8
Gaussians per frame. Targets are z-scaled continuous LF0; predictions
come back denormalized in log-Hz. The default inference mode is the
mean of the highest-weight component, which is what feeds the acoustic
model; stochastic sampling stays available through the same switch.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn as nn

from .config import Lf0ModelConfig
from .corpus import MIDI_MAX
from .errors import ValidationError
from .mdn import MdnHead, mdn_nll, mdn_sample
from .nets import CBHG

PITCH_TABLE_SIZE = MIDI_MAX + 1  # MIDI ids used directly; 0 is REST


class Lf0Model(nn.Module):
    def __init__(self, vocab_size: int, cfg: Lf0ModelConfig, stats: dict):
        super().__init__()
        self.cfg = cfg
        self.vocab_size = vocab_size
        self.phoneme_embed = nn.Embedding(vocab_size, cfg.phoneme_embed_dim)
        self.pitch_embed = nn.Embedding(PITCH_TABLE_SIZE, cfg.pitch_embed_dim)
        self.slur_embed = nn.Embedding(2, cfg.slur_embed_dim)
        self.frame_pos_dense = nn.Linear(1, cfg.frame_pos_dim)
        in_dim = (
            cfg.phoneme_embed_dim
            + cfg.pitch_embed_dim
            + cfg.slur_embed_dim
            + cfg.frame_pos_dim
        )
        self.input_proj = nn.Linear(in_dim, cfg.encoder_dim)
        self.encoder = CBHG(cfg.encoder_dim, cfg.bank_size, cfg.highway_layers)
        self.mdn = MdnHead(cfg.encoder_dim, cfg.n_components, out_dim=1)
        self.register_buffer("lf0_mean", torch.tensor(float(stats["lf0_mean"])))
        self.register_buffer("lf0_std", torch.tensor(float(stats["lf0_std"])))

    def normalize_targets(self, lf0: torch.Tensor) -> torch.Tensor:
        return (lf0 - self.lf0_mean) / self.lf0_std

    def denormalize(self, scaled: torch.Tensor) -> torch.Tensor:
        return scaled * self.lf0_std + self.lf0_mean

    def forward(self, features: torch.Tensor):
        """features: (B, T, 4) float columns [phoneme_id, pitch_id, slur, frame_pos]."""
        if features.ndim != 3 or features.shape[-1] != 4:
            raise ValidationError(
                f"LF0 features must be (B, T, 4), got {tuple(features.shape)}"
            )
        phon = self.phoneme_embed(features[..., 0].long())
        pitch = self.pitch_embed(features[..., 1].long())
        slur = self.slur_embed(features[..., 2].long())
        pos = self.frame_pos_dense(features[..., 3:4])
        h = self.input_proj(torch.cat([phon, pitch, slur, pos], dim=-1))
        return self.mdn(self.encoder(h))

    def predict(
        self, features: np.ndarray, mode: str = "mean_of_max", seed: int | None = None
    ) -> np.ndarray:
        """Denormalized LF0 (log-Hz) for one utterance, shape (T,)."""
        self.eval()
        x = torch.as_tensor(np.asarray(features, dtype=np.float32)).unsqueeze(0)
        with torch.no_grad():
            params = self(x)
            scaled = mdn_sample(params, seed=seed, mode=mode)
            lf0 = self.denormalize(scaled).squeeze(0).squeeze(-1)
        return lf0.numpy().astype(np.float32)


def lf0_train_step(model: Lf0Model, batch: dict, optimizer) -> float:
    """One optimizer update on (features, targets, mask); returns the NLL."""
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


def lf0_predict(
    model: Lf0Model,
    features: np.ndarray,
    mode: str = "mean_of_max",
    seed: int | None = None,
) -> np.ndarray:
    return model.predict(features, mode=mode, seed=seed)


def median_smooth(values: np.ndarray, width: int = 3) -> np.ndarray:
    """Centered running median; width 1 (or length < width) is identity."""
    values = np.asarray(values)
    if width <= 1 or values.shape[0] < width:
        return values.copy()
    if width % 2 == 0:
        raise ValidationError(f"median width must be odd, got {width}")
    half = width // 2
    padded = np.pad(values, (half, half), mode="edge")
    windows = np.lib.stride_tricks.sliding_window_view(padded, width)
    return np.median(windows, axis=-1).astype(values.dtype)


def lf0_metrics(predicted_lf0: np.ndarray, reference_lf0: np.ndarray) -> dict:
    """RMSE and Pearson correlation of F0 in Hz (inputs are log-Hz).

    Returns {"rmse", "pcc", "pcc_error"}; pcc is None with a reason
    when either side has zero variance.
    """
    predicted_lf0 = np.asarray(predicted_lf0, dtype=np.float64)
    reference_lf0 = np.asarray(reference_lf0, dtype=np.float64)
    if predicted_lf0.shape != reference_lf0.shape or predicted_lf0.ndim != 1:
        raise ValidationError(
            f"LF0 tracks must be equal-length 1-D arrays, got "
            f"{predicted_lf0.shape} vs {reference_lf0.shape}"
        )
    if predicted_lf0.size == 0:
        raise ValidationError("cannot score empty LF0 tracks")
    pred_hz = np.exp(predicted_lf0)
    ref_hz = np.exp(reference_lf0)
    rmse = float(np.sqrt(np.mean((pred_hz - ref_hz) ** 2)))
    pcc = None
    pcc_error = None
    ps, rs = pred_hz.std(), ref_hz.std()
    if ps == 0.0 or rs == 0.0:
        pcc_error = "zero variance input, correlation undefined"
    else:
        pcc = float(
            np.mean((pred_hz - pred_hz.mean()) * (ref_hz - ref_hz.mean())) / (ps * rs)
        )
    return {"rmse": rmse, "pcc": pcc, "pcc_error": pcc_error}
