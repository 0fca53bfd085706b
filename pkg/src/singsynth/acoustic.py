"""Frame-synchronous autoregressive acoustic model.

One network serves both corpora: singing from the teacher voice and
plain speech from target speakers, distinguished only by speaker and
style-tag embeddings. Score-side inputs (phoneme, position, speaker)
pass through a CBHG encoder; the style embedding and a dense LF0
encoding are concatenated onto the encoder output. Each decoder step
consumes the previous mel frame through a bottleneck prenet; there is
no attention and no reduction, input and output are frame-aligned by
construction, so decoding runs with full teacher forcing.

Style leaks through the autoregressive feedback path, and that is
where the adversarial branch sits: a recurrent layer over the prenet
output produces a latent whose gradient is reversed on its way from a
frame-level style classifier. The classifier itself learns to spot the
style; everything upstream of the reversal learns to hide it. The
latent, concatenated with the style embedding again, joins the decoder
input so the explicit tag stays the only style source.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .config import AcousticModelConfig
from .errors import ValidationError
from .nets import CBHG, Prenet, l2_penalty


class GradientReversalFunction(torch.autograd.Function):
    """Identity forward; backward returns the negated, scaled gradient."""

    @staticmethod
    def forward(ctx, x, scale):
        ctx.scale = scale
        return x.view_as(x)

    @staticmethod
    def backward(ctx, grad_output):
        return grad_output.neg() * ctx.scale, None


def grl(x: torch.Tensor, scale: float = 1.0) -> torch.Tensor:
    return GradientReversalFunction.apply(x, scale)


class GradientReversal(nn.Module):
    def __init__(self, scale: float = 1.0):
        super().__init__()
        self.scale = scale

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return grl(x, self.scale)


N_STYLES = 2


class AcousticModel(nn.Module):
    def __init__(
        self,
        vocab_size: int,
        n_speakers: int,
        cfg: AcousticModelConfig,
        stats: dict,
        n_mels: int = 80,
        grl_scale: float = 1.0,
        l2_weight: float = 1e-6,
    ):
        super().__init__()
        self.cfg = cfg
        self.vocab_size = vocab_size
        self.n_speakers = n_speakers
        self.n_mels = n_mels
        self.l2_weight = l2_weight

        self.phoneme_embed = nn.Embedding(vocab_size, cfg.phoneme_embed_dim)
        self.speaker_embed = nn.Embedding(n_speakers, cfg.speaker_embed_dim)
        self.style_embed = nn.Embedding(N_STYLES, cfg.style_embed_dim)
        self.frame_pos_dense = nn.Linear(1, cfg.frame_pos_dim)
        self.lf0_dense = nn.Linear(1, cfg.lf0_dim)

        enc_in = cfg.phoneme_embed_dim + cfg.frame_pos_dim + cfg.speaker_embed_dim
        self.encoder_proj = nn.Linear(enc_in, cfg.encoder_dim)
        self.encoder = CBHG(cfg.encoder_dim, cfg.bank_size, cfg.highway_layers)

        self.prenet = Prenet(n_mels, cfg.prenet_dims, cfg.prenet_dropout)
        self.dat_gru = nn.GRU(self.prenet.out_dim, cfg.dat_dim, batch_first=True)
        self.reversal = GradientReversal(grl_scale)
        self.style_classifier = nn.Sequential(
            nn.Linear(cfg.dat_dim, cfg.dat_dim),
            nn.ReLU(),
            nn.Linear(cfg.dat_dim, N_STYLES),
        )

        cond_dim = cfg.encoder_dim + cfg.style_embed_dim + cfg.lf0_dim
        dec_in = cond_dim + cfg.dat_dim + cfg.style_embed_dim
        self.decoder = nn.GRU(
            dec_in, cfg.decoder_dim, num_layers=cfg.decoder_layers, batch_first=True
        )
        self.mel_proj = nn.Linear(cfg.decoder_dim, n_mels)

        self.postnet_in = nn.Linear(n_mels, cfg.postnet_dim)
        self.postnet = CBHG(cfg.postnet_dim, cfg.postnet_bank_size, cfg.highway_layers)
        self.postnet_out = nn.Linear(cfg.postnet_dim, n_mels)

        self.register_buffer(
            "mel_mean", torch.as_tensor(stats["mel_mean"], dtype=torch.float32)
        )
        self.register_buffer(
            "mel_std", torch.as_tensor(stats["mel_std"], dtype=torch.float32)
        )
        self.register_buffer("lf0_mean", torch.tensor(float(stats["lf0_mean"])))
        self.register_buffer("lf0_std", torch.tensor(float(stats["lf0_std"])))
        if self.mel_mean.shape != (n_mels,) or self.mel_std.shape != (n_mels,):
            raise ValidationError("mel stats must have one entry per mel band")

    # mel frames cross the model boundary in raw log-amplitude units;
    # the z-scaling below is internal and invertible
    def normalize_mel(self, mel: torch.Tensor) -> torch.Tensor:
        return (mel - self.mel_mean) / self.mel_std

    def denormalize_mel(self, mel: torch.Tensor) -> torch.Tensor:
        return mel * self.mel_std + self.mel_mean

    def _condition(self, inputs: torch.Tensor):
        """Encoder pass over (B, T, 5) [phoneme, frame_pos, speaker, style, lf0]."""
        if inputs.ndim != 3 or inputs.shape[-1] != 5:
            raise ValidationError(
                f"acoustic inputs must be (B, T, 5), got {tuple(inputs.shape)}"
            )
        phon = self.phoneme_embed(inputs[..., 0].long())
        pos = self.frame_pos_dense(inputs[..., 1:2])
        spk = self.speaker_embed(inputs[..., 2].long())
        style = self.style_embed(inputs[..., 3].long())
        lf0 = (inputs[..., 4:5] - self.lf0_mean) / self.lf0_std
        lf0 = self.lf0_dense(lf0)
        enc = self.encoder(self.encoder_proj(torch.cat([phon, pos, spk], dim=-1)))
        cond = torch.cat([enc, style, lf0], dim=-1)
        return cond, style

    def _apply_postnet(self, mel_pre: torch.Tensor) -> torch.Tensor:
        return mel_pre + self.postnet_out(self.postnet(self.postnet_in(mel_pre)))

    def forward_teacher(
        self,
        inputs: torch.Tensor,
        prev_mel: torch.Tensor,
        dropout_active: bool = True,
    ) -> dict:
        """Teacher-forced pass.

        prev_mel is the normalized target shifted right one frame with a
        zero go-frame (see shift_frames); output mels stay normalized.
        """
        cond, style = self._condition(inputs)
        if prev_mel.shape[:2] != inputs.shape[:2]:
            raise ValidationError(
                f"prev_mel {tuple(prev_mel.shape)} not aligned with "
                f"inputs {tuple(inputs.shape)}"
            )
        z = self.prenet(prev_mel, dropout_active=dropout_active)
        latent, _ = self.dat_gru(z)
        style_logits = self.style_classifier(self.reversal(latent))
        dec_out, _ = self.decoder(torch.cat([cond, latent, style], dim=-1))
        mel_pre = self.mel_proj(dec_out)
        mel_post = self._apply_postnet(mel_pre)
        return {
            "mel_pre": mel_pre,
            "mel_post": mel_post,
            "style_logits": style_logits,
            "latent": latent,
        }

    def infer(self, inputs: torch.Tensor, dropout_active: bool = False) -> torch.Tensor:
        """Free-running pass over (T, 5) or (B, T, 5) inputs.

        Frame t feeds the generated (pre-postnet) frame t - 1 back
        through the prenet; the first step consumes a zero go-frame.
        The postnet is bidirectional over the whole sequence, so it runs
        once at the end. Returns denormalized mel, matching the input
        rank.
        """
        squeeze = inputs.ndim == 2
        if squeeze:
            inputs = inputs.unsqueeze(0)
        self.eval()
        with torch.no_grad():
            cond, style = self._condition(inputs)
            b, t = inputs.shape[:2]
            prev = torch.zeros(b, 1, self.n_mels, dtype=cond.dtype, device=cond.device)
            h_dat = None
            h_dec = None
            frames = []
            for i in range(t):
                z = self.prenet(prev, dropout_active=dropout_active)
                latent, h_dat = self.dat_gru(z, h_dat)
                step = torch.cat(
                    [cond[:, i : i + 1], latent, style[:, i : i + 1]], dim=-1
                )
                out, h_dec = self.decoder(step, h_dec)
                prev = self.mel_proj(out)
                frames.append(prev)
            mel_pre = torch.cat(frames, dim=1)
            mel_post = self._apply_postnet(mel_pre)
            mel = self.denormalize_mel(mel_post)
        return mel.squeeze(0) if squeeze else mel

    def synthesize(self, inputs: np.ndarray, dropout_active: bool = False) -> np.ndarray:
        """numpy convenience wrapper around infer for one utterance."""
        x = torch.as_tensor(np.asarray(inputs, dtype=np.float32))
        return self.infer(x, dropout_active=dropout_active).numpy().astype(np.float32)

    def teacher_mel(self, inputs: np.ndarray, target_mel: np.ndarray) -> np.ndarray:
        """Teacher-forced mel for one utterance, raw in and raw out."""
        self.eval()
        x = torch.as_tensor(np.asarray(inputs, dtype=np.float32)).unsqueeze(0)
        tgt = self.normalize_mel(
            torch.as_tensor(np.asarray(target_mel, dtype=np.float32))
        ).unsqueeze(0)
        with torch.no_grad():
            out = self.forward_teacher(x, shift_frames(tgt), dropout_active=False)
            mel = self.denormalize_mel(out["mel_post"]).squeeze(0)
        return mel.numpy().astype(np.float32)

    def l2_term(self) -> torch.Tensor:
        return l2_penalty(self, self.l2_weight)


def shift_frames(mel: torch.Tensor) -> torch.Tensor:
    """Shift (B, T, D) frames right by one with a zero go-frame."""
    go = torch.zeros_like(mel[:, :1])
    return torch.cat([go, mel[:, :-1]], dim=1)


@dataclass
class AmLossBreakdown:
    total: torch.Tensor
    recon_pre: torch.Tensor
    recon_post: torch.Tensor
    l2_reg: torch.Tensor
    adv_ce: torch.Tensor

    def as_floats(self) -> dict:
        return {
            "total": float(self.total),
            "recon_pre": float(self.recon_pre),
            "recon_post": float(self.recon_post),
            "l2_reg": float(self.l2_reg),
            "adv_ce": float(self.adv_ce),
        }


def _masked_mse(pred, target, mask):
    if mask is None:
        return F.mse_loss(pred, target)
    weight = mask.to(pred.dtype).unsqueeze(-1)
    denom = weight.sum() * pred.shape[-1]
    if denom.item() == 0:
        raise ValidationError("mask selects no frames")
    return ((pred - target).pow(2) * weight).sum() / denom


def am_loss(
    outputs: dict,
    target_mel: torch.Tensor,
    style_targets: torch.Tensor,
    adv_weight: float,
    l2_term: torch.Tensor | None = None,
    mask: torch.Tensor | None = None,
) -> AmLossBreakdown:
    """Reconstruction + adversarial loss with an exact decomposition.

    target_mel is normalized like the outputs. style_targets is (B,)
    per utterance or (B, T) per frame. The adversarial term is the mean
    cross-entropy of the frame-level style logits; total is exactly
    recon_pre + recon_post + l2_reg + adv_weight * adv_ce.
    """
    mel_pre, mel_post = outputs["mel_pre"], outputs["mel_post"]
    logits = outputs["style_logits"]
    if target_mel.shape != mel_pre.shape:
        raise ValidationError(
            f"target mel {tuple(target_mel.shape)} does not match output "
            f"{tuple(mel_pre.shape)}"
        )
    recon_pre = _masked_mse(mel_pre, target_mel, mask)
    recon_post = _masked_mse(mel_post, target_mel, mask)

    if style_targets.ndim == 1:
        style_targets = style_targets.unsqueeze(1).expand(logits.shape[:2])
    flat_logits = logits.reshape(-1, logits.shape[-1])
    flat_targets = style_targets.reshape(-1).long()
    if mask is None:
        adv = F.cross_entropy(flat_logits, flat_targets)
    else:
        keep = mask.reshape(-1).bool()
        if not keep.any():
            raise ValidationError("mask selects no frames")
        adv = F.cross_entropy(flat_logits[keep], flat_targets[keep])

    if l2_term is None:
        l2_term = torch.zeros((), dtype=mel_pre.dtype, device=mel_pre.device)
    total = recon_pre + recon_post + l2_term + adv_weight * adv
    return AmLossBreakdown(
        total=total,
        recon_pre=recon_pre,
        recon_post=recon_post,
        l2_reg=l2_term,
        adv_ce=adv,
    )


def am_forward_teacher_forced(
    net: AcousticModel,
    inputs: torch.Tensor,
    prev_mel: torch.Tensor,
    dropout_active: bool = True,
) -> dict:
    return net.forward_teacher(inputs, prev_mel, dropout_active=dropout_active)


def am_infer(net: AcousticModel, inputs: torch.Tensor, dropout_active: bool = False):
    return net.infer(inputs, dropout_active=dropout_active)


def am_backward_with_grl(net: AcousticModel, loss: torch.Tensor) -> dict:
    """Run backward and hand back each parameter's gradient by name.

    The reversal layer sits inside the graph, so classifier parameters
    receive the plain adversarial gradient while everything upstream of
    the reversal receives the negated one.
    """
    net.zero_grad(set_to_none=True)
    loss.backward()
    return {
        name: (None if p.grad is None else p.grad.detach().clone())
        for name, p in net.named_parameters()
    }
