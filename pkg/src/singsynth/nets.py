"""Shared encoder blocks for the three models."""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F


class Prenet(nn.Module):
    """Stacked bottleneck layers with always-on dropout.

    Dropout stays active at inference by default in the acoustic model;
    callers switch it per forward pass via dropout_active.
    """

    def __init__(self, in_dim: int, sizes=(256, 128), dropout: float = 0.5):
        super().__init__()
        dims = [in_dim, *sizes]
        self.layers = nn.ModuleList(
            nn.Linear(a, b) for a, b in zip(dims[:-1], dims[1:])
        )
        self.dropout = dropout
        self.out_dim = dims[-1]

    def forward(self, x: torch.Tensor, dropout_active: bool = True) -> torch.Tensor:
        for layer in self.layers:
            x = F.dropout(F.relu(layer(x)), p=self.dropout, training=dropout_active)
        return x


class Highway(nn.Module):
    def __init__(self, dim: int):
        super().__init__()
        self.transform = nn.Linear(dim, dim)
        self.gate = nn.Linear(dim, dim)
        # bias the gate toward carrying the input early in training
        self.gate.bias.data.fill_(-1.0)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        t = torch.sigmoid(self.gate(x))
        return t * F.relu(self.transform(x)) + (1.0 - t) * x


class _BankConv(nn.Module):
    """Conv1d with 'same' output length for any kernel size."""

    def __init__(self, in_dim: int, out_dim: int, kernel: int):
        super().__init__()
        self.kernel = kernel
        self.conv = nn.Conv1d(in_dim, out_dim, kernel)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        pad_left = (self.kernel - 1) // 2
        return self.conv(F.pad(x, (pad_left, self.kernel - 1 - pad_left)))


class CBHG(nn.Module):
    """Convolution bank + highway network + bidirectional GRU.

    The bank holds one convolution per kernel size 1..bank_size; their
    stacked outputs are max-pooled along time (width 2, stride 1),
    projected back down by two kernel-3 convolutions, added residually
    to the input, passed through highway layers and finally a
    bidirectional GRU. Input and output are (B, T, dim).
    """

    def __init__(self, dim: int, bank_size: int = 16, highway_layers: int = 4):
        super().__init__()
        if dim % 2 != 0:
            raise ValueError("CBHG dim must be even for the bidirectional GRU")
        self.bank = nn.ModuleList(
            _BankConv(dim, dim, k) for k in range(1, bank_size + 1)
        )
        self.bank_norm = nn.BatchNorm1d(dim * bank_size)
        self.proj1 = _BankConv(dim * bank_size, dim, 3)
        self.proj1_norm = nn.BatchNorm1d(dim)
        self.proj2 = _BankConv(dim, dim, 3)
        self.proj2_norm = nn.BatchNorm1d(dim)
        self.highways = nn.ModuleList(Highway(dim) for _ in range(highway_layers))
        self.gru = nn.GRU(dim, dim // 2, batch_first=True, bidirectional=True)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        y = x.transpose(1, 2)  # (B, dim, T)
        banked = torch.cat([F.relu(conv(y)) for conv in self.bank], dim=1)
        banked = self.bank_norm(banked)
        pooled = F.max_pool1d(F.pad(banked, (0, 1)), kernel_size=2, stride=1)
        h = F.relu(self.proj1_norm(self.proj1(pooled)))
        h = self.proj2_norm(self.proj2(h))
        h = h.transpose(1, 2) + x  # residual back at (B, T, dim)
        for highway in self.highways:
            h = highway(h)
        out, _ = self.gru(h)
        return out


def l2_penalty(module: nn.Module, coefficient: float) -> torch.Tensor:
    """Sum of squared non-embedding weight matrices times coefficient.

    Biases, norm parameters and embedding tables are excluded.
    """
    device = next(module.parameters()).device
    dtype = next(module.parameters()).dtype
    total = torch.zeros((), device=device, dtype=dtype)
    for name, param in module.named_parameters():
        if param.ndim < 2:
            continue
        owner = module
        parts = name.split(".")
        for p in parts[:-1]:
            owner = getattr(owner, p)
        if isinstance(owner, nn.Embedding):
            continue
        total = total + param.pow(2).sum()
    return coefficient * total
