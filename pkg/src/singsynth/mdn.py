"""Mixture density network head shared by the duration and LF0 models.

The head maps encoder states to diagonal-covariance Gaussian mixture
parameters. The negative log-likelihood is computed in log space with
log-sum-exp over components; a naive probability-space sum is kept in
the test suite as the oracle, never here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn as nn

from .errors import ValidationError

VARIANCE_FLOOR = 1e-4


@dataclass
class GmmParams:
    """Mixture parameters with shapes (..., K), (..., K, D), (..., K, D)."""

    weights: torch.Tensor
    means: torch.Tensor
    variances: torch.Tensor

    @property
    def n_components(self) -> int:
        return self.weights.shape[-1]

    @property
    def dim(self) -> int:
        return self.means.shape[-1]


class MdnHead(nn.Module):
    """Linear heads producing mixture weights, means and variances.

    Weights go through a softmax; variances are exp of the predicted
    log-variance, clamped to the variance floor. With all-zero
    parameters this yields uniform weights, zero means and unit
    variances, a useful sanity anchor.
    """

    def __init__(
        self,
        in_dim: int,
        n_components: int,
        out_dim: int = 1,
        var_floor: float = VARIANCE_FLOOR,
    ):
        super().__init__()
        self.n_components = n_components
        self.out_dim = out_dim
        self.var_floor = var_floor
        self.weight_layer = nn.Linear(in_dim, n_components)
        self.mean_layer = nn.Linear(in_dim, n_components * out_dim)
        self.logvar_layer = nn.Linear(in_dim, n_components * out_dim)

    def forward(self, encoded: torch.Tensor) -> GmmParams:
        lead = encoded.shape[:-1]
        weights = torch.softmax(self.weight_layer(encoded), dim=-1)
        means = self.mean_layer(encoded).reshape(*lead, self.n_components, self.out_dim)
        logvar = self.logvar_layer(encoded).reshape(*lead, self.n_components, self.out_dim)
        variances = torch.clamp(torch.exp(logvar), min=self.var_floor)
        return GmmParams(weights=weights, means=means, variances=variances)


def mdn_forward(head: MdnHead, encoded: torch.Tensor) -> GmmParams:
    return head(encoded)


_LOG_2PI = math.log(2.0 * math.pi)


def mdn_nll(
    params: GmmParams, targets: torch.Tensor, mask: torch.Tensor | None = None
) -> torch.Tensor:
    """Mean negative log-likelihood of targets under the mixture.

    targets has shape (..., D) matching the leading dims of params.
    mask, when given, selects which timesteps count; the mean runs over
    the selected ones only.
    """
    if not torch.isfinite(targets).all():
        raise ValidationError("NLL targets contain non-finite values")
    if targets.shape != params.means.shape[:-2] + (params.dim,):
        raise ValidationError(
            f"target shape {tuple(targets.shape)} does not match mixture "
            f"shape {tuple(params.means.shape)}"
        )
    diff = targets.unsqueeze(-2) - params.means  # (..., K, D)
    comp_ll = -0.5 * (
        _LOG_2PI + torch.log(params.variances) + diff.pow(2) / params.variances
    ).sum(dim=-1)
    log_mix = torch.logsumexp(torch.log(params.weights) + comp_ll, dim=-1)
    if mask is not None:
        if mask.shape != log_mix.shape:
            raise ValidationError("mask shape does not match timestep shape")
        mask = mask.to(log_mix.dtype)
        denom = mask.sum()
        if denom.item() == 0:
            raise ValidationError("mask selects no timesteps")
        return -(log_mix * mask).sum() / denom
    return -log_mix.mean()


def mdn_sample(
    params: GmmParams,
    seed: int | None = None,
    mode: str = "stochastic",
    generator: torch.Generator | None = None,
) -> torch.Tensor:
    """Draw one value per timestep from the mixture.

    "stochastic" picks a component from the weights and adds Gaussian
    noise scaled by its standard deviation; "mean_of_max" returns the
    mean of the highest-weight component. Deterministic given a seed.
    """
    if mode not in ("stochastic", "mean_of_max"):
        raise ValidationError(f"unknown sampling mode {mode!r}")
    weights, means, variances = params.weights, params.means, params.variances
    lead = weights.shape[:-1]
    k, d = means.shape[-2], means.shape[-1]
    if mode == "mean_of_max":
        pick = weights.argmax(dim=-1)  # (...,)
    else:
        if generator is None:
            generator = torch.Generator()
            generator.manual_seed(0 if seed is None else int(seed))
        flat_w = weights.reshape(-1, k)
        pick = torch.multinomial(flat_w, 1, generator=generator).reshape(lead)
    gather = pick.reshape(*lead, 1, 1).expand(*lead, 1, d)
    mean = means.gather(-2, gather).squeeze(-2)
    if mode == "mean_of_max":
        return mean
    var = variances.gather(-2, gather).squeeze(-2)
    noise = torch.randn(mean.shape, generator=generator, dtype=mean.dtype)
    return mean + noise * torch.sqrt(var)
