"""Attention fusion of the per-scale memory reads into one decoder latent."""

from __future__ import annotations

import math
from typing import Sequence

import torch
from torch import Tensor, nn

from .codec import LEAK
from .errors import InputError


class AttentionFuser(nn.Module):
    """Softmax-gated convex blend of linearly projected per-scale latents.

    Each scale ``i`` is projected to the common width with ``proj[i]``
    (shape ``dim x in_dims[i]``). A gate shared by all scales scores each
    projection; the softmax of the scores over scales weights the blend.
    """

    def __init__(self, in_dims: Sequence[int], dim: int, hidden: int = 64):
        super().__init__()
        self.in_dims = list(in_dims)
        self.proj = nn.ParameterList(
            nn.Parameter(torch.empty(dim, d).uniform_(-math.sqrt(3.0 / d), math.sqrt(3.0 / d)))
            for d in self.in_dims
        )
        self.gate = nn.Sequential(nn.Linear(dim, hidden), nn.LeakyReLU(LEAK), nn.Linear(hidden, 1))

    def project(self, f_hats: Sequence[Tensor]) -> Tensor:
        """Stack projected latents into ``B x K x dim``."""
        if len(f_hats) != len(self.proj):
            raise InputError(f"fuser configured for {len(self.proj)} scales, got {len(f_hats)}")
        out = []
        for f, p, d in zip(f_hats, self.proj, self.in_dims):
            if f.shape[-1] != d:
                raise InputError(f"latent width {f.shape[-1]} does not match declared {d}")
            out.append(f @ p.T)
        return torch.stack(out, dim=1)

    def forward(self, f_hats: Sequence[Tensor]) -> tuple[Tensor, Tensor]:
        """Return ``(fused B x dim, attention B x K)``."""
        z = self.project(f_hats)
        attn = torch.softmax(self.gate(z).squeeze(-1), dim=1)
        return (attn.unsqueeze(-1) * z).sum(dim=1), attn
