"""Per-scale memory banks with cosine-softmax addressing and hard shrinkage.

The batched tensor functions (``address``, ``shrink``, ``entropy``) are what
the model runs. ``cosine_similarity``, ``soft_address``, ``hard_shrink`` and
``read_memory`` are single-query conveniences over the same code that accept
and return numpy arrays in float64.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
import torch
import torch.nn.functional as F
from torch import Tensor, nn

from .errors import NumericalDomainError


def _check_nonzero(norms: Tensor, what: str) -> None:
    if bool((norms == 0).any()):
        raise NumericalDomainError(f"cosine similarity undefined for zero-norm {what}")


def similarity(f: Tensor, slots: Tensor) -> Tensor:
    """Cosine similarity between each query row of ``f`` and each slot.

    ``f`` is ``B x D``, ``slots`` is ``n x D``; returns ``B x n``.
    """
    fn = f.norm(dim=-1, keepdim=True)
    mn = slots.norm(dim=-1, keepdim=True)
    _check_nonzero(fn, "query")
    _check_nonzero(mn, "memory slot")
    return (f / fn) @ (slots / mn).T


def shrink(w: Tensor, lam: float) -> Tensor:
    """Zero weights ``<= lam`` and renormalize the survivors to sum to one.

    Rows where nothing survives fall back to a one-hot on the first
    maximal weight.
    """
    keep = w > lam
    dead = ~keep.any(dim=-1, keepdim=True)
    if bool(dead.any()):
        onehot = F.one_hot(w.argmax(dim=-1), w.shape[-1]).bool()
        keep = torch.where(dead, onehot, keep)
    kept = w * keep
    return kept / kept.sum(dim=-1, keepdim=True)


def entropy(w: Tensor) -> Tensor:
    """Row-wise ``-sum w log w`` over the nonzero entries."""
    pos = w > 0
    logw = torch.log(torch.where(pos, w, torch.ones_like(w)))
    return -(w * logw).sum(dim=-1)


class Addressing(NamedTuple):
    read: Tensor  # B x D
    soft: Tensor  # B x n, before shrinkage
    weights: Tensor  # B x n, after shrinkage
    entropy: Tensor  # B


def address(f: Tensor, slots: Tensor, lam: float) -> Addressing:
    soft = torch.softmax(similarity(f, slots), dim=-1)
    w = shrink(soft, lam)
    return Addressing(w @ slots, soft, w, entropy(w))


class MemoryBank(nn.Module):
    """``n x D`` trainable slot matrix for one pyramid scale."""

    def __init__(self, num_slots: int, dim: int, shrink_threshold: float | None = None,
                 generator: torch.Generator | None = None):
        super().__init__()
        if num_slots < 1:
            raise ValueError("a memory bank needs at least one slot")
        if shrink_threshold is None:
            shrink_threshold = 1.0 / num_slots if num_slots > 1 else 0.0
        self.shrink_threshold = float(shrink_threshold)
        slots = torch.randn(num_slots, dim, generator=generator)
        self.slots = nn.Parameter(slots / slots.norm(dim=1, keepdim=True))

    def forward(self, f: Tensor) -> Addressing:
        return address(f, self.slots, self.shrink_threshold)


# -- single-query numpy API -----------------------------------------------

def _t(a) -> Tensor:
    return torch.as_tensor(np.asarray(a, dtype=np.float64))


def cosine_similarity(f, m) -> float:
    return float(similarity(_t(f)[None], _t(m)[None])[0, 0])


def soft_address(f, slots) -> np.ndarray:
    return torch.softmax(similarity(_t(f)[None], _t(slots)), dim=-1)[0].numpy()


def hard_shrink(w, lam: float) -> np.ndarray:
    return shrink(_t(w)[None], lam)[0].numpy()


def read_memory(f, slots, lam: float) -> tuple[np.ndarray, np.ndarray, float]:
    """Return ``(f_hat, weights, entropy)`` for one query against one bank."""
    out = address(_t(f)[None], _t(slots), lam)
    return out.read[0].numpy(), out.weights[0].numpy(), float(out.entropy[0])
