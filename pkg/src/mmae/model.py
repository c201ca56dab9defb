"""The assembled network: pyramid -> encoders -> memories -> fuser -> decoder."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
import torch
from torch import Tensor, nn

from .codec import Decoder, DecoderSpec, Encoder, EncoderSpec, init_weights, load_checkpoint
from .config import RunConfig
from .errors import InputError
from .fuser import AttentionFuser
from .memory import Addressing, MemoryBank
from .pyramid import PyramidConfig, area_matrix


class ForwardOutput(NamedTuple):
    x_hat: Tensor  # B x C x H x W
    addressing: list[Addressing]  # one per scale
    attention: Tensor  # B x K


class MMAE(nn.Module):
    def __init__(self, pyramid: PyramidConfig, channels: int, latent_dim: int, memory_slots: int,
                 shrink_threshold: float | None = None, base_channels: int = 32,
                 target_spatial: int = 8, gate_hidden: int = 64):
        super().__init__()
        self.pyramid = pyramid
        self.channels = channels
        res = pyramid.resolutions
        h, w = pyramid.base_resolution
        for i, (hi, wi) in enumerate(res[1:], start=1):
            self.register_buffer(f"_rows{i}", torch.tensor(area_matrix(h, hi), dtype=torch.float32), persistent=False)
            self.register_buffer(f"_cols{i}", torch.tensor(area_matrix(w, wi), dtype=torch.float32), persistent=False)
        self.encoders = nn.ModuleList(
            Encoder(EncoderSpec(r, channels, latent_dim, base_channels, target_spatial)) for r in res
        )
        self.memory = nn.ModuleList(
            MemoryBank(memory_slots, latent_dim, shrink_threshold) for _ in res
        )
        self.fuser = AttentionFuser([latent_dim] * len(res), latent_dim, gate_hidden)
        self.decoder = Decoder(
            DecoderSpec(latent_dim, pyramid.base_resolution, channels, base_channels, target_spatial)
        )
        init_weights(self)

    @classmethod
    def from_config(cls, cfg: RunConfig, seed: int | None = None) -> "MMAE":
        """Build a freshly initialized model; the init is a function of ``seed`` only."""
        m = cfg.model
        pyr = PyramidConfig(m.levels, m.gamma, cfg.data.resolution)
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(cfg.run.seed if seed is None else seed)
            return cls(pyr, cfg.data.channels, m.latent_dim, m.memory_slots, m.lam,
                       m.base_channels, m.target_spatial, m.gate_hidden)

    @property
    def num_scales(self) -> int:
        return len(self.encoders)

    def levels(self, x: Tensor) -> list[Tensor]:
        """Area-resampled pyramid of a ``B x C x H x W`` batch, largest first."""
        out = [x]
        for i in range(1, self.num_scales):
            rows, cols = getattr(self, f"_rows{i}"), getattr(self, f"_cols{i}")
            out.append(rows @ x @ cols.T)
        return out

    def forward(self, x: Tensor) -> ForwardOutput:
        expected = (self.channels, *self.pyramid.base_resolution)
        if x.dim() != 4 or tuple(x.shape[1:]) != expected:
            raise InputError(f"model expects B x {expected}, got {tuple(x.shape)}")
        reads = [mem(enc(lvl)) for lvl, enc, mem in zip(self.levels(x), self.encoders, self.memory)]
        fused, attn = self.fuser([r.read for r in reads])
        return ForwardOutput(self.decoder(fused), reads, attn)

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: v.detach().cpu().numpy() for k, v in self.state_dict().items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        ref = self.state_dict()
        self.load_state_dict({k: torch.from_numpy(np.array(arrays[k])).to(ref[k].dtype) for k in ref})


def to_tensor(images) -> Tensor:
    """``N x H x W x C`` (or a single ``H x W x C``) array -> ``N x C x H x W`` float32 tensor."""
    a = np.asarray(images, dtype=np.float32)
    if a.ndim == 3:
        a = a[None]
    return torch.from_numpy(np.ascontiguousarray(a.transpose(0, 3, 1, 2)))


def to_images(t: Tensor) -> np.ndarray:
    return t.detach().cpu().numpy().transpose(0, 2, 3, 1)


def load_model(path) -> tuple[MMAE, RunConfig, dict]:
    """Rebuild a model from a checkpoint written by the training module."""
    from .config import load_config

    arrays, manifest = load_checkpoint(path)
    sets = [f"{sec}.{k}={v}" for sec, vals in manifest["config"].items() for k, v in vals.items()]
    cfg = load_config(overrides=sets)
    model = MMAE.from_config(cfg)
    model.load_arrays(arrays)
    return model, cfg, manifest
