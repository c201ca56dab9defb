"""Per-scale encoders, the shared decoder, and the checkpoint container.

Layer vocabulary: 3x3 stride-2 convolutions for downsampling, 2x pixel
shuffle for upsampling, LeakyReLU(0.2) activations, a linear head to and
from the latent vector. No normalization layers, no skip connections.
"""

from __future__ import annotations

import io
import json
import math
import zipfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from torch import Tensor, nn

from .errors import ConfigError, InputError

LEAK = 0.2


def _stage_count(side: int, target: int, what: str) -> int:
    ratio = side / target
    stages = round(math.log2(ratio)) if ratio >= 1 else -1
    if stages < 0 or target * 2**stages != side:
        raise ConfigError(
            f"{what} side {side} is not a power-of-two multiple of target_spatial {target}",
            ["data.image_size", "model.gamma", "model.levels", "model.target_spatial"],
        )
    return stages


@dataclass(frozen=True)
class EncoderSpec:
    input_resolution: tuple[int, int]
    in_channels: int
    latent_dim: int
    base_channels: int = 32
    target_spatial: int = 8
    channel_schedule: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        h, w = self.input_resolution
        n = _stage_count(min(h, w), self.target_spatial, "encoder input")
        if h % 2**n or w % 2**n:
            raise ConfigError(f"encoder input {h}x{w} not divisible by {2**n}", ["data.image_size"])
        sched = tuple(self.base_channels * 2**s for s in range(n))
        object.__setattr__(self, "channel_schedule", sched)

    @property
    def num_stages(self) -> int:
        return len(self.channel_schedule)

    @property
    def flat_size(self) -> int:
        h, w = self.input_resolution
        c = self.channel_schedule[-1] if self.channel_schedule else self.in_channels
        return (h >> self.num_stages) * (w >> self.num_stages) * c


@dataclass(frozen=True)
class DecoderSpec:
    latent_dim: int
    output_resolution: tuple[int, int]
    out_channels: int
    base_channels: int = 32
    seed_spatial: int = 8
    channel_schedule: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        h, w = self.output_resolution
        n = _stage_count(min(h, w), self.seed_spatial, "decoder output")
        if h % 2**n or w % 2**n:
            raise ConfigError(f"decoder output {h}x{w} not divisible by {2**n}", ["data.image_size"])
        # mirror of the largest encoder: seed at its deepest width, halve per stage
        enc = [self.base_channels * 2**s for s in range(n)]
        sched = tuple(reversed(enc[:-1])) + (self.base_channels,) if n else ()
        object.__setattr__(self, "channel_schedule", sched)

    @property
    def num_stages(self) -> int:
        return len(self.channel_schedule)

    @property
    def seed_channels(self) -> int:
        return self.base_channels * 2 ** (self.num_stages - 1) if self.num_stages else self.base_channels

    @property
    def seed_shape(self) -> tuple[int, int, int]:
        h, w = self.output_resolution
        n = self.num_stages
        return self.seed_channels, h >> n, w >> n


def init_weights(module: nn.Module) -> None:
    """Fan-in scaled uniform weights, zero biases."""
    gain = math.sqrt(2.0 / (1 + LEAK**2))
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.Linear)):
            fan_in = m.weight[0].numel()
            bound = gain * math.sqrt(3.0 / fan_in)
            with torch.no_grad():
                m.weight.uniform_(-bound, bound)
                if m.bias is not None:
                    m.bias.zero_()


class Encoder(nn.Module):
    """Maps a ``B x C x h x w`` batch to ``B x latent_dim`` codes."""

    def __init__(self, spec: EncoderSpec):
        super().__init__()
        self.spec = spec
        layers: list[nn.Module] = []
        c_in = spec.in_channels
        for c_out in spec.channel_schedule:
            layers += [nn.Conv2d(c_in, c_out, 3, stride=2, padding=1), nn.LeakyReLU(LEAK)]
            c_in = c_out
        self.features = nn.Sequential(*layers)
        self.head = nn.Linear(spec.flat_size, spec.latent_dim)

    def forward(self, x: Tensor) -> Tensor:
        expected = (self.spec.in_channels, *self.spec.input_resolution)
        if x.dim() != 4 or tuple(x.shape[1:]) != expected:
            raise InputError(f"encoder expects B x {expected}, got {tuple(x.shape)}")
        return self.head(self.features(x).flatten(1))


class Decoder(nn.Module):
    """Maps ``B x latent_dim`` codes to ``B x C x H x W`` images in (0, 1)."""

    def __init__(self, spec: DecoderSpec):
        super().__init__()
        self.spec = spec
        c, h, w = spec.seed_shape
        self.seed = nn.Linear(spec.latent_dim, c * h * w)
        layers: list[nn.Module] = []
        c_in = c
        for c_out in spec.channel_schedule:
            layers += [
                nn.Conv2d(c_in, 4 * c_out, 3, padding=1),
                nn.PixelShuffle(2),
                nn.LeakyReLU(LEAK),
            ]
            c_in = c_out
        self.upsample = nn.Sequential(*layers)
        self.out = nn.Conv2d(c_in, spec.out_channels, 3, padding=1)

    def forward(self, z: Tensor) -> Tensor:
        if z.dim() != 2 or z.shape[1] != self.spec.latent_dim:
            raise InputError(f"decoder expects B x {self.spec.latent_dim}, got {tuple(z.shape)}")
        h = F.leaky_relu(self.seed(z), LEAK).view(z.shape[0], *self.spec.seed_shape)
        return torch.sigmoid(self.out(self.upsample(h)))


# -- checkpoint container -------------------------------------------------

MANIFEST = "__manifest__.json"


def save_checkpoint(path: str | Path, arrays: dict[str, np.ndarray], manifest: dict) -> None:
    """Write named arrays plus a JSON manifest to a single zip container.

    Each array is stored as an ``.npy`` member with an explicit
    little-endian dtype in C order; the manifest also lists every array's
    shape and dtype.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    index = {}
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        for name, arr in arrays.items():
            arr = np.asarray(arr, order="C")
            arr = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
            buf = io.BytesIO()
            np.save(buf, arr, allow_pickle=False)
            zf.writestr(name + ".npy", buf.getvalue())
            index[name] = {"shape": list(arr.shape), "dtype": arr.dtype.str}
        zf.writestr(MANIFEST, json.dumps({**manifest, "arrays": index}, indent=2, sort_keys=True))


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    arrays = {}
    with zipfile.ZipFile(path) as zf:
        manifest = json.loads(zf.read(MANIFEST))
        for name in manifest["arrays"]:
            with zf.open(name + ".npy") as fh:
                arrays[name] = np.load(io.BytesIO(fh.read()), allow_pickle=False)
    return arrays, manifest
