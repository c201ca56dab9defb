"""Multi-resolution image pyramid with area-averaging resampling."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConfigError, InputError

MIN_SIDE = 4


@dataclass(frozen=True)
class PyramidConfig:
    """Pyramid schedule: ``levels`` scales, each ``gamma`` times the previous.

    Level ``i`` (0-based) has resolution
    ``(round(H * gamma**i), round(W * gamma**i))``.
    """

    levels: int
    gamma: float
    base_resolution: tuple[int, int]

    def __post_init__(self):
        object.__setattr__(self, "base_resolution", tuple(int(v) for v in self.base_resolution))
        if self.levels < 1:
            raise ConfigError(f"levels must be >= 1, got {self.levels}", ["model.levels"])
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError(f"gamma must lie in (0, 1), got {self.gamma}", ["model.gamma"])
        res = self.resolutions
        for i, (h, w) in enumerate(res):
            if min(h, w) < MIN_SIDE:
                raise ConfigError(
                    f"pyramid level {i} has resolution {h}x{w}; every side must be >= {MIN_SIDE}",
                    ["model.levels", "model.gamma", "data.image_size"],
                )
            if i and not (h < res[i - 1][0] and w < res[i - 1][1]):
                raise ConfigError(
                    f"pyramid level {i} ({h}x{w}) is not smaller than level {i - 1}",
                    ["model.gamma"],
                )

    @property
    def resolutions(self) -> list[tuple[int, int]]:
        h, w = self.base_resolution
        return [
            (_round_half_up(h * self.gamma**i), _round_half_up(w * self.gamma**i))
            for i in range(self.levels)
        ]


def _round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


@lru_cache(maxsize=64)
def area_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Row-stochastic ``(n_out, n_in)`` matrix for 1-D box resampling.

    Output cell ``k`` covers the input interval ``[k*s, (k+1)*s)`` with
    ``s = n_in / n_out``; each input cell contributes its overlap length.
    Rows sum to one, so constants are preserved and outputs stay inside
    the input range.
    """
    if n_in < 1 or n_out < 1:
        raise ValueError("sizes must be positive")
    scale = n_in / n_out
    a = np.zeros((n_out, n_in), dtype=np.float64)
    for k in range(n_out):
        lo, hi = k * scale, (k + 1) * scale
        j0, j1 = int(math.floor(lo)), min(int(math.ceil(hi)), n_in)
        for j in range(j0, j1):
            a[k, j] = min(hi, j + 1) - max(lo, j)
        a[k] /= a[k].sum()
    a.setflags(write=False)
    return a


def resize_area(x: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    """Box-resample an ``H x W x C`` (or ``H x W``) grid to ``size``."""
    h, w = x.shape[:2]
    if (h, w) == tuple(size):
        return x.copy()
    ah = area_matrix(h, size[0])
    aw = area_matrix(w, size[1])
    out = np.einsum("ih,hwc->iwc", ah, np.atleast_3d(x).astype(np.float64))
    out = np.einsum("jw,iwc->ijc", aw, out)
    if x.ndim == 2:
        out = out[..., 0]
    return out.astype(x.dtype if np.issubdtype(x.dtype, np.floating) else np.float64)


def build_pyramid(x: np.ndarray, cfg: PyramidConfig) -> list[np.ndarray]:
    """Return the ``cfg.levels`` resampled copies of ``x``, largest first.

    ``x`` is an ``H x W x C`` array with values in [0, 1]. The first level
    is ``x`` itself (not a copy).
    """
    if x.ndim != 3:
        raise InputError(f"expected an H x W x C image, got shape {x.shape}")
    if tuple(x.shape[:2]) != cfg.base_resolution:
        raise ConfigError(
            f"image resolution {x.shape[:2]} does not match base_resolution {cfg.base_resolution}",
            ["data.image_size"],
        )
    return [x] + [resize_area(x, r) for r in cfg.resolutions[1:]]
