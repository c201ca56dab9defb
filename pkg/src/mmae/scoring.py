"""Per-pixel anomaly maps from reconstruction error, and their file format."""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
from PIL import Image
from scipy.ndimage import gaussian_filter

from .data import DatasetLayout, load_dataset
from .errors import InputError
from .model import MMAE
from .training import reconstruct

MAGIC = b"AMAP"
_HEADER = struct.Struct("<4sII")


def error_map(x: np.ndarray, x_hat: np.ndarray, smooth_sigma: float = 0.0) -> np.ndarray:
    """Channel-summed squared error; ``x`` and ``x_hat`` are ``[N x] H x W x C``."""
    if x.shape != x_hat.shape:
        raise InputError(f"shape mismatch {x.shape} vs {x_hat.shape}")
    diff = np.asarray(x, np.float64) - np.asarray(x_hat, np.float64)
    m = np.square(diff).sum(axis=-1)
    if smooth_sigma > 0:
        axes = (m.ndim - 2, m.ndim - 1)
        m = gaussian_filter(m, smooth_sigma, axes=axes)
    return m.astype(np.float32)


def anomaly_map(x: np.ndarray, model: MMAE, smooth_sigma: float = 0.0,
                batch_size: int = 32) -> tuple[np.ndarray, np.ndarray]:
    """Anomaly maps (``[N x] H x W``) and scale attentions (``[N x] K``) for images ``x``."""
    single = x.ndim == 3
    xs = x[None] if single else x
    x_hat, attn = reconstruct(model, xs, batch_size)
    maps = error_map(xs, x_hat, smooth_sigma)
    return (maps[0], attn[0]) if single else (maps, attn)


def binarize(scores: np.ndarray, e: float) -> np.ndarray:
    """``1`` where the score strictly exceeds ``e``."""
    return (np.asarray(scores) > e).astype(np.uint8)


def write_map(path, scores: np.ndarray) -> None:
    """Write ``scores`` as a ``AMAP`` header (magic, H, W) plus little-endian float32 rows."""
    scores = np.ascontiguousarray(scores, dtype="<f4")
    if scores.ndim != 2:
        raise InputError(f"anomaly map must be 2-D, got {scores.shape}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, *scores.shape))
        fh.write(scores.tobytes(order="C"))


def read_map(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    magic, h, w = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise InputError(f"{path} is not an anomaly map (bad magic {magic!r})")
    body = raw[_HEADER.size:]
    if len(body) != 4 * h * w:
        raise InputError(f"{path} is truncated: expected {h}x{w} floats")
    return np.frombuffer(body, dtype="<f4").reshape(h, w).astype(np.float32)


def write_heatmap(path, scores: np.ndarray, vmax: float) -> None:
    scale = 255.0 / vmax if vmax > 0 else 0.0
    img = np.clip(np.round(scores * scale), 0, 255).astype(np.uint8)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(img).save(path)


def score_split(model: MMAE, layout: DatasetLayout, out_dir, channels: int = 3,
                smooth_sigma: float = 0.0, heatmaps: bool = True, workers: int = 2) -> list[dict]:
    """Score every image of ``layout`` and write maps plus an ``index.json``.

    Each index record carries the map path (relative to ``out_dir``), the
    ground-truth mask path or ``null`` for defect-free images, the defect
    type and the per-image scale attention.
    """
    out_dir = Path(out_dir)
    samples = list(load_dataset(layout, model.pyramid.base_resolution, channels, workers))
    if not samples:
        raise InputError(f"no images to score under {layout.base / layout.split}")
    images = np.stack([s.image for s in samples])
    maps, attn = anomaly_map(images, model, smooth_sigma)
    vmax = float(maps.max())
    records = []
    for s, m, a in zip(samples, maps, attn):
        rel = Path(s.defect) / f"{s.path.stem}.amap"
        write_map(out_dir / rel, m)
        if heatmaps:
            write_heatmap(out_dir / "heatmaps" / s.defect / f"{s.path.stem}.png", m, vmax)
        mask = None
        if layout.split == "test" and s.defect != "good":
            mask = str(layout.base / "ground_truth" / s.defect / f"{s.path.stem}_mask.png")
        records.append({
            "id": f"{s.defect}/{s.path.stem}",
            "image": str(s.path),
            "map": rel.as_posix(),
            "mask": mask,
            "defect": s.defect,
            "scale_attention": [float(v) for v in a],
        })
    (out_dir / "index.json").write_text(json.dumps({"split": layout.split, "category": layout.category,
                                                     "records": records}, indent=2))
    return records
