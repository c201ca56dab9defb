"""Dataset ingestion in the MVTec AD layout and a synthetic texture generator.

Layout::

    <root>/<category>/train/good/*.png
    <root>/<category>/test/good/*.png
    <root>/<category>/test/<defect>/*.png
    <root>/<category>/ground_truth/<defect>/<stem>_mask.png
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterator

import numpy as np
from PIL import Image

from .errors import ConfigError, IngestionError
from .pyramid import resize_area

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")


@dataclass(frozen=True)
class DatasetLayout:
    root: Path
    category: str
    split: str = "train"

    def __post_init__(self):
        if self.split not in ("train", "test"):
            raise ConfigError(f"split must be 'train' or 'test', got {self.split!r}", ["split"])
        object.__setattr__(self, "root", Path(self.root))

    @property
    def base(self) -> Path:
        return self.root / self.category


@dataclass
class Sample:
    image: np.ndarray  # H x W x C float32 in [0, 1]
    mask: np.ndarray | None  # H x W uint8 in {0, 1}; None for the train split
    path: Path
    defect: str  # "good" or the defect directory name


def _image_files(d: Path) -> list[Path]:
    return sorted(p for p in d.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


def _entries(layout: DatasetLayout) -> list[tuple[Path, Path | None, str]]:
    split_dir = layout.base / layout.split
    if not split_dir.is_dir():
        raise IngestionError(f"missing directory {split_dir}")
    out = []
    for defect_dir in sorted(p for p in split_dir.iterdir() if p.is_dir()):
        defect = defect_dir.name
        if layout.split == "train" and defect != "good":
            raise IngestionError(f"train split may only contain good images, found {defect_dir}")
        for img in _image_files(defect_dir):
            mask = None
            if layout.split == "test" and defect != "good":
                mask = layout.base / "ground_truth" / defect / f"{img.stem}_mask.png"
                if not mask.is_file():
                    raise IngestionError(f"missing ground-truth mask for {img}: expected {mask}")
            out.append((img, mask, defect))
    return out


def read_image(path: Path, channels: int, size: tuple[int, int] | None = None) -> np.ndarray:
    try:
        with Image.open(path) as im:
            im = im.convert("RGB" if channels == 3 else "L")
            a = np.asarray(im, dtype=np.float32) / 255.0
    except (OSError, ValueError) as exc:
        raise IngestionError(f"cannot decode image {path}: {exc}") from None
    a = np.atleast_3d(a)
    if size is not None and a.shape[:2] != tuple(size):
        a = np.clip(resize_area(a, size), 0.0, 1.0).astype(np.float32)
    return a


def read_mask(path: Path, size: tuple[int, int] | None = None) -> np.ndarray:
    try:
        with Image.open(path) as im:
            im = im.convert("L")
            if size is not None and im.size != (size[1], size[0]):
                im = im.resize((size[1], size[0]), Image.NEAREST)
            return (np.asarray(im, dtype=np.float32) / 255.0 >= 0.5).astype(np.uint8)
    except (OSError, ValueError) as exc:
        raise IngestionError(f"cannot decode mask {path}: {exc}") from None


def load_dataset(layout: DatasetLayout, base_resolution: tuple[int, int], channels: int = 3,
                 workers: int = 2) -> Iterator[Sample]:
    """Yield samples of one split in a fixed (sorted) order.

    Decoding runs on ``workers`` threads; results are delivered in order.
    Test images of the ``good`` class get an all-zero mask.
    """
    entries = _entries(layout)

    def decode(entry):
        img_path, mask_path, defect = entry
        img = read_image(img_path, channels, base_resolution)
        if layout.split == "train":
            mask = None
        elif mask_path is None:
            mask = np.zeros(img.shape[:2], np.uint8)
        else:
            mask = read_mask(mask_path, img.shape[:2])
        return Sample(img, mask, img_path, defect)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            yield from pool.map(decode, entries)
    else:
        yield from map(decode, entries)


def load_images(layout: DatasetLayout, base_resolution, channels: int = 3, workers: int = 2) -> np.ndarray:
    samples = list(load_dataset(layout, base_resolution, channels, workers))
    if not samples:
        raise ConfigError(f"no images under {layout.base / layout.split}", ["data.root"])
    return np.stack([s.image for s in samples])


# -- synthetic textures ---------------------------------------------------

@dataclass(frozen=True)
class SynthSpec:
    side: int = 64
    count_train: int = 200
    count_test_good: int = 20
    count_test_defect: int = 20
    texture: str = "blobs"
    defect: str = "patch"
    defect_min: int = 6
    defect_max: int = 14
    seed: int = 7
    channels: int = 3

    def __post_init__(self):
        bad = []
        if self.texture not in ("stripes", "checker", "blobs"):
            bad.append("texture")
        if self.defect not in ("patch", "scratch", "color-shift"):
            bad.append("defect")
        if not 0 < self.defect_min <= self.defect_max < self.side:
            bad += ["defect_min", "defect_max"]
        if self.channels not in (1, 3) or self.side < 8:
            bad.append("channels" if self.channels not in (1, 3) else "side")
        if min(self.count_train, self.count_test_good, self.count_test_defect) < 0:
            bad.append("counts")
        if bad:
            raise ConfigError("invalid synthetic spec fields: " + ", ".join(bad), bad)


_SPLIT_CODES = {"train": 1, "test_good": 2, "test_defect": 3}


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def _family(spec: SynthSpec) -> dict:
    """Texture parameters shared by every image of a dataset."""
    rng = _rng(spec.seed, 0)
    s = spec.side
    tint = rng.uniform(0.6, 1.0, 3) if spec.channels == 3 else np.ones(1)
    if spec.texture == "blobs":
        k = max(4, (s * s) // 300)
        return dict(tint=tint, centers=rng.uniform(0, s, (k, 2)), radii=rng.uniform(s / 20, s / 9, k),
                    amps=rng.choice([-1.0, 1.0], k) * rng.uniform(0.5, 1.0, k))
    if spec.texture == "stripes":
        return dict(tint=tint, angle=rng.uniform(0, np.pi), period=rng.uniform(s / 10, s / 5))
    return dict(tint=tint, period=int(rng.integers(max(2, s // 10), max(3, s // 5))))


def render_clean(spec: SynthSpec, rng: np.random.Generator) -> np.ndarray:
    """One defect-free ``side x side x channels`` uint8 texture sample."""
    fam = _family(spec)
    s = spec.side
    yy, xx = np.mgrid[0:s, 0:s].astype(np.float64) + 0.5
    if spec.texture == "blobs":
        shift = rng.uniform(-1.5, 1.5, fam["centers"].shape)
        amps = fam["amps"] * rng.uniform(0.9, 1.1, len(fam["amps"]))
        g = np.zeros((s, s))
        for (cy, cx), r, a in zip(fam["centers"] + shift, fam["radii"], amps):
            g += a * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * r * r))
        g = 0.5 + 0.3 * np.tanh(g)
    elif spec.texture == "stripes":
        th = fam["angle"] + rng.normal(0, 0.02)
        phase = rng.uniform(-0.3, 0.3)
        g = 0.5 + 0.3 * np.sin(2 * np.pi * (xx * np.cos(th) + yy * np.sin(th)) / fam["period"] + phase)
    else:
        p = fam["period"]
        oy, ox = rng.integers(0, 2, 2)
        g = np.where(((yy - 0.5 + oy) // p + (xx - 0.5 + ox) // p) % 2 == 0, 0.3, 0.7)
    g = g + rng.uniform(-0.04, 0.04)
    img = g[..., None] * fam["tint"] + (1 - fam["tint"]) * 0.5
    img = img + rng.normal(0, 0.01, img.shape)
    return np.round(np.clip(img, 0, 1) * 255).astype(np.uint8)


def _defect_region(spec: SynthSpec, rng: np.random.Generator) -> np.ndarray:
    s = spec.side
    lo, hi = spec.defect_min, spec.defect_max
    yy, xx = np.mgrid[0:s, 0:s]
    if spec.defect == "patch":
        h, w = rng.integers(lo, hi + 1, 2)
        y0, x0 = rng.integers(0, s - h + 1), rng.integers(0, s - w + 1)
        return (yy >= y0) & (yy < y0 + h) & (xx >= x0) & (xx < x0 + w)
    if spec.defect == "scratch":
        length = rng.uniform(2 * lo, 2 * hi)
        ang = rng.uniform(0, np.pi)
        d = np.array([np.sin(ang), np.cos(ang)]) * length / 2
        c = rng.uniform(length / 2, s - length / 2, 2) if length < s else np.full(2, s / 2)
        p0, p1 = c - d, c + d
        pts = np.stack([yy + 0.5, xx + 0.5], -1)
        seg = p1 - p0
        t = np.clip(((pts - p0) @ seg) / (seg @ seg), 0, 1)
        dist = np.linalg.norm(pts - (p0 + t[..., None] * seg), axis=-1)
        return dist <= rng.uniform(0.7, 1.5)
    ry, rx = rng.uniform(lo / 2, hi / 2, 2)
    cy, cx = rng.uniform(hi / 2, s - hi / 2, 2)
    return ((yy + 0.5 - cy) / ry) ** 2 + ((xx + 0.5 - cx) / rx) ** 2 <= 1


def apply_defect(clean: np.ndarray, spec: SynthSpec, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(defective image, binary mask)``.

    Every masked pixel moves by at least 90 gray levels in the affected
    channels, towards whichever end of the range is farther away, so it
    always differs from ``clean``; unmasked pixels are untouched.
    """
    region = _defect_region(spec, rng)
    if not region.any():
        region[spec.side // 2, spec.side // 2] = True
    delta = int(rng.integers(90, 128))
    out = clean.astype(np.int16)
    chans = [int(rng.integers(0, spec.channels))] if spec.defect == "color-shift" else range(spec.channels)
    for c in chans:
        v = out[..., c]
        v[region] = np.where(v[region] < 128, v[region] + delta, v[region] - delta)
    return out.astype(np.uint8), region.astype(np.uint8)


def render_sample(spec: SynthSpec, split: str, index: int) -> tuple[np.ndarray, np.ndarray | None, np.ndarray | None]:
    """``(clean, defective, mask)`` for one sample; the last two are None unless split is test_defect."""
    clean = render_clean(spec, _rng(spec.seed, _SPLIT_CODES[split], index, 0))
    if split != "test_defect":
        return clean, None, None
    bad, mask = apply_defect(clean, spec, _rng(spec.seed, _SPLIT_CODES[split], index, 1))
    return clean, bad, mask


def _save_png(a: np.ndarray, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(a[..., 0] if a.ndim == 3 and a.shape[2] == 1 else a).save(path, optimize=False)


def generate_synthetic(spec: SynthSpec, root, category: str | None = None) -> DatasetLayout:
    """Write a synthetic dataset in the MVTec AD layout and return its train layout."""
    category = category or spec.texture
    base = Path(root) / category
    defect = spec.defect
    files: list[Path] = []
    try:
        for i in range(spec.count_train):
            p = base / "train" / "good" / f"{i:03d}.png"
            _save_png(render_sample(spec, "train", i)[0], p)
            files.append(p)
        for i in range(spec.count_test_good):
            p = base / "test" / "good" / f"{i:03d}.png"
            _save_png(render_sample(spec, "test_good", i)[0], p)
            files.append(p)
        for i in range(spec.count_test_defect):
            _, bad, mask = render_sample(spec, "test_defect", i)
            p = base / "test" / defect / f"{i:03d}.png"
            m = base / "ground_truth" / defect / f"{i:03d}_mask.png"
            _save_png(bad, p)
            _save_png(mask * 255, m)
            files += [p, m]
        manifest = {
            "spec": asdict(spec),
            "category": category,
            "files": [
                {"path": f.relative_to(base).as_posix(), "sha256": hashlib.sha256(f.read_bytes()).hexdigest()}
                for f in files
            ],
        }
        (base / "dataset_manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    except OSError as exc:
        raise IngestionError(f"cannot write synthetic dataset under {base}: {exc}") from exc
    return DatasetLayout(Path(root), category, "train")
