"""Per-region-overlap (PRO) curve, its normalized area, and pixel ROC-AUC."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import ndimage
from scipy.stats import rankdata

from .errors import EvaluationError

EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


def connected_components(mask: np.ndarray) -> list[np.ndarray]:
    """8-connected components of the positive pixels, as arrays of flat indices."""
    labels, n = ndimage.label(np.asarray(mask) > 0, structure=EIGHT_CONNECTED)
    if n == 0:
        return []
    flat = labels.ravel()
    order = np.argsort(flat, kind="stable")
    bounds = np.searchsorted(flat[order], np.arange(1, n + 2))
    return [order[bounds[i]:bounds[i + 1]] for i in range(n)]


def _check_aligned(maps, gts):
    if len(maps) != len(gts):
        raise EvaluationError(f"{len(maps)} maps but {len(gts)} ground-truth masks")
    for i, (m, g) in enumerate(zip(maps, gts)):
        if np.shape(m) != np.shape(g):
            raise EvaluationError(f"map {i} has shape {np.shape(m)} but its mask has {np.shape(g)}")


def _pooled(maps, gts):
    """Flattened scores and labels over the dataset, plus each region's sorted scores."""
    _check_aligned(maps, gts)
    scores = np.concatenate([np.asarray(m, np.float64).ravel() for m in maps])
    labels = np.concatenate([(np.asarray(g) > 0).ravel() for g in gts])
    regions = []
    offset = 0
    for g in gts:
        regions += [np.sort(scores[offset + comp]) for comp in connected_components(g)]
        offset += np.size(g)
    if not regions:
        raise EvaluationError("no ground-truth regions in the evaluation set")
    n_neg = int((~labels).sum())
    if n_neg == 0:
        raise EvaluationError("no negative pixels in the evaluation set")
    return scores, labels, regions, n_neg


def _mean_overlap(regions, thresholds: np.ndarray) -> np.ndarray:
    """Mean over regions of the fraction of pixels scoring above each threshold."""
    total = np.zeros(len(thresholds))
    for r in regions:
        total += (len(r) - np.searchsorted(r, thresholds, side="right")) / len(r)
    return total / len(regions)


def pro_at_threshold(maps: Sequence[np.ndarray], gts: Sequence[np.ndarray], t: float) -> tuple[float, float]:
    """Mean region overlap and pooled false-positive rate of ``score > t``."""
    scores, labels, regions, n_neg = _pooled(maps, gts)
    pred = scores > t
    return float(_mean_overlap(regions, np.array([t]))[0]), float((pred & ~labels).sum() / n_neg)


@dataclass
class PROCurve:
    thresholds: np.ndarray  # decreasing, ending in -inf
    fpr: np.ndarray  # non-decreasing
    pro: np.ndarray

    def area(self, fpr_limit: float = 0.3) -> float:
        """Trapezoid area under the curve on ``[0, fpr_limit]``, divided by ``fpr_limit``."""
        if not 0 < fpr_limit <= 1:
            raise EvaluationError(f"fpr_limit must lie in (0, 1], got {fpr_limit}")
        x, y = self.fpr, self.pro
        cut = int(np.searchsorted(x, fpr_limit, side="right"))
        xs, ys = x[:cut], y[:cut]
        if cut < len(x) and xs[-1] < fpr_limit:
            frac = (fpr_limit - x[cut - 1]) / (x[cut] - x[cut - 1])
            xs = np.append(xs, fpr_limit)
            ys = np.append(ys, y[cut - 1] + frac * (y[cut] - y[cut - 1]))
        return float(np.sum(np.diff(xs) * (ys[1:] + ys[:-1]) / 2) / fpr_limit)


def pro_curve(maps, gts, max_thresholds: int = 5000) -> PROCurve:
    """PRO curve over all distinct scores, or ``max_thresholds`` quantiles of them.

    Thresholds run from the highest score (nothing predicted) down to
    ``-inf`` (everything predicted), so the curve spans fpr 0 to 1.
    """
    scores, labels, regions, n_neg = _pooled(maps, gts)
    s_sorted = np.sort(scores)
    distinct = np.unique(s_sorted)
    if len(distinct) > max_thresholds:
        distinct = np.unique(np.quantile(s_sorted, np.linspace(0, 1, max_thresholds), method="nearest"))
    thr = np.append(distinct[::-1], -np.inf)
    negatives = np.sort(scores[~labels])
    fp = len(negatives) - np.searchsorted(negatives, thr, side="right")
    return PROCurve(thr, fp / n_neg, _mean_overlap(regions, thr))


def pro_auc(maps, gts, fpr_limit: float = 0.3, max_thresholds: int = 5000) -> float:
    return pro_curve(maps, gts, max_thresholds).area(fpr_limit)


def pixel_roc_auc(maps, gts) -> float:
    """Pooled pixel ROC-AUC via the rank-sum statistic; ties count one half."""
    _check_aligned(maps, gts)
    scores = np.concatenate([np.asarray(m, np.float64).ravel() for m in maps])
    labels = np.concatenate([(np.asarray(g) > 0).ravel() for g in gts])
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise EvaluationError("pixel ROC-AUC needs both positive and negative pixels")
    ranks = rankdata(scores)
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


# -- report ----------------------------------------------------------------

def load_scored(maps_dir) -> list[tuple[dict, np.ndarray, np.ndarray]]:
    """Read ``index.json`` written by scoring; returns ``(record, map, mask)`` triples."""
    from .data import read_mask
    from .scoring import read_map

    maps_dir = Path(maps_dir)
    index = maps_dir / "index.json"
    if not index.is_file():
        raise EvaluationError(f"no scored maps in {maps_dir} (missing index.json)")
    records = json.loads(index.read_text())["records"]
    if not records:
        raise EvaluationError(f"no scored maps in {maps_dir}")
    out = []
    for rec in records:
        m = read_map(maps_dir / rec["map"])
        g = np.zeros(m.shape, np.uint8) if rec["mask"] is None else read_mask(Path(rec["mask"]), m.shape)
        out.append((rec, m, g))
    return out


def evaluate(maps_dir, out_dir, fpr_limit: float = 0.3, max_thresholds: int = 5000, plot: bool = False) -> dict:
    """Write ``pro_curve.csv`` and ``metrics.json`` for a directory of scored maps."""
    scored = load_scored(maps_dir)
    maps = [m for _, m, _ in scored]
    gts = [g for _, _, g in scored]
    curve = pro_curve(maps, gts, max_thresholds)
    metrics = {
        "pro_auc": curve.area(fpr_limit),
        "pixel_auc": pixel_roc_auc(maps, gts),
        "fpr_limit": fpr_limit,
        "num_images": len(maps),
        "per_category": {},
    }
    good = [i for i, (r, _, _) in enumerate(scored) if r["defect"] == "good"]
    for defect in sorted({r["defect"] for r, _, _ in scored} - {"good"}):
        idx = good + [i for i, (r, _, _) in enumerate(scored) if r["defect"] == defect]
        sub_m, sub_g = [maps[i] for i in idx], [gts[i] for i in idx]
        metrics["per_category"][defect] = {
            "pro_auc": pro_auc(sub_m, sub_g, fpr_limit, max_thresholds),
            "pixel_auc": pixel_roc_auc(sub_m, sub_g),
            "num_images": len(idx),
        }
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "pro_curve.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["threshold", "fpr", "pro"])
        for row in zip(curve.thresholds, curve.fpr, curve.pro):
            w.writerow([repr(float(v)) for v in row])
    (out_dir / "metrics.json").write_text(json.dumps(metrics, indent=2))
    if plot:
        _plot(curve, fpr_limit, out_dir / "pro_curve.png")
    return metrics


def _plot(curve: PROCurve, fpr_limit: float, path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(4, 4))
    ax.plot(curve.fpr, curve.pro)
    ax.axvline(fpr_limit, ls="--", c="grey")
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("per-region overlap")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
