"""Command-line entry points: ``synth``, ``train``, ``score``, ``eval``.

Every command takes ``--config`` and any number of ``--set section.key=value``
overrides, writes the resolved config next to its outputs, and exits with
0 on success, 1 on usage/config errors, 2 on runtime errors. Errors are
reported as a single JSON line on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import RunConfig, load_config
from .errors import ConfigError, MMAEError

log = logging.getLogger("mmae")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _fail(kind: str, message: str, code: int, **extra) -> int:
    print(json.dumps({"error": kind, "message": message, **extra}), file=sys.stderr)
    return code


def _config(args) -> RunConfig:
    sets = list(args.set or [])
    if args.seed is not None:
        sets.append(f"run.seed={args.seed}")
    return load_config(args.config, sets)


def cmd_synth(cfg: RunConfig, out: Path) -> int:
    from .data import SynthSpec, generate_synthetic

    d = cfg.data
    h, w = d.resolution
    if h != w:
        raise ConfigError("synthetic textures are square; set data.image_size to a single side",
                          ["data.image_size"])
    spec = SynthSpec(h, d.count_train, d.count_test_good, d.count_test_defect, d.texture, d.defect,
                     d.defect_min, d.defect_max, cfg.run.seed, d.channels)
    layout = generate_synthetic(spec, out, d.category)
    cfg.save(layout.base / "config.cfg")
    log.info("wrote synthetic dataset to %s", layout.base)
    return 0


def cmd_train(cfg: RunConfig, out: Path) -> int:
    from .data import DatasetLayout, load_images
    from .training import train

    layout = DatasetLayout(Path(cfg.data.root), cfg.data.category, "train")
    images = load_images(layout, cfg.data.resolution, cfg.data.channels, cfg.data.workers)
    log.info("training on %d images from %s", len(images), layout.base)
    state = train(images, cfg, out)
    log.info("final recon loss %.4f; checkpoint %s", state.history[-1][1] if state.history else float("nan"),
             out / "model.ckpt")
    return 0


def cmd_score(cfg: RunConfig, checkpoint: Path, split: str, out: Path) -> int:
    from .data import DatasetLayout
    from .model import load_model
    from .scoring import score_split

    if not checkpoint.is_file():
        raise ConfigError(f"checkpoint {checkpoint} does not exist", ["--checkpoint"])
    model, model_cfg, _ = load_model(checkpoint)
    if model_cfg.data.resolution != cfg.data.resolution or model_cfg.data.channels != cfg.data.channels:
        raise ConfigError("data.image_size/data.channels differ from the checkpoint's",
                          ["data.image_size", "data.channels"])
    layout = DatasetLayout(Path(cfg.data.root), cfg.data.category, split)
    records = score_split(model, layout, out, cfg.data.channels, cfg.score.smooth_sigma,
                          cfg.score.heatmaps, cfg.data.workers)
    cfg.save(out / "config.cfg")
    log.info("scored %d images into %s", len(records), out)
    return 0


def cmd_eval(cfg: RunConfig, maps_dir: Path, out: Path) -> int:
    from .evaluation import evaluate

    if not maps_dir.is_dir() or not any(maps_dir.iterdir()):
        raise MMAEError(f"maps directory {maps_dir} is missing or empty")
    e = cfg.eval
    metrics = evaluate(maps_dir, out, e.fpr_limit, e.max_thresholds, e.plot)
    cfg.save(out / "config.cfg")
    print(json.dumps({k: metrics[k] for k in ("pro_auc", "pixel_auc")}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", type=Path, help="INI-style run config (.cfg)")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    common.add_argument("--seed", type=int, help="shorthand for --set run.seed=N")
    common.add_argument("--out", type=Path, required=True, help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="mmae", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("synth", parents=[common], help="generate a synthetic dataset")
    sub.add_parser("train", parents=[common], help="train on data.root/data.category/train")
    sp = sub.add_parser("score", parents=[common], help="write anomaly maps for a split")
    sp.add_argument("--checkpoint", type=Path, required=True)
    sp.add_argument("--split", choices=("train", "test"), default="test")
    ep = sub.add_parser("eval", parents=[common], help="PRO-AUC and pixel AUC of scored maps")
    ep.add_argument("maps_dir", type=Path)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        return _fail("usage", str(exc), 1)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        cfg = _config(args)
        out = args.out
        if args.command == "synth":
            return cmd_synth(cfg, out)
        if args.command == "train":
            return cmd_train(cfg, out)
        if args.command == "score":
            return cmd_score(cfg, args.checkpoint, args.split, out)
        return cmd_eval(cfg, args.maps_dir, out)
    except ConfigError as exc:
        return _fail("config", str(exc), 1, keys=exc.keys)
    except MMAEError as exc:
        return _fail(type(exc).__name__, str(exc), 2)
    except OSError as exc:
        return _fail("io", str(exc), 2)


if __name__ == "__main__":
    sys.exit(main())
