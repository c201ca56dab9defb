"""Run configuration: typed sections read from an INI-style ``.cfg`` file.

Defaults reproduce the full-scale MVTec AD setting. The shipped
``desk.cfg`` shrinks everything to run on a single CPU.
"""

import configparser
import dataclasses
import io
import typing
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import ConfigError


@dataclass
class RunSection:
    seed: int = 0


@dataclass
class DataSection:
    root: str = "data"
    category: str = "synthetic"
    image_size: str = "256"
    channels: int = 3
    texture: str = "blobs"
    defect: str = "patch"
    count_train: int = 200
    count_test_good: int = 20
    count_test_defect: int = 20
    defect_min: int = 6
    defect_max: int = 14
    workers: int = 2

    @property
    def resolution(self) -> tuple[int, int]:
        parts = [int(p) for p in self.image_size.replace("x", ",").split(",") if p.strip()]
        return (parts[0], parts[0]) if len(parts) == 1 else (parts[0], parts[1])


@dataclass
class ModelSection:
    levels: int = 5
    gamma: float = 0.5
    latent_dim: int = 1024
    memory_slots: int = 60
    base_channels: int = 32
    target_spatial: int = 8
    shrink_threshold: str = "auto"
    gate_hidden: int = 64

    @property
    def lam(self) -> float:
        if self.shrink_threshold == "auto":
            return 1.0 / self.memory_slots if self.memory_slots > 1 else 0.0
        return float(self.shrink_threshold)


@dataclass
class TrainSection:
    epochs: int = 2000
    batch_size: int = 64
    learning_rate: float = 1e-4
    weight_decay: float = 1e-5
    alpha: float = 2e-4
    checkpoint_every: int = 100


@dataclass
class ScoreSection:
    smooth_sigma: float = 0.0
    heatmaps: bool = True


@dataclass
class EvalSection:
    fpr_limit: float = 0.3
    max_thresholds: int = 5000
    plot: bool = False


@dataclass
class RunConfig:
    run: RunSection = field(default_factory=RunSection)
    data: DataSection = field(default_factory=DataSection)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainSection = field(default_factory=TrainSection)
    score: ScoreSection = field(default_factory=ScoreSection)
    eval: EvalSection = field(default_factory=EvalSection)

    def sections(self):
        for f in dataclasses.fields(self):
            yield f.name, getattr(self, f.name)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def dumps(self) -> str:
        cp = configparser.ConfigParser()
        for name, sec in self.sections():
            cp[name] = {k: _format(v) for k, v in dataclasses.asdict(sec).items()}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())

    def validate(self) -> "RunConfig":
        bad = []
        positive = {
            "data.channels": self.data.channels, "data.count_train": self.data.count_train,
            "model.levels": self.model.levels, "model.latent_dim": self.model.latent_dim,
            "model.memory_slots": self.model.memory_slots, "model.base_channels": self.model.base_channels,
            "model.target_spatial": self.model.target_spatial, "model.gate_hidden": self.model.gate_hidden,
            "train.batch_size": self.train.batch_size, "train.learning_rate": self.train.learning_rate,
            "train.checkpoint_every": self.train.checkpoint_every, "eval.max_thresholds": self.eval.max_thresholds,
        }
        bad += [k for k, v in positive.items() if not v > 0]
        nonneg = {
            "train.epochs": self.train.epochs, "train.weight_decay": self.train.weight_decay,
            "train.alpha": self.train.alpha, "data.count_test_good": self.data.count_test_good,
            "data.count_test_defect": self.data.count_test_defect, "score.smooth_sigma": self.score.smooth_sigma,
            "data.workers": self.data.workers,
        }
        bad += [k for k, v in nonneg.items() if not v >= 0]
        if self.data.channels not in (1, 3):
            bad.append("data.channels")
        if not 0 < self.model.gamma < 1:
            bad.append("model.gamma")
        try:
            if not 0 <= self.model.lam < 1:
                bad.append("model.shrink_threshold")
        except ValueError:
            bad.append("model.shrink_threshold")
        if not 0 < self.eval.fpr_limit <= 1:
            bad.append("eval.fpr_limit")
        if not 0 < self.data.defect_min <= self.data.defect_max:
            bad += ["data.defect_min", "data.defect_max"]
        if self.data.texture not in ("stripes", "checker", "blobs"):
            bad.append("data.texture")
        if self.data.defect not in ("patch", "scratch", "color-shift"):
            bad.append("data.defect")
        try:
            if min(self.data.resolution) < 1:
                bad.append("data.image_size")
        except (ValueError, IndexError):
            bad.append("data.image_size")
        if bad:
            raise ConfigError("invalid values for: " + ", ".join(bad), bad)
        return self


def _format(v) -> str:
    return str(v).lower() if isinstance(v, bool) else str(v)


def _parse(raw: str, typ, key: str):
    try:
        if typ is bool:
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        return raw.strip()
    except ValueError:
        raise ConfigError(f"cannot parse {key}={raw!r} as {typ.__name__}", [key]) from None


def _apply(cfg: RunConfig, items: list[tuple[str, str]]) -> list[str]:
    """Apply ``(section.key, value)`` pairs; return the unknown keys."""
    unknown = []
    sections = dict(cfg.sections())
    for dotted, raw in items:
        sec_name, _, key = dotted.partition(".")
        sec = sections.get(sec_name)
        hints = typing.get_type_hints(type(sec)) if sec is not None else {}
        if key not in hints:
            unknown.append(dotted)
            continue
        setattr(sec, key, _parse(raw, hints[key], dotted))
    return unknown


def load_config(path=None, overrides=()) -> RunConfig:
    """Read ``path`` (if given), apply ``key=value`` overrides, validate.

    Every unknown key, in the file or in the overrides, is reported in a
    single :class:`ConfigError`.
    """
    cfg = RunConfig()
    items = []
    if path is not None:
        cp = configparser.ConfigParser()
        try:
            with open(path) as fh:
                cp.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}", ["--config"]) from None
        except configparser.Error as exc:
            raise ConfigError(f"malformed config {path}: {exc}", ["--config"]) from None
        items += [(f"{s}.{k}", v) for s in cp.sections() for k, v in cp[s].items()]
    for ov in overrides:
        key, sep, val = ov.partition("=")
        if not sep:
            raise ConfigError(f"override {ov!r} is not key=value", [ov])
        items.append((key.strip(), val))
    unknown = _apply(cfg, items)
    if unknown:
        raise ConfigError("unknown config keys: " + ", ".join(unknown), unknown)
    return cfg.validate()


def desk_config_path() -> Path:
    return Path(str(resources.files("mmae") / "configs" / "desk.cfg"))
