import json

import numpy as np
import pytest

from mmae.cli import main
from mmae.config import RunConfig, desk_config_path, load_config
from mmae.errors import ConfigError


def test_defaults_are_full_scale():
    cfg = load_config()
    assert (cfg.model.levels, cfg.model.gamma, cfg.data.resolution) == (5, 0.5, (256, 256))
    assert (cfg.model.latent_dim, cfg.model.memory_slots) == (1024, 60)
    assert (cfg.train.epochs, cfg.train.batch_size, cfg.train.learning_rate, cfg.train.weight_decay) == (
        2000, 64, 1e-4, 1e-5)


def test_desk_config():
    cfg = load_config(desk_config_path())
    assert (cfg.model.levels, cfg.model.latent_dim, cfg.model.memory_slots, cfg.train.epochs) == (3, 128, 20, 200)
    assert cfg.data.resolution == (64, 64) and cfg.train.batch_size == 16
    assert cfg.model.lam == pytest.approx(1 / 20)


def test_unknown_keys_all_reported(tmp_path):
    p = tmp_path / "x.cfg"
    p.write_text("[model]\nlevels = 2\nbogus = 1\n[nosuch]\na = 1\n")
    with pytest.raises(ConfigError) as exc:
        load_config(p, ["train.nope=3"])
    assert sorted(exc.value.keys) == ["model.bogus", "nosuch.a", "train.nope"]


def test_invalid_values_all_reported():
    with pytest.raises(ConfigError) as exc:
        load_config(overrides=["model.gamma=1.5", "train.batch_size=0", "model.shrink_threshold=2"])
    assert set(exc.value.keys) >= {"model.gamma", "train.batch_size", "model.shrink_threshold"}


def test_roundtrip_dump(tmp_path):
    cfg = load_config(desk_config_path(), ["score.heatmaps=false", "data.image_size=32,16"])
    cfg.save(tmp_path / "c.cfg")
    again = load_config(tmp_path / "c.cfg")
    assert again == cfg and again.data.resolution == (32, 16) and again.score.heatmaps is False


def _run(argv, capsys):
    code = main([str(a) for a in argv])
    cap = capsys.readouterr()
    return code, cap.out, cap.err


def test_cli_usage_error(capsys):
    code, _, err = _run(["frobnicate"], capsys)
    assert code == 1 and json.loads(err)["error"] == "usage"


def test_cli_config_error_lists_keys(capsys, tmp_path):
    code, _, err = _run(["synth", "--out", tmp_path, "--set", "data.bogus=1", "--set", "model.zzz=2"], capsys)
    assert code == 1
    line = err.strip()
    assert "\n" not in line
    assert json.loads(line)["keys"] == ["data.bogus", "model.zzz"]


def test_cli_eval_empty_dir(capsys, tmp_path):
    empty = tmp_path / "maps"
    empty.mkdir()
    code, _, err = _run(["eval", empty, "--out", tmp_path / "ev"], capsys)
    assert code == 2
    assert str(empty) in json.loads(err)["message"]


def test_cli_missing_checkpoint(capsys, tmp_path):
    code, _, err = _run(["score", "--checkpoint", tmp_path / "none.ckpt", "--out", tmp_path], capsys)
    assert code == 1 and "none.ckpt" in json.loads(err)["message"]


TINY = ["--set", "data.image_size=32", "--set", "data.count_train=6", "--set", "data.count_test_good=2",
        "--set", "data.count_test_defect=2", "--set", "data.defect_min=4", "--set", "data.defect_max=8",
        "--set", "model.levels=2", "--set", "model.latent_dim=16", "--set", "model.memory_slots=4",
        "--set", "model.base_channels=4", "--set", "train.epochs=2", "--set", "train.batch_size=4",
        "--set", "data.category=tiny"]


def test_cli_pipeline_tiny(capsys, tmp_path):
    data, run, maps, ev = (tmp_path / n for n in ("data", "run", "maps", "ev"))
    assert _run(["synth", "--out", data, "--seed", 5, *TINY], capsys)[0] == 0
    assert (data / "tiny" / "config.cfg").is_file()
    root = ["--set", f"data.root={data}"]
    assert _run(["train", "--out", run, "--seed", 5, *TINY, *root], capsys)[0] == 0
    first = (run / "train_log.csv").read_text()
    assert _run(["train", "--out", tmp_path / "run2", "--seed", 5, *TINY, *root], capsys)[0] == 0
    second = (tmp_path / "run2" / "train_log.csv").read_text()
    strip = lambda t: [r.rsplit(",", 1)[0] for r in t.splitlines()]  # drop wall_seconds
    assert strip(first) == strip(second)

    code, _, err = _run(["score", "--checkpoint", run / "model.ckpt", "--out", maps, *TINY, *root], capsys)
    assert code == 0, err
    index = json.loads((maps / "index.json").read_text())
    assert len(index["records"]) == 4 and (maps / "config.cfg").is_file()
    assert all(len(r["scale_attention"]) == 2 for r in index["records"])
    assert len(list((maps / "heatmaps").rglob("*.png"))) == 4

    code, out, err = _run(["eval", maps, "--out", ev, *TINY], capsys)
    assert code == 0, err
    metrics = json.loads((ev / "metrics.json").read_text())
    assert 0 <= metrics["pro_auc"] <= 1 and 0 <= metrics["pixel_auc"] <= 1
    assert "patch" in metrics["per_category"]
    assert json.loads(out)["pro_auc"] == metrics["pro_auc"]
    assert (ev / "pro_curve.csv").read_text().startswith("threshold,fpr,pro")
    assert (ev / "config.cfg").is_file()
