"""Unsupervised training on defect-free images."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import Tensor

from .codec import load_checkpoint, save_checkpoint
from .config import RunConfig
from .errors import ConfigError, TrainingError
from .model import MMAE, ForwardOutput, to_tensor

log = logging.getLogger(__name__)

LOG_COLUMNS = ("epoch", "recon_loss", "sparsity_loss", "wall_seconds")


def loss_terms(x: Tensor, out: ForwardOutput) -> tuple[Tensor, Tensor]:
    """Batch-mean summed squared error and batch-mean total addressing entropy."""
    if out.x_hat.shape != x.shape:
        raise ValueError(f"reconstruction shape {tuple(out.x_hat.shape)} != input {tuple(x.shape)}")
    recon = (x - out.x_hat).pow(2).flatten(1).sum(1).mean()
    sparsity = torch.stack([a.entropy for a in out.addressing]).sum(0).mean()
    return recon, sparsity


def loss(x: Tensor, out: ForwardOutput, alpha: float) -> Tensor:
    recon, sparsity = loss_terms(x, out)
    return recon + alpha * sparsity


@dataclass
class TrainState:
    model: MMAE
    optimizer: torch.optim.Optimizer
    config: RunConfig
    epoch: int = 0
    history: list[tuple[int, float, float]] = field(default_factory=list)

    def save(self, path) -> None:
        arrays = self.model.arrays()
        names = dict((id(p), n) for n, p in self.model.named_parameters())
        for group in self.optimizer.param_groups:
            for p in group["params"]:
                st = self.optimizer.state.get(p)
                if st:
                    arrays[f"optim.{names[id(p)]}.exp_avg"] = st["exp_avg"].numpy()
                    arrays[f"optim.{names[id(p)]}.exp_avg_sq"] = st["exp_avg_sq"].numpy()
                    arrays[f"optim.{names[id(p)]}.step"] = np.asarray(float(st["step"]))
        manifest = {
            "format": "mmae-checkpoint/1",
            "config": self.config.to_dict(),
            "epoch": self.epoch,
            "loss_history": [list(h) for h in self.history],
        }
        save_checkpoint(path, arrays, manifest)

    @classmethod
    def load(cls, path) -> "TrainState":
        from .model import load_model

        model, cfg, manifest = load_model(path)
        opt = make_optimizer(model, cfg)
        arrays, _ = load_checkpoint(path)
        for n, p in model.named_parameters():
            if f"optim.{n}.exp_avg" in arrays:
                opt.state[p] = {
                    "step": torch.tensor(float(arrays[f"optim.{n}.step"].item())),
                    "exp_avg": torch.from_numpy(arrays[f"optim.{n}.exp_avg"].copy()),
                    "exp_avg_sq": torch.from_numpy(arrays[f"optim.{n}.exp_avg_sq"].copy()),
                }
        history = [tuple(h) for h in manifest["loss_history"]]
        return cls(model, opt, cfg, manifest["epoch"], history)


def make_optimizer(model: MMAE, cfg: RunConfig) -> torch.optim.Optimizer:
    return torch.optim.Adam(model.parameters(), lr=cfg.train.learning_rate,
                            weight_decay=cfg.train.weight_decay)


def _check_params(model: MMAE, epoch: int, batch: int) -> None:
    for name, p in model.named_parameters():
        if not torch.isfinite(p).all():
            raise TrainingError(f"non-finite parameter {name} after epoch {epoch} batch {batch}")
    for i, bank in enumerate(model.memory):
        if bool((bank.slots.norm(dim=1) <= 1e-8).any()):
            raise TrainingError(f"memory {i} has a vanishing slot after epoch {epoch} batch {batch}")


def train(images: np.ndarray, cfg: RunConfig, out_dir=None, check: bool = False) -> TrainState:
    """Train a fresh model on ``images`` (``N x H x W x C`` in [0, 1]).

    Batch order and initialization are driven by ``cfg.run.seed`` alone.
    With ``out_dir`` set, writes ``train_log.csv``, ``config.cfg`` and
    checkpoints (``checkpoint_eNNNN.ckpt`` on schedule, ``model.ckpt`` at
    the end). ``check`` asserts finite parameters after every step.
    """
    if len(images) == 0:
        raise ConfigError("training set is empty", ["data.root"])
    x_all = to_tensor(images)
    model = MMAE.from_config(cfg)
    state = TrainState(model, make_optimizer(model, cfg), cfg)
    shuffle = torch.Generator().manual_seed(cfg.run.seed + 1)
    tc = cfg.train

    writer = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        cfg.save(out_dir / "config.cfg")
        log_fh = open(out_dir / "train_log.csv", "w", newline="")
        writer = csv.writer(log_fh)
        writer.writerow(LOG_COLUMNS)

    t0 = time.perf_counter()
    n = len(x_all)
    try:
        model.train()
        for epoch in range(1, tc.epochs + 1):
            perm = torch.randperm(n, generator=shuffle)
            rec_sum = spa_sum = 0.0
            for b, start in enumerate(range(0, n, tc.batch_size)):
                xb = x_all[perm[start:start + tc.batch_size]]
                out = model(xb)
                recon, sparsity = loss_terms(xb, out)
                total = recon + tc.alpha * sparsity
                if not torch.isfinite(total):
                    raise TrainingError(f"non-finite loss at epoch {epoch} batch {b}")
                state.optimizer.zero_grad(set_to_none=True)
                total.backward()
                state.optimizer.step()
                if check:
                    _check_params(model, epoch, b)
                rec_sum += recon.item() * len(xb)
                spa_sum += sparsity.item() * len(xb)
            state.epoch = epoch
            state.history.append((epoch, rec_sum / n, spa_sum / n))
            if writer is not None:
                writer.writerow([epoch, repr(rec_sum / n), repr(spa_sum / n), f"{time.perf_counter() - t0:.3f}"])
                log_fh.flush()
                if epoch % tc.checkpoint_every == 0:
                    state.save(out_dir / f"checkpoint_e{epoch:04d}.ckpt")
            if epoch == 1 or epoch % max(1, tc.epochs // 10) == 0:
                log.info("epoch %d recon %.4f sparsity %.4f", epoch, rec_sum / n, spa_sum / n)
    finally:
        if writer is not None:
            log_fh.close()
    model.eval()
    if out_dir is not None:
        state.save(out_dir / "model.ckpt")
    return state


def reconstruct(model: MMAE, images: np.ndarray, batch_size: int = 32) -> tuple[np.ndarray, np.ndarray]:
    """Reconstructions (``N x H x W x C``) and scale attentions (``N x K``)."""
    outs, attn = [], []
    x = to_tensor(images).to(next(model.parameters()).dtype)
    with torch.no_grad():
        for start in range(0, len(x), batch_size):
            o = model(x[start:start + batch_size])
            outs.append(o.x_hat.numpy().transpose(0, 2, 3, 1))
            attn.append(o.attention.numpy())
    return np.concatenate(outs), np.concatenate(attn)

