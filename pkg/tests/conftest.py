import numpy as np
import pytest
import torch

from mmae.config import load_config
from mmae.model import MMAE
from mmae.pyramid import PyramidConfig


def micro_config(**over):
    """K=2, D=8, 16x16, n=4 model used by gradient checks."""
    sets = {
        "data.image_size": 16, "data.channels": 3, "model.levels": 2, "model.gamma": 0.5,
        "model.latent_dim": 8, "model.memory_slots": 4, "model.base_channels": 2,
        "model.gate_hidden": 4, "train.epochs": 1, "train.batch_size": 1,
    }
    sets.update(over)
    return load_config(overrides=[f"{k}={v}" for k, v in sets.items()])


@pytest.fixture
def micro_cfg():
    return micro_config()


@pytest.fixture
def tiny_model():
    pyr = PyramidConfig(2, 0.5, (32, 32))
    torch.manual_seed(0)
    return MMAE(pyr, channels=3, latent_dim=16, memory_slots=4, base_channels=8, gate_hidden=8)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
