from dataclasses import replace

import pytest

from shopformer.config import load_config
from shopformer.synth import SynthParams, write_synth

SMOKE_OVERRIDES = {
    "num_nodes": 5,
    "keypoints": (0, 5, 6, 11, 12),  # nose, shoulders, hips
    "bones": ((0, 1), (0, 2), (1, 2), (1, 3), (2, 4), (3, 4)),
    "window": 4,
    "num_tokens": 2,
    "channels": 4,
    "hidden": (8,),
    "ff_dim": 16,
    "gcae_epochs": 3,
    "tf_epochs": 3,
    "gcae_lr": 1e-3,
    "tf_lr": 1e-3,
}


@pytest.fixture(scope="session")
def tiny_synth(tmp_path_factory):
    """A small synthetic dataset on disk; returns its files."""
    out = tmp_path_factory.mktemp("synth")
    return write_synth(out, SynthParams(normal_train=6, normal_test=2, anomalous_test=2, frames=16, seed=1))


@pytest.fixture
def smoke_config(tiny_synth):
    """V=5, n=4, N=2 configuration over the tiny synthetic dataset."""
    return replace(load_config(tiny_synth.config), **SMOKE_OVERRIDES)


_CRITERIA: list[str] = []


@pytest.fixture
def record_criterion():
    """Collects acceptance verdict lines for the end-of-session summary."""
    return _CRITERIA.append


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_CRITERIA):
            terminalreporter.write_line(line)
