import numpy as np
import pytest
import torch

from copilot.datagen import DatagenConfig, generate_dataset, load_dataset
from copilot.dataset import DatasetConfig
from copilot.sim import Box, Scene, SceneParams

torch.set_num_threads(1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def corner_scene():
    """10 m room whose only obstacle sits in the far corner."""
    return Scene((Box((9.5, 9.5, 0.0), (10.0, 10.0, 1.0)),), (0.0, 0.0, 10.0, 10.0), scene_id="corner")


def tiny_datagen(seed=3, **kw):
    d = dict(seed=seed, n_scenes=4, n_unseen=1, seqs_per_scene=3, eval_seqs_per_scene=1,
             unseen_seqs_per_scene=3, max_frames=30,
             scene=SceneParams(size=(5.0, 5.0), min_count=4, max_count=6),
             dataset=DatasetConfig(T=4, H_horizon=4, stride=4, V=3, image_size=16))
    d.update(kw)
    return DatagenConfig(**d)


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("tiny_ds")
    generate_dataset(tiny_datagen(), root)
    return root, load_dataset(root, mmap=False)


# acceptance lines collected by test_acceptance.py, echoed after the run
ACCEPTANCE = {}


def _criterion_order(key):
    num = key.rstrip("abc")
    return int(num), key[len(num):]


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE, key=_criterion_order):
            terminalreporter.write_line(ACCEPTANCE[key])
