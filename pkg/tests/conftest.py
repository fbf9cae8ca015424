import numpy as np
import pytest

from gc_core import TabularEnv
from grid_env import GridSpec, build_env
from offline_dataset import generate_dataset


@pytest.fixture
def open5():
    return build_env(GridSpec(5, 5, "open"), H_max=20)


@pytest.fixture
def four_rooms():
    return build_env(GridSpec(11, 11, "four_rooms"), H_max=50)


@pytest.fixture
def islands():
    return build_env(GridSpec(9, 9, "islands"), H_max=40)


@pytest.fixture
def chain_env():
    """0 -> 1 -> 2 (absorbing), plus an isolated state 3; one action, H_max 4."""
    return TabularEnv([[1], [2], [2], [3]], H_max=4)


@pytest.fixture
def small_dataset(open5):
    return generate_dataset(open5, n_expert=20, n_random=30, noise=0.1, seed=7)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def tiny_config_dict(tmp_path):
    return {
        "name": "tiny",
        "seed": 3,
        "jobs": 1,
        "output_dir": str(tmp_path / "run"),
        "variants": ["baseline", "swap", "mem"],
        "env": {"width": 5, "height": 5, "variant": "open", "H_max": 20},
        "dataset": {"n_expert": 20, "n_random": 40, "noise": 0.1},
        "pretrain": {"updates": 400, "batch_size": 32},
        "train": {"updates": 200, "batch_size": 32},
        "buffer": {"capacity": 2000},
        "eval": {"episodes": 10, "seeds": [1, 2]},
        "analysis": {"n_per_class": 200, "bins": 10, "logistic_steps": 200},
    }
