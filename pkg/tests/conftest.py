import os
import sys

import numpy as np
import pytest

# Add repo root to sys.path so `import app` resolves to the local package
ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), ".."))
if ROOT not in sys.path:
    sys.path.insert(0, ROOT)

from app.core.dan.config import DanConfig  # noqa: E402
from app.core.training.dataset import MANIFEST_NAME, load_pairs, make_dataset  # noqa: E402
from app.schemas.training import TrainConfig  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_config():
    """A network small enough for per-test forward and backward passes."""
    return DanConfig(
        sr_scale=2,
        iterations=2,
        feature_channels=4,
        restorer_blocks=1,
        estimator_blocks=2,
        theta_feature_dim=8,
        tail_theta_hidden=8,
    )


@pytest.fixture
def tiny_train_config():
    return TrainConfig(total_steps=3, halve_every=2, batch=2, lr_patch=8, log_every=1, seed=5)


@pytest.fixture(scope="session")
def blurry_dataset_dir(tmp_path_factory):
    """Three blurry_x2 pairs with 32x32 HR images."""
    out = tmp_path_factory.mktemp("blurry_x2")
    make_dataset(None, "blurry_x2", 3, seed=11, out_dir=out, hr_size=32)
    return out


@pytest.fixture
def blurry_dataset(blurry_dataset_dir):
    return load_pairs(blurry_dataset_dir / MANIFEST_NAME)
