import shutil
from importlib import resources
from pathlib import Path

import numpy as np
import pytest

from cfwrec.core import FeatureMatrix, InteractionMatrix

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_urm(rng, n_users, n_items, density=0.4, max_rating=5):
    dense = rng.integers(1, max_rating + 1, size=(n_users, n_items)).astype(float)
    dense[rng.random((n_users, n_items)) >= density] = 0.0
    return InteractionMatrix(dense), dense


def random_icm(rng, n_items, n_features, density=0.4, binary=True):
    dense = (rng.random((n_items, n_features)) < density).astype(float)
    if not binary:
        dense *= rng.uniform(0.5, 3.0, size=dense.shape)
    return FeatureMatrix(dense), dense


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


TOY_DIR = Path(str(resources.files("cfwrec") / "data" / "toy"))


@pytest.fixture
def toy_dir(tmp_path):
    """A writable copy of the bundled toy dataset and its config."""
    dest = tmp_path / "toy"
    shutil.copytree(TOY_DIR, dest)
    return dest
