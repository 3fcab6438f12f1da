import os
from pathlib import Path

import numpy as np
import pytest

from mbmlab.psi import cached_psi_table


@pytest.fixture(scope="session")
def cache_dir(tmp_path_factory):
    """Psi-table cache shared by the whole session (``MBMLAB_CACHE`` wins when set)."""
    env = os.environ.get("MBMLAB_CACHE")
    path = Path(env) if env else tmp_path_factory.mktemp("psi-cache")
    os.environ["MBMLAB_CACHE"] = str(path)
    return path


@pytest.fixture(scope="session")
def table(cache_dir):
    return cached_psi_table(cache_dir)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
