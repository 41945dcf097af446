from __future__ import annotations

import pytest

from kmreview import default_map, load_dataset
from kmreview.cli import bundled_mini_dataset


@pytest.fixture(scope="session")
def kmap():
    return default_map()


@pytest.fixture(scope="session")
def mini_samples():
    return load_dataset(bundled_mini_dataset())
