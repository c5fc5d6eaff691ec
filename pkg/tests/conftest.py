from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from playroom.catalog import default_catalog
from playroom.world import generate_scene


@pytest.fixture(scope="session")
def catalog():
    return default_catalog()


@pytest.fixture()
def scene(catalog):
    return generate_scene(catalog, seed=0)
