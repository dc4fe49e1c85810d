"""
Közös pytest fixture-ök
"""
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from src.core.fields import Field, Grid2, identity_field
from src.utils.logger import detach_handlers


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def unit_grid():
    """Egységnégyzet 0.1 margóval, 101 csomópont"""
    return Grid2.build(0.0, 1.0, 0.0, 1.0, margin=0.1, nodes=101)


@pytest.fixture
def stage_grid():
    """[0, 0.2]² 0.2 margóval: egy l = 0.1 stage-hez elég"""
    return Grid2.build(0.0, 0.2, 0.0, 0.2, margin=0.2, nodes=256)


@pytest.fixture
def conformal_target(stage_grid):
    """v = 0 (k = 2), w = 0, A = 0.2·Id₂"""
    return (
        Field.zeros(stage_grid, (2,)),
        Field.zeros(stage_grid, (2,)),
        identity_field(stage_grid, 0.2),
    )


@pytest.fixture(autouse=True)
def _detach_log_handlers():
    """A main() által felrakott handlerek ne éljék túl a tesztet"""
    yield
    detach_handlers()
