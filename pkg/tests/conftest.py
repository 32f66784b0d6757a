"""
测试公共夹具
"""
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from snapshots import AdvDiffConfig, Grid1D, build_snapshot_set  # noqa: E402


@pytest.fixture
def grid():
    return Grid1D()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def advection_set(grid):
    return build_snapshot_set(AdvDiffConfig(c_T=4.0, c_D=0.0), grid, 20, "advection")


@pytest.fixture
def diffusion_set(grid):
    return build_snapshot_set(AdvDiffConfig(c_T=0.0, c_D=0.1), grid, 20, "diffusion")


@pytest.fixture
def advection_diffusion_set(grid):
    return build_snapshot_set(AdvDiffConfig(c_T=4.0, c_D=0.1), grid, 20, "advection_diffusion")
