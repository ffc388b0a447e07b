import numpy as np
import pytest

from levy_mfg import _kernels
from levy_mfg.grid_levy import Grid, LevyMeasureSpec, assemble_operator


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def stable_op_64():
    grid = Grid(64, T=0.5, n_t=50)
    return assemble_operator(LevyMeasureSpec.stable(0.4), grid)


@pytest.fixture(params=["numba", "numpy"])
def backend(request):
    """Run a test once per kernel backend, restoring the previous choice."""
    if request.param == "numba" and not _kernels.numba_available():
        pytest.skip("numba not importable")
    before = _kernels.backend()
    _kernels.set_backend(request.param)
    yield request.param
    _kernels.set_backend(before)

