import os
import subprocess
import sys

import numpy as np
import pytest

from levy_mfg import _kernels
from levy_mfg.fp import generate_drift, point_mass, solve_fp
from levy_mfg.grid_levy import Grid, LevyMeasureSpec, assemble_operator

pytestmark = pytest.mark.skipif(not _kernels.numba_available(), reason="numba not installed")


@pytest.fixture(scope="module")
def op():
    return assemble_operator(LevyMeasureSpec.stable(0.4, c_plus=1.0, c_minus=0.3), Grid(128, T=0.5, n_t=20))


def _both(fn):
    prev = _kernels.backend()
    try:
        out = {}
        for name in ("numba", "numpy"):
            _kernels.set_backend(name)
            out[name] = fn()
        return out["numba"], out["numpy"]
    finally:
        _kernels.set_backend(prev)


def test_apply(op, rng):
    phi = rng.standard_normal(128)
    a, b = _both(lambda: _kernels.apply_gather(op.gather_forward, op.weights, op.total, phi))
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-12 * op.total)


def test_apply_transpose(op, rng):
    y = rng.standard_normal(128)
    a, b = _both(lambda: _kernels.apply_transpose_gather(op.gather_reverse, op.weights, op.total, y))
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-12 * op.total)


def test_fp_and_dual_steps(op, rng):
    m, v, bb = rng.dirichlet(np.ones(128)), rng.standard_normal(128), rng.uniform(size=128)
    dt = 0.5 / op.total
    a, b = _both(lambda: _kernels.fp_step(op.gather_reverse, op.weights, op.total, m, bb, dt))
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-15)
    a, b = _both(lambda: _kernels.dual_step(op.gather_forward, op.weights, op.total, v, bb, dt))
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-14)


def test_modulus_is_bitwise(rng):
    phi = rng.standard_normal(64)
    a, b = _both(lambda: _kernels.modulus_1d(phi, 32))
    assert np.array_equal(a, b)
    phi2 = rng.standard_normal((16, 16))
    shifts = np.array([[1, 0], [0, 1], [3, 5], [8, 8]])
    a, b = _both(lambda: _kernels.modulus_2d(phi2, shifts))
    assert np.array_equal(a, b)


def test_solver_level_agreement(op):
    bfield = generate_drift(op.grid, 0.7, B=2.0, seed=1)
    a, b = _both(lambda: solve_fp(bfield, point_mass(op.grid, 40), op).m)
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-13)


def test_set_backend_rejects_unknown():
    with pytest.raises(ValueError):
        _kernels.set_backend("fortran")


def test_env_flag_selects_numpy():
    env = dict(os.environ, LEVY_MFG_NUMBA="0")
    out = subprocess.run([sys.executable, "-c", "from levy_mfg import _kernels; print(_kernels.backend())"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"


@pytest.mark.parametrize("raw,expected", [("2", 2), ("0", 1), ("junk", None)])
def test_worker_count(monkeypatch, raw, expected):
    monkeypatch.setenv("LEVY_MFG_THREADS", raw)
    assert _kernels.worker_count() == (expected if expected is not None else (os.cpu_count() or 1))
