import numpy as np
import pytest

from levy_mfg import ValidationError
from levy_mfg.acceptance import degenerate_example
from levy_mfg.fp import solve_fp, sup_tv
from levy_mfg.grid_levy import Grid, LevyMeasureSpec, assemble_operator
from levy_mfg.hamiltonian import make_table1_pair
from levy_mfg.mfg import (
    check_S_conditions,
    gaussian_kernel,
    initial_guesses,
    make_coupling,
    solve_mfg,
    uniqueness_experiment,
)


@pytest.fixture(scope="module")
def small():
    return degenerate_example(n=64)


class TestCoupling:
    def test_kernel_is_density(self):
        g = Grid(64)
        k = gaussian_kernel(g, 0.05)
        assert k.sum() * g.h == pytest.approx(1.0, rel=1e-12)

    def test_monotonicity_identity(self, rng):
        g = Grid(64)
        c = make_coupling(g, width=0.05, A=1.7)
        for _ in range(5):
            m1, m2 = rng.dirichlet(np.ones(64)), rng.dirichlet(np.ones(64))
            assert c.pairing(m1, m2) == pytest.approx(c.pairing_identity(m1, m2), rel=1e-10)
            assert c.pairing(m1, m2) >= 0

    def test_certified_bound_holds(self, rng):
        g = Grid(64)
        c = make_coupling(g, width=0.05, A=1.0, offset=0.2)
        mf, _ = c.certified_bound()
        for m in [np.eye(64)[3], rng.dirichlet(np.ones(64))]:
            v = c.f(m)
            lip = np.max(np.abs(np.diff(np.append(v, v[0])))) / g.h
            assert np.max(np.abs(v)) + lip <= mf * (1 + 1e-9)

    def test_rejects_odd_mollifier(self):
        g = Grid(16)
        rho = np.zeros(16)
        rho[1] = 1.0
        with pytest.raises(ValidationError):
            make_coupling(g, rho=rho)

    def test_rejects_negative_amplitude(self):
        with pytest.raises(ValidationError):
            make_coupling(Grid(16), A=-1.0)


def test_initial_guesses_are_measures():
    gs = initial_guesses(Grid(32), 5, seed=3)
    assert len(gs) == 5
    for m in gs:
        assert m.sum() == pytest.approx(1.0) and m.min() >= 0


def test_constant_coupling_one_update():
    # data independent of m: Phi is constant, so an undamped step lands on it
    grid = Grid(64, T=0.25, n_t=20)
    op = assemble_operator(LevyMeasureSpec.stable(0.3), grid)
    c = make_coupling(grid, A=0.0, offset=0.4, offset_g=0.1)
    m0 = np.eye(64)[20]
    sol = solve_mfg(op, make_table1_pair("d", q=2.0), c, m0, tau=1.0, tol=1e-14, init=np.full(64, 1 / 64))
    assert sol.converged and sol.iterations == 2
    assert sol.history[-1] == 0.0


def test_linear_pair_drift_is_constant():
    grid = Grid(64, T=0.25, n_t=20)
    op = assemble_operator(LevyMeasureSpec.stable(0.3), grid)
    c = make_coupling(grid, A=1.0, A_g=1.0)
    m0 = np.eye(64)[10]
    sol = solve_mfg(op, make_table1_pair("a", kappa=1.5), c, m0, tau=0.5, tol=1e-10)
    assert sol.converged
    assert np.all(sol.b == 1.5)
    np.testing.assert_array_equal(sol.m, solve_fp(np.full(64, 1.5), m0, op).m)


def test_residuals_small(small):
    op, pair, c, m0 = small
    sol = solve_mfg(op, pair, c, m0, tau=0.5, tol=1e-8)
    assert sol.converged
    assert sol.residuals["hjb"] < 1e-6 and sol.residuals["fp"] < 1e-6
    assert sol.residuals["mass_defect"] <= 1e-12 and sol.residuals["min_mass"] >= 0
    assert sol.verdict["mfg_unique"] is True


def test_damping_invariance(small):
    op, pair, c, m0 = small
    tol = 1e-8
    sols = [solve_mfg(op, pair, c, m0, tau=t, tol=tol) for t in (0.25, 0.5, 0.75)]
    assert all(s.converged for s in sols)
    for s in sols[1:]:
        assert sup_tv(s.m, sols[0].m) < 10 * tol
        assert np.max(np.abs(s.u - sols[0].u)) < 10 * tol


def test_fictitious_play_agrees(small):
    op, pair, c, m0 = small
    a = solve_mfg(op, pair, c, m0, tol=1e-9)
    b = solve_mfg(op, pair, c, m0, scheme="fictitious", tol=1e-6, max_iters=400)
    assert sup_tv(a.m, b.m) < 1e-4


def test_uniqueness_experiment_passes(small):
    op, pair, c, m0 = small
    exp = uniqueness_experiment(op, pair, c, m0, k=3, tol=1e-8)
    assert exp.status == "pass"
    assert max(exp.max_u_distance, exp.max_m_distance) < 1e-7


def test_outside_threshold_is_informational():
    # q = 4 at order 0.2 (symmetric) lies beyond the critical exponent
    grid = Grid(64, T=0.25, n_t=25)
    op = assemble_operator(LevyMeasureSpec.stable(0.2), grid)
    c = make_coupling(grid, A=1.0, A_g=1.0)
    exp = uniqueness_experiment(op, make_table1_pair("d", q=4.0), c, np.full(64, 1 / 64), k=2, tol=1e-7)
    assert exp.verdict["mfg_unique"] is False
    assert exp.status == "informational"


def test_S_conditions(small):
    op, pair, c, m0 = small
    sol = solve_mfg(op, pair, c, m0, tol=1e-9)
    rep = check_S_conditions(sol, op, pair, c, m0, tol=1e-6)
    assert rep.ok, rep.as_dict()
    assert set(rep.checks) >= {"S1", "S2", "S3"}


@pytest.mark.parametrize("kw", [{"tau": 0.0}, {"tau": 1.5}, {"scheme": "newton"}])
def test_rejects(small, kw):
    op, pair, c, m0 = small
    with pytest.raises(ValidationError):
        solve_mfg(op, pair, c, m0, **kw)
