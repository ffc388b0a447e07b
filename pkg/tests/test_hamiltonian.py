import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from levy_mfg import ValidationError
from levy_mfg.hamiltonian import (
    check_pair,
    fenchel_young_gap,
    load_cost_csv,
    make_table1_pair,
    numeric_conjugate,
    numeric_pair,
)

Z = np.linspace(-3, 3, 601)
ZETA = np.linspace(0, 6, 601)

# (A1, A1' on [-2, 2], A1' on the whole line) for each row
FLAGS = {"a": (True, True, True), "b": (False, False, False), "c": (True, False, False),
         "d": (True, False, False), "e": (True, True, False), "f": (True, True, True)}


def test_row_a():
    p = make_table1_pair("a", kappa=2.0)
    np.testing.assert_array_equal(p.F(Z), 2 * Z)
    np.testing.assert_array_equal(p.dF(Z), 2.0)
    assert p.gamma == 1.0


def test_row_d_quadratic():
    p = make_table1_pair("d", q=2.0)
    np.testing.assert_allclose(p.F(Z), 0.5 * np.maximum(Z, 0) ** 2, rtol=1e-15)
    np.testing.assert_allclose(p.dF(Z), np.maximum(Z, 0), rtol=1e-15)


def test_row_e():
    np.testing.assert_allclose(make_table1_pair("e").F(Z), np.exp(Z), rtol=1e-15)


def test_row_f_shifts_base():
    base = make_table1_pair("d", q=3.0)
    f = make_table1_pair("f", kappa=0.5, base=base)
    np.testing.assert_allclose(f.F(Z), base.F(Z) + 0.5 * Z)
    assert f.dF_inf == 0.5


@pytest.mark.parametrize("kw", [{"tag": "d", "q": 1.0}, {"tag": "a", "kappa": 0.0}, {"tag": "c", "eps": -1.0},
                                {"tag": "z"}])
def test_rejections(kw):
    with pytest.raises(ValidationError):
        make_table1_pair(**kw)


def test_row_c_approximates_row_b():
    b = make_table1_pair("b")
    gaps = [np.max(np.abs(make_table1_pair("c", eps=eps).F(Z) - b.F(Z))) for eps in (0.1, 0.01, 0.001)]
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] <= 0.001


@pytest.mark.parametrize("tag,kw", [("a", {}), ("b", {}), ("c", {}), ("d", {"q": 2.8}), ("d", {"q": 1.5}),
                                    ("e", {}), ("f", {})])
def test_fenchel_young(tag, kw):
    gap = fenchel_young_gap(make_table1_pair(tag, **kw), ZETA, Z)
    assert np.nanmin(gap) >= -1e-12


@pytest.mark.parametrize("q", [1.5, 2.0, 2.8, 4.0])
def test_envelope_identity_row_d(q):
    p = make_table1_pair("d", q=q)
    z = np.linspace(0.01, 3, 50)
    s = p.dF(z)
    np.testing.assert_allclose(s * z - p.L(s), p.F(z), rtol=1e-12)


def test_numeric_conjugate_quadratic():
    zeta = np.linspace(0, 10, 20001)
    z = np.linspace(-5, 5, 201)
    nc = numeric_conjugate(zeta, zeta**2 / 2, z)
    # resolution of a grid sup: half the spacing squared over 2 for a unit-curvature cost
    assert np.max(np.abs(nc.F - 0.5 * np.maximum(z, 0) ** 2)) <= (zeta[1] / 2) ** 2 / 2 + 1e-14
    assert not nc.any_truncated
    assert np.all(np.diff(nc.F) >= 0)


def test_numeric_conjugate_entropy_matches_exp():
    zeta = np.linspace(0, 10, 40001)
    L = make_table1_pair("e").L(zeta)
    z = np.linspace(-2, 2, 81)
    nc = numeric_conjugate(zeta, L, z)
    np.testing.assert_allclose(nc.F, np.exp(z), atol=1e-6)


def test_numeric_conjugate_indicator():
    zeta = np.linspace(0, 3, 301)
    L = np.where(np.isclose(zeta, 1.5), 0.0, np.inf)
    z = np.linspace(-2, 2, 9)
    np.testing.assert_allclose(numeric_conjugate(zeta, L, z).F, 1.5 * z)


def test_numeric_conjugate_flags_truncation():
    zeta = np.linspace(0, 1, 101)
    nc = numeric_conjugate(zeta, zeta**2 / 2, np.array([0.5, 3.0]))
    assert nc.truncated.tolist() == [False, True]


def test_numeric_conjugate_empty_domain():
    with pytest.raises(ValidationError):
        numeric_conjugate(np.array([0.0, 1.0]), np.array([np.inf, np.inf]), np.zeros(1))


def test_double_conjugation():
    # conjugating F back over a z-grid recovers L within grid resolution
    zeta = np.linspace(0, 4, 4001)
    L = zeta**3 / 3
    z = np.linspace(-2, 16, 18001)
    F = numeric_conjugate(zeta, L, z).F
    s = np.linspace(0.1, 3.5, 35)
    back = np.max(np.multiply.outer(s, z) - F, axis=1)
    np.testing.assert_allclose(back, s**3 / 3, atol=5e-3)


def test_numeric_pair_and_csv(tmp_path):
    path = tmp_path / "cost.csv"
    zeta = np.linspace(0, 8, 801)
    path.write_text("# a cost\nzeta,L\n" + "".join(f"{float(s)!r},{float(s * s / 2)!r}\n" for s in zeta))
    zs, Ls = load_cost_csv(path)
    np.testing.assert_array_equal(zs, zeta)
    pair = numeric_pair(zs, Ls, (-2, 2))
    z = np.linspace(-2, 2, 41)
    np.testing.assert_allclose(pair.F(z), 0.5 * np.maximum(z, 0) ** 2, atol=1e-4)
    np.testing.assert_allclose(pair.dF(z), np.maximum(z, 0), atol=0.02)


@pytest.mark.parametrize("tag", sorted(FLAGS))
def test_check_pair_flags(tag):
    rep = check_pair(make_table1_pair(tag))
    assert (rep.a1, rep.a1_prime_local, rep.a1_prime_global) == FLAGS[tag]
    assert rep.convex


@pytest.mark.parametrize("tag,kw,gamma", [("a", {}, 1.0), ("c", {}, 1.0), ("d", {"q": 3.0}, 0.5),
                                          ("d", {"q": 2.8}, 1 / 1.8), ("e", {}, 1.0)])
def test_measured_gamma(tag, kw, gamma):
    rep = check_pair(make_table1_pair(tag, **kw))
    assert rep.gamma_measured == pytest.approx(gamma, abs=0.02)
    assert rep.gamma_r2 > 0.99


def test_row_d_degenerate_minimum():
    rep = check_pair(make_table1_pair("d", q=3.0))
    assert rep.dF_min == 0.0


def test_check_pair_range():
    with pytest.raises(ValidationError):
        check_pair(make_table1_pair("a"), lo=1.0, hi=1.0)


@settings(max_examples=40, deadline=None)
@given(q=st.floats(1.2, 6.0), zeta=st.floats(0, 20), z=st.floats(-20, 20))
def test_property_fenchel_young_row_d(q, zeta, z):
    p = make_table1_pair("d", q=q)
    lhs = zeta * z
    rhs = float(p.L(zeta)) + float(p.F(z))
    assert lhs <= rhs + 1e-9 * max(1.0, abs(rhs))
