import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from levy_mfg import ValidationError
from levy_mfg.grid_levy import (
    Grid,
    LevyMeasureSpec,
    apply_operator,
    assemble_operator,
    check_operator_bounds,
    fractional_laplacian_constant,
    holder_exponent,
    holder_seminorm,
    periodic_distance,
    split_operator,
)

# Frozen oracle values.  K and the tail mass come from closed forms, K_quad
# from direct quadrature of the density, symbols from -|xi|^{order}, and the
# operator values from the exact Hurwitz-zeta periodization at n = 128.
ORACLE = {
    0.2: {"K": 0.9031398287145564, "K_quad": 0.9031391062026903, "tail": 0.9031398287145564,
          "symbol_2pi": -1.4442287084495449, "eig1_n128": -1.4443818995376216, "W_n128": 2.7299173944487922},
    0.5: {"K": 0.7978845608028655, "K_quad": 0.7978845608028655, "tail": 0.7978845608028655,
          "symbol_2pi": -2.5066282746310007, "eig1_n128": -2.507700950137552, "W_n128": 12.758010853582578},
}


class TestGrid:
    def test_spacing_and_times(self):
        g = Grid(64, T=0.5, n_t=10)
        assert g.h == 1 / 64
        assert g.dt == 0.05
        assert g.times[-1] == 0.5
        assert g.x.shape == (64,)

    @pytest.mark.parametrize("n", [0, 3, 100])
    def test_rejects_bad_sizes(self, n):
        with pytest.raises(ValidationError, match="power of two"):
            Grid(n)

    def test_with_steps(self):
        g = Grid(32, T=2.0, n_t=4).with_steps(8)
        assert (g.n, g.T, g.n_t) == (32, 2.0, 8)


class TestSpec:
    @pytest.mark.parametrize("order", [0.2, 0.5])
    def test_quadrature_constants_frozen(self, order):
        spec = LevyMeasureSpec.stable(order)
        assert spec.small_jump_constant("quadrature") == pytest.approx(ORACLE[order]["K_quad"], rel=1e-12)
        assert spec.tail_mass("quadrature") == pytest.approx(ORACLE[order]["tail"], rel=1e-9)

    @pytest.mark.parametrize("order", [0.2, 0.5])
    def test_closed_forms_agree_with_quadrature(self, order):
        # the ratio's sup is approached as r -> 0 like r^order; the grid stops at r = 1e-30
        spec = LevyMeasureSpec.stable(order)
        closed, quad = spec.small_jump_constant("closed"), spec.small_jump_constant("quadrature")
        assert spec.tail_mass("closed") == pytest.approx(spec.tail_mass("quadrature"), rel=1e-9)
        assert closed == pytest.approx(ORACLE[order]["K"], rel=1e-13)
        assert quad <= closed
        assert quad == pytest.approx(closed, rel=1e-30 ** order * 2)

    def test_tempered_frozen(self):
        spec = LevyMeasureSpec.tempered(0.4, 2.0)
        assert spec.small_jump_constant("quadrature") == pytest.approx(0.830025793166533, rel=1e-12)
        assert spec.tail_mass("quadrature") == pytest.approx(0.014514070745897776, rel=1e-8)

    @pytest.mark.parametrize("order", [0.2, 0.5])
    def test_symbol_frozen(self, order):
        assert float(np.real(LevyMeasureSpec.stable(order).symbol(2 * np.pi))) == pytest.approx(
            ORACLE[order]["symbol_2pi"], rel=1e-13)

    def test_fractional_laplacian_normalization(self):
        # the default stable scale is the one for which the symbol is -|xi|^{2 sigma}
        spec = LevyMeasureSpec.stable(0.5)
        assert spec.symbol(2 * np.pi).real == pytest.approx(-math.sqrt(2 * np.pi), rel=1e-13)
        assert fractional_laplacian_constant(0.25) > 0

    def test_rejects_order_at_one(self):
        with pytest.raises(ValidationError):
            assemble_operator(LevyMeasureSpec.stable(1.0), Grid(16))

    def test_symmetry_flag(self):
        assert LevyMeasureSpec.stable(0.3).symmetric
        assert not LevyMeasureSpec.stable(0.3, c_plus=1.0, c_minus=0.5).symmetric


class TestAssemble:
    def test_single_atom(self):
        op = assemble_operator(LevyMeasureSpec.atomic([(0.5, 1.0)]), Grid(8))
        nz = op.weights > 0
        assert op.offsets[nz].tolist() in ([4], [-4])
        assert op.weights[nz].tolist() == [1.0]
        assert op.total == 1.0

    def test_atom_action_on_cosine_exact(self):
        grid = Grid(64)
        op = assemble_operator(LevyMeasureSpec.atomic([(0.5, 1.0)]), grid)
        phi = np.cos(2 * np.pi * grid.x)
        np.testing.assert_allclose(op.apply(phi), -2 * phi, atol=1e-15)

    @pytest.mark.parametrize("order", [0.2, 0.5])
    def test_frozen_eigenvalue_and_total(self, order):
        op = assemble_operator(LevyMeasureSpec.stable(order), Grid(128))
        assert op.eigenvalue(1).real == pytest.approx(ORACLE[order]["eig1_n128"], rel=1e-12)
        assert op.total == pytest.approx(ORACLE[order]["W_n128"], rel=1e-12)

    def test_bounded_gaussian_total(self):
        op = assemble_operator(LevyMeasureSpec.bounded("gaussian", width=0.1), Grid(64))
        assert op.total == pytest.approx(0.937728620843449, rel=1e-12)

    def test_cosine_matches_symbol_and_improves(self):
        errs = []
        for n in (128, 256, 512):
            grid = Grid(n)
            op = assemble_operator(LevyMeasureSpec.stable(0.5), grid)
            phi = np.cos(2 * np.pi * grid.x)
            errs.append(np.max(np.abs(op.apply(phi) + math.sqrt(2 * np.pi) * phi)))
        assert errs[0] > errs[1] > errs[2]
        assert errs[2] < 1e-3

    def test_spectral_ratio_under_doubling(self):
        spec = LevyMeasureSpec.stable(0.4)
        exact = spec.symbol(2 * np.pi * 3).real
        e1, e2 = (abs(assemble_operator(spec, Grid(n)).eigenvalue(3).real - exact) for n in (128, 256))
        assert e1 / e2 > 1.5

    def test_asymmetric_weights(self):
        op = assemble_operator(LevyMeasureSpec.stable(0.3, c_plus=1.0, c_minus=0.25), Grid(64))
        assert not op.is_symmetric()
        assert assemble_operator(LevyMeasureSpec.stable(0.3), Grid(64)).is_symmetric()

    def test_two_dimensional_stable(self):
        op = assemble_operator(LevyMeasureSpec.stable(0.4, d=2), Grid(32, d=2))
        assert op.spec.small_jump_constant("quadrature") == pytest.approx(1.0406287562823207, rel=1e-9)
        assert op.total == pytest.approx(4.8352, rel=1e-4)
        assert op.is_symmetric()
        np.testing.assert_allclose(op.apply(np.ones((32, 32))), 0.0, atol=1e-13)

    def test_csv_columns(self, tmp_path):
        op = assemble_operator(LevyMeasureSpec.atomic([(0.25, 0.5)]), Grid(16))
        path = tmp_path / "w.csv"
        op.to_csv(path, ["seed: 0"])
        lines = path.read_text().splitlines()
        assert lines[0] == "# seed: 0"
        assert lines[1] == "offset,z,weight"


class TestApply:
    def test_batched_time_axis(self, stable_op_64, rng):
        u = rng.standard_normal((3, 64))
        out = apply_operator(stable_op_64, u)
        for k in range(3):
            np.testing.assert_allclose(out[k], stable_op_64.apply(u[k]), rtol=0, atol=1e-13)

    def test_shape_mismatch(self, stable_op_64):
        with pytest.raises(ValidationError):
            stable_op_64.apply(np.zeros(32))

    def test_transpose_identity(self, stable_op_64, rng):
        x, y = rng.standard_normal(64), rng.standard_normal(64)
        lhs = stable_op_64.apply(x) @ y
        rhs = x @ stable_op_64.apply_transpose(y)
        assert lhs == pytest.approx(rhs, rel=1e-13, abs=1e-12)

    def test_matrix_matches_apply(self, stable_op_64, rng):
        x = rng.standard_normal(64)
        np.testing.assert_allclose(stable_op_64.matrix() @ x, stable_op_64.apply(x), atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(order=st.floats(0.05, 0.9), log_n=st.integers(4, 8), skew=st.floats(0.1, 2.0))
def test_property_nonnegative_and_zero_row_sum(order, log_n, skew):
    grid = Grid(2**log_n)
    op = assemble_operator(LevyMeasureSpec.stable(order, c_plus=1.0, c_minus=skew), grid)
    assert np.all(op.weights >= 0)
    out = op.apply(np.full(grid.n, 3.25))
    assert np.max(np.abs(out)) <= 1e-12 * max(1.0, op.total)
    assert np.all(np.abs(op.matrix().sum(axis=1)) <= 1e-12 * max(1.0, op.total))


@settings(max_examples=25, deadline=None)
@given(order=st.floats(0.05, 0.9), seed=st.integers(0, 2**31 - 1))
def test_property_adjointness(order, seed):
    grid = Grid(32)
    op = assemble_operator(LevyMeasureSpec.stable(order, c_plus=1.0, c_minus=0.3), grid)
    r = np.random.default_rng(seed)
    x, y = r.standard_normal(32), r.standard_normal(32)
    scale = op.total * np.linalg.norm(x) * np.linalg.norm(y)
    assert abs(op.apply(x) @ y - x @ op.apply_transpose(y)) <= 1e-13 * scale


class TestSplit:
    def test_partition_exact(self, rng):
        grid = Grid(512)
        op = assemble_operator(LevyMeasureSpec.stable(0.3), grid)
        inner, outer = split_operator(op, 0.1)
        phi = np.sin(2 * np.pi * grid.x) + 0.3 * np.cos(6 * np.pi * grid.x)
        np.testing.assert_allclose(inner.apply(phi) + outer.apply(phi), op.apply(phi), rtol=0, atol=1e-12)

    def test_tiny_radius_empty_inner(self):
        grid = Grid(64)
        op = assemble_operator(LevyMeasureSpec.stable(0.3), grid)
        inner, outer = split_operator(op, grid.h / 4)
        assert inner.total == 0
        assert outer.total == op.total

    def test_half_radius_empty_outer(self):
        op = assemble_operator(LevyMeasureSpec.stable(0.3), Grid(64))
        inner, outer = split_operator(op, 0.5)
        assert outer.total == 0
        assert inner.total == pytest.approx(op.total)


class TestHolder:
    def test_constant(self):
        assert holder_seminorm(np.ones(64), 0.5) == 0

    def test_tent_lipschitz(self):
        x = Grid(256).x
        assert holder_seminorm(periodic_distance(x, 0.5), 1.0) == pytest.approx(1.0, rel=1e-12)

    def test_sqrt_half(self):
        x = Grid(1024).x
        assert holder_seminorm(np.sqrt(periodic_distance(x, 0.5)), 0.5) == pytest.approx(1.0, rel=0.02)

    def test_rejects_alpha(self):
        with pytest.raises(ValidationError):
            holder_seminorm(np.ones(8), 0.0)

    def test_exponent_of_power_profile(self):
        grid = Grid(2048)
        beta, r2 = holder_exponent(periodic_distance(grid.x, 0.5) ** 0.6, grid.h)
        assert beta == pytest.approx(0.6, abs=0.05)
        assert r2 > 0.99


class TestOperatorBounds:
    def test_constant_field(self):
        op = assemble_operator(LevyMeasureSpec.stable(0.2), Grid(128))
        rep = check_operator_bounds(op, np.full(128, 2.0), 1.0)
        assert rep.sup_norm <= 1e-13 and rep.holder <= 1e-13 and rep.ok

    def test_cosine_against_quadrature_constants(self):
        grid = Grid(512)
        op = assemble_operator(LevyMeasureSpec.stable(0.2), grid)
        K, tail = ORACLE[0.2]["K"], ORACLE[0.2]["tail"]
        rep = check_operator_bounds(op, np.cos(2 * np.pi * grid.x), 1.0, K=K, tail=tail)
        assert rep.sup_norm <= K / 0.8 * 2 * np.pi + 2 * tail
        assert rep.ok

    def test_rejects_p_below_order(self):
        op = assemble_operator(LevyMeasureSpec.stable(0.4), Grid(64))
        with pytest.raises(ValidationError):
            check_operator_bounds(op, np.zeros(64), 0.3)
