import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from levy_mfg import ValidationError
from levy_mfg.regularity import (
    bootstrap_recursion,
    critical_q,
    dual_exponent,
    flip_point,
    fp_beta_lower,
    fp_cap,
    mfg_threshold_lhs,
    omega_limit,
    optimal_scaling_exponents,
    power_gamma,
    recursion_map,
    scaling_exponents,
    uniqueness_thresholds,
)


class TestRecursion:
    def test_limit_closed_form(self):
        st_ = bootstrap_recursion(0.1, 1.0, n_max=200)
        assert st_.omega_inf == pytest.approx(1.9 / 0.9 - 1, rel=1e-15)
        assert st_.beta0 == pytest.approx(0.8888888888888888, rel=1e-14)
        assert st_.limit_error < 1e-10
        assert st_.strictly_decreasing and st_.in_regime

    def test_fixed_point_identity(self):
        for order, beta in [(0.1, 1.0), (0.3, 0.7), (0.45, 0.9)]:
            w = omega_limit(order, beta)
            assert recursion_map(w, order, beta) == pytest.approx(w, rel=1e-15)

    def test_frozen_state(self):
        st_ = bootstrap_recursion(0.2, 0.9, n_max=500)
        assert st_.omega_inf == pytest.approx(1.35, rel=1e-14)
        assert st_.beta0 == pytest.approx(0.65, rel=1e-13)
        assert st_.Sigma[-1] == pytest.approx(3.857142857142856, rel=1e-13)
        assert st_.Sigma[-1] <= st_.sigma_limit_bound + 1e-12
        assert st_.Pi[-1] < 1e-60

    def test_constants_converge(self):
        ratio, tail = bootstrap_recursion(0.2, 0.9).cauchy_certificate(50)
        assert ratio < 1
        assert tail < 1e-9

    def test_outside_regime_flagged(self):
        st_ = bootstrap_recursion(0.6, 0.9, n_max=20)
        assert not st_.in_regime
        assert st_.notes

    @pytest.mark.parametrize("args", [(0.0, 0.5), (1.0, 0.5), (0.2, 0.0), (0.2, 1.5)])
    def test_rejects(self, args):
        with pytest.raises(ValidationError):
            bootstrap_recursion(*args)


@settings(max_examples=60, deadline=None)
@given(order=st.floats(0.01, 0.49), frac=st.floats(0.01, 1.0))
def test_property_recursion_limit(order, frac):
    lo = order / (1 - order)
    beta = lo + frac * (1 - lo)
    st_ = bootstrap_recursion(order, beta, n_max=500)
    assert st_.strictly_decreasing
    assert abs(st_.omegas[-1] - ((2 - order) / (1 - order) - beta)) < 1e-10


class TestThresholds:
    def test_flip_points(self):
        assert flip_point() == pytest.approx((2 - math.sqrt(2)) / 2, abs=1e-12)
        assert flip_point(symmetric=True) == pytest.approx((7 - math.sqrt(33)) / 4, abs=1e-12)

    def test_caps(self):
        assert fp_cap() == pytest.approx((3 - math.sqrt(5)) / 2, abs=1e-12)
        assert fp_cap(symmetric=True) == pytest.approx((5 - math.sqrt(17)) / 2, abs=1e-12)

    def test_order_fifth_unique(self):
        rep = uniqueness_thresholds(0.2, 1.0, 1.0)
        assert rep.mfg_unique

    def test_symmetric_half_gamma_not_unique(self):
        assert mfg_threshold_lhs(Fraction(1, 5), 1, symmetric=True) == Fraction(19, 36)
        assert not uniqueness_thresholds(0.2, 1.0, 0.5, symmetric=True).mfg_unique

    def test_frozen_values(self):
        assert float(mfg_threshold_lhs(0.2, 1.0)) == pytest.approx(0.5625, rel=1e-15)
        assert float(fp_beta_lower(0.2)) == pytest.approx(0.45, rel=1e-15)
        assert dual_exponent(0.2, 0.9) == pytest.approx(0.65, rel=1e-15)
        assert dual_exponent(0.2, 0.9, symmetric=True) == pytest.approx(0.9 - 0.2 / 0.9, rel=1e-15)

    def test_exact_boundary(self):
        # for order 1/5 the drift interval starts exactly at 1/5 + 1/4 = 9/20
        rep = uniqueness_thresholds(Fraction(1, 5), 1, 1, beta=Fraction(9, 20))
        assert rep.fp_verdict == "boundary"
        assert uniqueness_thresholds(0.2, 1.0, 1.0, beta=0.46).fp_verdict == "pass"
        assert uniqueness_thresholds(0.2, 1.0, 1.0, beta=0.44).fp_verdict == "fail"

    def test_float_mode_guard_band(self):
        rep = uniqueness_thresholds(0.2, 1.0, 1.0, beta=0.45 + 1e-14, exact=False)
        assert rep.fp_verdict == "boundary"

    @pytest.mark.parametrize("args", [(0.0, 1.0, 1.0), (0.5, 0.4, 1.0), (0.2, 1.0, 0.0), (0.2, 1.0, float("nan"))])
    def test_rejects(self, args):
        with pytest.raises(ValidationError):
            uniqueness_thresholds(*args)

    def test_footnote_identities_by_sampling(self):
        o = np.linspace(1e-6, (3 - math.sqrt(5)) / 2 - 1e-9, 10_000)
        assert np.all(o + o / (1 - o) < 1)
        o = np.linspace(1e-6, (5 - math.sqrt(17)) / 2 - 1e-9, 10_000)
        assert np.all(o + o / (1 - o / 2) < 1)


@settings(max_examples=60, deadline=None)
@given(order=st.floats(0.01, 0.9), g1=st.floats(0.01, 1.0), g2=st.floats(0.01, 1.0))
def test_property_monotone_in_gamma(order, g1, g2):
    lo, hi = sorted((g1, g2))
    a = uniqueness_thresholds(order, 1.0, lo).mfg_unique
    b = uniqueness_thresholds(order, 1.0, hi).mfg_unique
    assert not (a and not b)


class TestCriticalQ:
    def test_half(self):
        assert critical_q(Fraction(1, 2)) == 1

    def test_frozen(self):
        assert critical_q(0.1) == pytest.approx(2.8947368421052633, rel=1e-15)
        assert critical_q(0.25) == pytest.approx(1.4285714285714286, rel=1e-15)

    def test_monotone_and_unbounded(self):
        s = np.linspace(1e-4, 0.5, 500)
        q = np.array([critical_q(float(x)) for x in s])
        assert np.all(np.diff(q) < 0)
        assert q[0] > 1e3

    @pytest.mark.parametrize("q,unique", [(2.8, True), (3.0, False)])
    def test_consistency_with_thresholds(self, q, unique):
        rep = uniqueness_thresholds(0.2, 1.0, power_gamma(q), symmetric=True)
        assert rep.mfg_unique is unique

    def test_power_gamma(self):
        assert power_gamma(2.8) == pytest.approx(0.5555555555555556)
        assert power_gamma(1.5) == 1.0

    def test_rejects(self):
        with pytest.raises(ValidationError):
            critical_q(0.6)


class TestScaling:
    def test_intersection_formula(self):
        rep = optimal_scaling_exponents(0.1, 1.0, 2.0)
        assert rep.a_star == pytest.approx(1.0)
        assert rep.closed_form_branch == "(beta+omega-1)/omega"

    def test_brute_force_oracle(self):
        a = np.arange(0, 3 + 1e-12, 1e-4)
        for order, beta, omega in [(0.1, 1.0, 2.0), (0.2, 0.9, 1.35), (0.3, 0.5, 1.2)]:
            rep = optimal_scaling_exponents(order, beta, omega)
            vals = scaling_exponents(a, order, beta, omega).min(axis=0)
            assert rep.value == pytest.approx(vals.max(), abs=1e-3)
            assert rep.a_star == pytest.approx(a[np.argmax(vals)], abs=2e-4)

    def test_frozen(self):
        rep = optimal_scaling_exponents(0.2, 0.9, 1.35)
        assert rep.a_star == pytest.approx(0.9259259259259259, rel=1e-12)
        assert rep.value == pytest.approx(0.48148148148148145, rel=1e-12)

    def test_first_step_rule(self):
        # omega = 2 gives r^2 = eps^{beta + 1}
        beta = 0.7
        rep = optimal_scaling_exponents(0.2, beta, 2.0)
        assert 2 * rep.a_star == pytest.approx(beta + 1)

    def test_window(self):
        assert optimal_scaling_exponents(0.2, 0.9, 1.35).window_nonempty
        # nonempty iff beta >= order/(1-order)
        assert not optimal_scaling_exponents(0.4, 0.6, 1.5).window_nonempty
        assert optimal_scaling_exponents(0.4, 0.7, 1.5).window_nonempty

    def test_symmetric_drops_middle(self):
        assert scaling_exponents(0.5, 0.2, 0.9, 1.35, symmetric=True).shape == (2,)
