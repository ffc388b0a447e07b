"""Closed-form exponents and uniqueness thresholds.

Everything here is arithmetic on the order ``2 sigma`` (called ``order``),
the drift exponent ``beta``, the data exponent ``alpha`` and the Hölder
exponent ``gamma`` of ``F'``.  Threshold comparisons are done in exact
rational arithmetic: floats are read through their shortest decimal
representation, so ``0.2`` means ``1/5``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational

import numpy as np
from scipy import optimize

from .errors import ValidationError

GUARD = 1e-12
SATURATION = 1e-13

FLIP_NONSYMMETRIC = (2 - math.sqrt(2)) / 2
FLIP_SYMMETRIC = (7 - math.sqrt(33)) / 4
FP_CAP_NONSYMMETRIC = (3 - math.sqrt(5)) / 2
FP_CAP_SYMMETRIC = (5 - math.sqrt(17)) / 2


def _q(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, Rational)):
        return Fraction(x)
    x = float(x)
    if not math.isfinite(x):
        raise ValidationError(f"threshold: non-finite input {x!r}")
    return Fraction(repr(x))


def _verdict(margin, exact: bool) -> str:
    """``margin > 0`` passes, ``< 0`` fails; equality (or within the guard band
    in float mode) is a boundary case."""
    if exact:
        return "pass" if margin > 0 else ("fail" if margin < 0 else "boundary")
    if abs(margin) <= GUARD:
        return "boundary"
    return "pass" if margin > 0 else "fail"


# ---------------------------------------------------------------------------
# recursion

def recursion_map(omega, order, beta):
    """``omega -> 2 omega / ((beta + omega)(1 - order) + order)``."""
    return 2 * omega / ((beta + omega) * (1 - order) + order)


def omega_limit(order: float, beta: float) -> float:
    return (2 - order) / (1 - order) - beta


def dual_exponent(order: float, beta: float, symmetric: bool = False) -> float:
    """Hölder exponent retained by the dual solution: ``beta - order/(1-order)``
    (``beta - order/(1-order/2)`` for symmetric measures)."""
    return beta - (order / (1 - order / 2) if symmetric else order / (1 - order))


@dataclass
class ExponentState:
    order: float
    beta: float
    omegas: np.ndarray
    Cs: np.ndarray
    Pi: np.ndarray
    Sigma: np.ndarray
    omega_inf: float
    beta0: float
    in_regime: bool
    strictly_decreasing: bool
    sigma_limit_bound: float
    notes: list[str] = field(default_factory=list)

    @property
    def limit_error(self) -> float:
        return float(abs(self.omegas[-1] - self.omega_inf))

    def cauchy_gap(self, tail: int = 50) -> float:
        """Largest relative change of ``C_n`` over the last ``tail`` steps."""
        c = self.Cs[-tail - 1:]
        return float(np.max(np.abs(np.diff(c)) / np.maximum(np.abs(c[1:]), 1.0)))

    def cauchy_certificate(self, tail: int = 50) -> tuple[float, float]:
        """Geometric tail certificate for ``log C_n``.

        The map ``log C -> max(0, log(32 C T) + log C / omega_n)`` contracts,
        so the increments decay geometrically until they reach the rounding
        floor.  The decay ratio ``r`` is fitted on the last ``tail`` increments
        above that floor; the second value bounds the remaining distance to
        the limit by ``d_last r / (1 - r)`` (infinite when ``r >= 1``).
        """
        ell = np.log(self.Cs)
        d = np.abs(np.diff(ell))
        floor = 1e3 * np.finfo(float).eps * np.maximum(np.abs(ell[1:]), 1.0)
        idx = np.flatnonzero(d > floor)[-tail:]
        if idx.size == 0:
            return 0.0, 0.0
        if idx.size == 1:
            return 0.0, float(d[idx[-1]])
        r = float(np.exp(np.polyfit(idx, np.log(d[idx]), 1)[0]))
        if r >= 1:
            return r, math.inf
        return r, float(d[idx[-1]] * r / (1 - r))

    def as_dict(self) -> dict:
        return {
            "order": self.order, "beta": self.beta, "n": int(self.omegas.size - 1),
            "omega_last": float(self.omegas[-1]), "omega_inf": self.omega_inf, "beta0": self.beta0,
            "limit_error": self.limit_error, "in_regime": self.in_regime,
            "strictly_decreasing": self.strictly_decreasing, "C_last": float(self.Cs[-1]),
            "Pi_last": float(self.Pi[-1]), "Sigma_last": float(self.Sigma[-1]),
            "Sigma_limit_bound": self.sigma_limit_bound, "notes": list(self.notes),
        }


def bootstrap_recursion(order: float, beta: float, C: float = 1.0, T: float = 1.0,
                        n_max: int = 500, C0: float = 1.0) -> ExponentState:
    """Iterate the exponent recursion and the constant recursion
    ``C_{n+1} = max(1, 32 C T C_n^{1/omega_n})``.

    Monotone decrease is tested while ``omega_n - omega_inf`` exceeds
    ``1e-13``; below that the iteration has saturated in double precision.
    """
    if not (0.0 < order < 1.0):
        raise ValidationError(f"recursion: order must lie in (0, 1), got {order!r}")
    if not (0.0 < beta <= 1.0):
        raise ValidationError(f"recursion: beta must lie in (0, 1], got {beta!r}")
    if n_max < 1 or C <= 0 or T <= 0:
        raise ValidationError("recursion: n_max >= 1 and C, T > 0 required")
    notes = []
    in_regime = order < 0.5 and beta > order / (1 - order)
    if not in_regime:
        notes.append("parameters outside the proven regime (order < 1/2, beta > order/(1-order))")
    om_list = [2.0]
    # log C_{n+1} = max(0, log(32 C T) + log C_n / omega_n)
    logC = [math.log(max(1.0, C0))]
    shift = math.log(32.0 * C * T)
    for n in range(n_max):
        logC.append(max(0.0, shift + logC[n] / om_list[n]))
        om_list.append(recursion_map(om_list[n], order, beta))
    om = np.array(om_list)
    with np.errstate(over="ignore"):
        Cs = np.exp(np.array(logC))
    w_inf = omega_limit(order, beta)
    gaps = om - w_inf
    active = gaps[:-1] > SATURATION
    decreasing = bool(np.all(np.diff(om)[active] < 0))
    # Pi_n = prod_{k=1}^n 1/omega_k, Sigma_n = Pi_n + sum_{k=1}^n Pi_n / Pi_k
    Pi = np.cumprod(np.concatenate([[1.0], 1.0 / om[1:]]))
    Sigma = np.empty_like(Pi)
    Sigma[0] = 1.0
    for n in range(1, n_max + 1):
        # Sigma_n = Sigma_{n-1} / omega_n + 1
        Sigma[n] = Sigma[n - 1] / om[n] + 1.0
    return ExponentState(
        order=order, beta=beta, omegas=om, Cs=Cs, Pi=Pi, Sigma=Sigma, omega_inf=w_inf,
        beta0=2.0 - w_inf, in_regime=in_regime, strictly_decreasing=decreasing,
        sigma_limit_bound=1.0 + (1 - order) / (1 - beta * (1 - order)), notes=notes,
    )


# ---------------------------------------------------------------------------
# thresholds

def mfg_threshold_lhs(order, alpha, symmetric: bool = False):
    """``(order/(alpha-order)) (1 + 1/(1-order))``; the symmetric variant uses
    ``1/(1-order/2)``.  Exact when the inputs are Fractions."""
    tail = 1 / (1 - order / 2) if symmetric else 1 / (1 - order)
    return order / (alpha - order) * (1 + tail)


def fp_beta_lower(order, symmetric: bool = False):
    """Left end of the admissible drift-exponent interval ``(lower, 1]``."""
    return order + (order / (1 - order / 2) if symmetric else order / (1 - order))


@dataclass
class ThresholdReport:
    order: float
    alpha: float
    gamma: float
    symmetric: bool
    mfg_verdict: str
    mfg_margin: float
    fp_beta_lower: float
    fp_interval_verdict: str
    fp_interval_margin: float
    beta: float | None = None
    fp_verdict: str | None = None
    fp_margin: float | None = None

    @property
    def mfg_unique(self) -> bool:
        return self.mfg_verdict == "pass"

    @property
    def fp_interval_nonempty(self) -> bool:
        return self.fp_interval_verdict == "pass"

    def as_dict(self) -> dict:
        out = {
            "order": self.order, "alpha": self.alpha, "gamma": self.gamma, "symmetric": self.symmetric,
            "mfg_unique": self.mfg_unique, "mfg_verdict": self.mfg_verdict, "mfg_margin": self.mfg_margin,
            "fp_beta_range": [self.fp_beta_lower, 1.0], "fp_interval_nonempty": self.fp_interval_nonempty,
            "fp_interval_verdict": self.fp_interval_verdict, "fp_interval_margin": self.fp_interval_margin,
        }
        if self.beta is not None:
            out.update({"beta": self.beta, "fp_unique": self.fp_verdict == "pass",
                        "fp_verdict": self.fp_verdict, "fp_margin": self.fp_margin})
        return out


def uniqueness_thresholds(order, alpha, gamma, symmetric: bool = False, beta=None,
                          exact: bool = True) -> ThresholdReport:
    """Verdicts for MFG uniqueness and for the FP drift-exponent interval.

    Margins are signed: positive means the strict inequality holds.
    """
    if exact:
        o, a, g = _q(order), _q(alpha), _q(gamma)
    else:
        o, a, g = float(order), float(alpha), float(gamma)
    if not (0 < o < 1):
        raise ValidationError(f"threshold: order must lie in (0, 1), got {order!r}")
    if not (o < a <= 1):
        raise ValidationError(f"threshold: alpha must lie in (order, 1], got {alpha!r}")
    if not (0 < g <= 1):
        raise ValidationError(f"threshold: gamma must lie in (0, 1], got {gamma!r}")
    m_margin = g - mfg_threshold_lhs(o, a, symmetric)
    lower = fp_beta_lower(o, symmetric)
    i_margin = 1 - lower
    rep = ThresholdReport(
        order=float(order), alpha=float(alpha), gamma=float(gamma), symmetric=bool(symmetric),
        mfg_verdict=_verdict(m_margin, exact), mfg_margin=float(m_margin),
        fp_beta_lower=float(lower), fp_interval_verdict=_verdict(i_margin, exact),
        fp_interval_margin=float(i_margin),
    )
    if beta is not None:
        b = _q(beta) if exact else float(beta)
        margin = b - lower
        verdict = _verdict(margin, exact)
        if b > 1:
            verdict = "fail"
        rep.beta, rep.fp_verdict, rep.fp_margin = float(beta), verdict, float(margin)
    return rep


def flip_point(alpha: float = 1.0, gamma: float = 1.0, symmetric: bool = False) -> float:
    """Order ``2 sigma`` at which the MFG uniqueness verdict flips (root finding)."""
    f = lambda o: gamma - mfg_threshold_lhs(o, alpha, symmetric)  # noqa: E731
    return optimize.brentq(f, 1e-12, alpha * (1 - 1e-12), xtol=1e-15, rtol=4 * np.finfo(float).eps)


def fp_cap(symmetric: bool = False) -> float:
    """Largest order for which the FP drift interval is nonempty (root finding)."""
    f = lambda o: 1.0 - fp_beta_lower(o, symmetric)  # noqa: E731
    return optimize.brentq(f, 1e-12, 1 - 1e-12, xtol=1e-15, rtol=4 * np.finfo(float).eps)


def critical_q(sigma: float) -> float:
    """``q_c(sigma) = (1 + sigma) / (2 sigma (2 - sigma))`` for ``sigma in (0, 1/2]``."""
    if not (0.0 < sigma <= 0.5):
        raise ValidationError(f"critical q: sigma must lie in (0, 1/2], got {sigma!r}")
    if isinstance(sigma, Fraction):
        return (1 + sigma) / (2 * sigma * (2 - sigma))
    return (1.0 + sigma) / (2.0 * sigma * (2.0 - sigma))


def power_gamma(q: float) -> float:
    """Hölder exponent of ``F'`` for the power cost ``zeta^q / q``."""
    return min(1.0, 1.0 / (q - 1.0))


# ---------------------------------------------------------------------------
# scaling exponents

@dataclass
class ScalingReport:
    order: float
    beta: float
    omega: float
    symmetric: bool
    a_star: float
    value: float
    closed_form_branch: str
    window: tuple[float, float]

    @property
    def window_nonempty(self) -> bool:
        return self.window[0] >= self.window[1]

    def as_dict(self) -> dict:
        return {"order": self.order, "beta": self.beta, "omega": self.omega, "symmetric": self.symmetric,
                "a_star": self.a_star, "value": self.value, "branch": self.closed_form_branch,
                "window_upper": self.window[0], "window_lower": self.window[1],
                "window_nonempty": self.window_nonempty}


def scaling_exponents(a, order: float, beta: float, omega: float, symmetric: bool = False) -> np.ndarray:
    """The affine exponents of the scale ``a`` (rows), the middle one dropped
    for symmetric measures."""
    a = np.asarray(a, dtype=float)
    rows = [(2 - order) * a - 1]
    if not symmetric:
        rows.append((1 - order) * a + 1 / omega - 1)
    rows.append(-order * a + beta / omega)
    return np.stack(rows)


def optimal_scaling_exponents(order: float, beta: float, omega: float,
                              symmetric: bool = False) -> ScalingReport:
    """Maximizer ``a*`` of the smallest exponent.

    The decreasing exponent meets the increasing ones at
    ``(beta + omega)/(2 omega)`` and ``(beta + omega - 1)/omega``; ``a*`` is the
    larger of the two (only the first in the symmetric case).
    """
    if not (0 < order < 1 and 0 < beta <= 1 and 1 <= omega <= 2):
        raise ValidationError("scaling: need order in (0,1), beta in (0,1], omega in [1,2]")
    a1 = (beta + omega) / (2 * omega)
    a2 = (beta + omega - 1) / omega
    if symmetric or a1 >= a2:
        a_star, branch = a1, "(beta+omega)/(2 omega)"
    else:
        a_star, branch = a2, "(beta+omega-1)/omega"
    value = float(np.min(scaling_exponents(a_star, order, beta, omega, symmetric)))
    window = (beta / (2 * order), 1 / (2 * (1 - order)))
    return ScalingReport(order=order, beta=beta, omega=omega, symmetric=symmetric, a_star=a_star,
                         value=value, closed_form_branch=branch, window=window)
