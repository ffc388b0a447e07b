"""Cost/Hamiltonian pairs ``F(z) = sup_{zeta >= 0} (zeta z - L(zeta))`` and
checkers for the regularity assumptions the solvers rely on."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ValidationError

TAGS = ("a", "b", "c", "d", "e", "f", "numeric")


def _arr(z) -> np.ndarray:
    return np.asarray(z, dtype=np.float64)


@dataclass(frozen=True)
class ConjugatePair:
    """A cost ``L`` on ``[0, inf)`` and its conjugate Hamiltonian ``F``.

    ``dF_inf`` is the infimum of ``F'`` over the whole real line (used for
    the non-degeneracy check); ``gamma`` is the Hölder exponent of ``F'``
    claimed for the pair.
    """

    tag: str
    F: Callable[[np.ndarray], np.ndarray]
    dF: Callable[[np.ndarray], np.ndarray]
    L: Callable[[np.ndarray], np.ndarray]
    gamma: float
    dF_inf: float
    differentiable: bool = True
    params: dict = field(default_factory=dict)
    notes: tuple[str, ...] = ()

    def sup_dF(self, lo: float, hi: float, samples: int = 2049) -> float:
        """``sup F'`` over ``[lo, hi]`` (sampled, endpoints included)."""
        z = np.linspace(lo, hi, samples)
        return float(np.max(self.dF(z)))

    def optimal_control(self, z) -> np.ndarray:
        """Maximizer ``zeta*(z)`` of ``zeta z - L(zeta)``; equals ``F'(z)``."""
        return self.dF(z)


def make_table1_pair(tag: str, kappa: float = 1.0, eps: float = 0.1, q: float = 2.0,
                     base: ConjugatePair | None = None) -> ConjugatePair:
    """Closed-form pairs (a) to (f).

    ``kappa``, ``eps`` and ``q`` are used by the rows that need them; row (f)
    shifts ``base`` (default: row (d) with the given ``q``) by ``kappa``.
    """
    tag = str(tag).lower().removeprefix("table1-")
    if tag in ("a", "b", "c", "f") and not kappa > 0:
        raise ValidationError(f"hamiltonian: kappa must be > 0, got {kappa!r}")
    if tag == "c" and not eps > 0:
        raise ValidationError(f"hamiltonian: eps must be > 0, got {eps!r}")
    if tag == "d" and not q > 1:
        raise ValidationError(f"hamiltonian: q must be > 1, got {q!r}")

    if tag == "a":
        return ConjugatePair(
            tag="a",
            F=lambda z: kappa * _arr(z),
            dF=lambda z: np.full_like(_arr(z), kappa),
            L=lambda s: np.where(_arr(s) == kappa, 0.0, np.inf),
            gamma=1.0, dF_inf=kappa, params={"kappa": kappa},
        )
    if tag == "b":
        return ConjugatePair(
            tag="b",
            F=lambda z: kappa * np.maximum(_arr(z), 0.0),
            dF=lambda z: np.where(_arr(z) > 0, kappa, 0.0),
            L=lambda s: np.where((_arr(s) >= 0) & (_arr(s) <= kappa), 0.0, np.inf),
            gamma=0.0, dF_inf=0.0, differentiable=False, params={"kappa": kappa},
            notes=("fails (A1): F is not differentiable at 0",),
        )
    if tag == "c":
        def F(z):
            z = _arr(z)
            mid = kappa / (4 * eps) * (z + eps) ** 2
            return np.where(z < -eps, 0.0, np.where(z < eps, mid, kappa * z))

        def dF(z):
            z = _arr(z)
            return np.clip(kappa * (z + eps) / (2 * eps), 0.0, kappa)

        def L(s):
            s = _arr(s)
            inside = (s >= 0) & (s <= kappa)
            return np.where(inside, eps * (s * s / kappa - s), np.inf)

        return ConjugatePair(tag="c", F=F, dF=dF, L=L, gamma=1.0, dF_inf=0.0,
                             params={"kappa": kappa, "eps": eps})
    if tag == "d":
        p = q / (q - 1)
        e = 1.0 / (q - 1)

        def L(s):
            s = _arr(s)
            with np.errstate(invalid="ignore"):
                return np.where(s >= 0, np.abs(s) ** q / q, np.inf)

        return ConjugatePair(
            tag="d",
            F=lambda z: (q - 1) / q * np.maximum(_arr(z), 0.0) ** p,
            dF=lambda z: np.maximum(_arr(z), 0.0) ** e,
            L=L, gamma=min(1.0, e), dF_inf=0.0, params={"q": q},
        )
    if tag == "e":
        def L(s):
            s = _arr(s)
            with np.errstate(divide="ignore", invalid="ignore"):
                val = np.where(s > 0, s * np.log(np.where(s > 0, s, 1.0)) - s, 0.0)
            return np.where(s >= 0, val, np.inf)

        return ConjugatePair(tag="e", F=lambda z: np.exp(_arr(z)), dF=lambda z: np.exp(_arr(z)),
                             L=L, gamma=1.0, dF_inf=0.0,
                             notes=("F' > 0 but inf F' = 0: (A1') fails globally",))
    if tag == "f":
        return shifted_pair(base if base is not None else make_table1_pair("d", q=q), kappa)
    raise ValidationError(f"hamiltonian: unknown tag {tag!r}, expected one of a-f")


def shifted_pair(base: ConjugatePair, kappa: float) -> ConjugatePair:
    """Row (f): ``L(zeta) = L0(zeta - kappa)`` on ``zeta >= kappa``, ``F = F0 + kappa z``."""
    if not kappa > 0:
        raise ValidationError(f"hamiltonian: kappa must be > 0, got {kappa!r}")

    def L(s):
        s = _arr(s)
        return np.where(s >= kappa, base.L(np.maximum(s - kappa, 0.0)), np.inf)

    return ConjugatePair(
        tag="f", F=lambda z: base.F(z) + kappa * _arr(z), dF=lambda z: base.dF(z) + kappa,
        L=L, gamma=base.gamma, dF_inf=base.dF_inf + kappa, differentiable=base.differentiable,
        params={"kappa": kappa, "base": base.tag, **{f"base_{k}": v for k, v in base.params.items()}},
    )


# ---------------------------------------------------------------------------
# numeric conjugates

@dataclass(frozen=True)
class NumericConjugate:
    z: np.ndarray
    F: np.ndarray
    argmax: np.ndarray
    truncated: np.ndarray

    @property
    def any_truncated(self) -> bool:
        return bool(np.any(self.truncated))


def numeric_conjugate(zeta: np.ndarray, L_values: np.ndarray, z: np.ndarray,
                      chunk: int = 512) -> NumericConjugate:
    """Brute-force ``max_k (zeta_k z_i - L_k)`` over a sampled cost.

    Values whose maximizer sits at the last grid point (and the grid does not
    end where ``L`` becomes infinite) are flagged ``truncated``.
    """
    zeta = _arr(zeta).reshape(-1)
    L_values = _arr(L_values).reshape(-1)
    z = _arr(z).reshape(-1)
    if zeta.shape != L_values.shape or zeta.size == 0:
        raise ValidationError("conjugate: zeta and L samples must be non-empty and of equal length")
    if np.any(np.diff(zeta) <= 0) or np.any(np.diff(z) < 0):
        raise ValidationError("conjugate: grids must be increasing")
    finite = np.isfinite(L_values)
    if not np.any(finite):
        raise ValidationError("conjugate: cost has empty effective domain")
    zf, Lf = zeta[finite], L_values[finite]
    F = np.empty(z.size)
    arg = np.empty(z.size)
    for s in range(0, z.size, chunk):
        block = np.multiply.outer(z[s:s + chunk], zf) - Lf
        k = np.argmax(block, axis=1)
        F[s:s + chunk] = block[np.arange(k.size), k]
        arg[s:s + chunk] = zf[k]
    # a maximizer on the last finite sample is a truncation unless L is infinite just beyond it
    last_finite = zf[-1]
    open_end = finite[-1]
    truncated = (arg == last_finite) & open_end
    return NumericConjugate(z=z, F=F, argmax=arg, truncated=truncated)


def numeric_pair(zeta: np.ndarray, L_values: np.ndarray, z_range: tuple[float, float] = (-5.0, 5.0),
                 samples: int = 4001) -> ConjugatePair:
    """Pair whose ``F`` and ``F'`` interpolate a numeric conjugate."""
    z = np.linspace(z_range[0], z_range[1], samples)
    nc = numeric_conjugate(zeta, L_values, z)
    zeta = _arr(zeta)
    Lv = _arr(L_values)

    def L(s):
        return np.interp(_arr(s), zeta, Lv, left=np.inf, right=np.inf)

    notes = ("conjugate truncated at the zeta grid boundary",) if nc.any_truncated else ()
    return ConjugatePair(
        tag="numeric",
        F=lambda x: np.interp(_arr(x), z, nc.F),
        dF=lambda x: np.interp(_arr(x), z, nc.argmax),
        L=L, gamma=float("nan"), dF_inf=float(np.min(nc.argmax)),
        params={"z_min": z_range[0], "z_max": z_range[1], "zeta_max": float(zeta[-1])},
        notes=notes,
    )


def load_cost_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a two-column ``zeta, L`` table (``#`` comments and a header allowed)."""
    zs, ls = [], []
    with open(path, newline="") as fh:
        rows = csv.reader(line for line in fh if not line.lstrip().startswith("#"))
        for row in rows:
            if len(row) < 2:
                continue
            try:
                zs.append(float(row[0]))
                ls.append(float(row[1]))
            except ValueError:
                continue
    if not zs:
        raise ValidationError(f"conjugate: no numeric rows in {path}")
    return np.array(zs), np.array(ls)


def fenchel_young_gap(pair: ConjugatePair, zeta: np.ndarray, z: np.ndarray) -> np.ndarray:
    """``L(zeta) + F(z) - zeta z`` on the product grid; nonnegative for a conjugate pair."""
    zeta = _arr(zeta)
    z = _arr(z)
    with np.errstate(invalid="ignore"):
        return pair.L(zeta)[:, None] + pair.F(z)[None, :] - np.multiply.outer(zeta, z)


# ---------------------------------------------------------------------------
# assumption checks

@dataclass
class PairReport:
    tag: str
    gamma_claimed: float
    gamma_measured: float
    gamma_r2: float
    dF_min: float
    dF_inf: float
    convex: bool
    nonnegative_derivative: bool
    differentiable: bool
    a1_prime_local: bool
    a1_prime_global: bool
    notes: list[str]

    @property
    def a1(self) -> bool:
        return self.differentiable and self.nonnegative_derivative

    def as_dict(self) -> dict:
        return {
            "tag": self.tag, "gamma_claimed": self.gamma_claimed, "gamma_measured": self.gamma_measured,
            "gamma_r2": self.gamma_r2, "dF_min": self.dF_min, "dF_inf": self.dF_inf,
            "convex": self.convex, "A1": self.a1, "A1_prime_local": self.a1_prime_local,
            "A1_prime_global": self.a1_prime_global, "notes": list(self.notes),
        }


def _derivative_exponent(dF: np.ndarray, dz: float, span: float) -> tuple[float, float]:
    # small distances only: a bounded derivative saturates at larger ones
    kmin = max(1, int(round(1e-3 / dz)))
    kmax = max(kmin + 1, min(int(span / dz) - 1, int(round(0.05 / dz))))
    ks = np.unique(np.geomspace(kmin, kmax, 40).astype(int))
    omega = np.array([np.max(np.abs(dF[k:] - dF[:-k])) for k in ks])
    scale = max(1.0, float(np.max(np.abs(dF))))
    if np.max(omega) <= 1e-12 * scale:
        return 1.0, 1.0
    keep = omega > 1e-14 * scale
    if keep.sum() < 2:
        return 1.0, 1.0
    x, y = np.log(ks[keep] * dz), np.log(omega[keep])
    slope, icpt = np.polyfit(x, y, 1)
    ss = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum((y - slope * x - icpt) ** 2) / ss if ss > 0 else 1.0
    return float(slope), float(r2)


def check_pair(pair: ConjugatePair, lo: float = -2.0, hi: float = 2.0, samples: int = 4001,
               tol: float = 1e-12) -> PairReport:
    """Sampled checks of (A1), (A1') and (A2) on ``[lo, hi]``."""
    if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
        raise ValidationError("pair check: range must be finite with lo < hi")
    z = np.linspace(lo, hi, samples)
    dz = z[1] - z[0]
    F = pair.F(z)
    dF = pair.dF(z)
    scale = max(1.0, float(np.max(np.abs(F))))
    convex = True
    for k in range(1, samples // 2 + 1):
        mid = F[k:-k]
        if np.any(mid > 0.5 * (F[: -2 * k] + F[2 * k:]) + tol * scale):
            convex = False
            break
    gamma, r2 = _derivative_exponent(dF, dz, hi - lo)
    dF_min = float(np.min(dF))
    notes = list(pair.notes)
    return PairReport(
        tag=pair.tag, gamma_claimed=pair.gamma, gamma_measured=gamma, gamma_r2=r2,
        dF_min=dF_min, dF_inf=pair.dF_inf, convex=convex,
        nonnegative_derivative=bool(np.all(dF >= -tol)), differentiable=pair.differentiable,
        a1_prime_local=dF_min > 0, a1_prime_global=pair.dF_inf > 0, notes=notes,
    )
