"""Periodic grids, pure-jump Lévy measures of order below one, and their
quadrature operators on the torus ``[0, 1)^d``.

A measure ``nu`` is turned into nonnegative weights ``w_j`` attached to grid
offsets ``j != 0``; the operator acts as

    (L_h phi)_i = sum_j w_j (phi_{i+j} - phi_i)

so constants are annihilated by construction.  ``w_j`` is the mass that the
periodized measure puts on the grid cell around offset ``j``; the cell around
the origin is dropped.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Callable, Sequence

import mpmath
import numpy as np
from scipy import integrate, special

from . import _kernels
from .errors import ValidationError

KINDS = ("stable", "tempered", "bounded", "atomic")
PERIODIC_COPIES = 8


def _is_power_of_two(n: int) -> bool:
    return n >= 2 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on ``[0, 1)^d`` with ``n`` points per axis and a
    uniform time grid of ``n_t`` steps on ``[0, T]``."""

    n: int
    T: float = 1.0
    n_t: int = 100
    d: int = 1

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or not _is_power_of_two(int(self.n)):
            raise ValidationError(f"grid: n must be a power of two >= 2, got {self.n!r}")
        if self.d not in (1, 2):
            raise ValidationError(f"grid: dimension d must be 1 or 2, got {self.d!r}")
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ValidationError(f"grid: horizon T must be positive and finite, got {self.T!r}")
        if int(self.n_t) < 1:
            raise ValidationError(f"grid: n_t must be >= 1, got {self.n_t!r}")

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def dt(self) -> float:
        return self.T / self.n_t

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.d

    @property
    def size(self) -> int:
        return self.n**self.d

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.n_t + 1)

    @property
    def x(self) -> np.ndarray:
        """Coordinates along one axis."""
        return np.arange(self.n) * self.h

    def coords(self) -> tuple[np.ndarray, ...]:
        if self.d == 1:
            return (self.x,)
        return tuple(np.meshgrid(self.x, self.x, indexing="ij"))

    def with_steps(self, n_t: int) -> "Grid":
        return Grid(n=self.n, T=self.T, n_t=n_t, d=self.d)


def periodic_distance(x: np.ndarray, y: np.ndarray | float = 0.0) -> np.ndarray:
    """Distance on the unit circle."""
    r = np.abs(np.asarray(x, dtype=float) - y) % 1.0
    return np.minimum(r, 1.0 - r)


def fractional_laplacian_constant(sigma: float, d: int = 1) -> float:
    """Constant ``C`` such that ``C |z|^{-d-2 sigma}`` generates ``-(-Delta)^sigma``."""
    return float(sigma * 4.0**sigma * special.gamma(d / 2 + sigma)
                 / (math.pi ** (d / 2) * special.gamma(1.0 - sigma)))


# ---------------------------------------------------------------------------
# Lévy measures

@dataclass(frozen=True)
class LevyMeasureSpec:
    """Parametric Lévy measure.

    ``order`` is the exponent ``2 sigma`` in ``[0, 1)``.  Stable and tempered
    kinds have density ``c_plus |z|^{-1-order}`` on ``z > 0`` and
    ``c_minus |z|^{-1-order}`` on ``z < 0`` (times ``exp(-lam |z|)`` when
    tempered); in 2D the stable density is isotropic with ``c_plus``.
    ``c_plus``/``c_minus`` default to the fractional Laplacian normalization.
    """

    kind: str
    order: float = 0.0
    c_plus: float | None = None
    c_minus: float | None = None
    lam: float = 1.0
    profile: str | Callable | None = None
    width: float = 0.1
    mass: float = 1.0
    center: float = 0.0
    atoms: tuple = ()
    d: int = 1
    symmetric_profile: bool | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"levy: unknown kind {self.kind!r}, expected one of {KINDS}")
        if not (0.0 <= self.order < 1.0):
            raise ValidationError(f"levy: order 2*sigma must lie in [0, 1), got {self.order!r}")
        if self.d not in (1, 2):
            raise ValidationError(f"levy: dimension must be 1 or 2, got {self.d!r}")
        if self.kind in ("stable", "tempered"):
            if self.order <= 0.0:
                raise ValidationError("levy: stable/tempered measures need order 2*sigma > 0")
            c = fractional_laplacian_constant(self.order / 2, self.d)
            if self.c_plus is None:
                object.__setattr__(self, "c_plus", c)
            if self.c_minus is None:
                object.__setattr__(self, "c_minus", self.c_plus if self.d == 2 else c)
            if self.c_plus < 0 or self.c_minus < 0:
                raise ValidationError("levy: densities must be nonnegative")
            if self.kind == "tempered" and not self.lam > 0:
                raise ValidationError("levy: tempering rate lam must be positive")
            if self.kind == "tempered" and self.d != 1:
                raise ValidationError("levy: tempered measures are one-dimensional only")
        elif self.kind == "atomic":
            atoms = []
            for loc, m in self.atoms:
                loc_arr = np.atleast_1d(np.asarray(loc, dtype=float))
                if loc_arr.size != self.d:
                    raise ValidationError(f"levy: atom location {loc!r} does not match dimension {self.d}")
                if m < 0:
                    raise ValidationError("levy: atom masses must be nonnegative")
                if np.all(loc_arr == 0.0):
                    raise ValidationError("levy: nu({0}) must be 0 (atom at the origin)")
                atoms.append((tuple(loc_arr.tolist()) if self.d == 2 else float(loc_arr[0]), float(m)))
            if not atoms:
                raise ValidationError("levy: atomic measure needs at least one atom")
            object.__setattr__(self, "atoms", tuple(atoms))
        elif self.kind == "bounded":
            if self.profile is None:
                raise ValidationError("levy: bounded measure needs a profile")
            if isinstance(self.profile, str) and self.profile not in ("gaussian", "uniform"):
                raise ValidationError(f"levy: unknown profile {self.profile!r}")
            if self.mass < 0 or self.width <= 0:
                raise ValidationError("levy: profile mass must be >= 0 and width > 0")
            if callable(self.profile):
                total = self._profile_total()
                if not math.isfinite(total):
                    raise ValidationError("levy: bounded profile is not integrable")

    # constructors ---------------------------------------------------------
    @classmethod
    def stable(cls, order: float, scale: float | None = None, *, c_plus=None, c_minus=None, d: int = 1):
        if scale is not None:
            c_plus = c_minus = scale
        return cls(kind="stable", order=order, c_plus=c_plus, c_minus=c_minus, d=d)

    @classmethod
    def tempered(cls, order: float, lam: float, scale: float | None = None, *, c_plus=None, c_minus=None):
        if scale is not None:
            c_plus = c_minus = scale
        return cls(kind="tempered", order=order, lam=lam, c_plus=c_plus, c_minus=c_minus)

    @classmethod
    def atomic(cls, atoms: Sequence, order: float = 0.0, d: int = 1):
        return cls(kind="atomic", atoms=tuple(atoms), order=order, d=d)

    @classmethod
    def bounded(cls, profile="gaussian", *, width=0.1, mass=1.0, center=0.0, order=0.0,
                symmetric=None, d: int = 1):
        return cls(kind="bounded", profile=profile, width=width, mass=mass, center=center,
                   order=order, symmetric_profile=symmetric, d=d)

    # basic properties -----------------------------------------------------
    @property
    def sigma(self) -> float:
        return self.order / 2

    @property
    def symmetric(self) -> bool:
        if self.kind in ("stable", "tempered"):
            return self.d == 2 or math.isclose(self.c_plus, self.c_minus, rel_tol=1e-14, abs_tol=0.0)
        if self.kind == "atomic":
            masses: dict = {}
            for loc, m in self.atoms:
                masses[loc] = masses.get(loc, 0.0) + m
            for loc, m in masses.items():
                neg = tuple(-c for c in loc) if isinstance(loc, tuple) else -loc
                if not math.isclose(masses.get(neg, 0.0), m, rel_tol=1e-14):
                    return False
            return True
        if self.symmetric_profile is not None:
            return bool(self.symmetric_profile)
        if self.profile in ("gaussian",):
            return self.center == 0.0
        if self.profile == "uniform":
            return self.center == 0.0
        zs = np.linspace(1e-3, 5.0, 257)
        return bool(np.allclose(self.density(zs), self.density(-zs), rtol=1e-12, atol=0.0))

    def density(self, z) -> np.ndarray:
        """Density with respect to Lebesgue measure (1D; radial for 2D stable)."""
        z = np.asarray(z, dtype=float)
        if self.kind == "atomic":
            raise ValidationError("levy: atomic measures have no density")
        if self.kind == "bounded":
            if callable(self.profile):
                return np.asarray(self.profile(z), dtype=float)
            if self.profile == "gaussian":
                s = self.width
                if self.d == 2:
                    return self.mass * np.exp(-0.5 * (z / s) ** 2) / (2 * math.pi * s * s)
                return self.mass * np.exp(-0.5 * ((z - self.center) / s) ** 2) / (math.sqrt(2 * math.pi) * s)
            lo, hi = self.center - self.width, self.center + self.width
            return np.where((z >= lo) & (z <= hi), self.mass / (hi - lo), 0.0)
        a = np.abs(z)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            base = np.where(a > 0, a ** (-self.d - self.order), np.inf)
        if self.d == 2:
            return self.c_plus * base
        c = np.where(z > 0, self.c_plus, self.c_minus)
        out = c * base
        if self.kind == "tempered":
            out = out * np.exp(-self.lam * a)
        return out

    def _profile_total(self) -> float:
        val, _ = integrate.quad(lambda z: float(self.profile(z)), -np.inf, np.inf, limit=200)
        return val

    # constants of the small-jump assumption ---------------------------------
    def tail_mass(self, method: str = "closed") -> float:
        """``nu(B_1^c)``; ``method='quadrature'`` integrates the density directly."""
        if self.kind == "atomic":
            return float(sum(m for loc, m in self.atoms if np.linalg.norm(np.atleast_1d(loc)) >= 1.0))
        if self.d == 2 and self.kind == "stable":
            if method == "closed":
                return 2 * math.pi * self.c_plus / self.order
            val, _ = integrate.quad(lambda r: 2 * math.pi * r * float(self.density(r)), 1.0, np.inf)
            return val
        if method == "closed" and self.kind == "stable":
            return (self.c_plus + self.c_minus) / self.order
        if method == "closed" and self.kind == "tempered":
            g = _upper_gamma_neg(self.order, self.lam)
            return (self.c_plus + self.c_minus) * self.lam**self.order * g
        f = lambda z: float(self.density(z))  # noqa: E731
        right, _ = integrate.quad(f, 1.0, np.inf, limit=200)
        left, _ = integrate.quad(f, -np.inf, -1.0, limit=200)
        return right + left

    def _inner_integral(self, p: float, r: float) -> float:
        """``int_{B_1} min(1, |z|^p / r^p) nu(dz)`` by direct quadrature.

        On ``|z| < r`` the singular factor ``|z|^{p-1-order}`` is handled by an
        algebraic quadrature weight; on ``r <= |z| < 1`` a log substitution
        keeps the integrand smooth.
        """
        if self.kind == "atomic":
            tot = 0.0
            for loc, m in self.atoms:
                a = float(np.linalg.norm(np.atleast_1d(loc)))
                if a < 1.0:
                    tot += m * min(1.0, (a / r) ** p)
            return tot
        d = self.d
        if d == 2:
            sides = [lambda a: 2 * math.pi * a * float(self.density(a))]
        else:
            sides = [lambda a: float(self.density(a)), lambda a: float(self.density(-a))]
        e = 1.0 + self.order
        total = 0.0
        for g in sides:
            # g(a) a^{1+order} is bounded near 0 for every supported kind
            tiny = r * 1e-12
            near, _ = integrate.quad(lambda a: g(max(a, tiny)) * max(a, tiny) ** e * r ** (-p), 0.0, r, weight="alg",
                                     wvar=(p - e, 0.0), limit=200)
            far, _ = integrate.quad(lambda s: g(math.exp(s)) * math.exp(s), math.log(r), 0.0, limit=200)
            total += near + far
        return total

    def small_jump_constant(self, method: str = "closed") -> float:
        """Smallest ``K`` with ``int_{B_1} (1 ∧ |z|^p/r^p) nu(dz) <= K/(p-order) r^{-order}``
        for ``p in (order, 1]`` and ``r in (0, 1/2]``.

        Closed forms exist for stable and tempered measures; ``'quadrature'``
        maximizes the ratio over a ``(p, r)`` grid using direct quadrature.
        """
        if method == "closed" and self.kind in ("stable", "tempered"):
            if self.d == 2:
                return 2 * math.pi * self.c_plus / self.order
            return (self.c_plus + self.c_minus) / self.order
        ps = self.order + (1.0 - self.order) * np.linspace(0.05, 1.0, 12)
        rs = np.geomspace(1e-30, 0.5, 40)
        best = 0.0
        for p in ps:
            for r in rs:
                val = (p - self.order) * r**self.order * self._inner_integral(p, r)
                best = max(best, val)
        return best

    def levy_integral(self) -> float:
        """``int (1 ∧ |z|) nu(dz)``; finite for every valid spec."""
        if self.kind == "atomic":
            return float(sum(m * min(1.0, float(np.linalg.norm(np.atleast_1d(loc)))) for loc, m in self.atoms))
        return self._inner_integral(1.0, 1.0) + self.tail_mass(method="quadrature")

    def symbol(self, xi) -> np.ndarray:
        """Fourier symbol ``int (e^{i xi z} - 1) nu(dz)`` of a 1D stable measure."""
        if self.kind != "stable" or self.d != 1:
            raise ValidationError("levy: closed-form symbol only for 1D stable measures")
        xi = np.asarray(xi, dtype=complex)
        a = self.order
        return special.gamma(-a) * (self.c_plus * (-1j * xi) ** a + self.c_minus * (1j * xi) ** a)


def _upper_gamma_neg(order: float, x) -> np.ndarray:
    """``Gamma(-order, x)`` for ``0 < order < 1`` and ``x > 0`` via the recurrence."""
    x = np.asarray(x, dtype=float)
    g1 = special.gammaincc(1.0 - order, x) * special.gamma(1.0 - order)
    return (x ** (-order) * np.exp(-x) - g1) / order


# ---------------------------------------------------------------------------
# operators

@dataclass(eq=False)
class DiscreteOperator:
    """Nonnegative weights on grid offsets realizing a Lévy operator.

    ``offsets`` holds the signed minimal representative of each offset
    (shape ``(k,)`` in 1D, ``(k, 2)`` in 2D).
    """

    grid: Grid
    offsets: np.ndarray
    weights: np.ndarray
    spec: LevyMeasureSpec | None = None
    r_in: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.offsets = np.asarray(self.offsets, dtype=np.int64)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.grid.d == 1:
            self.offsets = self.offsets.reshape(-1)
        else:
            self.offsets = self.offsets.reshape(-1, 2)
        if self.offsets.shape[0] != self.weights.shape[0]:
            raise ValidationError("operator: offsets and weights differ in length")
        if np.any(self.weights < 0) or not np.all(np.isfinite(self.weights)):
            raise ValidationError("operator: weights must be finite and nonnegative")

    @property
    def total(self) -> float:
        return float(np.sum(self.weights))

    @property
    def order(self) -> float:
        return self.spec.order if self.spec is not None else 0.0

    @property
    def jumps(self) -> np.ndarray:
        """Physical jump vectors ``offset * h``."""
        return self.offsets * self.grid.h

    @property
    def distances(self) -> np.ndarray:
        z = self.jumps
        return np.abs(z) if self.grid.d == 1 else np.linalg.norm(z, axis=1)

    def is_symmetric(self, rtol: float = 1e-12) -> bool:
        table = self._dense_weights()
        flipped = np.roll(np.flip(table, axis=tuple(range(self.grid.d))), 1, axis=tuple(range(self.grid.d)))
        return bool(np.allclose(table, flipped, rtol=rtol, atol=rtol * max(table.max(), 1e-300)))

    def _dense_weights(self) -> np.ndarray:
        table = np.zeros(self.grid.shape)
        idx = tuple(np.mod(self.offsets, self.grid.n).T) if self.grid.d == 2 else np.mod(self.offsets, self.grid.n)
        np.add.at(table, idx, self.weights)
        return table

    @cached_property
    def _flat_offsets(self) -> np.ndarray:
        n = self.grid.n
        if self.grid.d == 1:
            return self.offsets[None, :]
        return self.offsets.T

    @cached_property
    def gather_forward(self) -> np.ndarray:
        return self._gather(+1)

    @cached_property
    def gather_reverse(self) -> np.ndarray:
        return self._gather(-1)

    def _gather(self, sign: int) -> np.ndarray:
        n = self.grid.n
        if self.grid.d == 1:
            i = np.arange(n)[:, None]
            return np.ascontiguousarray((i + sign * self.offsets[None, :]) % n, dtype=np.int64)
        i0, i1 = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        a = (i0.reshape(-1, 1) + sign * self.offsets[None, :, 0]) % n
        b = (i1.reshape(-1, 1) + sign * self.offsets[None, :, 1]) % n
        return np.ascontiguousarray(a * n + b, dtype=np.int64)

    # action ----------------------------------------------------------------
    def apply(self, phi: np.ndarray) -> np.ndarray:
        return apply_operator(self, phi)

    def apply_transpose(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        self._check_shape(y)
        flat = y.reshape(-1)
        out = _kernels.apply_transpose_gather(self.gather_reverse, self.weights, self.total, flat)
        return out.reshape(self.grid.shape)

    def _check_shape(self, phi: np.ndarray) -> None:
        if phi.shape != self.grid.shape:
            raise ValidationError(f"operator: field shape {phi.shape} does not match grid {self.grid.shape}")

    def matrix(self) -> np.ndarray:
        """Dense generator matrix (small grids only)."""
        N = self.grid.size
        if N > 4096:
            raise ValidationError("operator: dense matrix requested for more than 4096 points")
        A = np.zeros((N, N))
        rows = np.repeat(np.arange(N), self.weights.size)
        np.add.at(A, (rows, self.gather_forward.reshape(-1)), np.tile(self.weights, N))
        A[np.arange(N), np.arange(N)] -= self.total
        return A

    def eigenvalue(self, k) -> np.ndarray:
        """Eigenvalue on the Fourier mode ``exp(2 pi i k . x)``."""
        k = np.asarray(k)
        if self.grid.d == 1:
            phase = 2j * np.pi * np.multiply.outer(k, self.jumps)
        else:
            phase = 2j * np.pi * (np.asarray(k)[..., None, :] * self.jumps).sum(-1)
        return (np.exp(phase) - 1.0) @ self.weights

    def to_csv(self, path, header_lines: Sequence[str] = ()) -> None:
        with open(path, "w", newline="") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            writer = csv.writer(fh)
            if self.grid.d == 1:
                writer.writerow(["offset", "z", "weight"])
                for o, w in zip(self.offsets, self.weights):
                    writer.writerow([int(o), f"{o * self.grid.h:.17g}", f"{w:.17g}"])
            else:
                writer.writerow(["offset_0", "offset_1", "z_0", "z_1", "weight"])
                for (o0, o1), w in zip(self.offsets, self.weights):
                    writer.writerow([int(o0), int(o1), f"{o0 * self.grid.h:.17g}",
                                     f"{o1 * self.grid.h:.17g}", f"{w:.17g}"])


def _signed(j: np.ndarray, n: int) -> np.ndarray:
    return np.where(j > n // 2, j - n, j)


@lru_cache(maxsize=64)
def _hurwitz_table(order: float, n: int) -> np.ndarray:
    """``zeta(order, (k + 1/2)/n)`` for ``k = 0..n``."""
    h = 1.0 / n
    vals = [mpmath.zeta(order, (k + 0.5) * h) for k in range(n)]
    vals.append(vals[0] - mpmath.mpf(0.5 * h) ** (-order))
    return np.array([float(v) for v in vals])


def _stable_cells_1d(spec: LevyMeasureSpec, n: int) -> np.ndarray:
    # sum over all periodic copies: sum_k [G(a+k) - G(b+k)] = (zeta(s,a) - zeta(s,b)) / s
    Z = _hurwitz_table(float(spec.order), n)
    s = spec.order
    j = np.arange(1, n)
    pos = spec.c_plus * (Z[j - 1] - Z[j]) / s
    neg = spec.c_minus * (Z[n - j - 1] - Z[n - j]) / s
    return pos + neg


def _tempered_cells_1d(spec: LevyMeasureSpec, n: int) -> np.ndarray:
    h = 1.0 / n
    j = np.arange(1, n)
    a, b = (j - 0.5) * h, (j + 0.5) * h
    lam, s = spec.lam, spec.order

    def tail(x):
        return lam**s * _upper_gamma_neg(s, lam * x)

    out = np.zeros(n - 1)
    for k in range(PERIODIC_COPIES + 1):
        out += spec.c_plus * (tail(a + k) - tail(b + k))
        # negative jumps landing in the same residue cell: |z| in (k + 1 - b, k + 1 - a]
        out += spec.c_minus * (tail(k + 1 - b) - tail(k + 1 - a))
    return out


def _density_cells_1d(spec: LevyMeasureSpec, n: int, nodes: int = 8) -> np.ndarray:
    h = 1.0 / n
    xg, wg = np.polynomial.legendre.leggauss(nodes)
    j = np.arange(1, n)
    out = np.zeros(n - 1)
    for k in range(-PERIODIC_COPIES, PERIODIC_COPIES + 1):
        centers = j * h + k
        z = centers[:, None] + 0.5 * h * xg[None, :]
        out += (spec.density(z) @ wg) * 0.5 * h
    return out


def _density_cells_2d(spec: LevyMeasureSpec, n: int, nodes: int = 4) -> np.ndarray:
    h = 1.0 / n
    xg, wg = np.polynomial.legendre.leggauss(nodes)
    ww = np.outer(wg, wg).reshape(-1) * 0.25 * h * h
    dx = (0.5 * h * xg[:, None] + 0 * xg[None, :]).reshape(-1)
    dy = (0 * xg[:, None] + 0.5 * h * xg[None, :]).reshape(-1)
    j0, j1 = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    out = np.zeros((n, n))
    for k0 in range(-PERIODIC_COPIES, PERIODIC_COPIES + 1):
        for k1 in range(-PERIODIC_COPIES, PERIODIC_COPIES + 1):
            cx = _signed(j0, n) * h + k0
            cy = _signed(j1, n) * h + k1
            r = np.hypot(cx[..., None] + dx, cy[..., None] + dy)
            with np.errstate(divide="ignore"):
                dens = spec.density(r)
            dens[~np.isfinite(dens)] = 0.0
            out += dens @ ww
    out[0, 0] = 0.0
    return out


def assemble_operator(spec: LevyMeasureSpec, grid: Grid) -> DiscreteOperator:
    """Quadrature weights of the periodized measure on each grid cell.

    The cell of radius ``h/2`` around the origin is dropped.  Stable measures
    in 1D are periodized exactly (Hurwitz zeta sums); tempered and bounded
    densities sum ``8`` periodic copies on each side.
    """
    if spec.d != grid.d:
        raise ValidationError(f"operator: spec dimension {spec.d} differs from grid dimension {grid.d}")
    if spec.order >= 1.0:
        raise ValidationError("operator: order 2*sigma must be < 1")
    n = grid.n
    if grid.d == 1:
        if spec.kind == "atomic":
            table = np.zeros(n)
            for loc, m in spec.atoms:
                table[int(round(loc * n)) % n] += m
            table[0] = 0.0
            cells = table[1:]
        elif spec.kind == "stable":
            cells = _stable_cells_1d(spec, n)
        elif spec.kind == "tempered":
            cells = _tempered_cells_1d(spec, n)
        else:
            cells = _density_cells_1d(spec, n)
        residues = np.arange(1, n)
        keep = cells > 0
        offsets = _signed(residues[keep], n)
        weights = cells[keep]
    else:
        if spec.kind == "atomic":
            table = np.zeros((n, n))
            for loc, m in spec.atoms:
                table[int(round(loc[0] * n)) % n, int(round(loc[1] * n)) % n] += m
            table[0, 0] = 0.0
        elif spec.kind in ("stable", "bounded"):
            table = _density_cells_2d(spec, n)
        else:
            raise ValidationError(f"operator: kind {spec.kind!r} is not available in 2D")
        j0, j1 = np.nonzero(table > 0)
        offsets = np.stack([_signed(j0, n), _signed(j1, n)], axis=1)
        weights = table[j0, j1]
    if not np.all(np.isfinite(weights)):
        raise ValidationError("operator: measure is not integrable away from the origin")
    order = np.lexsort(offsets.T[::-1]) if grid.d == 2 else np.argsort(offsets, kind="stable")
    return DiscreteOperator(grid=grid, offsets=offsets[order], weights=weights[order], spec=spec,
                            r_in=0.5 * grid.h, meta={"kind": spec.kind, "order": spec.order})


def apply_operator(op: DiscreteOperator, phi: np.ndarray) -> np.ndarray:
    """``(L_h phi)_i = sum_j w_j (phi_{i+j} - phi_i)`` with periodic indexing.

    ``phi`` may carry leading batch axes (e.g. time); the trailing axes must
    match the grid.
    """
    phi = np.asarray(phi, dtype=np.float64)
    d = op.grid.d
    if phi.shape[phi.ndim - d:] != op.grid.shape:
        raise ValidationError(f"operator: field shape {phi.shape} does not match grid {op.grid.shape}")
    if op.weights.size == 0:
        return np.zeros_like(phi)
    lead = phi.shape[: phi.ndim - d]
    flat = phi.reshape((-1, op.grid.size))
    out = np.empty_like(flat)
    fwd = op.gather_forward
    for r in range(flat.shape[0]):
        out[r] = _kernels.apply_gather(fwd, op.weights, op.total, np.ascontiguousarray(flat[r]))
    return out.reshape(lead + op.grid.shape)


def split_operator(op: DiscreteOperator, r: float) -> tuple[DiscreteOperator, DiscreteOperator]:
    """Inner part (jumps shorter than ``r``) and outer part (the rest).

    ``r`` at or beyond the largest periodic distance puts every weight in the
    inner part.
    """
    if not (0.0 < r <= 0.5):
        raise ValidationError(f"split: radius must lie in (0, 1/2], got {r!r}")
    dist = op.distances
    if r >= 0.5 * math.sqrt(op.grid.d):
        inner = np.ones(dist.shape, dtype=bool)
    else:
        inner = dist < r
    mk = lambda mask, tag: DiscreteOperator(  # noqa: E731
        grid=op.grid, offsets=op.offsets[mask], weights=op.weights[mask], spec=op.spec,
        r_in=op.r_in, meta={**op.meta, "part": tag, "radius": r})
    return mk(inner, "inner"), mk(~inner, "outer")


# ---------------------------------------------------------------------------
# Hölder seminorms

def _shift_table_2d(n: int, radius: float) -> tuple[np.ndarray, np.ndarray]:
    a, c = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    sa, sc = _signed(a, n), _signed(c, n)
    dist = np.hypot(sa, sc) / n
    # one representative per +/- pair
    half = (sa > 0) | ((sa == 0) & (sc > 0))
    keep = half & (dist <= radius) & (dist > 0)
    return np.stack([sa[keep], sc[keep]], axis=1), dist[keep]


def modulus_of_continuity(phi: np.ndarray, h: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Distances ``delta`` and ``max_x |phi(x + delta) - phi(x)|`` over grid shifts
    with periodic distance at most ``1/2``."""
    phi = np.asarray(phi, dtype=np.float64)
    n = phi.shape[0]
    h = 1.0 / n if h is None else h
    if phi.ndim == 1:
        kmax = n // 2
        return np.arange(1, kmax + 1) * h, _kernels.modulus_1d(phi, kmax)
    shifts, dist = _shift_table_2d(n, 0.5)
    return dist * (h * n), _kernels.modulus_2d(phi, shifts)


def holder_seminorm(phi: np.ndarray, alpha: float, h: float | None = None) -> float:
    """``max |phi_i - phi_j| / dist(i, j)^alpha`` over pairs at periodic distance
    at most ``min(1, 1/2)``."""
    if not (0.0 < alpha <= 1.0):
        raise ValidationError(f"holder: exponent must lie in (0, 1], got {alpha!r}")
    delta, omega = modulus_of_continuity(phi, h)
    if omega.size == 0:
        return 0.0
    return float(np.max(omega / delta**alpha))


def holder_norm(phi: np.ndarray, alpha: float, h: float | None = None) -> float:
    return float(np.max(np.abs(phi))) + holder_seminorm(phi, alpha, h)


def holder_exponent(phi: np.ndarray, h: float | None = None, dmin: float | None = None,
                    dmax: float = 0.25, points: int = 24) -> tuple[float, float]:
    """Log-log regression slope of the modulus of continuity, with its ``R^2``.

    A flat field returns ``(1.0, 1.0)``.
    """
    delta, omega = modulus_of_continuity(phi, h)
    n = np.asarray(phi).shape[0]
    dmin = (1.0 / n if h is None else h) if dmin is None else dmin
    sel = (delta >= dmin * (1 - 1e-12)) & (delta <= dmax * (1 + 1e-12))
    delta, omega = delta[sel], omega[sel]
    if omega.size == 0 or np.max(omega) <= 1e-14 * max(1.0, float(np.max(np.abs(phi)))):
        return 1.0, 1.0
    # thin to roughly log-uniform sample of scales
    targets = np.geomspace(delta.min(), delta.max(), points)
    idx = np.unique(np.searchsorted(delta, targets).clip(0, delta.size - 1))
    x, y = np.log(delta[idx]), np.log(np.maximum(omega[idx], 1e-300))
    if x.size < 2:
        return 1.0, 1.0
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss if ss > 0 else 1.0
    return float(slope), float(r2)


# ---------------------------------------------------------------------------
# operator bounds

@dataclass
class OperatorBoundReport:
    p: float
    exponent: float
    sup_norm: float
    holder: float
    sup_bound: float
    holder_bound: float
    tolerance: float
    K: float
    tail: float

    @property
    def sup_violation(self) -> bool:
        return self.sup_norm > self.sup_bound + self.tolerance

    @property
    def holder_violation(self) -> bool:
        return self.holder > self.holder_bound + self.tolerance

    @property
    def ok(self) -> bool:
        return not (self.sup_violation or self.holder_violation)


def check_operator_bounds(op: DiscreteOperator, phi: np.ndarray, p: float, K: float | None = None,
                          tail: float | None = None, tol: float | None = None) -> OperatorBoundReport:
    """Measure ``||L_h phi||_inf`` and ``[L_h phi]_{p - order}`` against

        ||L phi||_inf      <= K/(p - order) [phi]_p + 2 ||phi||_inf nu(B_1^c)
        [L phi]_{p-order}  <= 2 (K/(p - order) + nu(B_1^c)) [phi]_p

    The default tolerance is ``10 h^{1 - order} ||phi||_p``.
    """
    order = op.order
    if not (order < p <= 1.0):
        raise ValidationError(f"bounds: p must lie in (order, 1] = ({order}, 1], got {p!r}")
    if op.spec is None and (K is None or tail is None):
        raise ValidationError("bounds: K and tail mass required for an operator without spec")
    K = op.spec.small_jump_constant() if K is None else K
    tail = op.spec.tail_mass() if tail is None else tail
    phi = np.asarray(phi, dtype=np.float64)
    semi = holder_seminorm(phi, p)
    sup_phi = float(np.max(np.abs(phi)))
    Lphi = apply_operator(op, phi)
    ex = p - order
    measured_sup = float(np.max(np.abs(Lphi)))
    measured_holder = holder_seminorm(Lphi, ex) if ex > 0 else 0.0
    if tol is None:
        tol = 10.0 * op.grid.h ** (1.0 - order) * (sup_phi + semi)
    return OperatorBoundReport(
        p=p, exponent=ex, sup_norm=measured_sup, holder=measured_holder,
        sup_bound=K / ex * semi + 2.0 * sup_phi * tail,
        holder_bound=2.0 * (K / ex + tail) * semi,
        tolerance=tol, K=K, tail=tail,
    )
