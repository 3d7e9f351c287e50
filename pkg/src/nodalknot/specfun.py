"""Bessel functions, Neumann spectra of disks and balls, and the separable
spectrum of the model tube ``Sigma x D^m``.

Bessel values come from :func:`scipy.special.jv`; roots of the Neumann
condition are bracketed on a grid and refined with Brent's method.
"""

from __future__ import annotations

import csv
import functools
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import optimize, special

__all__ = [
    "bessel_j",
    "bessel_j_deriv",
    "radial_profile_deriv_zero",
    "disk_neumann_first",
    "ball_neumann_first",
    "DiskMode",
    "disk_modes",
    "harmonic_multiplicity",
    "ModelLevel",
    "ModelSpectrum",
    "model_levels",
    "model_tube_spectrum",
    "TubeMode",
    "model_eigenfunction",
    "first_harmonics",
    "sphere_area",
    "harmonic_constant",
    "sphere_quadrature",
]

MAX_ORDER = 10.0
MAX_ARG = 100.0


def _check_order(nu) -> float:
    nu = float(nu)
    if nu < 0 or nu > MAX_ORDER or not float(2 * nu).is_integer():
        raise ValueError(f"Bessel order {nu} must be an integer or half-integer in [0, {MAX_ORDER}]")
    return nu


def bessel_j(nu, x):
    """Bessel function of the first kind ``J_nu(x)``.

    Parameters
    ----------
    nu : float
        Integer or half-integer order in ``[0, 10]``.
    x : float or array_like
        Arguments in ``[0, 100]``.
    """
    nu = _check_order(nu)
    xa = np.asarray(x, dtype=float)
    if np.any(xa < 0) or np.any(xa > MAX_ARG) or np.any(~np.isfinite(xa)):
        raise ValueError(f"Bessel argument must lie in [0, {MAX_ARG}]")
    out = special.jv(nu, xa)
    return float(out) if np.ndim(out) == 0 else out


def bessel_j_deriv(nu, x):
    """``J_nu'(x) = (J_{nu-1}(x) - J_{nu+1}(x)) / 2``."""
    nu = _check_order(nu)
    xa = np.asarray(x, dtype=float)
    out = 0.5 * (special.jv(nu - 1.0, xa) - special.jv(nu + 1.0, xa))
    return float(out) if np.ndim(out) == 0 else out


def _neumann_function(m: int, n: int):
    """``F(x) = (1 - m/2) J_nu(x) + x J_nu'(x)`` with ``nu = n + m/2 - 1``.

    ``F(x) = 0`` is the Neumann condition at ``r = 1`` for the radial profile
    ``r^(1-m/2) J_nu(x r)`` of the degree-``n`` ball eigenfunctions.
    """
    nu = n + 0.5 * m - 1.0

    def F(x):
        return (1.0 - 0.5 * m) * special.jv(nu, x) + x * 0.5 * (special.jv(nu - 1.0, x) - special.jv(nu + 1.0, x))

    return F


@functools.lru_cache(maxsize=None)
def _neumann_roots(m: int, n: int, count: int, xmax: float = MAX_ARG) -> tuple:
    F = _neumann_function(m, n)
    grid = np.arange(1e-3, xmax + 1e-9, 1e-2)
    vals = F(grid)
    roots = []
    for i in np.flatnonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0):
        roots.append(optimize.brentq(F, grid[i], grid[i + 1], xtol=1e-15, rtol=4 * np.finfo(float).eps,
                                     maxiter=200))
        if len(roots) == count:
            break
    return tuple(roots)


def radial_profile_deriv_zero(m: int, n: int, l: int) -> float:
    """``l``-th positive root of the Neumann condition for degree ``n`` on the unit ``m``-ball.

    The eigenvalue is the square of the returned value.  For ``n = 0`` the
    trivial root ``x = 0`` (constant mode) is not counted.

    Examples
    --------
    >>> round(radial_profile_deriv_zero(2, 1, 1), 7)
    1.8411838
    """
    if not (2 <= m <= 8 and 0 <= n <= 6 and 1 <= l <= 6):
        raise ValueError("require 2 <= m <= 8, 0 <= n <= 6, 1 <= l <= 6")
    roots = _neumann_roots(int(m), int(n), 6)
    if len(roots) < l:
        raise ValueError(f"no bracket for root {l} of degree {n} in dimension {m} within [0, {MAX_ARG}]")
    return roots[l - 1]


def disk_neumann_first() -> float:
    """First nontrivial Neumann eigenvalue of the unit disk."""
    return radial_profile_deriv_zero(2, 1, 1) ** 2


def ball_neumann_first(m: int) -> float:
    """First nontrivial Neumann eigenvalue of the unit ``m``-ball (degree-1 modes)."""
    return radial_profile_deriv_zero(m, 1, 1) ** 2


def harmonic_multiplicity(m: int, n: int) -> int:
    """Dimension of degree-``n`` spherical harmonics on ``S^(m-1)``."""
    if m == 1:
        return 1 if n == 0 else 0
    a = math.comb(n + m - 1, m - 1)
    b = math.comb(n + m - 3, m - 1) if n >= 2 else 0
    return a - b


@dataclass(frozen=True)
class DiskMode:
    """Neumann mode family of the unit ``m``-ball: degree ``n``, radial index ``l``.

    ``l = 0`` (with ``n = 0``) is the constant mode.
    """

    m: int
    n: int
    l: int
    x: float  # sqrt of the eigenvalue

    @property
    def mu(self) -> float:
        return self.x * self.x

    @property
    def multiplicity(self) -> int:
        return harmonic_multiplicity(self.m, self.n)

    @property
    def order(self) -> float:
        return self.n + 0.5 * self.m - 1.0

    def radial(self, r):
        """Radial profile ``r^(1-m/2) J_nu(x r)`` (``J_0`` limit handled at ``r = 0``)."""
        r = np.asarray(r, dtype=float)
        if self.l == 0:
            return np.ones_like(r)
        e = 1.0 - 0.5 * self.m
        xr = self.x * r
        with np.errstate(divide="ignore", invalid="ignore"):
            val = np.where(r > 0, np.power(np.where(r > 0, r, 1.0), e) * special.jv(self.order, xr), 0.0)
        if np.any(r == 0):
            # r^(1-m/2) J_nu(x r) ~ (x/2)^nu r^n / Gamma(nu+1)
            lim = (0.5 * self.x) ** self.order / special.gamma(self.order + 1.0) if self.n == 0 else 0.0
            val = np.where(r == 0, lim, val)
        return val

    def radial_deriv(self, r):
        r = np.asarray(r, dtype=float)
        if self.l == 0:
            return np.zeros_like(r)
        e = 1.0 - 0.5 * self.m
        nu = self.order
        rr = np.where(r > 0, r, 1.0)
        xr = self.x * rr
        jp = 0.5 * (special.jv(nu - 1.0, xr) - special.jv(nu + 1.0, xr))
        val = e * rr ** (e - 1.0) * special.jv(nu, xr) + rr**e * self.x * jp
        if np.any(r == 0):
            lim = (0.5 * self.x) ** nu / special.gamma(nu + 1.0) if self.n == 1 else 0.0
            val = np.where(r == 0, lim, val)
        return val


def disk_modes(m: int, mu_max: float) -> list[DiskMode]:
    """All Neumann mode families of the unit ``m``-ball with eigenvalue ``<= mu_max``."""
    out = [DiskMode(m, 0, 0, 0.0)]
    for n in range(0, 7):
        roots = _neumann_roots(int(m), n, 6)
        for l, x in enumerate(roots, start=1):
            if x * x <= mu_max:
                out.append(DiskMode(m, n, l, x))
        if roots and roots[0] ** 2 > mu_max:
            break
    out.sort(key=lambda d: (d.mu, d.n, d.l))
    return out


@dataclass(frozen=True)
class ModelLevel:
    """One eigenvalue of the model tube with its multiplicity and factor labels."""

    mu: float
    multiplicity: int
    labels: tuple  # ((base eigenvalue index, disk (n, l)), ...)


@dataclass(frozen=True)
class ModelSpectrum:
    levels: tuple

    def values(self, count: Optional[int] = None) -> np.ndarray:
        """Eigenvalues repeated by multiplicity, ascending."""
        vals = [lv.mu for lv in self.levels for _ in range(lv.multiplicity)]
        return np.array(vals if count is None else vals[:count])

    def first_cluster(self) -> ModelLevel:
        return next(lv for lv in self.levels if lv.mu > 0)

    def to_csv(self, path, count: Optional[int] = None) -> None:
        rows = []
        idx = 0
        for lv in self.levels:
            label = ";".join(f"base{b}:disk(n={n},l={l})" for b, (n, l) in lv.labels)
            for _ in range(lv.multiplicity):
                rows.append((idx, repr(lv.mu), lv.multiplicity, label))
                idx += 1
        if count is not None:
            rows = rows[:count]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "eigenvalue", "multiplicity", "labels"])
            w.writerows(rows)


def longitudinal_spectrum(A: float, kmax: int) -> list[tuple[float, int]]:
    """Spectrum of the circle ``R/Z`` with metric ``A^-1 ds^2``: ``4 pi^2 A k^2``."""
    return [(4.0 * np.pi**2 * A * k * k, 1 if k == 0 else 2) for k in range(kmax + 1)]


def model_levels(base: Sequence[tuple[float, int]], m: int, mu_max: float,
                 rel_tol: float = 1e-12) -> ModelSpectrum:
    """All sums ``base eigenvalue + ball Neumann eigenvalue`` below ``mu_max``.

    No gap condition is checked; multiplicities of coinciding sums add up.
    """
    pieces = []
    for bi, (lam, mult) in enumerate(base):
        if lam > mu_max:
            continue
        for d in disk_modes(m, mu_max - lam):
            pieces.append((lam + d.mu, mult * d.multiplicity, (bi, (d.n, d.l))))
    pieces.sort(key=lambda p: p[0])
    levels = []
    for mu, mult, label in pieces:
        if levels and abs(mu - levels[-1][0]) <= rel_tol * max(1.0, abs(mu)):
            levels[-1][1] += mult
            levels[-1][2].append(label)
        else:
            levels.append([mu, mult, [label]])
    return ModelSpectrum(tuple(ModelLevel(mu, mult, tuple(lb)) for mu, mult, lb in levels))


def model_tube_spectrum(A: Optional[float] = None, m: int = 2, count: int = 6,
                        base: Optional[Sequence[tuple[float, int]]] = None) -> ModelSpectrum:
    """Neumann spectrum of ``Sigma x D^m`` with at least ``count`` eigenvalues.

    ``A`` selects the 3D tube (``Sigma`` the circle with metric ``A^-1 ds^2``);
    otherwise ``base`` lists ``(eigenvalue, multiplicity)`` of ``Sigma``.
    Raises ``ValueError`` when the first nontrivial base eigenvalue does not
    exceed the first ball Neumann eigenvalue.
    """
    mu_ball = ball_neumann_first(m)
    if A is not None:
        if m != 2:
            raise ValueError("the longitudinal constant A applies to the 3D tube (m = 2)")
        threshold = mu_ball / (4.0 * np.pi**2)
        if not A > threshold:
            raise ValueError(f"A > mu_D2/(4 pi^2) violated: {A} <= {threshold:.6f}")
        base_fn = lambda kmax: longitudinal_spectrum(A, kmax)
    else:
        if base is None:
            raise ValueError("give either A or a base spectrum")
        base = sorted(base)
        nontrivial = [lam for lam, _ in base if lam > 0]
        if not nontrivial or not nontrivial[0] > mu_ball:
            first = nontrivial[0] if nontrivial else float("nan")
            raise ValueError(f"first nontrivial base eigenvalue {first} must exceed mu_D^{m} = {mu_ball:.6f}")
        base_fn = lambda kmax: list(base)
    mu_max = max(2.0 * mu_ball, 10.0)
    for _ in range(20):
        kmax = int(np.ceil(np.sqrt(mu_max / (4 * np.pi**2 * A)))) + 1 if A is not None else 0
        spec = model_levels(base_fn(kmax), m, mu_max)
        if len(spec.values()) >= count and spec.values()[count - 1] < mu_max:
            # drop an incomplete top level
            return spec
        mu_max *= 1.5
        if mu_max > 4000:
            raise ValueError("count too large for the mode table")
    raise ValueError("could not enumerate enough modes")


def sphere_area(m: int) -> float:
    """Area of the unit sphere ``S^(m-1)`` in ``R^m``."""
    return 2.0 * np.pi ** (0.5 * m) / special.gamma(0.5 * m)


def harmonic_constant(m: int) -> float:
    """``c_m`` such that ``c_m * omega_k`` is unit in ``L^2(S^(m-1))``."""
    return float(np.sqrt(m / sphere_area(m)))


def first_harmonics(m: int, k: int, direction) -> np.ndarray:
    """Degree-one spherical harmonic ``Y_{1,k}(omega) = c_m omega_k`` (``k`` is 1-based)."""
    direction = np.asarray(direction, dtype=float)
    if not 1 <= k <= m or direction.shape[-1] != m:
        raise ValueError("k must lie in 1..m and direction must have m components")
    return harmonic_constant(m) * direction[..., k - 1]


def sphere_quadrature(m: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Product Gauss rule on ``S^(m-1)``, exact for polynomials of degree ``< min(n, 2n-1)``.

    Returns points ``(N, m)`` and weights summing to the sphere area.
    """
    if m < 2:
        raise ValueError("m >= 2")
    if m == 2:
        th = 2.0 * np.pi * (np.arange(2 * n) + 0.5) / (2 * n)
        return np.stack([np.cos(th), np.sin(th)], axis=1), np.full(2 * n, np.pi / n)
    sub_p, sub_w = sphere_quadrature(m - 1, n)
    a = 0.5 * (m - 3)
    t, wt = special.roots_jacobi(n, a, a)
    pts = np.concatenate([np.hstack([np.sqrt(1 - ti * ti) * sub_p, np.full((len(sub_p), 1), ti)]) for ti in t])
    wts = np.concatenate([wi * sub_w for wi in wt])
    return pts, wts


@dataclass(frozen=True)
class TubeMode:
    """Separable Neumann eigenfunction of the model tube ``(S^1 x D^2, A^-1 ds^2 + |dz|^2)``.

    ``cos(2 pi k s)`` or ``sin`` along the circle, ``J_n(x r)`` times
    ``cos(n theta)`` or ``sin`` on the disk.  ``normalized`` makes the
    ``L^2`` norm (volume ``A^-1/2 ds dz``) equal to one.
    """

    disk: DiskMode
    k: int = 0
    angular: str = "cos"
    longitudinal: str = "cos"
    A: float = 1.0
    normalized: bool = True
    _scale: float = field(default=1.0, init=False, repr=False)

    def __post_init__(self):
        if self.angular not in ("cos", "sin") or self.longitudinal not in ("cos", "sin"):
            raise ValueError("angular/longitudinal must be 'cos' or 'sin'")
        if self.disk.m != 2:
            raise ValueError("tube modes use 2D disk modes")
        scale = 1.0
        if self.normalized:
            xg, wg = np.polynomial.legendre.leggauss(80)
            r = 0.5 * (xg + 1.0)
            radial = 0.5 * np.sum(wg * self.disk.radial(r) ** 2 * r)
            ang = 2.0 * np.pi if self.disk.n == 0 else np.pi
            if self.disk.n == 0 and self.angular == "sin":
                raise ValueError("degree-0 modes have no sine partner")
            lon = 1.0 if self.k == 0 else 0.5
            if self.k == 0 and self.longitudinal == "sin":
                raise ValueError("k = 0 has no sine partner")
            scale = 1.0 / np.sqrt(radial * ang * lon / np.sqrt(self.A))
        object.__setattr__(self, "_scale", float(scale))

    @property
    def mu(self) -> float:
        return 4.0 * np.pi**2 * self.A * self.k**2 + self.disk.mu

    def _angular(self, theta, deriv=False):
        n = self.disk.n
        if self.angular == "cos":
            return -n * np.sin(n * theta) if deriv else np.cos(n * theta)
        return n * np.cos(n * theta) if deriv else np.sin(n * theta)

    def _longitudinal(self, s, deriv=False):
        w = 2.0 * np.pi * self.k
        if self.longitudinal == "cos":
            return -w * np.sin(w * s) if deriv else np.cos(w * s)
        return w * np.cos(w * s) if deriv else np.sin(w * s)

    def __call__(self, s, z) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        z = np.asarray(z, dtype=float)
        r = np.hypot(z[..., 0], z[..., 1])
        th = np.arctan2(z[..., 1], z[..., 0])
        return self._scale * self._longitudinal(s) * self.disk.radial(r) * self._angular(th)

    def gradient(self, s, z) -> np.ndarray:
        """Coordinate gradient ``(d/ds, d/dz1, d/dz2)``."""
        s = np.asarray(s, dtype=float)
        z = np.asarray(z, dtype=float)
        r = np.hypot(z[..., 0], z[..., 1])
        th = np.arctan2(z[..., 1], z[..., 0])
        R, dR = self.disk.radial(r), self.disk.radial_deriv(r)
        T, dT = self._angular(th), self._angular(th, True)
        L, dL = self._longitudinal(s), self._longitudinal(s, True)
        rr = np.where(r > 0, r, 1.0)
        # (R T)/r -> R'(0) T' ... only degree-1 modes are nonzero-sloped at r = 0
        RT_over_r = np.where(r > 0, R / rr, dR)
        c, sn = np.cos(th), np.sin(th)
        d_dr = dR * T
        d_dth_over_r = RT_over_r * dT
        gz1 = c * d_dr - sn * d_dth_over_r
        gz2 = sn * d_dr + c * d_dth_over_r
        return self._scale * np.stack([dL * R * T, L * gz1, L * gz2], axis=-1)


def model_eigenfunction(n: int, l: int, k: int = 0, angular: str = "cos", longitudinal: str = "cos",
                        A: float = 1.0, normalized: bool = True) -> TubeMode:
    """Build a :class:`TubeMode` from disk indices ``(n, l)`` and longitudinal index ``k``."""
    if l == 0:
        disk = DiskMode(2, 0, 0, 0.0)
    else:
        disk = DiskMode(2, n, l, radial_profile_deriv_zero(2, n, l))
    return TubeMode(disk, k, angular, longitudinal, A, normalized)


def tube_modes(A: float, mu_max: float) -> list[TubeMode]:
    """All normalized separable tube modes with eigenvalue ``<= mu_max``, ascending."""
    out = []
    for d in disk_modes(2, mu_max):
        angs = ("cos",) if d.n == 0 else ("cos", "sin")
        kmax = int(np.floor(np.sqrt(max(mu_max - d.mu, 0.0) / (4 * np.pi**2 * A))))
        for k in range(kmax + 1):
            lons = ("cos",) if k == 0 else ("cos", "sin")
            for lo in lons:
                for an in angs:
                    out.append(TubeMode(d, k, an, lo, A))
    out.sort(key=lambda t: (t.mu, t.disk.n, t.disk.l, t.k, t.angular, t.longitudinal))
    return out
