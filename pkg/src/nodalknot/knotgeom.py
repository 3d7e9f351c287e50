"""Knot curves in the flat 3-torus, framed tubular charts and the metric fields.

The torus is the unit box ``[0, 1)^3`` with periodic identification.  A knot
is a finite Fourier curve, its tube ``Omega`` is parametrised by the chart

    Phi(s, z) = gamma(s) + rho * (z1 * e1(s) + z2 * e2(s)),   |z| <= 1,

where ``(e1, e2)`` is a rotation-minimising normal frame closed up by a
linear-in-``s`` correction of its holonomy.  Inside the tube the reference
metric is the product ``A^-1 ds^2 + |dz|^2`` written in these coordinates; it
is blended smoothly to the Euclidean metric across the collar
``1 < |z| <= 1 + w``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

TUBE_INTERIOR = 0
COLLAR = 1
EXTERIOR = 2
REGION_NAMES = {TUBE_INTERIOR: "tube-interior", COLLAR: "collar", EXTERIOR: "exterior"}


class ReachViolation(ValueError):
    """Raised when the closest point on the knot is not unique."""


class CurveError(ValueError):
    """Raised for curves that are not embedded immersions."""


def minimal_image(d: np.ndarray) -> np.ndarray:
    """Wrap displacement vectors of the unit torus into ``[-1/2, 1/2)``."""
    return d - np.floor(d + 0.5)


# ---------------------------------------------------------------------------
# curves
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KnotCurve:
    """Closed Fourier curve ``gamma: R/Z -> [0,1)^3``.

    ``gamma(s) = center + sum_k cos_coeffs[k-1] cos(2 pi k s)
    + sin_coeffs[k-1] sin(2 pi k s)``.
    """

    center: np.ndarray
    cos_coeffs: np.ndarray
    sin_coeffs: np.ndarray
    name: str = "curve"

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float).reshape(3)
        a = np.atleast_2d(np.asarray(self.cos_coeffs, dtype=float))
        b = np.atleast_2d(np.asarray(self.sin_coeffs, dtype=float))
        if a.shape != b.shape or a.shape[1] != 3:
            raise ValueError("cos/sin coefficient arrays must both have shape (K, 3)")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "cos_coeffs", a)
        object.__setattr__(self, "sin_coeffs", b)

    @property
    def n_modes(self) -> int:
        return self.cos_coeffs.shape[0]

    def __call__(self, s, deriv: int = 0) -> np.ndarray:
        """Evaluate ``gamma`` (or its ``deriv``-th derivative) at parameters ``s``."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        k = np.arange(1, self.n_modes + 1)
        omega = 2.0 * np.pi * k
        theta = np.outer(s, omega) + deriv * np.pi / 2.0
        scale = omega**deriv
        out = (np.cos(theta) * scale) @ self.cos_coeffs + (np.sin(theta) * scale) @ self.sin_coeffs
        if deriv == 0:
            out = out + self.center
        return out

    def samples(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        s = np.arange(n) / n
        return s, self(s)

    def length(self, n: int = 4096) -> float:
        s = np.arange(n) / n
        return float(np.mean(np.linalg.norm(self(s, 1), axis=1)))

    def speed_min(self, n: int = 4096) -> float:
        s = np.arange(n) / n
        return float(np.linalg.norm(self(s, 1), axis=1).min())

    def curvature_max(self, n: int = 4096) -> float:
        s = np.arange(n) / n
        d1, d2 = self(s, 1), self(s, 2)
        speed = np.linalg.norm(d1, axis=1)
        kappa = np.linalg.norm(np.cross(d1, d2), axis=1) / speed**3
        return float(kappa.max())

    def min_self_distance(self, n: int = 1024, separation: float = 0.1) -> float:
        """Smallest local minimum of the (periodic) pair distance between points
        whose parameters differ by more than ``separation``.

        Only genuine near-approaches count: for a round circle no distinct pair
        is a local minimum and the result is ``inf``.
        """
        s, p = self.samples(n)
        d = np.linalg.norm(minimal_image(p[:, None, :] - p[None, :, :]), axis=2)
        ds = np.abs(s[:, None] - s[None, :])
        ds = np.minimum(ds, 1.0 - ds)
        is_min = ds > separation
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                if di or dj:
                    is_min &= d <= np.roll(np.roll(d, di, axis=0), dj, axis=1)
        return float(d[is_min].min()) if is_min.any() else np.inf

    def injective(self, n: int = 1024, separation: float = 0.1) -> bool:
        """Sampled injectivity: no pair closer than the local sample spacing."""
        s, p = self.samples(n)
        spacing = self.length() / n
        d = np.linalg.norm(minimal_image(p[:, None, :] - p[None, :, :]), axis=2)
        ds = np.abs(s[:, None] - s[None, :])
        ds = np.minimum(ds, 1.0 - ds)
        return bool(d[ds > 2.0 / n].min() > 1e-3 * spacing)

    def transformed(self, matrix=None, scale: float = 1.0, center=None, name=None) -> "KnotCurve":
        """Rotate/scale the curve about its center and optionally move the center."""
        R = np.eye(3) if matrix is None else np.asarray(matrix, dtype=float)
        a = scale * self.cos_coeffs @ R.T
        b = scale * self.sin_coeffs @ R.T
        c = self.center if center is None else np.asarray(center, dtype=float)
        return KnotCurve(c, a, b, name or self.name)

    def validate(self, n: int = 4096) -> None:
        if self.speed_min(n) < 1e-8:
            raise CurveError(f"{self.name}: curve is not immersed (|gamma'| < 1e-8)")
        if not self.injective():
            raise CurveError(f"{self.name}: curve self-intersects")

    @classmethod
    def from_function(cls, func: Callable[[np.ndarray], np.ndarray], n_modes: int,
                      name: str = "curve", n_fft: int = 256) -> "KnotCurve":
        """Fourier coefficients of a trigonometric-polynomial curve via FFT."""
        s = np.arange(n_fft) / n_fft
        p = np.asarray(func(2.0 * np.pi * s), dtype=float)
        c = np.fft.rfft(p, axis=0) / n_fft
        center = c[0].real
        a = 2.0 * c[1:n_modes + 1].real
        b = -2.0 * c[1:n_modes + 1].imag
        a[np.abs(a) < 1e-14] = 0.0
        b[np.abs(b) < 1e-14] = 0.0
        return cls(center, a, b, name)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "center": self.center.tolist(),
            "cos": self.cos_coeffs.tolist(),
            "sin": self.sin_coeffs.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KnotCurve":
        return cls(d["center"], d["cos"], d["sin"], d.get("name", "curve"))


def _rotation(axis, angle) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    K = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
    return np.eye(3) + np.sin(angle) * K + (1 - np.cos(angle)) * K @ K


def _fit_to_box(curve: KnotCurve, extent: float) -> KnotCurve:
    s, p = curve.samples(2048)
    span = (p.max(axis=0) - p.min(axis=0)).max()
    mid = 0.5 * (p.max(axis=0) + p.min(axis=0))
    shifted = KnotCurve(curve.center - mid, curve.cos_coeffs, curve.sin_coeffs, curve.name)
    return shifted.transformed(scale=extent / span, center=np.full(3, 0.5))


def circle(radius: float = 0.25, center=(0.5, 0.5, 0.5)) -> KnotCurve:
    return KnotCurve(center, [[radius, 0.0, 0.0]], [[0.0, radius, 0.0]], "circle")


def trefoil(extent: float = 0.72) -> KnotCurve:
    """(2,3) torus knot, slightly rotated so it has no lattice symmetry."""
    def f(t):
        rad = 2.5 + np.cos(3 * t)
        return np.stack([rad * np.cos(2 * t), rad * np.sin(2 * t), np.sin(3 * t)], axis=-1)

    base = KnotCurve.from_function(f, 5, "trefoil")
    R = _rotation([0.3, -0.2, 1.0], 0.37) @ _rotation([1.0, 0.0, 0.0], 0.08)
    return _fit_to_box(base.transformed(R), extent)


def figure_eight(extent: float = 0.84) -> KnotCurve:
    def f(t):
        rad = 2.0 + 1.2 * np.cos(2 * t)
        return np.stack([rad * np.cos(3 * t), rad * np.sin(3 * t), np.sin(4 * t)], axis=-1)

    base = KnotCurve.from_function(f, 5, "figure-eight")
    R = _rotation([0.1, 0.25, 1.0], 0.21)
    return _fit_to_box(base.transformed(R), extent)


CATALOG = {"circle": circle, "trefoil": trefoil, "figure-eight": figure_eight}


def knot_catalog(name: str) -> KnotCurve:
    try:
        return CATALOG[name]()
    except KeyError:
        raise KeyError(f"unknown knot {name!r}; available: {sorted(CATALOG)}") from None


# ---------------------------------------------------------------------------
# framed tube
# ---------------------------------------------------------------------------


def _unit(v):
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


@dataclass(frozen=True)
class ChartSample:
    """Chart coordinates of a batch of points.

    Points farther than ``rho (1 + w)`` from the knot are tagged exterior and
    carry ``nan`` coordinates.
    """

    s: np.ndarray
    z: np.ndarray
    tag: np.ndarray

    @property
    def r(self) -> np.ndarray:
        return np.hypot(self.z[:, 0], self.z[:, 1])

    @property
    def theta(self) -> np.ndarray:
        return np.arctan2(self.z[:, 1], self.z[:, 0])

    @property
    def near(self) -> np.ndarray:
        return self.tag != EXTERIOR

    def __len__(self):
        return len(self.s)


def tags_from_radius(r: np.ndarray, width: float) -> np.ndarray:
    tag = np.full(r.shape, EXTERIOR, dtype=np.int8)
    with np.errstate(invalid="ignore"):
        tag[r <= 1.0 + width] = COLLAR
        tag[r <= 1.0] = TUBE_INTERIOR
    return tag


@dataclass(frozen=True, eq=False)
class FramedTube:
    """Knot with a closed normal frame and the tube chart ``Phi(s, z)``.

    The frame is ``e1 = cos(alpha) n + sin(alpha) b``, ``e2 = T x e1`` where
    ``(n, b)`` is a fixed smooth reference normal frame (projection of
    ``ref_axis``) and ``alpha`` is the rotation-minimising angle minus the
    linear holonomy correction, stored as a truncated Fourier series.
    """

    curve: KnotCurve
    rho: float
    width: float
    ref_axis: np.ndarray
    alpha_coeffs: np.ndarray  # complex Fourier coefficients of the periodic part
    winding: int
    holonomy: float
    n_samples: int
    s_samples: np.ndarray
    e1_samples: np.ndarray
    e2_samples: np.ndarray
    _tree: cKDTree = field(repr=False, compare=False)
    _tree_s: np.ndarray = field(repr=False, compare=False)

    @property
    def outer_radius(self) -> float:
        """Geometric radius of tube plus collar."""
        return self.rho * (1.0 + self.width)

    # -- reference frame and its derivative --------------------------------
    def _reference(self, s):
        d1, d2 = self.curve(s, 1), self.curve(s, 2)
        speed = np.linalg.norm(d1, axis=1, keepdims=True)
        T = d1 / speed
        dT = (d2 - np.sum(d2 * T, axis=1, keepdims=True) * T) / speed
        a = self.ref_axis
        aT = T @ a
        w = a[None, :] - aT[:, None] * T
        wn = np.linalg.norm(w, axis=1, keepdims=True)
        n = w / wn
        dw = -(dT @ a)[:, None] * T - aT[:, None] * dT
        dn = (dw - np.sum(n * dw, axis=1, keepdims=True) * n) / wn
        b = np.cross(T, n)
        db = np.cross(dT, n) + np.cross(T, dn)
        return T, dT, n, dn, b, db

    def alpha(self, s, deriv: int = 0) -> np.ndarray:
        s = np.atleast_1d(np.asarray(s, dtype=float))
        k = np.arange(len(self.alpha_coeffs))
        out = np.empty(len(s))
        chunk = 65536
        for i0 in range(0, len(s), chunk):
            ph = np.exp(2j * np.pi * np.outer(s[i0:i0 + chunk], k))
            coef = self.alpha_coeffs * (2j * np.pi * k) ** deriv
            out[i0:i0 + chunk] = (ph @ coef).real
        lin = 2.0 * np.pi * self.winding
        if deriv == 0:
            return out + lin * s
        if deriv == 1:
            return out + lin
        return out

    def frame(self, s, derivatives: bool = False):
        """Return ``(T, e1, e2)`` at ``s`` and, optionally, ``(dT, de1, de2)``."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        T, dT, n, dn, b, db = self._reference(s)
        al = self.alpha(s)[:, None]
        ca, sa = np.cos(al), np.sin(al)
        e1 = ca * n + sa * b
        e2 = -sa * n + ca * b
        if not derivatives:
            return T, e1, e2
        dal = self.alpha(s, 1)[:, None]
        de1 = dal * e2 + ca * dn + sa * db
        de2 = np.cross(dT, e1) + np.cross(T, de1)
        return (T, e1, e2), (dT, de1, de2)

    def chart(self, s, z) -> np.ndarray:
        """Forward chart ``Phi(s, z)`` wrapped into the unit box."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        z = np.atleast_2d(np.asarray(z, dtype=float))
        _, e1, e2 = self.frame(s)
        x = self.curve(s) + self.rho * (z[:, :1] * e1 + z[:, 1:2] * e2)
        return np.mod(x, 1.0)

    def chart_jacobian(self, s, z) -> np.ndarray:
        """``d Phi / d(s, z1, z2)`` as an array of shape ``(n, 3, 3)`` (columns)."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        z = np.atleast_2d(np.asarray(z, dtype=float))
        (T, e1, e2), (_, de1, de2) = self.frame(s, derivatives=True)
        col_s = self.curve(s, 1) + self.rho * (z[:, :1] * de1 + z[:, 1:2] * de2)
        return np.stack([col_s, self.rho * e1, self.rho * e2], axis=2)

    def chart_inverse(self, x, newton_tol: float = 1e-15, max_iter: int = 30) -> ChartSample:
        """Chart coordinates ``(s, z)`` of points ``x``; exterior points get nan.

        Closest-point projection: nearest arc sample, then Newton on
        ``(gamma(s) - x) . gamma'(s) = 0``.
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        npts = len(x)
        out_s = np.full(npts, np.nan)
        out_z = np.full((npts, 2), np.nan)
        spacing = self.curve.length() / len(self._tree_s)
        cutoff = self.outer_radius + spacing
        dist, idx = self._tree.query(np.mod(x, 1.0), k=4, distance_upper_bound=cutoff)
        near = np.isfinite(dist[:, 0])
        if not near.any():
            return ChartSample(out_s, out_z, np.full(npts, EXTERIOR, dtype=np.int8))
        pts = x[near]
        s = self._tree_s[idx[near, 0]].copy()
        for _ in range(max_iter):
            g0, g1, g2 = self.curve(s), self.curve(s, 1), self.curve(s, 2)
            d = minimal_image(g0 - pts)
            f = np.sum(d * g1, axis=1)
            fp = np.sum(g1 * g1, axis=1) + np.sum(d * g2, axis=1)
            step = f / fp
            s = s - step
            if np.max(np.abs(step)) < newton_tol:
                break
        s = np.mod(s, 1.0)
        d = minimal_image(pts - self.curve(s))
        dbest = np.linalg.norm(d, axis=1)
        # a second sample far along the curve and equally close means two minima
        others = idx[near, 1:]
        valid = others < len(self._tree_s)
        s_other = np.where(valid, self._tree_s[np.minimum(others, len(self._tree_s) - 1)], np.nan)
        sep = np.abs(s_other - s[:, None])
        sep = np.minimum(sep, 1.0 - sep)
        d_other = dist[near, 1:]
        ambiguous = valid & (sep > 0.1) & (d_other < dbest[:, None] - 0.5 * spacing)
        ambiguous &= (dbest <= self.outer_radius)[:, None]
        if ambiguous.any():
            raise ReachViolation(
                f"closest point on {self.curve.name} is ambiguous for {int(ambiguous.any(axis=1).sum())} points")
        _, e1, e2 = self.frame(s)
        z = np.stack([np.sum(d * e1, axis=1), np.sum(d * e2, axis=1)], axis=1) / self.rho
        r = np.hypot(z[:, 0], z[:, 1])
        inside = r <= 1.0 + self.width
        where = np.flatnonzero(near)[inside]
        out_s[where] = s[inside]
        out_z[where] = z[inside]
        tag = tags_from_radius(np.hypot(out_z[:, 0], out_z[:, 1]), self.width)
        return ChartSample(out_s, out_z, tag)


def _double_reflection(points: np.ndarray, tangents: np.ndarray, r0: np.ndarray) -> np.ndarray:
    """Rotation-minimising frame vectors along a closed polyline sample.

    Returns ``n + 1`` reference vectors; the last one is the transport of
    ``r0`` once around the curve.
    """
    n = len(points)
    r = np.empty((n + 1, 3))
    r[0] = r0
    for i in range(n):
        j = (i + 1) % n
        v1 = points[j] - points[i]
        c1 = v1 @ v1
        rl = r[i] - (2.0 / c1) * (v1 @ r[i]) * v1
        tl = tangents[i] - (2.0 / c1) * (v1 @ tangents[i]) * v1
        v2 = tangents[j] - tl
        c2 = v2 @ v2
        if c2 < 1e-300:
            r[i + 1] = rl
        else:
            r[i + 1] = rl - (2.0 / c2) * (v2 @ rl) * v2
    return r


def _choose_axis(curve: KnotCurve) -> np.ndarray:
    s = np.arange(2048) / 2048
    T = _unit(curve(s, 1))
    golden = np.pi * (3.0 - np.sqrt(5.0))
    best, best_val = None, -1.0
    for i in range(64):
        zc = 1.0 - (i + 0.5) / 64
        rad = np.sqrt(1.0 - zc * zc)
        a = np.array([rad * np.cos(golden * i), rad * np.sin(golden * i), zc])
        val = np.linalg.norm(np.cross(T, a), axis=1).min()
        if val > best_val:
            best, best_val = a, val
    return best


def build_frame(curve: KnotCurve, n_samples: int = 2048, rho: float = 0.05,
                width: float = 0.5, n_alpha_modes: Optional[int] = None) -> FramedTube:
    """Closed rotation-minimising frame and tube chart around ``curve``."""
    if n_samples < 64:
        raise ValueError("n_samples must be at least 64")
    if rho <= 0 or width <= 0:
        raise ValueError("rho and width must be positive")
    curve.validate()
    s = np.arange(n_samples) / n_samples
    pts = curve(s)
    T = _unit(curve(s, 1))
    axis = _choose_axis(curve)
    tmp = FramedTube(curve, rho, width, axis, np.zeros(1, complex), 0, 0.0, n_samples,
                     s, pts, pts, None, None)
    _, _, nref, _, bref, _ = tmp._reference(s)
    r = _double_reflection(pts, T, nref[0])
    # angle of the transported vector in the reference frame
    nfull = np.vstack([nref, nref[:1]])
    bfull = np.vstack([bref, bref[:1]])
    beta = np.unwrap(np.arctan2(np.sum(r * bfull, axis=1), np.sum(r * nfull, axis=1)))
    total = beta[-1] - beta[0]
    winding = int(np.round(total / (2.0 * np.pi)))
    holonomy = total - 2.0 * np.pi * winding
    periodic = beta[:-1] - total * s
    coef = np.fft.fft(periodic) / n_samples
    kmax = n_samples // 2
    c = np.zeros(kmax, dtype=complex)
    c[0] = coef[0]
    c[1:kmax] = 2.0 * coef[1:kmax]
    if n_alpha_modes is None:
        mag = np.abs(c)
        keep = np.flatnonzero(mag > 1e-15 * max(1.0, mag.max()))
        n_alpha_modes = int(keep.max()) + 1 if len(keep) else 1
    c = c[:n_alpha_modes]
    # sample-space tree for closest point queries (periodic box)
    n_tree = max(4 * n_samples, 4096)
    st = np.arange(n_tree) / n_tree
    tree = cKDTree(np.mod(curve(st), 1.0), boxsize=1.0)
    tube = FramedTube(curve, float(rho), float(width), axis, c, winding, float(holonomy),
                      n_samples, s, pts, pts, tree, st)
    _, e1, e2 = tube.frame(s)
    return dataclasses.replace(tube, e1_samples=e1, e2_samples=e2)


def reach_check(tube: FramedTube) -> float:
    """Lower bound on the reach of the knot minus the tube-plus-collar radius.

    Positive values certify that the chart is an embedding on
    ``|z| <= 1 + w``; negative values are returned, not raised.
    """
    curv_radius = 1.0 / tube.curve.curvature_max()
    half_gap = 0.5 * tube.curve.min_self_distance()
    return float(min(curv_radius, half_gap) - tube.outer_radius)


# ---------------------------------------------------------------------------
# metric configuration and fields
# ---------------------------------------------------------------------------


def eq_a_threshold() -> float:
    """Smallest admissible longitudinal constant, ``mu_D2 / (4 pi^2)``."""
    from .specfun import disk_neumann_first

    return disk_neumann_first() / (4.0 * np.pi**2)


@dataclass(frozen=True)
class MetricConfig:
    """Scalar parameters of the metric family.

    ``s`` holds the conformal parameters; they pair with the direction
    functions handed to :class:`MetricField` (``h = exp(2 sum s_i psi_i)``).
    ``t=None`` uses the preset ``t = 1 / eps``.
    """

    A: float = 1.0
    eps: float = 1.0
    t: Optional[float] = None
    s: tuple = (0.0, 0.0)
    dimension: int = 3

    def __post_init__(self):
        object.__setattr__(self, "s", tuple(float(v) for v in self.s))
        if self.eps <= 0 or self.eps > 1:
            raise ValueError("eps must lie in (0, 1]")
        if self.t_value < 1:
            raise ValueError("collar sharpness t must be >= 1")
        if self.A <= eq_a_threshold():
            raise ValueError(
                f"A = {self.A} violates A > mu_D2/(4 pi^2) = {eq_a_threshold():.6f}")

    @property
    def t_value(self) -> float:
        return 1.0 / self.eps if self.t is None else float(self.t)

    def replace(self, **changes) -> "MetricConfig":
        return dataclasses.replace(self, **changes)


def smoothstep_quintic(x):
    x = np.clip(x, 0.0, 1.0)
    return x * x * x * (x * (6.0 * x - 15.0) + 10.0)


def smooth_transition(x):
    """C-infinity monotone step from 0 (x <= 0) to 1 (x >= 1)."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)
        b = np.where(x < 1, np.exp(-1.0 / np.where(x < 1, 1.0 - x, 1.0)), 0.0)
    return a / (a + b)


def cutoff_f(tag, r, config: MetricConfig) -> np.ndarray:
    """Collar factor ``f_t``: 1 deep inside the tube, ``eps`` outside it.

    In between, a quintic smoothstep of the distance ``1 - |z|`` to the tube
    boundary over a layer of width ``1/t``.
    """
    tag = np.asarray(tag)
    r = np.asarray(r, dtype=float)
    eps = config.eps
    out = np.full(np.broadcast(tag, r).shape, eps, dtype=float)
    inside = tag == TUBE_INTERIOR
    if np.any(inside):
        dist = 1.0 - np.where(inside, r, 1.0)
        q = smoothstep_quintic(dist * config.t_value)
        out = np.where(inside, eps + (1.0 - eps) * q, out)
    return out


ConformalDirection = Callable[[ChartSample], np.ndarray]


def constant_direction(chart: ChartSample) -> np.ndarray:
    return np.ones(len(chart))


@dataclass(frozen=True, eq=False)
class MetricField:
    """Position -> SPD metric ``h_s f_t g0`` on the torus.

    ``directions`` are conformal direction functions of chart samples,
    paired with ``config.s``.
    """

    tube: FramedTube
    config: MetricConfig
    directions: Sequence[ConformalDirection] = ()

    def with_config(self, **changes) -> "MetricField":
        return dataclasses.replace(self, config=self.config.replace(**changes))

    def with_directions(self, directions, s) -> "MetricField":
        return dataclasses.replace(self, directions=tuple(directions),
                                   config=self.config.replace(s=tuple(s)))

    def chart(self, x) -> ChartSample:
        return self.tube.chart_inverse(x)

    def base_metric(self, x, chart: Optional[ChartSample] = None) -> np.ndarray:
        """Reference metric ``g0`` (no ``f_t``, no conformal factor)."""
        x = np.atleast_2d(x)
        if chart is None:
            chart = self.chart(x)
        G = np.broadcast_to(np.eye(3), (len(x), 3, 3)).copy()
        near = chart.near
        if not near.any():
            return G
        s, z = chart.s[near], chart.z[near]
        J = self.tube.chart_jacobian(s, z)
        Jinv = np.linalg.inv(J)
        D = np.array([1.0 / self.config.A, 1.0, 1.0])
        Gt = np.einsum("nki,k,nkj->nij", Jinv, D, Jinv)
        Gt = 0.5 * (Gt + np.transpose(Gt, (0, 2, 1)))
        r = np.hypot(z[:, 0], z[:, 1])
        beta = smooth_transition((r - 1.0) / self.tube.width)[:, None, None]
        G[near] = (1.0 - beta) * Gt + beta * np.eye(3)
        return G

    def conformal_factor(self, chart: ChartSample) -> np.ndarray:
        expo = np.zeros(len(chart))
        for si, psi in zip(self.config.s, self.directions):
            if si != 0.0:
                expo = expo + 2.0 * si * psi(chart)
        return np.exp(expo)

    def scale_factor(self, chart: ChartSample) -> np.ndarray:
        """Pointwise scalar ``h_s * f_t`` multiplying ``g0``."""
        return self.conformal_factor(chart) * cutoff_f(chart.tag, chart.r, self.config)

    def evaluate(self, x):
        """Metric matrices ``(n, 3, 3)``, region tags and eigenvalue bounds."""
        x = np.atleast_2d(x)
        chart = self.chart(x)
        G = self.scale_factor(chart)[:, None, None] * self.base_metric(x, chart)
        w = np.linalg.eigvalsh(G)
        return G, chart.tag, (float(w.min()), float(w.max()))


@dataclass(frozen=True, eq=False)
class ProductTubeField:
    """Metric ``h_s A^-1 ds^2 + |dz|^2`` on the standalone tube in chart coordinates.

    Points are ``(s, z1, z2)``; there is no exterior and ``f_t = 1``.
    """

    A: float = 1.0
    s: tuple = ()
    directions: Sequence[ConformalDirection] = ()
    width: float = 0.5

    def chart(self, x) -> ChartSample:
        x = np.atleast_2d(x)
        z = x[:, 1:3].copy()
        return ChartSample(np.mod(x[:, 0], 1.0), z, np.full(len(x), TUBE_INTERIOR, dtype=np.int8))

    def base_metric(self, x, chart=None) -> np.ndarray:
        n = len(np.atleast_2d(x))
        return np.broadcast_to(np.diag([1.0 / self.A, 1.0, 1.0]), (n, 3, 3)).copy()

    def conformal_factor(self, chart: ChartSample) -> np.ndarray:
        expo = np.zeros(len(chart))
        for si, psi in zip(self.s, self.directions):
            if si != 0.0:
                expo = expo + 2.0 * si * psi(chart)
        return np.exp(expo)

    def scale_factor(self, chart: ChartSample) -> np.ndarray:
        return self.conformal_factor(chart)

    def with_directions(self, directions, s) -> "ProductTubeField":
        return dataclasses.replace(self, directions=tuple(directions), s=tuple(float(v) for v in s))

    def evaluate(self, x):
        x = np.atleast_2d(x)
        chart = self.chart(x)
        G = self.scale_factor(chart)[:, None, None] * self.base_metric(x)
        w = np.linalg.eigvalsh(G)
        return G, chart.tag, (float(w.min()), float(w.max()))
