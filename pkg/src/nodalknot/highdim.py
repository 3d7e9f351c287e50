"""Semi-analytic model ``Sigma x D^m`` in dimension ``d = dim Sigma + m``.

``Sigma`` is a flat torus ``T^q`` with metric ``a^-1 |dy|^2`` (eigenvalues
``4 pi^2 a |k|^2``).  The first nontrivial Neumann eigenvalue of the unit
``m``-ball has the ``m`` modes ``v_k = r^(1-m/2) J_(m/2)(sqrt(mu) r) Y_(1,k)``,
constant along ``Sigma``.  Everything below is computed by product
quadrature; integrals over ``Sigma`` of ``Sigma``-independent integrands
reduce to the volume of ``Sigma``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import specfun


class HighDimError(ValueError):
    """Violated gap condition, failed selection, or an inconsistent certificate."""


def torus_levels(q: int, a: float, mu_max: float) -> list[tuple[float, int]]:
    """``(eigenvalue, multiplicity)`` of ``T^q`` with metric ``a^-1 |dy|^2`` below ``mu_max``."""
    kmax = int(np.floor(np.sqrt(mu_max / (4 * np.pi**2 * a)))) + 1
    counts: dict[int, int] = {}
    for k in itertools.product(range(-kmax, kmax + 1), repeat=q):
        n2 = int(np.dot(k, k))
        if 4 * np.pi**2 * a * n2 <= mu_max:
            counts[n2] = counts.get(n2, 0) + 1
    return [(4 * np.pi**2 * a * n2, c) for n2, c in sorted(counts.items())]


def _monomials(points: np.ndarray, degree: int) -> np.ndarray:
    m = points.shape[1]
    exps = [e for e in itertools.product(range(degree + 1), repeat=m) if sum(e) == degree]
    return np.stack([np.prod(points ** np.array(e), axis=1) for e in exps], axis=1)


def harmonic_basis(points: np.ndarray, weights: np.ndarray, degree: int) -> np.ndarray:
    """``L^2(S^(m-1))``-orthonormal degree-``n`` spherical harmonics at ``points`` (columns).

    Restrictions of degree-``n`` monomials span ``H_n + H_(n-2) + ...``;
    projecting out degree ``n - 2`` monomials leaves ``H_n``.
    """
    m = points.shape[1]
    W = np.sqrt(weights)[:, None]
    top = _monomials(points, degree) * W
    if degree >= 2:
        low = _monomials(points, degree - 2) * W
        Q, _ = np.linalg.qr(low)
        top = top - Q @ (Q.T @ top)
    U, s, _ = np.linalg.svd(top, full_matrices=False)
    dim = specfun.harmonic_multiplicity(m, degree)
    if dim > len(s) or (len(s) > dim and s[dim] > 1e-8 * s[0]):
        raise HighDimError(f"harmonic space of degree {degree} has unexpected dimension")
    return U[:, :dim] / W


def _first_sign(values: np.ndarray, rel: float = 1e-8) -> float:
    """Sign of the first entry that is not negligible (``+1`` for a null vector)."""
    v = np.asarray(values, dtype=float)
    big = np.flatnonzero(np.abs(v) > rel * np.max(np.abs(v), initial=0.0))
    return 1.0 if len(big) == 0 or v[big[0]] > 0 else -1.0


@dataclass(frozen=True)
class Candidate:
    """Separable Neumann mode ``phi(y) B(x)``; ``sigma_mean`` is ``int_Sigma phi``
    for ``phi`` unit in ``L^2(Sigma)``; ``ball`` are values of ``B`` (unit in
    ``L^2(D^m)``) on the ball grid."""

    label: str
    mu: float
    mu_sigma: float
    disk: Optional[specfun.DiskMode]
    sigma_mean: float
    ball: np.ndarray = field(repr=False)

    @property
    def constant(self) -> bool:
        return self.mu == 0.0


@dataclass(frozen=True, eq=False)
class HighDimModel:
    """Model tube ``T^q x D^m`` with its degenerate modes and quadrature.

    Parameters
    ----------
    d, m : total dimension and codimension (``m <= 5``, ``d <= 8``).
    a : metric factor of ``Sigma``.
    n_r, n_sphere : radial Gauss points and sphere rule order.
    """

    d: int
    m: int
    a: float = 1.0
    n_r: int = 48
    n_sphere: int = 12
    mu: float = field(init=False)
    r: np.ndarray = field(init=False, repr=False)
    wr: np.ndarray = field(init=False, repr=False)
    omega: np.ndarray = field(init=False, repr=False)
    womega: np.ndarray = field(init=False, repr=False)
    modes: np.ndarray = field(init=False, repr=False)  # (m, n_r, n_omega), unit in L^2(D^m)

    def __post_init__(self):
        if not (2 <= self.m <= 5 and self.m < self.d <= 8):
            raise HighDimError("require 2 <= m <= 5 and m < d <= 8")
        mu = specfun.ball_neumann_first(self.m)
        if not 4 * np.pi**2 * self.a > mu:
            raise HighDimError(f"first Sigma eigenvalue {4 * np.pi**2 * self.a:.6f} must exceed mu = {mu:.6f}")
        xg, wg = np.polynomial.legendre.leggauss(self.n_r)
        r = 0.5 * (xg + 1.0)
        wr = 0.5 * wg * r ** (self.m - 1)
        om, wom = specfun.sphere_quadrature(self.m, self.n_sphere)
        disk = specfun.DiskMode(self.m, 1, 1, np.sqrt(mu))
        R = disk.radial(r)
        Y = np.stack([specfun.first_harmonics(self.m, k, om) for k in range(1, self.m + 1)])
        modes = R[None, :, None] * Y[:, None, :]
        norms = np.sqrt(np.einsum("r,o,kro->k", wr, wom, modes**2))
        for name, val in (("mu", mu), ("r", r), ("wr", wr), ("omega", om), ("womega", wom),
                          ("modes", modes / norms[:, None, None])):
            object.__setattr__(self, name, val)

    @property
    def q(self) -> int:
        return self.d - self.m

    @property
    def sigma_volume(self) -> float:
        return self.a ** (-0.5 * self.q)

    def integrate_ball(self, values: np.ndarray) -> np.ndarray:
        """``int_(D^m)`` over the trailing ``(n_r, n_omega)`` axes."""
        return np.einsum("r,o,...ro->...", self.wr, self.womega, values)

    def spectrum(self, count: int = 8) -> specfun.ModelSpectrum:
        mu_max = max(4 * self.mu, 4 * np.pi**2 * self.a * 2)
        base = torus_levels(self.q, self.a, mu_max)
        return specfun.model_tube_spectrum(base=base, m=self.m, count=count)

    def cluster_dimension(self) -> int:
        return self.spectrum().first_cluster().multiplicity

    def orthonormality_error(self) -> float:
        """``max |<v_i, v_j> - delta_ij|`` for ``v_k = modes_k / sqrt(vol Sigma)``."""
        G = self.integrate_ball(self.modes[:, None] * self.modes[None, :])
        return float(np.max(np.abs(G - np.eye(self.m))))

    def candidates(self, mu_max: float = 40.0, max_degree: int = 4) -> list[Candidate]:
        """Separable Neumann modes with ``0 < mu <= mu_max`` (ball degree ``<= max_degree``)."""
        out = []
        sig = [(lam, mult) for lam, mult in torus_levels(self.q, self.a, mu_max)]
        bases = {}
        for dm in specfun.disk_modes(self.m, mu_max):
            if dm.n > max_degree:
                continue
            if dm.n not in bases:
                bases[dm.n] = harmonic_basis(self.omega, self.womega, dm.n) if dm.n > 0 else \
                    np.ones((len(self.omega), 1)) / np.sqrt(specfun.sphere_area(self.m))
            H = bases[dm.n]
            R = dm.radial(self.r)
            block = R[None, :, None] * H.T[:, None, :]
            block = block / np.sqrt(self.integrate_ball(block**2))[:, None, None]
            # canonical basis of the degenerate family: right singular vectors of
            # its coupling to the v_k^2, strongest first, sign fixed by the coupling
            Wb = self.integrate_ball(self.modes[:, None] ** 2 * block[None])
            _, sv, Vt = np.linalg.svd(Wb)
            if np.max(sv, initial=0.0) > 1e-12:
                col = Wb @ Vt.T
                Vt = Vt * np.array([_first_sign(c) for c in col.T])[:, None]
                block = np.einsum("ij,jro->iro", Vt, block)
            for j, B in enumerate(block):
                for si, (lam, mult) in enumerate(sig):
                    total = lam + dm.mu
                    if total == 0.0 or total > mu_max:
                        continue
                    # the constant Sigma mode integrates to sqrt(vol); Fourier modes to zero
                    mean = np.sqrt(self.sigma_volume) if lam == 0.0 else 0.0
                    for f in range(mult if lam > 0 else 1):
                        out.append(Candidate(f"sigma{si}.{f}:ball(n={dm.n},l={dm.l}).{j}", total, lam, dm, mean, B))
        out.sort(key=lambda c: (c.mu, c.label))
        return out

    def weighted_integrals(self, cands) -> np.ndarray:
        """``W[i, j] = int_Omega v_i^2 psi_j`` for unit ``v_i`` and candidates ``psi_j``."""
        sq = self.modes**2
        W = np.empty((self.m, len(cands)))
        for j, c in enumerate(cands):
            W[:, j] = c.sigma_mean / self.sigma_volume * self.integrate_ball(sq * c.ball[None])
        return W


def constant_candidate(model: HighDimModel) -> Candidate:
    """``psi = 1`` (not normalized), for the constant-first variant."""
    ball = np.ones((len(model.r), len(model.omega)))
    return Candidate("constant", 0.0, 0.0, None, model.sigma_volume, ball)


def gram_independence(model: HighDimModel, modes: Optional[np.ndarray] = None):
    """Gram matrix of ``{v_k^2}`` in ``L^2(Omega)`` and its smallest eigenvalue."""
    V = model.modes if modes is None else modes
    sq = V**2
    G = model.integrate_ball(sq[:, None] * sq[None, :]) / model.sigma_volume
    G = 0.5 * (G + G.T)
    return G, float(np.linalg.eigvalsh(G).min())


@dataclass(frozen=True)
class Selection:
    indices: tuple
    labels: tuple
    candidates: tuple = field(repr=False)
    matrix: np.ndarray = field(repr=False)
    certificate: float
    variant: str

    def to_dict(self) -> dict:
        return {"variant": self.variant, "labels": list(self.labels), "indices": list(self.indices),
                "matrix": self.matrix.tolist(), "certificate": self.certificate}


def _min_sv(A) -> float:
    return float(np.linalg.svd(A, compute_uv=False).min())


def select_basis_k(model: HighDimModel, mu_max: float = 40.0, constant_first: bool = False,
                   tol: float = 1e-10) -> Selection:
    """Greedy choice of ``m`` directions maximizing the smallest singular value
    of ``[int v_i^2 psi_j]``.

    ``constant_first`` fixes ``psi_1 = 1`` and selects the remaining ``m - 1``
    among eigenmodes.
    """
    cands = model.candidates(mu_max)
    W = model.weighted_integrals(cands)
    chosen: list[int] = []
    cols = []
    labels = []
    picked = []
    if constant_first:
        const = constant_candidate(model)
        cols.append(model.weighted_integrals([const])[:, 0])
        labels.append(const.label)
        picked.append(const)
    while len(cols) < model.m:
        best, best_j = -1.0, None
        for j in range(len(cands)):
            if j in chosen:
                continue
            sv = _min_sv(np.column_stack(cols + [W[:, j]]))
            if sv > best * (1 + 1e-9) + 1e-300:
                best, best_j = sv, j
        if best_j is None or best <= tol:
            raise HighDimError(f"no selection with positive certificate below mu_max = {mu_max}")
        chosen.append(best_j)
        cols.append(W[:, best_j])
        labels.append(cands[best_j].label)
        picked.append(cands[best_j])
    Wsel = np.column_stack(cols)
    return Selection(tuple(chosen), tuple(labels), tuple(picked), Wsel, _min_sv(Wsel),
                     "constant-first" if constant_first else "all-eigenmode")


@dataclass(frozen=True)
class HadamardHighDim:
    matrix: np.ndarray
    condition: float
    singular_values: np.ndarray

    def to_dict(self) -> dict:
        return {"matrix": self.matrix.tolist(), "condition": self.condition,
                "singular_values": self.singular_values.tolist()}


def hadamard_matrix_highdim(model: HighDimModel, selection: Selection, d: Optional[int] = None,
                            rel_tol: float = 1e-12) -> HadamardHighDim:
    """``H_ij = 1/2 int v_i^2 ((d-2) Lap psi_j - 4 mu psi_j)`` with ``Lap psi_j = -mu_j psi_j``.

    ``d`` defaults to the model dimension; passing another value isolates the
    ``(d-2)`` dependence of the Laplacian part.
    """
    d = model.d if d is None else d
    W = selection.matrix
    mus = np.array([c.mu for c in selection.candidates])
    H = -0.5 * W * ((d - 2) * mus[None, :] + 4.0 * model.mu)
    sv = np.linalg.svd(H, compute_uv=False)
    if sv.min() <= rel_tol * sv.max():
        raise HighDimError("Hadamard matrix singular although the selection certificate is positive")
    return HadamardHighDim(H, float(sv.max() / sv.min()), sv)


def report(cases=((3, 2), (4, 2), (5, 3)), a: float = 1.0, mu_max: float = 40.0) -> dict:
    """Both variants for every ``(d, m)`` case."""
    out = {}
    for d, m in cases:
        model = HighDimModel(d, m, a)
        G, gmin = gram_independence(model)
        entry = {"d": d, "m": m, "mu": model.mu, "cluster_dimension": model.cluster_dimension(),
                 "orthonormality_error": model.orthonormality_error(),
                 "gram": G.tolist(), "gram_min_eigenvalue": gmin}
        for variant, cf in (("constant_first", True), ("all_eigenmode", False)):
            sel = select_basis_k(model, mu_max, constant_first=cf)
            had = hadamard_matrix_highdim(model, sel)
            entry[variant] = {**sel.to_dict(), "hadamard": had.to_dict()}
        out[f"d{d}_m{m}"] = entry
    return out
