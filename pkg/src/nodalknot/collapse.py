"""Driving the first nontrivial eigenvalue cluster to exact degeneracy.

The metric is deformed conformally, ``g_s = exp(2 sum_i s_i psi_i) g``.  In
dimension ``d`` the discrete forms scale like ``K ~ c^((d-2)/2)`` and
``M ~ c^(d/2)``, so the derivative of the reduced cluster matrix along
``psi_i`` is

    H^(i)_jk = u_j^T dK_i u_k - (lambda_j + lambda_k)/2 u_j^T dM_i u_k,

with ``dK_i = (d-2) K[psi_i]`` and ``dM_i = d M[psi_i]``.  For ``psi = 1``
this gives ``H = -2 diag(lambda)``; in general it is the discrete version of
``1/2 int u_j u_k ((d-2) Lap psi - 4 mu psi)`` after integration by parts.

Newton acts on the symmetric 2x2 cluster matrix ``B(s)`` (the cluster
eigenvalues expressed in the current eigenbasis), solving ``B(s) = mu* I``.
An exactly degenerate pair needs three conditions (trace, diagonal
difference, off-diagonal), so the default direction set is the constant plus
the ``cos 2 theta`` / ``sin 2 theta`` Neumann modes of the tube.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import specfun
from .eigen import EigenPairs, lowest_pairs
from .fem.assembly import AssembledForms, FormAssembler
from .knotgeom import ChartSample, constant_direction, smoothstep_quintic

log = logging.getLogger(__name__)

GAP_FLOOR = 1e-3


class CollapseError(RuntimeError):
    """Newton did not reach a degenerate pair; ``history`` holds the trace."""

    def __init__(self, msg, history=None):
        super().__init__(msg)
        self.history = history or []


class ClusterError(RuntimeError):
    """The two-dimensional cluster is not separated from the rest of the spectrum."""


# ---------------------------------------------------------------------------
# conformal directions
# ---------------------------------------------------------------------------
def collar_cutoff(r, width: float) -> np.ndarray:
    """C2 cutoff: 1 for ``r <= 1``, flat at ``r = 1``, 0 for ``r >= 1 + width``."""
    return 1.0 - smoothstep_quintic((np.asarray(r, dtype=float) - 1.0) / width)


@dataclass(frozen=True)
class NeumannCollarExtension:
    """A tube Neumann mode continued radially into the collar.

    Inside the tube the value is ``v(s, z)``; for ``1 < |z|`` it is
    ``v(s, z/|z|) chi(|z|)`` and it vanishes beyond the collar.  The radial
    derivative at ``|z| = 1`` is zero on both sides.
    """

    mode: specfun.TubeMode
    width: float
    label: str = ""

    def __call__(self, chart: ChartSample) -> np.ndarray:
        out = np.zeros(len(chart))
        near = chart.near
        if not near.any():
            return out
        s, z = chart.s[near], chart.z[near]
        r = np.hypot(z[:, 0], z[:, 1])
        scale = np.where(r > 1.0, 1.0 / np.where(r > 1.0, r, 1.0), 1.0)
        out[near] = self.mode(s, z * scale[:, None]) * collar_cutoff(r, self.width)
        return out


def extend_with_neumann_collar(v: specfun.TubeMode, tube) -> NeumannCollarExtension:
    """Extension of the tube mode ``v`` to the torus with zero normal derivative on the tube boundary."""
    width = getattr(tube, "width", tube)
    d = v.disk
    return NeumannCollarExtension(v, float(width), f"n={d.n},l={d.l},k={v.k},{v.angular}")


def tube_quadrature(A: float = 1.0, n_r: int = 40, n_theta: int = 64, n_s: int = 8):
    """Product rule on the model tube: ``(s, z, weights)`` for volume ``A^-1/2 ds dz``.

    Gauss-Legendre in ``r`` (with the ``r`` Jacobian), trapezoid in ``theta``
    and ``s``; exact for trigonometric degrees below ``n_theta`` and ``n_s``.
    """
    xg, wg = np.polynomial.legendre.leggauss(n_r)
    r = 0.5 * (xg + 1.0)
    wr = 0.5 * wg * r
    th = 2.0 * np.pi * np.arange(n_theta) / n_theta
    s = np.arange(n_s) / n_s
    S, R, T = np.meshgrid(s, r, th, indexing="ij")
    W = (np.full(n_s, 1.0 / n_s)[:, None, None] * wr[None, :, None]
         * np.full(n_theta, 2.0 * np.pi / n_theta)[None, None, :]) / np.sqrt(A)
    z = np.stack([R * np.cos(T), R * np.sin(T)], axis=-1).reshape(-1, 2)
    return S.ravel(), z, W.ravel()


def select_k0(pair_values, candidate_values, weights, min_value: float = 1e-10):
    """Pick the candidate maximizing ``|int (v1^2 - v2^2) v_k|``.

    Parameters
    ----------
    pair_values : (2, nq) the degenerate pair at quadrature points.
    candidate_values : (nc, nq) candidate Neumann modes (non-constant).
    weights : (nq,) quadrature weights.

    Returns
    -------
    (k0, value, all_values); ties go to the lowest index.
    """
    v1, v2 = np.asarray(pair_values, dtype=float)
    C = np.atleast_2d(np.asarray(candidate_values, dtype=float))
    vals = C @ (np.asarray(weights) * (v1**2 - v2**2))
    mags = np.abs(vals)
    if mags.max(initial=0.0) < min_value:
        raise ClusterError("no candidate sees v1^2 - v2^2; align the degenerate pair first")
    k0 = int(np.flatnonzero(mags >= mags.max() * (1 - 1e-12))[0])
    return k0, float(vals[k0]), vals


def model_select_k0(A: float = 1.0, mu_max: float = 40.0, angle: float = 0.0):
    """``select_k0`` for the model pair ``(v1, v2)`` rotated by ``angle`` in the eigenspace.

    Returns ``(mode, value, candidates, values)``.
    """
    s, z, w = tube_quadrature(A)
    modes = [m for m in specfun.tube_modes(A, mu_max) if m.mu > 0]
    first = [m for m in modes if m.disk.n == 1 and m.disk.l == 1 and m.k == 0]
    c, sn = np.cos(angle), np.sin(angle)
    a, b = first[0](s, z), first[1](s, z)
    pair = np.stack([c * a + sn * b, -sn * a + c * b])
    cand = np.stack([m(s, z) for m in modes if m not in first])
    rest = [m for m in modes if m not in first]
    k0, val, vals = select_k0(pair, cand, w)
    return rest[k0], val, rest, vals


def model_hadamard(A: float = 1.0, dimension: int = 3, mu_max: float = 40.0) -> np.ndarray:
    """Reduced cluster derivative of the model tube for ``psi = (1, v_k0)``.

    ``H_kj = 1/2 int v_k^2 ((d - 2) Lap psi_j - 4 mu psi_j)`` with the Neumann
    pair ``(v1, v2)`` of the tube, evaluated by tube quadrature.  The sign of
    ``v_k0`` is fixed so that its first non-negligible coupling is positive.
    """
    s, z, w = tube_quadrature(A)
    mode, _, _, _ = model_select_k0(A, mu_max)
    first = [m for m in specfun.tube_modes(A, mu_max) if m.disk.n == 1 and m.disk.l == 1 and m.k == 0]
    mu = first[0].mu
    sq = np.stack([m(s, z) ** 2 for m in first])
    psi = np.stack([np.ones_like(s), mode(s, z)])
    mus = np.array([0.0, mode.mu])
    W = sq @ (w[:, None] * psi.T)
    # orientation of v_k0: the first non-negligible coupling is positive
    big = np.flatnonzero(np.abs(W[:, 1]) > 1e-8 * np.abs(W[:, 1]).max())
    if len(big) and W[big[0], 1] < 0:
        W[:, 1] = -W[:, 1]
    return -0.5 * W * ((dimension - 2) * mus[None, :] + 4.0 * mu)


@dataclass(frozen=True)
class ConformalDirections:
    """Conformal directions ``psi_i`` (functions of chart samples) and the
    nondegeneracy margin of the selected Neumann mode."""

    functions: tuple
    labels: tuple
    k0_label: str = ""
    margin: float = float("nan")

    def __len__(self):
        return len(self.functions)


def default_directions(A: float, width: float, mu_max: float = 40.0) -> ConformalDirections:
    """``psi_1 = 1`` and the collar extensions of the selected mode and its angular partner."""
    mode, value, _, _ = model_select_k0(A, mu_max)
    partner = specfun.TubeMode(mode.disk, mode.k, "sin" if mode.angular == "cos" else "cos", mode.longitudinal, A)
    e1 = extend_with_neumann_collar(mode, width)
    e2 = extend_with_neumann_collar(partner, width)
    return ConformalDirections((constant_direction, e1, e2), ("constant", e1.label, e2.label), e1.label, abs(value))


def nodal_values(direction: Callable, mesh, field) -> np.ndarray:
    """A direction function sampled at the mesh vertices."""
    return np.asarray(direction(field.chart(mesh.points)), dtype=float)


# ---------------------------------------------------------------------------
# spectral map
# ---------------------------------------------------------------------------
@dataclass
class Cluster:
    """The eigenpairs at one parameter value with the cluster ``(1, 2)`` singled out."""

    s: np.ndarray
    pairs: EigenPairs
    forms: AssembledForms

    @property
    def values(self) -> np.ndarray:
        return self.pairs.values[1:3]

    @property
    def basis(self) -> np.ndarray:
        return self.pairs.vectors[:, 1:3]

    @property
    def lam3(self) -> float:
        return float(self.pairs.values[3])

    @property
    def split(self) -> float:
        l1, l2 = self.values
        return float((l2 - l1) / l1)


class SpectralContext:
    """Cached assembly data for evaluating eigenvalues along ``s``.

    Parameters
    ----------
    assembler : FormAssembler built on the base field (no conformal factor).
    directions : ConformalDirections.
    base_scale : optional scale factor at quadrature points (defaults to the
        assembler field's ``f_t``); use :meth:`FormAssembler.scale_factor`
        with another ``eps`` to reuse the geometry.
    """

    def __init__(self, assembler: FormAssembler, directions: ConformalDirections, base_scale=None,
                 seed: int = 0, count: int = 3, dimension: int = 3):
        self.assembler = assembler
        self.directions = directions
        self.c0 = assembler.scale_factor() if base_scale is None else np.asarray(base_scale)
        self.psi = np.stack([assembler.psi_values(f) for f in directions.functions])
        self.seed = seed
        self.count = count
        self.dimension = dimension
        self.evaluations = 0

    @property
    def n_directions(self) -> int:
        return len(self.psi)

    def _s(self, s) -> np.ndarray:
        s = np.zeros(self.n_directions) if s is None else np.asarray(s, dtype=float)
        if s.shape != (self.n_directions,):
            raise ValueError(f"s must have {self.n_directions} entries")
        return s

    def scale(self, s) -> np.ndarray:
        return self.c0 * np.exp(2.0 * np.einsum("i,itq->tq", self._s(s), self.psi))

    def forms(self, s=None) -> AssembledForms:
        c = self.scale(s)
        K = self.assembler.stiffness(np.sqrt(c))
        M = self.assembler.mass(c * np.sqrt(c))
        return AssembledForms(K, M, self.assembler.order, self.assembler.fingerprint, {"s": self._s(s)})

    def cluster(self, s=None) -> Cluster:
        s = self._s(s)
        forms = self.forms(s)
        pairs = lowest_pairs(forms, self.count, seed=self.seed)
        self.evaluations += 1
        return Cluster(s, pairs, forms)

    def derivative_forms(self, s, i):
        return self.assembler.derivative_forms(self.psi[i], self.scale(s), self.dimension)


def lambda_map(ctx: SpectralContext, s, mu_star: float):
    """``(lambda_1 - mu*, lambda_2 - mu*)`` at ``s`` together with the cluster."""
    cl = ctx.cluster(s)
    return cl.values - mu_star, cl


def target_mu(ctx: SpectralContext, s0=None) -> float:
    """Default target: the cluster mean at ``s0`` (``0`` by default)."""
    return float(np.mean(ctx.cluster(s0).values))


# ---------------------------------------------------------------------------
# Jacobians
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class Jacobian:
    """Reduced derivative matrices ``H[i]`` (one 2x2 block per direction) and
    the eigenvalue Jacobian ``J[k, i]``."""

    H: np.ndarray
    J: np.ndarray

    def trace_derivatives(self) -> np.ndarray:
        return np.trace(self.H, axis1=1, axis2=2)


def _eigen_jacobian(H, values):
    split = abs(values[1] - values[0]) / abs(values[0])
    if split < 1e-6:
        return np.stack([np.linalg.eigvalsh(h) for h in H], axis=1)
    return np.stack([np.diag(h) for h in H], axis=1)


def _check_gap(cl: Cluster, floor: float = GAP_FLOOR):
    l1, l2 = cl.values
    if cl.lam3 - l2 < floor * l2:
        raise ClusterError(f"cluster not resolved: lambda_2 = {l2}, lambda_3 = {cl.lam3}")


def hadamard_jacobian(ctx: SpectralContext, cl: Cluster, basis: Optional[np.ndarray] = None) -> Jacobian:
    """Analytic reduced derivatives of the cluster at ``cl.s``.

    ``basis`` may be a rotated (e.g. model-aligned) orthonormal basis of the
    cluster; blocks are then expressed in that basis.
    """
    _check_gap(cl)
    U = cl.basis
    lam = cl.values
    mid = 0.5 * (lam[:, None] + lam[None, :])
    H = []
    for i in range(ctx.n_directions):
        dK, dM = ctx.derivative_forms(cl.s, i)
        h = U.T @ (dK @ U) - mid * (U.T @ (dM @ U))
        H.append(0.5 * (h + h.T))
    H = np.array(H)
    J = _eigen_jacobian(H, lam)
    if basis is not None:
        R = _rotation_to(cl, basis)
        H = np.einsum("ji,njk,kl->nil", R, H, R)
    return Jacobian(H, J)


def _rotation_to(cl: Cluster, basis) -> np.ndarray:
    R = cl.basis.T @ (cl.forms.M @ basis)
    W, _, Vt = np.linalg.svd(R)
    return W @ Vt


def reduced_matrix(base: Cluster, other: Cluster) -> np.ndarray:
    """Cluster of ``other`` as a symmetric 2x2 matrix in the eigenbasis of ``base``.

    ``B = Q diag(lambda') Q^T`` with ``Q`` the polar factor of the overlap
    ``U_base^T M_base U_other``.
    """
    C = base.basis.T @ (base.forms.M @ other.basis)
    W, sig, Vt = np.linalg.svd(C)
    if sig.min() < 0.5:
        raise ClusterError(f"cluster left its subspace during the stencil (overlap {sig})")
    Q = W @ Vt
    return Q @ np.diag(other.values) @ Q.T


def fd_jacobian(ctx: SpectralContext, cl: Cluster, delta: float = 1e-4, basis=None) -> Jacobian:
    """Central differences of the reduced cluster matrix along each direction."""
    if not 1e-6 <= delta <= 1e-3:
        raise ValueError("delta must lie in [1e-6, 1e-3]")
    _check_gap(cl)
    H = []
    for i in range(ctx.n_directions):
        e = np.zeros(ctx.n_directions)
        e[i] = delta
        plus, minus = ctx.cluster(cl.s + e), ctx.cluster(cl.s - e)
        for other in (plus, minus):
            if other.values[1] >= other.lam3 * (1 - GAP_FLOOR):
                raise ClusterError("cluster crossed lambda_3 within the stencil")
        h = (reduced_matrix(cl, plus) - reduced_matrix(cl, minus)) / (2 * delta)
        H.append(0.5 * (h + h.T))
    H = np.array(H)
    J = _eigen_jacobian(H, cl.values)
    if basis is not None:
        R = _rotation_to(cl, basis)
        H = np.einsum("ji,njk,kl->nil", R, H, R)
    return Jacobian(H, J)


def relative_discrepancy(a: Jacobian, b: Jacobian) -> float:
    return float(np.linalg.norm(a.H - b.H) / np.linalg.norm(b.H))


# ---------------------------------------------------------------------------
# Newton
# ---------------------------------------------------------------------------
@dataclass
class CollapseState:
    """Parameters, cluster eigenvalues and step history of the collapse."""

    s: np.ndarray
    eps: float
    mu_star: float
    values: np.ndarray  # (lambda_1, lambda_2, lambda_3)
    jacobian: Optional[np.ndarray] = None
    condition: float = float("nan")
    history: list = field(default_factory=list)
    converged: bool = False
    cluster: Optional[Cluster] = field(default=None, repr=False)

    @property
    def residual(self) -> np.ndarray:
        return self.values[:2] - self.mu_star

    @property
    def split(self) -> float:
        return float((self.values[1] - self.values[0]) / self.values[0])

    @property
    def gap(self) -> float:
        return float(self.values[2] - self.values[0])

    def record(self, iteration: int, note: str = "") -> None:
        self.history.append({"iteration": iteration, "s": self.s.tolist(),
                             "lambda": self.values.tolist(), "norm": float(np.linalg.norm(self.residual)),
                             "note": note})

    def to_json(self) -> dict:
        return {"s": self.s.tolist(), "eps": self.eps, "mu_star": self.mu_star,
                "lambda": self.values.tolist(), "split": self.split, "gap": self.gap,
                "converged": self.converged, "iterations": len(self.history) - 1,
                "jacobian_condition": self.condition,
                "jacobian": None if self.jacobian is None else self.jacobian.tolist()}

    def write_trace(self, path) -> None:
        n = len(self.s)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration"] + [f"s{i + 1}" for i in range(n)] + ["lambda1", "lambda2", "lambda3", "norm"])
            for h in self.history:
                w.writerow([h["iteration"]] + [repr(v) for v in h["s"]] + [repr(v) for v in h["lambda"]]
                           + [repr(h["norm"])])

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2)


def _state(cl: Cluster, eps, mu_star, history=None) -> CollapseState:
    vals = np.array([cl.values[0], cl.values[1], cl.lam3])
    return CollapseState(cl.s.copy(), eps, mu_star, vals, history=history or [], cluster=cl)


def _merit(cl: Cluster, mu_star: float) -> float:
    return float(np.sum((cl.values - mu_star) ** 2))


def _newton_step(H: np.ndarray, values: np.ndarray, mu_star: float, cap: float):
    """Solve ``diag(values) + sum ds_i H_i = mu* I`` for ``ds`` (least squares)."""
    A = np.stack([H[:, 0, 0], H[:, 1, 1], np.sqrt(2.0) * H[:, 0, 1]], axis=0)
    rhs = -np.array([values[0] - mu_star, values[1] - mu_star, 0.0])
    ds, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    sv = np.linalg.svd(A, compute_uv=False)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else float("inf")
    norm = np.linalg.norm(ds)
    if norm > cap:
        ds *= cap / norm
    return ds, A, cond


def newton_collapse(ctx: SpectralContext, s0=None, mu_star: Optional[float] = None, eps: float = float("nan"),
                    tol_split: float = 1e-9, tol_target: float = 1e-9, max_iters: int = 10,
                    step_cap: float = 0.5, armijo: float = 1e-4, fd_delta: float = 1e-4) -> CollapseState:
    """Damped Newton on ``s`` driving ``(lambda_1, lambda_2)`` to ``(mu*, mu*)``.

    Relative tolerances: ``|lambda_2 - lambda_1| / lambda_1 <= tol_split``
    and ``|mean - mu*| / mu* <= tol_target``.  Steps come from the Hadamard
    Jacobian; when the Armijo line search on ``||Lambda||^2`` fails, the
    step is recomputed from finite differences once.
    """
    cl = ctx.cluster(s0)
    if mu_star is None:
        mu_star = float(np.mean(cl.values))
    state = _state(cl, eps, mu_star)
    state.record(0)
    for it in range(1, max_iters + 2):
        mean = float(np.mean(cl.values))
        if state.split <= tol_split and abs(mean - mu_star) <= tol_target * mu_star:
            state.converged = True
            return state
        if it > max_iters:
            break
        _check_gap(cl)
        phi0 = _merit(cl, mu_star)
        trial = None
        for source in ("hadamard", "fd"):
            jac = hadamard_jacobian(ctx, cl) if source == "hadamard" else fd_jacobian(ctx, cl, fd_delta)
            ds, A, cond = _newton_step(jac.H, cl.values, mu_star, step_cap)
            state.jacobian, state.condition = A, cond
            alpha = 1.0
            for _ in range(8):
                cand = ctx.cluster(cl.s + alpha * ds)
                if _merit(cand, mu_star) <= (1.0 - 2.0 * armijo * alpha) * phi0:
                    trial = cand
                    break
                alpha *= 0.5
            if trial is not None:
                break
            log.info("Armijo search failed with %s Jacobian at iteration %d", source, it)
        if trial is None:
            raise CollapseError("line search failed with both Jacobians", state.history)
        cl = trial
        hist = state.history
        state = _state(cl, eps, mu_star, hist)
        state.jacobian, state.condition = A, cond
        state.record(it, f"{source}, alpha={alpha:g}")
    raise CollapseError(f"no degenerate pair after {max_iters} iterations (split {state.split:.3e})",
                        state.history)
