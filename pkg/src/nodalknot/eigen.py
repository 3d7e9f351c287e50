"""Lowest eigenpairs of ``K u = lambda M u`` and basis alignment inside clusters."""

from __future__ import annotations

import csv
import glob
import logging
import os
import site
import sys
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)

CLUSTER_GAP = 1e-6
DENSE_LIMIT = 1500


class EigenSolverError(RuntimeError):
    """Non-convergence; ``best`` holds the best residuals found."""

    def __init__(self, msg, best=None):
        super().__init__(msg)
        self.best = best


class AlignmentError(ValueError):
    """Reference fields do not determine a rotation of the cluster."""


@dataclass(frozen=True, eq=False)
class EigenPairs:
    """Ascending eigenvalues with M-orthonormal eigenvectors (columns)."""

    values: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.values)

    def clusters(self, rel_gap: float = CLUSTER_GAP) -> list[list[int]]:
        return find_clusters(self.values, rel_gap)

    def to_csv(self, path) -> None:
        cid = np.empty(len(self.values), dtype=int)
        for c, idx in enumerate(self.clusters()):
            cid[idx] = c
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "eigenvalue", "residual", "cluster"])
            for i, (lam, res) in enumerate(zip(self.values, self.residuals)):
                w.writerow([i, repr(float(lam)), repr(float(res)), int(cid[i])])


def find_clusters(values: Sequence[float], rel_gap: float = CLUSTER_GAP) -> list[list[int]]:
    """Group consecutive eigenvalues whose relative gap is below ``rel_gap``."""
    values = np.asarray(values)
    out = [[0]] if len(values) else []
    for i in range(1, len(values)):
        scale = max(abs(values[i]), abs(values[i - 1]), 1e-300)
        if (values[i] - values[i - 1]) / scale < rel_gap:
            out[-1].append(i)
        else:
            out.append([i])
    return out


def _locate_mkl() -> None:
    """Point pypardiso at the MKL runtime when its own search misses it."""
    if os.environ.get("PYPARDISO_MKL_RT"):
        return
    roots = {sys.prefix, sys.base_prefix, "/usr/local", "/usr", site.USER_BASE}
    for root in sorted(r for r in roots if r):
        hits = sorted(glob.glob(os.path.join(root, "lib*", "libmkl_rt.so*")), key=len)
        if hits:
            os.environ["PYPARDISO_MKL_RT"] = hits[0]
            return


def factorize_spd(A):
    """Return ``solve(b)`` for a sparse SPD matrix ``A``.

    Uses MKL PARDISO (through pypardiso) when available, otherwise SuperLU.
    ``solve`` accepts vectors or column blocks.
    """
    A = sp.csr_matrix(A)
    try:
        _locate_mkl()
        import pypardiso

        solver = pypardiso.PyPardisoSolver(mtype=2)
        upper = sp.triu(A, format="csr")
        upper.sort_indices()
        solver.factorize(upper)

        def solve(b):
            return solver.solve(upper, np.asarray(b, dtype=float))

        solve.backend = "pardiso"
        solve.release = lambda: solver.free_memory(everything=True)
        return solve
    except ImportError:
        lu = spla.splu(A.tocsc(), permc_spec="MMD_AT_PLUS_A")

        def solve(b):
            return lu.solve(np.asarray(b, dtype=float))

        solve.backend = "superlu"
        solve.release = lambda: None
        return solve


def _mass_solver(M):
    d = M.diagonal()
    pre = spla.LinearOperator(M.shape, matvec=lambda x: x / d)

    def solve(r):
        y, info = spla.cg(M, r, rtol=1e-13, atol=0.0, M=pre, maxiter=2000)
        return y

    return solve


def residual_norms(K, M, values, vectors) -> np.ndarray:
    """``||K u - lambda M u||_{M^-1}`` divided by ``max(lambda, 1)``."""
    solve = _mass_solver(M)
    out = np.empty(len(values))
    for i, lam in enumerate(values):
        u = vectors[:, i]
        r = K @ u - lam * (M @ u)
        y = solve(r)
        out[i] = np.sqrt(max(float(r @ y), 0.0)) / max(abs(lam), 1.0)
    return out


def _rayleigh_ritz(K, M, V):
    Kr = V.T @ (K @ V)
    Mr = V.T @ (M @ V)
    Kr = 0.5 * (Kr + Kr.T)
    Mr = 0.5 * (Mr + Mr.T)
    w, Y = sla.eigh(Kr, Mr)
    return w, V @ Y


def _orthonormalize(V, M):
    G = V.T @ (M @ V)
    G = 0.5 * (G + G.T)
    L = np.linalg.cholesky(G)
    return np.linalg.solve(L, V.T).T


def lowest_pairs(forms, count: int, tol: float = 1e-12, seed: int = 0, extra: int = 4,
                 shift: Optional[float] = None) -> EigenPairs:
    """The ``count + 1`` lowest eigenpairs of ``(K, M)``.

    Shift-invert Lanczos with a sparse LU factorization of ``K - sigma M``
    (``sigma < 0`` small), followed by a Rayleigh-Ritz refinement making the
    vectors M-orthonormal to rounding.  Small problems use a dense solver.
    Falls back to LOBPCG with an algebraic multigrid preconditioner if the
    factorization fails.

    Parameters
    ----------
    forms : AssembledForms (or any object with ``K`` and ``M``).
    count : number of nontrivial pairs wanted (``<= 32``).
    seed : seeds the Lanczos start vector; results are deterministic.
    """
    if count > 32 or count < 0:
        raise ValueError("count must lie in 0..32")
    K = sp.csc_matrix(forms.K)
    M = sp.csc_matrix(forms.M)
    n = K.shape[0]
    want = count + 1
    nev = min(want + extra, n - 1)
    meta = {"seed": seed, "n": n}
    if n <= DENSE_LIMIT:
        w, V = sla.eigh(K.toarray(), M.toarray())
        w, V = w[:want], V[:, :want]
        meta["method"] = "dense"
    else:
        if shift is None:
            scale = float(K.diagonal().sum() / M.diagonal().sum())
            shift = -1e-5 * scale
        meta["shift"] = shift
        rng = np.random.default_rng(seed)
        v0 = rng.standard_normal(n)
        try:
            solve = factorize_spd(K - shift * M)
            op = spla.LinearOperator((n, n), matvec=solve, dtype=float)
            ncv = min(n, max(2 * nev + 1, 24))
            try:
                w, V = spla.eigsh(K, k=nev, M=M, sigma=shift, which="LM", OPinv=op, v0=v0, tol=tol * 1e-2,
                                  ncv=ncv, maxiter=5000)
            finally:
                solve.release()
            meta["method"] = "shift-invert/" + solve.backend
        except (RuntimeError, spla.ArpackNoConvergence) as exc:
            log.warning("shift-invert failed (%s); falling back to LOBPCG", exc)
            w, V = _lobpcg(K, M, nev, rng, tol)
            meta["method"] = "lobpcg"
        order = np.argsort(w)
        V = _orthonormalize(V[:, order], M)
        w, V = _rayleigh_ritz(K, M, V)
        w, V = w[:want], V[:, :want]
    # fix signs deterministically: largest-magnitude entry positive
    idx = np.argmax(np.abs(V), axis=0)
    V = V * np.sign(V[idx, np.arange(V.shape[1])])
    res = residual_norms(K, M, w, V)
    if np.any(res > 1e-8):
        raise EigenSolverError(f"eigenpairs not converged, residuals {res}", best=res)
    return EigenPairs(np.asarray(w), V, res, meta)


def _lobpcg(K, M, nev, rng, tol):
    import pyamg

    ml = pyamg.smoothed_aggregation_solver((K + 1e-3 * M).tocsr())
    pre = ml.aspreconditioner()
    X = rng.standard_normal((K.shape[0], nev + 4))
    w, V = spla.lobpcg(K, X, B=M, M=pre, tol=tol, largest=False, maxiter=2000)
    return w, V


def subspace_align(pairs: EigenPairs, references: Sequence[np.ndarray], mass, indices: Sequence[int],
                   rank_tol: float = 1e-8) -> EigenPairs:
    """Rotate the eigenvectors ``indices`` to best match ``references``.

    Orthogonal Procrustes: with ``C = U^T M R`` the rotation is the polar
    factor of ``C``.  ``mass`` defines the pairing (e.g. the mass matrix
    restricted to the tube).  Eigenvalues are left as they are.
    """
    indices = list(indices)
    R = np.column_stack(references)
    U = pairs.vectors[:, indices]
    if R.shape[1] != len(indices):
        raise AlignmentError("need one reference per cluster vector")
    C = U.T @ (mass @ R)
    W, sig, Vt = np.linalg.svd(C)
    if sig.min() <= rank_tol * max(sig.max(), 1e-300):
        raise AlignmentError(f"references are rank deficient on the cluster (singular values {sig})")
    Q = W @ Vt
    vecs = pairs.vectors.copy()
    vecs[:, indices] = U @ Q
    meta = dict(pairs.meta, alignment=Q)
    return EigenPairs(pairs.values.copy(), vecs, pairs.residuals.copy(), meta)
