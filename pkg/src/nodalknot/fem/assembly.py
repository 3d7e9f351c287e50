"""P1 stiffness and mass forms for metric fields on tetrahedral meshes.

For a metric ``G = c G0`` with scalar factor ``c`` the 3D integrands are

    sqrt(det G) G^-1 = c^(1/2) sqrt(det G0) G0^-1,   sqrt(det G) = c^(3/2) sqrt(det G0),

so the geometric part (``G0`` at the quadrature points) is computed once per
mesh in :class:`FormAssembler` and every change of ``c`` (collar factor,
conformal parameters, region weights) only re-weights cached quantities.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from ..knotgeom import TUBE_INTERIOR, ChartSample
from .mesh import TetMesh

# barycentric points and weights (fractions of the element volume)
_A2 = (5.0 - np.sqrt(5.0)) / 20.0
_B2 = (5.0 + 3.0 * np.sqrt(5.0)) / 20.0
_KA = (1.0 + np.sqrt(5.0 / 14.0)) / 4.0
_KB = (1.0 - np.sqrt(5.0 / 14.0)) / 4.0


def _perms4(a, b):
    return [[b if i == j else a for i in range(4)] for j in range(4)]


def _pairs4(a, b):
    out = []
    for i in range(4):
        for j in range(i + 1, 4):
            p = [b] * 4
            p[i] = a
            p[j] = a
            out.append(p)
    return out


QUADRATURE = {
    1: (np.full((1, 4), 0.25), np.array([1.0])),
    2: (np.array(_perms4(_A2, _B2)), np.full(4, 0.25)),
    # Keast 11-point rule, exact for degree 4 (weights rescaled from volume 1/6)
    4: (
        np.array([[0.25] * 4] + _perms4(1.0 / 14.0, 11.0 / 14.0) + _pairs4(_KA, _KB)),
        6.0 * np.array([-74.0 / 5625.0] + [343.0 / 45000.0] * 4 + [56.0 / 2250.0] * 6),
    ),
}


def quadrature_rule(order: int):
    """Barycentric points ``(q, 4)`` and volume-fraction weights ``(q,)``."""
    try:
        return QUADRATURE[order]
    except KeyError:
        raise ValueError(f"quadrature order must be one of {sorted(QUADRATURE)}") from None


class MetricNotSPD(ValueError):
    """Raised when the metric is not positive definite at a quadrature point."""


@dataclass(frozen=True, eq=False)
class AssembledForms:
    """Sparse symmetric stiffness ``K`` and mass ``M`` over mesh vertices."""

    K: sp.csr_matrix
    M: sp.csr_matrix
    order: int
    fingerprint: str
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.K.shape[0]

    def rayleigh(self, v) -> float:
        v = np.asarray(v, dtype=float)
        return float(v @ (self.K @ v) / (v @ (self.M @ v)))

    def norm2(self, v) -> float:
        v = np.asarray(v, dtype=float)
        return float(v @ (self.M @ v))

    def restrict(self, dofs) -> "AssembledForms":
        dofs = np.asarray(dofs)
        return AssembledForms(self.K[dofs][:, dofs].tocsr(), self.M[dofs][:, dofs].tocsr(), self.order,
                              self.fingerprint + "|restricted", dict(self.meta, dofs=dofs))


def _fingerprint(*parts) -> str:
    h = hashlib.sha256()
    for p in parts:
        if isinstance(p, np.ndarray):
            h.update(np.ascontiguousarray(p).tobytes())
        else:
            h.update(repr(p).encode())
    return h.hexdigest()[:16]


def _field_repr(fld) -> str:
    cfg = getattr(fld, "config", None)
    A = getattr(fld, "A", None)
    tube = getattr(fld, "tube", None)
    extra = (tube.rho, tube.width, tube.curve.name) if tube is not None else ()
    return repr((type(fld).__name__, cfg, A, extra))


def _check_spd(G, x):
    d1 = G[:, 0, 0]
    d2 = G[:, 0, 0] * G[:, 1, 1] - G[:, 0, 1] * G[:, 1, 0]
    d3 = np.linalg.det(G)
    bad = (d1 <= 0) | (d2 <= 0) | (d3 <= 0) | ~np.isfinite(d3)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise MetricNotSPD(f"metric not positive definite at quadrature point {x[i].tolist()}")


class FormAssembler:
    """Cached geometric data for repeated assembly on one mesh.

    Parameters
    ----------
    mesh : TetMesh
    field : metric field with ``chart``, ``base_metric`` and ``scale_factor``
        (``MetricField`` or ``ProductTubeField``).
    order : quadrature order (1, 2 or 4).
    mask : optional tet selection; the forms then live on the vertices used
        by the selected tets (see ``dofs``).
    """

    def __init__(self, mesh: TetMesh, field, order: int = 2, mask=None):
        bary, w = quadrature_rule(order)
        self.mesh = mesh
        self.field = field
        self.order = order
        self.weights_q = w
        self.bary = bary
        tet_idx = np.arange(mesh.n_tets) if mask is None else np.flatnonzero(mask)
        if len(tet_idx) == 0:
            raise ValueError("empty tet selection")
        self.tet_idx = tet_idx
        tets = mesh.tets[tet_idx]
        self.dofs = np.unique(tets)
        local = np.full(mesh.n_vertices, -1, dtype=np.int64)
        local[self.dofs] = np.arange(len(self.dofs))
        self.local_tets = local[tets]
        self.tags = mesh.tags[tet_idx]
        c = mesh.corners(tet_idx)
        E = c[:, 1:] - c[:, :1]
        det = np.linalg.det(E)
        self.vol = np.abs(det) / 6.0
        # x - c0 = E^T lam, so grad lam_i is the i-th column of E^-1
        Einv_T = np.transpose(np.linalg.inv(E), (0, 2, 1))
        grads = np.empty((len(tet_idx), 4, 3))
        grads[:, 1:] = Einv_T
        grads[:, 0] = -Einv_T.sum(axis=1)
        self.grads = grads
        qp = np.einsum("qa,tai->tqi", bary, c)
        per = mesh.period > 0
        qp[..., per] = np.mod(qp[..., per], mesh.period[per])
        flat = qp.reshape(-1, 3)
        chart = field.chart(flat)
        G0 = field.base_metric(flat, chart)
        _check_spd(G0, flat)
        self.chart = chart
        sqrt_det = np.sqrt(np.linalg.det(G0))
        S0 = sqrt_det[:, None, None] * np.linalg.inv(G0)
        S0 = 0.5 * (S0 + np.transpose(S0, (0, 2, 1)))
        nq = len(w)
        self.S0 = S0.reshape(len(tet_idx), nq, 3, 3)
        self.m0 = sqrt_det.reshape(len(tet_idx), nq)
        self.qp = qp
        # CSR pattern and deterministic reduction map
        n = len(self.dofs)
        rows = np.repeat(self.local_tets, 4, axis=1).ravel()
        cols = np.tile(self.local_tets, (1, 4)).ravel()
        key = rows * n + cols
        uniq, inverse = np.unique(key, return_inverse=True)
        self._inverse = inverse
        self._n = n
        ur, uc = np.divmod(uniq, n)
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(indptr, ur + 1, 1)
        self._indptr = np.cumsum(indptr)
        self._indices = uc
        self._nnz = len(uniq)
        self._mass_shape = np.einsum("qa,qb->qab", bary, bary).reshape(nq, 16)
        self.fingerprint = _fingerprint(_field_repr(field), mesh.n_vertices, mesh.n_tets, order, tet_idx)

    # -- low-level ----------------------------------------------------------
    def _csr(self, elem: np.ndarray) -> sp.csr_matrix:
        data = np.bincount(self._inverse, weights=elem.ravel(), minlength=self._nnz)
        return sp.csr_matrix((data, self._indices.copy(), self._indptr.copy()), shape=(self._n, self._n))

    def stiffness(self, kq: np.ndarray, tet_weight=None) -> sp.csr_matrix:
        """``K`` with per-quadrature-point factor ``kq`` multiplying ``sqrt(det G0) G0^-1``."""
        S = np.einsum("q,tq,tqij->tij", self.weights_q, kq, self.S0)
        scale = self.vol if tet_weight is None else self.vol * tet_weight
        elem = np.einsum("t,tai,tij,tbj->tab", scale, self.grads, S, self.grads)
        return self._csr(elem)

    def mass(self, mq: np.ndarray, tet_weight=None) -> sp.csr_matrix:
        scale = self.vol if tet_weight is None else self.vol * tet_weight
        elem = scale[:, None] * ((self.weights_q * mq * self.m0) @ self._mass_shape)
        return self._csr(elem)

    def scale_factor(self, field=None) -> np.ndarray:
        fld = self.field if field is None else field
        return fld.scale_factor(self.chart).reshape(self.m0.shape)

    def psi_values(self, psi: Callable[[ChartSample], np.ndarray]) -> np.ndarray:
        return np.asarray(psi(self.chart), dtype=float).reshape(self.m0.shape)

    # -- forms --------------------------------------------------------------
    def forms(self, field=None, tet_weights=None) -> AssembledForms:
        """Assemble with the scale factor of ``field`` (defaults to the cached field)."""
        fld = self.field if field is None else field
        c = self.scale_factor(fld)
        kw, mw = (None, None) if tet_weights is None else tet_weights
        K = self.stiffness(np.sqrt(c), kw)
        M = self.mass(c * np.sqrt(c), mw)
        fp = _fingerprint(self.fingerprint, _field_repr(fld), kw if kw is not None else 0)
        return AssembledForms(K, M, self.order, fp, {"dofs": self.dofs})

    def derivative_forms(self, psi_q: np.ndarray, c: np.ndarray, d: int = 3):
        """``(dK, dM)`` along ``c -> c exp(2 t psi)`` at ``t = 0``.

        In dimension ``d``, ``K`` scales like ``c^((d-2)/2)`` and ``M`` like
        ``c^(d/2)``; the returned forms are ``(d-2) K_psi`` and ``d M_psi``
        with ``K_psi``, ``M_psi`` the ``psi``-weighted forms.  Only ``d = 3``
        is realised geometrically here.
        """
        sc = np.sqrt(c)
        dK = self.stiffness((d - 2) * psi_q * sc)
        dM = self.mass(d * psi_q * c * sc)
        return dK, dM


def assemble(mesh: TetMesh, field, order: int = 2) -> AssembledForms:
    """Stiffness ``sum int grad(l_a)^T G^-1 grad(l_b) sqrt(det G)`` and mass
    ``sum int l_a l_b sqrt(det G)`` with ``G`` sampled at quadrature points."""
    return FormAssembler(mesh, field, order).forms()


def region_weights(tags: np.ndarray, eps: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-tet stiffness and mass weights ``(1, 1)`` inside the tube and
    ``(eps^1/2, eps^3/2)`` elsewhere (collar included)."""
    inside = tags == TUBE_INTERIOR
    kw = np.where(inside, 1.0, np.sqrt(eps))
    mw = np.where(inside, 1.0, eps * np.sqrt(eps))
    return kw, mw


def assemble_weighted_eps(mesh: TetMesh, eps: float, base_field=None, order: int = 2,
                          assembler: Optional[FormAssembler] = None) -> AssembledForms:
    """Forms of the discontinuous metric: ``g0`` in the tube, ``eps g0`` outside.

    ``base_field`` must evaluate ``g0`` with unit scale (``eps = 1``, ``s = 0``);
    alternatively pass a prepared ``assembler`` built on such a field.
    """
    if not 0 < eps <= 1:
        raise ValueError("eps must lie in (0, 1]")
    if assembler is None:
        if base_field is None:
            raise ValueError("need base_field or assembler")
        assembler = FormAssembler(mesh, base_field, order)
    kw, mw = region_weights(assembler.tags, eps)
    one = np.ones_like(assembler.m0)
    K = assembler.stiffness(one, kw)
    M = assembler.mass(one, mw)
    fp = _fingerprint(assembler.fingerprint, "weighted", eps)
    return AssembledForms(K, M, assembler.order, fp, {"dofs": assembler.dofs, "eps": eps})
