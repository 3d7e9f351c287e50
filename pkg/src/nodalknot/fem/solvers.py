"""Auxiliary solves on the exterior of the tube: harmonic extension and the
lowest Dirichlet eigenvalue."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
import scipy.sparse as sp

from ..knotgeom import TUBE_INTERIOR
from .assembly import AssembledForms, FormAssembler
from .mesh import TetMesh


class RegionError(ValueError):
    """Empty region or no boundary to impose data on."""


@dataclass(frozen=True, eq=False)
class RegionForms:
    """Reference-metric forms restricted to a set of tets, with the split of
    its vertices into boundary (shared with the complement) and free ones."""

    K: sp.csr_matrix
    M: sp.csr_matrix
    dofs: np.ndarray  # mesh vertex ids of the region
    boundary: np.ndarray  # positions into ``dofs``
    free: np.ndarray  # positions into ``dofs``


def region_forms(mesh: TetMesh, field=None, region=None, order: int = 2,
                 assembler: Optional[FormAssembler] = None) -> RegionForms:
    """Forms of ``g0`` on ``region`` (default: every tet outside the tube interior).

    A prepared full-mesh ``assembler`` can be reused; only its cached
    reference geometry is used (no collar factor, no conformal factor).
    """
    region = (mesh.tags != TUBE_INTERIOR) if region is None else np.asarray(region, dtype=bool)
    if not region.any():
        raise RegionError("empty region")
    if assembler is None:
        if field is None:
            raise ValueError("need a field or an assembler")
        assembler = FormAssembler(mesh, field, order)
    if len(assembler.tet_idx) != mesh.n_tets:
        raise ValueError("assembler must cover the whole mesh")
    w = region.astype(float)
    one = np.ones_like(assembler.m0)
    K = assembler.stiffness(one, w)
    M = assembler.mass(one, w)
    dofs = np.unique(mesh.tets[region])
    outside = np.zeros(mesh.n_vertices, dtype=bool)
    outside[np.unique(mesh.tets[~region])] = True
    on_bnd = outside[dofs]
    K = K[dofs][:, dofs].tocsr()
    M = M[dofs][:, dofs].tocsr()
    return RegionForms(K, M, dofs, np.flatnonzero(on_bnd), np.flatnonzero(~on_bnd))


@dataclass(frozen=True, eq=False)
class HarmonicExtension:
    """Discrete harmonic function on the region; ``values`` is indexed by mesh
    vertex (vertices outside the region carry ``nan``)."""

    values: np.ndarray
    energy: float
    boundary_vertices: np.ndarray


def harmonic_extension(mesh: TetMesh, trace: Union[np.ndarray, Callable], field=None, region=None,
                       order: int = 2, assembler: Optional[FormAssembler] = None,
                       forms: Optional[RegionForms] = None) -> HarmonicExtension:
    """Solve the ``g0``-Laplace equation on the region with Dirichlet data ``trace``.

    ``trace`` is either an array over mesh vertices (only boundary entries are
    read) or a function of chart samples evaluated at the boundary vertices.
    Returns the extension and its Dirichlet energy on the region.
    """
    from ..eigen import factorize_spd

    rf = forms if forms is not None else region_forms(mesh, field, region, order, assembler)
    if len(rf.boundary) == 0:
        raise RegionError("region has no boundary")
    if len(rf.free) == 0:
        raise RegionError("region has no interior vertices")
    bverts = rf.dofs[rf.boundary]
    if callable(trace):
        fld = field if field is not None else assembler.field
        tb = np.asarray(trace(fld.chart(mesh.points[bverts])), dtype=float)
    else:
        tb = np.asarray(trace, dtype=float)[bverts]
    K = rf.K
    Kff = K[rf.free][:, rf.free]
    Kfb = K[rf.free][:, rf.boundary]
    solve = factorize_spd(Kff)
    try:
        xf = solve(-(Kfb @ tb))
    finally:
        solve.release()
    local = np.empty(len(rf.dofs))
    local[rf.boundary] = tb
    local[rf.free] = xf
    values = np.full(mesh.n_vertices, np.nan)
    values[rf.dofs] = local
    energy = float(local @ (K @ local))
    return HarmonicExtension(values, max(energy, 0.0), bverts)


def dirichlet_lowest(mesh: TetMesh, field=None, region=None, order: int = 2,
                     assembler: Optional[FormAssembler] = None, seed: int = 0) -> float:
    """Lowest eigenvalue of the ``g0``-Laplacian on the region, zero on its boundary."""
    from ..eigen import lowest_pairs

    rf = region_forms(mesh, field, region, order, assembler)
    if len(rf.free) == 0:
        raise RegionError("region has no interior vertices")
    K = rf.K[rf.free][:, rf.free]
    M = rf.M[rf.free][:, rf.free]
    pairs = lowest_pairs(AssembledForms(K.tocsr(), M.tocsr(), order, "dirichlet"), 0, seed=seed)
    return float(pairs.values[0])
