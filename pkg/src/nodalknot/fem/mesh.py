"""Tetrahedral meshes: the periodic unit box refined around a tube, and the
standalone product tube ``S^1 x D^2`` in chart coordinates.

Periodicity is handled by vertex identification: every tetrahedron stores
canonical vertex ids plus an integer period offset per corner, so the
unwrapped corner positions are ``points[tets] + offsets * period``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..knotgeom import COLLAR, EXTERIOR, TUBE_INTERIOR, FramedTube, tags_from_radius


class MeshError(ValueError):
    """Raised for degenerate or inconsistent meshes."""


@dataclass(frozen=True, eq=False)
class TetMesh:
    """Tetrahedral mesh with periodic vertex identification.

    Attributes
    ----------
    points : (nv, 3) canonical vertex positions.
    tets : (nt, 4) canonical vertex ids.
    offsets : (nt, 4, 3) integer multiples of ``period`` added to each corner.
    period : (3,) period per axis, 0 for non-periodic axes.
    tags : (nt,) region tag per tet.
    boundary_faces : (nf, 3) canonical ids of boundary triangles, if any.
    kind : "torus3" (positions in the unit box) or "product-tube" (chart
        coordinates ``(s, z1, z2)``).
    """

    points: np.ndarray
    tets: np.ndarray
    offsets: np.ndarray
    period: np.ndarray
    tags: np.ndarray
    boundary_faces: Optional[np.ndarray] = None
    kind: str = "torus3"
    meta: dict = field(default_factory=dict)

    @property
    def n_vertices(self) -> int:
        return len(self.points)

    @property
    def n_tets(self) -> int:
        return len(self.tets)

    def corners(self, idx=None) -> np.ndarray:
        """Unwrapped corner positions ``(nt, 4, 3)``."""
        t = self.tets if idx is None else self.tets[idx]
        o = self.offsets if idx is None else self.offsets[idx]
        return self.points[t] + o * self.period

    def signed_volumes(self) -> np.ndarray:
        c = self.corners()
        e = c[:, 1:] - c[:, :1]
        return np.linalg.det(e) / 6.0

    def volumes(self) -> np.ndarray:
        return np.abs(self.signed_volumes())

    def barycenters(self) -> np.ndarray:
        b = self.corners().mean(axis=1)
        per = self.period > 0
        b[:, per] = np.mod(b[:, per], self.period[per])
        return b

    def edges(self) -> np.ndarray:
        """Unique undirected edges as canonical id pairs."""
        pairs = np.array(list(itertools.combinations(range(4), 2)))
        e = np.sort(self.tets[:, pairs].reshape(-1, 2), axis=1)
        return np.unique(e, axis=0)

    @property
    def h(self) -> float:
        """Largest edge length."""
        return float(self.edge_lengths().max())

    def edge_lengths(self) -> np.ndarray:
        c = self.corners()
        pairs = list(itertools.combinations(range(4), 2))
        return np.stack([np.linalg.norm(c[:, i] - c[:, j], axis=1) for i, j in pairs], axis=1)

    def identification(self) -> tuple[np.ndarray, np.ndarray]:
        """Unwrapped vertex copies and the map copy -> canonical copy.

        Returns ``(positions, ident)`` where ``ident`` is idempotent and sends
        every periodic copy to the copy with zero offset.
        """
        nv = self.n_vertices
        key = np.concatenate([self.tets.reshape(-1, 1), self.offsets.reshape(-1, 3)], axis=1)
        key = np.concatenate([np.column_stack([np.arange(nv), np.zeros((nv, 3), dtype=key.dtype)]), key])
        uniq, first = np.unique(key, axis=0, return_index=True)
        pos = self.points[uniq[:, 0]] + uniq[:, 1:] * self.period
        canon = np.flatnonzero(np.all(uniq[:, 1:] == 0, axis=1))
        lookup = np.empty(nv, dtype=np.int64)
        lookup[uniq[canon, 0]] = canon
        return pos, lookup[uniq[:, 0]]

    def min_dihedral_angle(self) -> float:
        """Smallest dihedral angle in degrees."""
        c = self.corners()
        faces = [(1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2)]
        normals = []
        for f in faces:
            n = np.cross(c[:, f[1]] - c[:, f[0]], c[:, f[2]] - c[:, f[0]])
            normals.append(n / np.linalg.norm(n, axis=1, keepdims=True))
        # orient outward: opposite vertex on the negative side
        for i, f in enumerate(faces):
            sgn = np.sign(np.sum(normals[i] * (c[:, i] - c[:, f[0]]), axis=1))
            normals[i] = -normals[i] * sgn[:, None]
        best = 180.0
        for i, j in itertools.combinations(range(4), 2):
            cosang = -np.sum(normals[i] * normals[j], axis=1)
            ang = np.degrees(np.arccos(np.clip(cosang, -1, 1)))
            best = min(best, float(ang.min()))
        return best

    def submesh(self, mask) -> "TetMesh":
        """Tets selected by ``mask`` with vertices renumbered; ``meta['vertex_map']``
        holds the original ids of the kept vertices."""
        mask = np.asarray(mask, dtype=bool)
        tets = self.tets[mask]
        used = np.unique(tets)
        remap = np.full(self.n_vertices, -1, dtype=np.int64)
        remap[used] = np.arange(len(used))
        meta = dict(self.meta)
        meta["vertex_map"] = used
        return TetMesh(self.points[used], remap[tets], self.offsets[mask], self.period, self.tags[mask],
                       None, self.kind, meta)

    def boundary_of(self, mask) -> np.ndarray:
        """Triangles on the boundary of the union of tets selected by ``mask``
        (faces belonging to exactly one selected tet), as canonical ids."""
        mask = np.asarray(mask, dtype=bool)
        faces = self.tets[mask][:, [[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]]].reshape(-1, 3)
        key = np.sort(faces, axis=1)
        uniq, counts = np.unique(key, axis=0, return_counts=True)
        return uniq[counts == 1]


# ---------------------------------------------------------------------------
# periodic box with Maubach bisection
# ---------------------------------------------------------------------------

_PAIRS = np.array(list(itertools.combinations(range(4), 2)))


def _kuhn_box(n: int):
    """Kuhn (Freudenthal) split of the periodic ``n^3`` grid, 6 tets per cube."""
    ijk = np.stack(np.meshgrid(np.arange(n), np.arange(n), np.arange(n), indexing="ij"), axis=-1).reshape(-1, 3)
    points = ijk / n
    tets, offs = [], []
    for perm in itertools.permutations(range(3)):
        corner = ijk.copy()
        ids = [corner.copy()]
        for axis in perm:
            corner = corner.copy()
            corner[:, axis] += 1
            ids.append(corner)
        ids = np.stack(ids, axis=1)  # (ncube, 4, 3)
        off = ids // n
        wrapped = ids % n
        tets.append(wrapped[..., 0] * n * n + wrapped[..., 1] * n + wrapped[..., 2])
        offs.append(off)
    return points, np.concatenate(tets), np.concatenate(offs).astype(np.int64)


def _edge_keys(a, b, nmax):
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    return lo * nmax + hi


class _Bisector:
    """Newest-vertex (Maubach) bisection of a Kuhn mesh with a midpoint registry."""

    KEYBASE = 1 << 31

    def __init__(self, points, tets, offsets, n):
        self.points = [points]
        self.npts = len(points)
        self.tets = tets
        self.offs = offsets
        self.tag = np.full(len(tets), 3, dtype=np.int8)
        self.reg_keys = np.zeros(0, dtype=np.int64)
        self.reg_mid = np.zeros(0, dtype=np.int64)
        self.res = n  # dyadic positions: exact in float

    def all_points(self):
        if len(self.points) > 1:
            self.points = [np.concatenate(self.points)]
        return self.points[0]

    def _lookup(self, keys):
        pos = np.searchsorted(self.reg_keys, keys)
        pos = np.minimum(pos, max(len(self.reg_keys) - 1, 0))
        if len(self.reg_keys) == 0:
            return np.full(keys.shape, -1, dtype=np.int64)
        found = self.reg_keys[pos] == keys
        return np.where(found, self.reg_mid[pos], -1)

    def hanging(self) -> np.ndarray:
        if len(self.reg_keys) == 0:
            return np.zeros(len(self.tets), dtype=bool)
        a = self.tets[:, _PAIRS[:, 0]]
        b = self.tets[:, _PAIRS[:, 1]]
        keys = _edge_keys(a, b, self.KEYBASE)
        return (self._lookup(keys.ravel()) >= 0).reshape(keys.shape).any(axis=1)

    def bisect(self, mark: np.ndarray) -> None:
        idx = np.flatnonzero(mark)
        if len(idx) == 0:
            return
        T = self.tets[idx]
        O = self.offs[idx]
        k = self.tag[idx].astype(np.int64)
        rows = np.arange(len(idx))
        a, b = T[:, 0], T[rows, k]
        keys = _edge_keys(a, b, self.KEYBASE)
        pts = self.all_points()
        pa = pts[a] + O[:, 0]
        pb = pts[b] + O[rows, k]
        mid_pos = 0.5 * (pa + pb)
        mid_off = np.floor(mid_pos).astype(np.int64)
        mid_canon = mid_pos - mid_off
        mid_id = self._lookup(keys)
        new = mid_id < 0
        if new.any():
            uk, first = np.unique(keys[new], return_index=True)
            new_ids = self.npts + np.arange(len(uk))
            self.points.append(mid_canon[np.flatnonzero(new)[first]])
            self.npts += len(uk)
            allk = np.concatenate([self.reg_keys, uk])
            allm = np.concatenate([self.reg_mid, new_ids])
            order = np.argsort(allk, kind="stable")
            self.reg_keys, self.reg_mid = allk[order], allm[order]
            mid_id = self._lookup(keys)
        # child 1: (x0..x_{k-1}, z, x_{k+1}..x3); child 2: (x1..x_k, z, x_{k+1}..x3)
        c1 = T.copy()
        o1 = O.copy()
        c1[rows, k] = mid_id
        o1[rows, k] = mid_off
        c2 = np.empty_like(T)
        o2 = np.empty_like(O)
        for kk in (1, 2, 3):
            sel = k == kk
            if not sel.any():
                continue
            c2[sel, :kk] = T[sel, 1:kk + 1]
            o2[sel, :kk] = O[sel, 1:kk + 1]
            c2[sel, kk] = mid_id[sel]
            o2[sel, kk] = mid_off[sel]
            c2[sel, kk + 1:] = T[sel, kk + 1:]
            o2[sel, kk + 1:] = O[sel, kk + 1:]
        newtag = np.where(k > 1, k - 1, 3).astype(np.int8)
        keep = np.ones(len(self.tets), dtype=bool)
        keep[idx] = False
        self.tets = np.concatenate([self.tets[keep], c1, c2])
        self.offs = np.concatenate([self.offs[keep], o1, o2])
        self.tag = np.concatenate([self.tag[keep], newtag, newtag])

    def close(self, max_passes: int = 200) -> None:
        for _ in range(max_passes):
            h = self.hanging()
            if not h.any():
                return
            self.bisect(h)
        raise MeshError("bisection closure did not terminate")

    def normalize_offsets(self) -> None:
        """Shift each tet so that its first corner has zero offset."""
        self.offs = self.offs - self.offs[:, :1]


def _tet_size(corners):
    e = corners[:, 1:] - corners[:, :1]
    return np.cbrt(np.abs(np.linalg.det(e)))


def mesh_torus3(n: int, tube: Optional[FramedTube] = None, refine_levels: Optional[int] = None,
                elements_across: int = 8) -> TetMesh:
    """Periodic Kuhn mesh of the unit box, bisected near the tube.

    Tets whose barycenter lies within ``rho (1 + w)`` plus their own size of
    the knot are bisected until their size ``(6 vol)^(1/3)`` is at most
    ``2 rho / elements_across`` (or for ``refine_levels`` bisection
    generations if given).  Conformity is restored after every generation.
    Region tags come from chart coordinates of the corners and barycenter.
    """
    if n < 8:
        raise MeshError("base resolution n must be >= 8")
    points, tets, offs = _kuhn_box(n)
    bis = _Bisector(points, tets, offs, n)
    if tube is not None:
        target = 2.0 * tube.rho / elements_across
        gen = 0
        while True:
            if refine_levels is not None and gen >= refine_levels:
                break
            pts = bis.all_points()
            corners = pts[bis.tets] + bis.offs
            size = _tet_size(corners)
            bary = np.mod(corners.mean(axis=1), 1.0)
            dist, _ = tube._tree.query(bary)
            mark = dist < tube.rho + 0.75 * size * np.sqrt(3.0)
            if refine_levels is None:
                mark &= size > target * (1 + 1e-9)
            if not mark.any():
                break
            bis.bisect(mark)
            bis.close()
            gen += 1
    bis.normalize_offsets()
    pts = bis.all_points()
    mesh = TetMesh(pts, bis.tets, bis.offs, np.ones(3), np.full(len(bis.tets), EXTERIOR, dtype=np.int8),
                   None, "torus3", {"base_n": n})
    # bisection children alternate orientation; store all tets positively oriented
    neg = mesh.signed_volumes() < 0
    t = mesh.tets.copy()
    o = mesh.offsets.copy()
    t[neg, 0], t[neg, 1] = mesh.tets[neg, 1], mesh.tets[neg, 0]
    o[neg, 0], o[neg, 1] = mesh.offsets[neg, 1], mesh.offsets[neg, 0]
    mesh = TetMesh(pts, t, o - o[:, :1], mesh.period, mesh.tags, None, "torus3", mesh.meta)
    if np.any(mesh.signed_volumes() <= 1e-14 * n**-3):
        raise MeshError("degenerate tetrahedra after refinement")
    if tube is not None:
        mesh = tag_regions(mesh, tube)
    return mesh


def tag_regions(mesh: TetMesh, tube: FramedTube) -> TetMesh:
    """Assign tube-interior / collar / exterior tags from chart coordinates.

    Tube-interior: barycenter and all corners with ``|z| <= 1``.  Collar:
    straddling tets and barycenters with ``1 < |z| <= 1 + w``.
    """
    vchart = tube.chart_inverse(mesh.points)
    vr = np.where(vchart.near, vchart.r, np.inf)
    bchart = tube.chart_inverse(mesh.barycenters())
    br = np.where(bchart.near, bchart.r, np.inf)
    corner_in = vr[mesh.tets] <= 1.0
    tags = tags_from_radius(br, tube.width)
    all_in = corner_in.all(axis=1)
    any_in = corner_in.any(axis=1)
    tags = np.where(all_in & (tags == TUBE_INTERIOR), TUBE_INTERIOR, tags)
    tags = np.where((tags == TUBE_INTERIOR) & ~all_in, COLLAR, tags)
    tags = np.where((tags == EXTERIOR) & any_in, COLLAR, tags).astype(np.int8)
    meta = dict(mesh.meta)
    meta["vertex_s"] = vchart.s
    meta["vertex_z"] = vchart.z
    return TetMesh(mesh.points, mesh.tets, mesh.offsets, mesh.period, tags, None, mesh.kind, meta)


# ---------------------------------------------------------------------------
# standalone product tube
# ---------------------------------------------------------------------------


def disk_mesh(n_rings: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Six-fold symmetric triangulation of the unit disk.

    Ring ``j`` has ``6 j`` points at radius ``j / n_rings``.  Returns points,
    triangles (ccw), ring index and within-ring index per point.
    """
    if n_rings < 1:
        raise MeshError("n_rings >= 1")
    pts = [np.zeros((1, 2))]
    ring = [np.zeros(1, dtype=int)]
    pos = [np.zeros(1, dtype=int)]
    for j in range(1, n_rings + 1):
        th = 2.0 * np.pi * np.arange(6 * j) / (6 * j)
        pts.append((j / n_rings) * np.stack([np.cos(th), np.sin(th)], axis=1))
        ring.append(np.full(6 * j, j))
        pos.append(np.arange(6 * j))
    start = [0] + [1 + 3 * (j - 1) * j for j in range(1, n_rings + 1)]
    tris = []
    for j in range(1, n_rings + 1):
        n_in = max(6 * (j - 1), 1)
        n_out = 6 * j

        def inner(i):
            return 0 if j == 1 else start[j - 1] + (i % n_in)

        def outer(i):
            return start[j] + (i % n_out)

        for q in range(6):
            # sector q: inner ring points q(j-1)..(q+1)(j-1), outer qj..(q+1)j
            i, o = q * (j - 1), q * j
            i_end, o_end = (q + 1) * (j - 1), (q + 1) * j
            while i < i_end or o < o_end:
                # advance the ring whose next point has the smaller angle
                ang_i = (i + 1) / (6 * (j - 1)) if j > 1 else np.inf
                ang_o = (o + 1) / (6 * j)
                if i < i_end and (o >= o_end or ang_i < ang_o):
                    tris.append((inner(i), inner(i + 1), outer(o)))
                    i += 1
                else:
                    tris.append((inner(i), outer(o + 1), outer(o)))
                    o += 1
    tris = np.array(tris, dtype=np.int64)
    pts = np.concatenate(pts)
    # make every triangle counter-clockwise
    a, b, c = pts[tris[:, 0]], pts[tris[:, 1]], pts[tris[:, 2]]
    area = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
    flip = area < 0
    tris[flip, 1], tris[flip, 2] = tris[flip, 2].copy(), tris[flip, 1].copy()
    return pts, tris, np.concatenate(ring), np.concatenate(pos)


def _local_order(tris, ring, pos):
    """Order triangle corners by (ring, ccw position) so the prism split is
    conforming and invariant under the six-fold rotation."""
    out = np.empty_like(tris)
    for t_i, t in enumerate(tris):
        r = ring[t]
        p = pos[t].astype(float)
        if r.min() == r.max():
            raise MeshError("triangle inside a single ring")
        # within a ring, the ccw successor ranks higher (handles the 0 wrap)
        rank = []
        for a in range(3):
            same = [b for b in range(3) if b != a and r[b] == r[a]]
            succ = 0
            for b in same:
                n_ring = 6 * r[a]
                if (p[a] - p[b]) % n_ring == 1:
                    succ = 1
            rank.append((r[a], succ))
        out[t_i] = t[np.lexsort((np.array([x[1] for x in rank]), np.array([x[0] for x in rank])))]
    return out


def mesh_product_tube(n_s: int, h: float = 1.0 / 8.0, A: float = 1.0) -> TetMesh:
    """Product mesh of an ``n_s``-segment circle with the symmetric disk mesh.

    Points are chart coordinates ``(s, z1, z2)`` with ``s`` periodic (period 1).
    ``h`` is the radial ring spacing of the disk.
    """
    if n_s < 16:
        raise MeshError("n_s must be >= 16")
    n_rings = int(np.ceil(1.0 / h - 1e-9))
    dpts, dtris, ring, pos = disk_mesh(n_rings)
    ordered = _local_order(dtris, ring, pos)
    nd = len(dpts)
    s = np.arange(n_s) / n_s
    points = np.concatenate([np.column_stack([np.full(nd, si), dpts]) for si in s])
    a, b, c = ordered[:, 0], ordered[:, 1], ordered[:, 2]
    tets, offs = [], []
    for layer in range(n_s):
        nxt = (layer + 1) % n_s
        wrap = 1 if layer + 1 == n_s else 0
        a0, b0, c0 = a + layer * nd, b + layer * nd, c + layer * nd
        a1, b1, c1 = a + nxt * nd, b + nxt * nd, c + nxt * nd
        for tet, top in (((a0, b0, c0, c1), (0, 0, 0, 1)),
                         ((a0, b0, b1, c1), (0, 0, 1, 1)),
                         ((a0, a1, b1, c1), (0, 1, 1, 1))):
            tets.append(np.stack(tet, axis=1))
            o = np.zeros((len(a), 4, 3), dtype=np.int64)
            o[:, :, 0] = np.array(top) * wrap
            offs.append(o)
    tets = np.concatenate(tets)
    offs = np.concatenate(offs)
    period = np.array([1.0, 0.0, 0.0])
    # boundary quads on the outer ring, split along the same diagonals
    outer = np.flatnonzero(ring == n_rings)
    order = outer[np.argsort(pos[outer])]
    bf = []
    for layer in range(n_s):
        nxt = (layer + 1) % n_s
        for i in range(len(order)):
            p, q = order[i], order[(i + 1) % len(order)]
            p0, q0, p1, q1 = p + layer * nd, q + layer * nd, p + nxt * nd, q + nxt * nd
            bf.append((p0, q0, q1))
            bf.append((p0, p1, q1))
    mesh = TetMesh(points, tets, offs, period, np.full(len(tets), TUBE_INTERIOR, dtype=np.int8),
                   np.array(bf, dtype=np.int64), "product-tube",
                   {"n_s": n_s, "n_rings": n_rings, "A": A, "disk_points": nd})
    vol = mesh.signed_volumes()
    neg = vol < 0
    if neg.any():
        t = mesh.tets.copy()
        o = mesh.offsets.copy()
        t[neg, 1], t[neg, 2] = mesh.tets[neg, 2], mesh.tets[neg, 1]
        o[neg, 1], o[neg, 2] = mesh.offsets[neg, 2], mesh.offsets[neg, 1]
        mesh = TetMesh(points, t, o, period, mesh.tags, mesh.boundary_faces, mesh.kind, mesh.meta)
    if np.any(mesh.signed_volumes() <= 0):
        raise MeshError("degenerate tetrahedra in product tube mesh")
    return mesh


def euler_characteristic(faces: np.ndarray) -> int:
    """``V - E + F`` of a triangle surface given by vertex-id triples."""
    faces = np.asarray(faces)
    v = len(np.unique(faces))
    e = np.unique(np.sort(faces[:, [[0, 1], [1, 2], [0, 2]]].reshape(-1, 2), axis=1), axis=0)
    return int(v - len(e) + len(faces))
