"""Common zero set of two P1 fields, transversality, knot diagrams and the
Alexander polynomial.

Extraction works face by face: on a triangle with vertex values ``a`` (of
``u1``) and ``b`` (of ``u2``) the common zero of the linear interpolants has
barycentric coordinates proportional to ``a x b``, and the triangle is
crossed iff all three components share a sign.  The decision depends only on
the face, so neighbouring tetrahedra agree and segments stitch into
polylines without tolerances.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

log = logging.getLogger(__name__)

_FACES = np.array([[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]])


class ExtractionError(ValueError):
    """Empty or malformed zero set."""


class DiagramError(ValueError):
    """No generic projection, or a polyline that does not close up."""


class AlexanderError(ValueError):
    """Degenerate Alexander minor (split or empty diagram)."""


# ---------------------------------------------------------------------------
# extraction
# ---------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class Component:
    """One polyline of the zero set.

    ``points`` are unwrapped (consecutive points are close in space); for a
    closed component ``translation`` is the period vector by which the last
    point's successor differs from the first point (zero for loops that are
    null-homotopic in the torus).
    """

    points: np.ndarray
    gradients: np.ndarray  # (n, 2, 3)
    closed: bool
    translation: np.ndarray
    tets: np.ndarray

    def __len__(self):
        return len(self.points)

    @property
    def length(self) -> float:
        p = self.points
        seg = np.diff(p, axis=0)
        total = float(np.linalg.norm(seg, axis=1).sum())
        if self.closed:
            total += float(np.linalg.norm(p[0] + self.translation - p[-1]))
        return total

    @property
    def contractible(self) -> bool:
        return self.closed and not np.any(self.translation)

    def canonical_points(self, period) -> np.ndarray:
        period = np.asarray(period, dtype=float)
        p = self.points.copy()
        per = period > 0
        p[:, per] = np.mod(p[:, per], period[per])
        return p

    def reversed(self) -> "Component":
        return Component(self.points[::-1].copy(), self.gradients[::-1].copy(), self.closed,
                         -self.translation, self.tets[::-1].copy())


@dataclass(frozen=True, eq=False)
class NodalCurve:
    """All components of ``u1^-1(0) & u2^-1(0)`` on a mesh, longest first."""

    components: list
    period: np.ndarray
    warnings: list = field(default_factory=list)

    def __len__(self):
        return len(self.components)

    @property
    def polylines(self):
        return [c.points for c in self.components]


def _jitter_zeros(u: np.ndarray) -> np.ndarray:
    zero = u == 0.0
    if not zero.any():
        return u
    log.warning("%d exactly-zero nodal values perturbed", int(zero.sum()))
    scale = 1e-14 * max(float(np.max(np.abs(u))), 1e-300)
    idx = np.flatnonzero(zero)
    # deterministic hash of the vertex id, bounded away from zero
    h = ((idx * 2654435761) % 2**32) / 2**32
    out = u.copy()
    out[idx] = scale * np.where(idx % 2 == 0, 1.0, -1.0) * (0.5 + h)
    return out


def tet_gradients(mesh, tets_idx, u) -> np.ndarray:
    """Constant P1 gradients of nodal field ``u`` on the selected tetrahedra."""
    c = mesh.corners(tets_idx)
    E = c[:, 1:] - c[:, :1]
    Einv_T = np.transpose(np.linalg.inv(E), (0, 2, 1))
    vals = u[mesh.tets[tets_idx]]
    return np.einsum("ti,tij->tj", vals[:, 1:] - vals[:, :1], Einv_T)


def extract_intersection(mesh, u1, u2) -> NodalCurve:
    """Polylines where the P1 interpolants of ``u1`` and ``u2`` both vanish."""
    u1 = _jitter_zeros(np.asarray(u1, dtype=float))
    u2 = _jitter_zeros(np.asarray(u2, dtype=float))
    if len(u1) != mesh.n_vertices or len(u2) != mesh.n_vertices:
        raise ValueError("fields must be given at the mesh vertices")
    U1, U2 = u1[mesh.tets], u2[mesh.tets]
    cand = np.flatnonzero((U1.min(1) < 0) & (U1.max(1) > 0) & (U2.min(1) < 0) & (U2.max(1) > 0))
    warnings = []
    if len(cand) == 0:
        return NodalCurve([], mesh.period.copy(), warnings)
    a = U1[cand][:, _FACES]  # (nc, 4, 3)
    b = U2[cand][:, _FACES]
    cr = np.cross(a, b)
    crossed = np.all(cr > 0, axis=2) | np.all(cr < 0, axis=2)
    count = crossed.sum(axis=1)
    odd = (count != 0) & (count != 2)
    if odd.any():
        msg = f"{int(odd.sum())} tetrahedra with {sorted(set(count[odd].tolist()))} crossed faces skipped"
        log.warning(msg)
        warnings.append(msg)
    keep = count == 2
    tets_k = cand[keep]
    if len(tets_k) == 0:
        return NodalCurve([], mesh.period.copy(), warnings)
    cr_k, crossed_k = cr[keep], crossed[keep]
    # the two crossed local faces of each kept tet, in local face order
    fidx = np.argsort(~crossed_k, axis=1, kind="stable")[:, :2]
    rows = np.arange(len(tets_k))[:, None]
    lam = cr_k[rows, fidx]  # (nk, 2, 3)
    lam = lam / lam.sum(axis=2, keepdims=True)
    corners = mesh.corners(tets_k)
    fverts = _FACES[fidx]  # (nk, 2, 3) local vertex ids
    pts = np.einsum("tfk,tfkd->tfd", lam, corners[rows[:, :, None], fverts])
    keys = np.sort(mesh.tets[tets_k][rows[:, :, None], fverts], axis=2).reshape(-1, 3)
    uniq, node = np.unique(keys, axis=0, return_inverse=True)
    node = node.reshape(-1, 2)
    g1 = tet_gradients(mesh, tets_k, u1)
    g2 = tet_gradients(mesh, tets_k, u2)
    grads = np.stack([g1, g2], axis=1)
    comps = _stitch(node, pts, grads, tets_k, len(uniq), mesh.period)
    comps.sort(key=lambda c: (-len(c), tuple(np.round(c.canonical_points(mesh.period)[0], 12))))
    return NodalCurve(comps, mesh.period.copy(), warnings)


def _stitch(node, pts, grads, tets, n_nodes, period):
    n_edges = len(node)
    deg = np.bincount(node.ravel(), minlength=n_nodes)
    if deg.max(initial=0) > 2:
        raise ExtractionError("a face is shared by more than two crossed tetrahedra")
    inc = -np.ones((n_nodes, 2), dtype=np.int64)
    fill = np.zeros(n_nodes, dtype=np.int64)
    for e in range(n_edges):
        for side in range(2):
            v = node[e, side]
            inc[v, fill[v]] = e
            fill[v] += 1
    used = np.zeros(n_edges, dtype=bool)
    comps = []

    def walk(start_node, start_edge):
        seq_edges, seq_dir = [], []
        v, e = start_node, start_edge
        while e >= 0 and not used[e]:
            used[e] = True
            d = 0 if node[e, 0] == v else 1
            seq_edges.append(e)
            seq_dir.append(d)
            v = node[e, 1 - d]
            nxt = inc[v, 0] if inc[v, 0] != e else inc[v, 1]
            e = nxt
        return seq_edges, seq_dir, v

    # open chains first (start at degree-1 nodes), then loops
    starts = [v for v in range(n_nodes) if deg[v] == 1] + list(range(n_nodes))
    for v in starts:
        for e in inc[v]:
            if e < 0 or used[e]:
                continue
            edges, dirs, end = walk(v, e)
            comps.append(_assemble(edges, dirs, end == v and deg[v] == 2, pts, grads, tets, period))
    return comps


def _assemble(edges, dirs, closed, pts, grads, tets, period):
    out = []
    shift = np.zeros(3)
    g = []
    for k, (e, d) in enumerate(zip(edges, dirs)):
        p_in, p_out = pts[e, d], pts[e, 1 - d]
        if k == 0:
            out.append(p_in)
        else:
            shift = out[-1] - p_in
        out.append(p_out + shift)
        g.append(grads[e])
    P = np.array(out)
    G = np.array(g)
    # vertex gradients: average of adjacent segments
    VG = np.empty((len(P), 2, 3))
    VG[1:-1] = 0.5 * (G[:-1] + G[1:])
    VG[0], VG[-1] = G[0], G[-1]
    translation = np.zeros(3)
    if closed:
        translation = P[-1] - P[0]
        per = np.asarray(period, dtype=float)
        with np.errstate(invalid="ignore", divide="ignore"):
            translation = np.where(per > 0, np.round(translation / np.where(per > 0, per, 1.0)) * per, 0.0)
        VG[0] = 0.5 * (G[0] + G[-1])
        P = P[:-1]
        VG = VG[:-1]
    return Component(P, VG, closed, translation, np.asarray(edges))


# ---------------------------------------------------------------------------
# transversality and tube containment
# ---------------------------------------------------------------------------
def normalized_sigma2(gradients: np.ndarray) -> np.ndarray:
    """Second singular value of the row-normalized 2x3 gradient matrices."""
    g = np.asarray(gradients, dtype=float)
    norms = np.linalg.norm(g, axis=2, keepdims=True)
    g = g / np.where(norms > 0, norms, 1.0)
    return np.linalg.svd(g, compute_uv=False)[:, 1]


def transversality(curve, component: Optional[int] = None):
    """Minimal normalized ``sigma_2`` and its location.

    ``curve`` may be a NodalCurve (all components, or only ``component``) or
    a single Component.
    """
    comps = [curve] if isinstance(curve, Component) else (
        curve.components if component is None else [curve.components[component]])
    comps = [c for c in comps if len(c)]
    if not comps:
        raise ExtractionError("empty curve")
    best, where = np.inf, None
    for c in comps:
        s2 = normalized_sigma2(c.gradients)
        i = int(np.argmin(s2))
        if s2[i] < best:
            best, where = float(s2[i]), c.points[i]
    return best, where


@dataclass(frozen=True)
class TubeCheck:
    inside: bool
    winding: int
    max_radius: float


def in_tube_check(component: Component, tube) -> TubeCheck:
    """Whether every vertex has ``|z| < 1`` and the degree of ``s`` along the loop."""
    ch = tube.chart_inverse(np.mod(component.points, 1.0))
    r = np.where(ch.near, ch.r, np.inf)
    inside = bool(np.all(r < 1.0))
    winding = 0
    if ch.near.all() and component.closed:
        s = ch.s
        ds = np.diff(np.append(s, s[0]))
        ds -= np.round(ds)
        winding = int(np.round(ds.sum()))
    return TubeCheck(inside, winding, float(np.max(r)))


def tube_components(curve: NodalCurve, tube) -> list[tuple[int, TubeCheck]]:
    """Components lying entirely inside the tube, with their checks."""
    out = []
    for i, c in enumerate(curve.components):
        chk = in_tube_check(c, tube)
        if chk.inside:
            out.append((i, chk))
    return out


# ---------------------------------------------------------------------------
# diagrams
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class KnotDiagram:
    """Signed Gauss code: ``code[i] = +c`` (over) or ``-c`` (under) for crossing
    ``c`` (1-based); ``signs[c-1]`` is the crossing sign."""

    code: tuple
    signs: tuple
    direction: tuple
    min_angle: float = 1.0

    @property
    def crossings(self) -> int:
        return len(self.signs)

    def to_dict(self) -> dict:
        return {"gauss_code": list(self.code), "signs": list(self.signs), "crossings": self.crossings,
                "direction": list(self.direction), "min_crossing_sine": self.min_angle}


def _perp_basis(d):
    d = np.asarray(d, dtype=float)
    d = d / np.linalg.norm(d)
    a = np.cross(d, [1.0, 0.0, 0.0] if abs(d[0]) < 0.9 else [0.0, 1.0, 0.0])
    a /= np.linalg.norm(a)
    b = np.cross(d, a)
    return a, b, d


def _crossings(points: np.ndarray, direction, tol: float = 1e-9):
    """Crossings of the closed polyline projected along ``direction``.

    Returns a list of (seg_over, t_over, seg_under, t_under, sign, sine) or
    ``None`` if the projection is not generic.
    """
    a, b, d = _perp_basis(direction)
    P = np.stack([points @ a, points @ b], axis=1)
    H = points @ d
    n = len(P)
    Q = np.roll(P, -1, axis=0)
    HQ = np.roll(H, -1)
    seg = Q - P
    lens = np.linalg.norm(seg, axis=1)
    if np.any(lens == 0):
        return None
    mid = 0.5 * (P + Q)
    pairs = cKDTree(mid).query_pairs(r=float(lens.max()) * (1 + 1e-9), output_type="ndarray")
    if len(pairs) == 0:
        return []
    i, j = pairs[:, 0], pairs[:, 1]
    adj = (np.abs(i - j) == 1) | (np.abs(i - j) == n - 1)
    i, j = i[~adj], j[~adj]
    r, s = seg[i], seg[j]
    den = r[:, 0] * s[:, 1] - r[:, 1] * s[:, 0]
    qp = P[j] - P[i]
    with np.errstate(divide="ignore", invalid="ignore"):
        al = (qp[:, 0] * s[:, 1] - qp[:, 1] * s[:, 0]) / den
        be = (qp[:, 0] * r[:, 1] - qp[:, 1] * r[:, 0]) / den
    scale = lens.max()
    parallel = np.abs(den) <= 1e-14 * scale * scale
    if np.any(parallel):
        # collinear overlaps are non-generic; parallel disjoint segments are harmless
        off = np.abs(qp[:, 0] * r[:, 1] - qp[:, 1] * r[:, 0]) <= 1e-12 * scale * scale
        if np.any(parallel & off):
            return None
    hit = ~parallel & (al > -tol) & (al < 1 + tol) & (be > -tol) & (be < 1 + tol)
    near_end = hit & ((np.abs(al) < tol) | (np.abs(al - 1) < tol) | (np.abs(be) < tol) | (np.abs(be - 1) < tol))
    if near_end.any():
        return None
    out = []
    for k in np.flatnonzero(hit):
        ii, jj, ai, bj = int(i[k]), int(j[k]), float(al[k]), float(be[k])
        hi = H[ii] + ai * (HQ[ii] - H[ii])
        hj = H[jj] + bj * (HQ[jj] - H[jj])
        if abs(hi - hj) < 1e-12 * max(1.0, abs(hi)):
            return None
        (so, to, su, tu) = (ii, ai, jj, bj) if hi > hj else (jj, bj, ii, ai)
        o, u = seg[so], seg[su]
        cross = o[0] * u[1] - o[1] * u[0]
        sine = abs(cross) / (lens[so] * lens[su])
        out.append((so, to, su, tu, 1 if cross > 0 else -1, sine))
    return out


def _gauss_sequence(crossings):
    events = []
    for c, (so, to, su, tu, sign, _) in enumerate(crossings):
        events.append((so, to, c, True))
        events.append((su, tu, c, False))
    events.sort(key=lambda e: (e[0], e[1]))
    signs = [cr[4] for cr in crossings]
    return [(c, over) for _, _, c, over in events], signs


def remove_kinks(seq, signs):
    """Drop crossings whose two passages are consecutive (Reidemeister I)."""
    seq = list(seq)
    changed = True
    while changed and seq:
        changed = False
        n = len(seq)
        for k in range(n):
            if seq[k][0] == seq[(k + 1) % n][0]:
                c = seq[k][0]
                seq = [e for e in seq if e[0] != c]
                changed = True
                break
    labels = sorted({c for c, _ in seq})
    remap = {c: i for i, c in enumerate(labels)}
    return [(remap[c], o) for c, o in seq], [signs[c] for c in labels]


def canonical_code(seq, signs):
    """Lexicographically smallest relabelled code over start points and orientations."""
    if not seq:
        return (), ()
    best = None
    n = len(seq)
    for orient in (seq, seq[::-1]):
        for start in range(n):
            rot = orient[start:] + orient[:start]
            label = {}
            code = []
            for c, over in rot:
                if c not in label:
                    label[c] = len(label) + 1
                code.append(label[c] if over else -label[c])
            sg = [0] * len(label)
            for c, l in label.items():
                sg[l - 1] = signs[c]
            cand = (tuple(code), tuple(sg))
            if best is None or cand < best:
                best = cand
    return best


def diagram_from_crossings(crossings, direction) -> KnotDiagram:
    seq, signs = _gauss_sequence(crossings)
    seq, signs = remove_kinks(seq, signs)
    code, sg = canonical_code(seq, signs)
    angle = min((c[5] for c in crossings), default=1.0)
    return KnotDiagram(code, sg, tuple(float(v) for v in direction), float(angle))


def candidate_directions(n: int = 64) -> np.ndarray:
    """Deterministic golden-spiral directions on the upper hemisphere."""
    k = np.arange(n) + 0.5
    zc = 1.0 - k / n
    phi = np.pi * (3.0 - np.sqrt(5.0)) * k
    rr = np.sqrt(1.0 - zc**2)
    return np.stack([rr * np.cos(phi), rr * np.sin(phi), zc], axis=1)


def _closed_points(curve) -> np.ndarray:
    if isinstance(curve, Component):
        if not curve.contractible:
            raise DiagramError("component does not close up in the box (non-contractible or open)")
        return curve.points
    return np.asarray(curve, dtype=float)


def project_diagram(curve, direction=None, seed: int = 0, retries: int = 50,
                    candidates: int = 64) -> KnotDiagram:
    """Knot diagram of a closed polyline (Component or ``(n, 3)`` array).

    With ``direction=None`` the candidate directions are scanned and the one
    with the largest minimal crossing sine is used (ties: fewer crossings).
    A given direction that is not generic is perturbed randomly (seeded) up
    to ``retries`` times.
    """
    pts = _closed_points(curve)
    if direction is None:
        best = None
        for k, d in enumerate(candidate_directions(candidates)):
            cr = _crossings(pts, d)
            if cr is None:
                continue
            diag = diagram_from_crossings(cr, d)
            score = (min((c[5] for c in cr), default=1.0), -len(cr), -k)
            if best is None or score > best[0]:
                best = (score, diag)
        if best is None:
            raise DiagramError("no generic projection among candidate directions")
        return best[1]
    rng = np.random.default_rng(seed)
    d = np.asarray(direction, dtype=float)
    for attempt in range(retries + 1):
        cr = _crossings(pts, d)
        if cr is not None:
            return diagram_from_crossings(cr, d / np.linalg.norm(d))
        d = np.asarray(direction, dtype=float) + 1e-3 * rng.standard_normal(3)
    raise DiagramError(f"projection not generic after {retries} retries")


# ---------------------------------------------------------------------------
# Alexander polynomial
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class AlexanderResult:
    """Coefficients of ``Delta(t)`` from the lowest power, normalized so that
    ``Delta(1) = 1`` and the constant term is nonzero."""

    coefficients: tuple

    @property
    def determinant(self) -> int:
        return abs(sum(c * (-1) ** k for k, c in enumerate(self.coefficients)))

    @property
    def symmetric(self) -> bool:
        return tuple(self.coefficients) == tuple(reversed(self.coefficients))

    def centered(self) -> dict:
        """``{power: coefficient}`` with powers centred on zero."""
        half = (len(self.coefficients) - 1) // 2
        return {k - half: c for k, c in enumerate(self.coefficients)}

    def to_dict(self) -> dict:
        return {"alexander_coefficients": list(self.coefficients), "determinant": self.determinant}


def _bareiss_det(M) -> int:
    A = [list(row) for row in M]
    n = len(A)
    if n == 0:
        return 1
    sign = 1
    prev = 1
    for k in range(n - 1):
        if A[k][k] == 0:
            swap = next((r for r in range(k + 1, n) if A[r][k] != 0), None)
            if swap is None:
                return 0
            A[k], A[swap] = A[swap], A[k]
            sign = -sign
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                A[i][j] = (A[i][j] * A[k][k] - A[i][k] * A[k][j]) // prev
        prev = A[k][k]
    return sign * A[n - 1][n - 1]


def alexander_rows(diagram: KnotDiagram):
    """Per crossing: (over arc, incoming under arc, outgoing under arc, sign)."""
    code = diagram.code
    n = diagram.crossings
    arc = 0
    over_arc, inc, out = {}, {}, {}
    for e in code:
        c = abs(e) - 1
        if e > 0:
            over_arc[c] = arc % n
        else:
            inc[c] = arc % n
            arc += 1
            out[c] = arc % n
    return [(over_arc[c], inc[c], out[c], diagram.signs[c]) for c in range(n)]


def alexander(diagram: KnotDiagram) -> AlexanderResult:
    """Alexander polynomial from the signed Gauss code (Fox-calculus rows,
    one minor, exact evaluation at integers and interpolation)."""
    n = diagram.crossings
    if n == 0:
        return AlexanderResult((1,))
    if n > 64:
        raise AlexanderError("more than 64 crossings")
    rows = alexander_rows(diagram)

    def minor_at(t: int) -> int:
        M = [[0] * n for _ in range(n)]
        for c, (a, i, j, sign) in enumerate(rows):
            M[c][a] += 1 - t
            if sign > 0:
                M[c][i] += t
                M[c][j] -= 1
            else:
                M[c][i] -= 1
                M[c][j] += t
        return _bareiss_det([row[:-1] for row in M[:-1]])

    xs = list(range(2, 2 + n))
    ys = [minor_at(t) for t in xs]
    coeffs = _interpolate(xs, ys)
    while coeffs and coeffs[-1] == 0:
        coeffs.pop()
    while coeffs and coeffs[0] == 0:
        coeffs.pop(0)
    if not coeffs:
        raise AlexanderError("vanishing Alexander minor (split or degenerate diagram)")
    total = sum(coeffs)
    if abs(total) != 1:
        raise AlexanderError(f"Delta(1) = {total}, expected +-1")
    if total < 0:
        coeffs = [-c for c in coeffs]
    return AlexanderResult(tuple(int(c) for c in coeffs))


def _interpolate(xs, ys) -> list:
    """Integer polynomial coefficients (ascending) through the points (exact)."""
    n = len(xs)
    coeffs = [Fraction(0)] * n
    for k in range(n):
        # Lagrange basis polynomial for node k
        basis = [Fraction(1)]
        denom = Fraction(1)
        for m in range(n):
            if m == k:
                continue
            basis = [Fraction(0)] + basis
            for p in range(len(basis) - 1):
                basis[p] -= xs[m] * basis[p + 1]
            denom *= xs[k] - xs[m]
        for p in range(n):
            coeffs[p] += ys[k] * basis[p] / denom
    out = []
    for c in coeffs:
        if c.denominator != 1:
            raise AlexanderError("non-integer interpolation (degree bound violated)")
        out.append(int(c))
    return out


def knot_invariants(curve, direction=None, seed: int = 0) -> dict:
    diag = project_diagram(curve, direction, seed)
    alex = alexander(diag)
    return {**diag.to_dict(), **alex.to_dict()}


# ---------------------------------------------------------------------------
# structural stability
# ---------------------------------------------------------------------------
def c1_norm(mesh, u) -> float:
    """``max |u| + max |grad u|`` over vertices and tetrahedra."""
    g = tet_gradients(mesh, np.arange(mesh.n_tets), np.asarray(u, dtype=float))
    return float(np.max(np.abs(u)) + np.max(np.linalg.norm(g, axis=1)))


def smooth_noise(points, rng, kmax: int = 2) -> np.ndarray:
    """Random trigonometric polynomial of degree ``kmax`` on the periodic box."""
    ks = np.array([k for k in np.ndindex(*(2 * kmax + 1,) * 3)]) - kmax
    ks = ks[np.any(ks != 0, axis=1)]
    amp = rng.standard_normal((len(ks), 2)) / (1.0 + np.sum(ks**2, axis=1))[:, None]
    ph = 2.0 * np.pi * points @ ks.T
    return np.cos(ph) @ amp[:, 0] + np.sin(ph) @ amp[:, 1]


def densify(points: np.ndarray, spacing: float, closed: bool = True) -> np.ndarray:
    """Points along a polyline with gaps no larger than ``spacing``."""
    P = np.asarray(points, dtype=float)
    Q = np.roll(P, -1, axis=0) if closed else P[1:]
    P0 = P if closed else P[:-1]
    seg = Q - P0
    k = np.maximum(1, np.ceil(np.linalg.norm(seg, axis=1) / spacing).astype(int))
    rep = np.repeat(np.arange(len(P0)), k)
    frac = np.concatenate([np.arange(n) / n for n in k])
    out = P0[rep] + frac[:, None] * seg[rep]
    return out if closed else np.vstack([out, P[-1:]])


def hausdorff(a: np.ndarray, b: np.ndarray, period=None, spacing: Optional[float] = None,
              closed: bool = True) -> float:
    """Symmetric Hausdorff distance between two polylines.

    Both are densified to ``spacing`` (default: 1/20 of the shortest mean
    segment length), so the result is within ``spacing`` of the distance
    between the continuous curves.  Periodic when ``period`` is given.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if spacing is None:
        mean = [np.linalg.norm(np.diff(x, axis=0), axis=1).mean() for x in (a, b) if len(x) > 1]
        spacing = min(mean) / 20.0 if mean else 1.0
    a, b = densify(a, spacing, closed), densify(b, spacing, closed)
    if period is not None and np.all(np.asarray(period) > 0):
        box = np.asarray(period, dtype=float)
        a, b = np.mod(a, box), np.mod(b, box)
        ta, tb = cKDTree(a, boxsize=box), cKDTree(b, boxsize=box)
    else:
        ta, tb = cKDTree(a), cKDTree(b)
    return float(max(tb.query(a)[0].max(), ta.query(b)[0].max()))


def _component_in_tube(curve: NodalCurve, tube):
    inside = tube_components(curve, tube)
    return inside


def stability_test(mesh, u1, u2, delta: float, trials: int, tube, extra_fields: Sequence[np.ndarray] = (),
                   seed: int = 0, baseline_index: Optional[int] = None) -> dict:
    """Perturb ``(u1, u2)`` by random fields of relative C1 size ``delta`` and re-extract.

    Perturbations mix ``extra_fields`` (e.g. other eigenvectors) with smooth
    trigonometric noise.  Reports persistence of a unique in-tube component
    with winding +-1, its Hausdorff distance to the baseline, the knot
    determinant and the transversality margin.
    """
    rng = np.random.default_rng(seed)
    base_curve = extract_intersection(mesh, u1, u2)
    inside = _component_in_tube(base_curve, tube)
    if baseline_index is None:
        if len(inside) != 1:
            raise ExtractionError(f"baseline has {len(inside)} in-tube components")
        baseline_index = inside[0][0]
    base = base_curve.components[baseline_index]
    base_inv = knot_invariants(base)
    base_sigma = transversality(base)[0]
    direction = np.array(base_inv["direction"])
    n1, n2 = c1_norm(mesh, u1), c1_norm(mesh, u2)
    extras = [np.asarray(f, dtype=float) for f in extra_fields]
    records = []
    for trial in range(trials):
        fields = []
        for u, nu in ((u1, n1), (u2, n2)):
            p = smooth_noise(mesh.points, rng)
            if extras:
                coef = rng.standard_normal(len(extras))
                p = p / max(c1_norm(mesh, p), 1e-300) + sum(c * f / c1_norm(mesh, f) for c, f in zip(coef, extras))
            p *= delta * nu / c1_norm(mesh, p)
            fields.append(u + p)
        curve = extract_intersection(mesh, *fields)
        ins = _component_in_tube(curve, tube)
        rec = {"trial": trial, "in_tube_components": len(ins)}
        ok = len(ins) == 1 and abs(ins[0][1].winding) == 1
        if len(ins) >= 1:
            comp = curve.components[ins[0][0]]
            rec["hausdorff"] = hausdorff(comp.points, base.points, mesh.period)
            rec["sigma2"] = transversality(comp)[0]
            try:
                inv = knot_invariants(comp)
                rec["determinant"] = inv["determinant"]
                rec["alexander"] = inv["alexander_coefficients"]
                fixed = project_diagram(comp, direction, seed=trial)
                rec["same_code"] = fixed.code == project_diagram(base, direction).code
            except (DiagramError, AlexanderError) as exc:
                rec["error"] = str(exc)
                ok = False
        rec["persists"] = bool(ok)
        records.append(rec)
    dets = [r.get("determinant") for r in records]
    return {
        "delta": delta, "trials": trials,
        "baseline": {"determinant": base_inv["determinant"], "sigma2": base_sigma,
                     "alexander": base_inv["alexander_coefficients"]},
        "all_persist": all(r["persists"] for r in records),
        "determinant_unchanged": all(d == base_inv["determinant"] for d in dets),
        "max_hausdorff": max((r.get("hausdorff", np.inf) for r in records), default=0.0),
        "records": records,
    }
