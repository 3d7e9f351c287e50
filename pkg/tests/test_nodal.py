import numpy as np
import pytest
import sympy
from hypothesis import given, settings, strategies as st

from nodalknot import knotgeom as kg, nodal
from nodalknot.fem import mesh_torus3

T = sympy.symbols("t")


def _ascending(expr):
    coeffs = sympy.Poly(sympy.expand(expr), T).all_coeffs()[::-1]
    while coeffs and coeffs[0] == 0:
        coeffs.pop(0)
    if sum(coeffs) < 0:
        coeffs = [-c for c in coeffs]
    return tuple(int(c) for c in coeffs)


def torus_knot_oracle(p, q):
    return _ascending(sympy.cancel((T ** (p * q) - 1) * (T - 1) / ((T**p - 1) * (T**q - 1))))


def seifert_oracle(V):
    V = sympy.Matrix(V)
    return _ascending((V - T * V.T).det())


def torus_knot(p, q, n=600):
    t = np.linspace(0, 2 * np.pi, n, endpoint=False)
    r = 2 + np.cos(q * t)
    return np.stack([r * np.cos(p * t), r * np.sin(p * t), np.sin(q * t)], 1)


def figure_eight(n=600):
    t = np.linspace(0, 2 * np.pi, n, endpoint=False)
    r = 2 + np.cos(2 * t)
    return np.stack([r * np.cos(3 * t), r * np.sin(3 * t), np.sin(4 * t)], 1)


def rotation(angles):
    a, b, c = angles
    Rz = np.array([[np.cos(a), -np.sin(a), 0], [np.sin(a), np.cos(a), 0], [0, 0, 1]])
    Ry = np.array([[np.cos(b), 0, np.sin(b)], [0, 1, 0], [-np.sin(b), 0, np.cos(b)]])
    Rx = np.array([[1, 0, 0], [0, np.cos(c), -np.sin(c)], [0, np.sin(c), np.cos(c)]])
    return Rz @ Ry @ Rx


@pytest.mark.parametrize("p,q", [(2, 3), (2, 5), (3, 4), (2, 7), (3, 5)])
def test_alexander_of_torus_knots(p, q):
    res = nodal.alexander(nodal.project_diagram(torus_knot(p, q)))
    assert res.coefficients == torus_knot_oracle(p, q)
    assert res.symmetric


def test_figure_eight_against_seifert_matrix():
    res = nodal.alexander(nodal.project_diagram(figure_eight()))
    assert res.coefficients == seifert_oracle([[-1, 1], [0, 1]])
    assert res.determinant == 5


def test_unknot_and_trefoil_determinants():
    t = np.linspace(0, 2 * np.pi, 100, endpoint=False)
    circle = np.stack([np.cos(t), np.sin(t), 0.1 * np.sin(3 * t)], 1)
    assert nodal.alexander(nodal.project_diagram(circle)).coefficients == (1,)
    inv = nodal.knot_invariants(torus_knot(2, 3))
    assert inv["determinant"] == 3 and inv["alexander_coefficients"] == [1, -1, 1]


@settings(max_examples=15)
@given(st.tuples(*(st.floats(0, 2 * np.pi),) * 3), st.booleans())
def test_invariants_do_not_depend_on_position_or_mirror(angles, mirror):
    pts = torus_knot(2, 5, 400) @ rotation(angles).T
    if mirror:
        pts[:, 2] = -pts[:, 2]
    assert nodal.alexander(nodal.project_diagram(pts)).coefficients == torus_knot_oracle(2, 5)


def test_fixed_direction_retries_and_failure():
    pts = torus_knot(2, 3)
    diag = nodal.project_diagram(pts, direction=[0.0, 0.0, 1.0])
    assert diag.crossings == 3
    flat = np.stack([np.cos(np.linspace(0, 2 * np.pi, 8, endpoint=False)), np.zeros(8), np.zeros(8)], 1)
    with pytest.raises(nodal.DiagramError):
        nodal.project_diagram(flat, direction=[0.0, 0.0, 1.0], retries=0)


def test_canonical_code_ignores_start_orientation_and_labels():
    seq = [(0, True), (1, False), (2, True), (0, False), (1, True), (2, False)]
    signs = [1, 1, 1]
    ref = nodal.canonical_code(seq, signs)
    rot = seq[2:] + seq[:2]
    relabel = [((c + 1) % 3, o) for c, o in seq]
    for other in (rot, seq[::-1], relabel):
        assert nodal.canonical_code(other, signs) == ref


def test_kinks_are_removed():
    seq = [(0, True), (0, False), (1, True), (2, False), (3, True), (1, False), (2, True), (3, False)]
    out, signs = nodal.remove_kinks(seq, [1, -1, -1, -1])
    assert len({c for c, _ in out}) == 3 and signs == [-1, -1, -1]


@given(st.lists(st.lists(st.integers(-9, 9), min_size=4, max_size=4), min_size=4, max_size=4))
def test_bareiss_matches_sympy(rows):
    assert nodal._bareiss_det(rows) == int(sympy.Matrix(rows).det())


def test_densify_and_hausdorff():
    sq = np.array([[0.0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]])
    d = nodal.densify(sq, 0.1)
    assert np.linalg.norm(np.diff(np.vstack([d, d[:1]]), axis=0), axis=1).max() <= 0.1 + 1e-12
    shifted = sq + [0, 0, 0.25]
    assert nodal.hausdorff(sq, shifted) == pytest.approx(0.25)
    # periodic images are identified (up to the densification spacing, segment / 20)
    assert nodal.hausdorff(sq * 0.1 + 0.95, sq * 0.1 - 0.05, period=np.ones(3)) <= 0.1 / 20


def test_bad_hausdorff_input_is_a_large_distance():
    a = np.array([[0.0, 0, 0], [0.5, 0, 0]])
    b = np.array([[0.0, 0, 0], [0.5, 0.2, 0]])
    # vertices coincide at one end but the segment interiors differ; densification sees it
    assert nodal.hausdorff(a, b, closed=False) == pytest.approx(0.2, abs=2e-3)


@pytest.fixture(scope="module")
def flat16():
    return mesh_torus3(16)


def test_extraction_of_two_circles(flat16):
    p = flat16.points
    u1 = (p[:, 0] - 0.5) ** 2 + (p[:, 1] - 0.5) ** 2 - 0.2**2
    u2 = np.cos(2 * np.pi * (p[:, 2] - 0.03))
    curve = nodal.extract_intersection(flat16, u1, u2)
    assert len(curve) == 2
    for c in curve.components:
        assert c.closed and c.contractible
        q = c.canonical_points(flat16.period)
        r = np.hypot(q[:, 0] - 0.5, q[:, 1] - 0.5)
        assert np.abs(r - 0.2).max() < 0.01
        assert c.length == pytest.approx(2 * np.pi * 0.2, rel=0.02)
    zs = sorted(float(np.mean(c.canonical_points(flat16.period)[:, 2])) for c in curve.components)
    assert zs == pytest.approx([0.28, 0.78], abs=0.01)
    s2, _ = nodal.transversality(curve)
    assert s2 > 0.9
    assert len(curve.polylines) == 2


def test_extraction_of_lines_through_the_box(flat16):
    p = flat16.points
    u1 = np.sin(2 * np.pi * (p[:, 0] - 0.3))
    u2 = np.sin(2 * np.pi * (p[:, 1] - 0.4))
    curve = nodal.extract_intersection(flat16, u1, u2)
    assert len(curve) == 4
    for c in curve.components:
        assert c.closed and not c.contractible
        assert np.abs(c.translation).tolist() == [0.0, 0.0, 1.0]
        with pytest.raises(nodal.DiagramError):
            nodal.project_diagram(c)


def test_empty_intersection_is_reported(flat16):
    curve = nodal.extract_intersection(flat16, np.ones(flat16.n_vertices), np.ones(flat16.n_vertices))
    assert len(curve) == 0
    with pytest.raises(nodal.ExtractionError):
        nodal.transversality(curve)


@pytest.fixture(scope="module")
def circle_fields():
    tube = kg.build_frame(kg.circle())
    mesh = mesh_torus3(8, tube, elements_across=4)
    ch = tube.chart_inverse(mesh.points)
    z = np.where(ch.near[:, None], ch.z, 2.0)
    return tube, mesh, z[:, 0] - 0.3, z[:, 1]


def test_in_tube_component_of_a_core_parallel(circle_fields):
    tube, mesh, u1, u2 = circle_fields
    curve = nodal.extract_intersection(mesh, u1, u2)
    inside = nodal.tube_components(curve, tube)
    assert len(inside) == 1
    idx, chk = inside[0]
    assert abs(chk.winding) == 1 and chk.max_radius == pytest.approx(0.3, abs=0.05)
    assert nodal.knot_invariants(curve.components[idx])["determinant"] == 1


def test_stability_under_small_perturbations(circle_fields):
    tube, mesh, u1, u2 = circle_fields
    rep = nodal.stability_test(mesh, u1, u2, delta=0.01, trials=3, tube=tube, seed=1)
    assert rep["all_persist"] and rep["determinant_unchanged"]
    # each field moves by at most delta * C1 norm, and |grad u| = 1 / rho across the tube
    assert 0 < rep["max_hausdorff"] < 2 * 0.01 * nodal.c1_norm(mesh, u1) * tube.rho
    again = nodal.stability_test(mesh, u1, u2, delta=0.01, trials=3, tube=tube, seed=1)
    assert again["max_hausdorff"] == rep["max_hausdorff"]
