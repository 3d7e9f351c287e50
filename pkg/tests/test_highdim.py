import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nodalknot import highdim as hd, specfun

CASES = [(3, 2), (4, 2), (5, 3)]


def test_torus_levels():
    lv = hd.torus_levels(1, 1.0, 200.0)
    assert [m for _, m in lv] == [1, 2, 2]  # k^2 = 0, 1, 4 below 200
    assert lv[1][0] == pytest.approx(4 * np.pi**2)
    # T^2: |k|^2 = 0, 1, 2, 4, 5 with counts 1, 4, 4, 4, 8
    assert [m for _, m in hd.torus_levels(2, 1.0, 4 * np.pi**2 * 5)] == [1, 4, 4, 4, 8]


@settings(max_examples=10)
@given(st.integers(2, 5), st.integers(0, 3))
def test_harmonic_basis_is_orthonormal_with_the_right_dimension(m, n):
    pts, w = specfun.sphere_quadrature(m, 10)
    if n == 0:
        return
    Y = hd.harmonic_basis(pts, w, n)
    assert Y.shape[1] == specfun.harmonic_multiplicity(m, n)
    assert np.allclose((Y.T * w) @ Y, np.eye(Y.shape[1]), atol=1e-10)
    # orthogonal to lower degrees
    if n >= 1:
        assert np.abs(w @ Y).max() < 1e-10


def test_model_validation():
    with pytest.raises(hd.HighDimError):
        hd.HighDimModel(3, 6)
    with pytest.raises(hd.HighDimError):
        hd.HighDimModel(3, 3)
    with pytest.raises(hd.HighDimError):
        hd.HighDimModel(3, 2, a=0.01)


@pytest.mark.parametrize("d,m", CASES)
def test_model_cluster_orthonormality_and_gram(d, m):
    model = hd.HighDimModel(d, m)
    assert model.mu == pytest.approx(specfun.ball_neumann_first(m), rel=1e-14)
    assert model.cluster_dimension() == m
    assert model.orthonormality_error() < 1e-12
    G, gmin = hd.gram_independence(model)
    assert G.shape == (m, m) and gmin > 1e-3


@pytest.mark.parametrize("d,m", CASES)
@pytest.mark.parametrize("constant_first", [True, False])
def test_selection_and_hadamard_matrix(d, m, constant_first):
    model = hd.HighDimModel(d, m)
    sel = hd.select_basis_k(model, constant_first=constant_first)
    assert len(sel.labels) == m and sel.certificate > 1e-6
    had = hd.hadamard_matrix_highdim(model, sel)
    assert np.isfinite(had.condition) and had.singular_values.min() > 0
    if constant_first:
        assert sel.labels[0] == "constant"
        # the constant direction rescales the metric: every eigenvalue moves by -2 mu
        assert np.allclose(had.matrix[:, 0], -2 * model.mu, rtol=1e-12)
    # the (d - 2) Laplacian term drops out in dimension 2
    flat = hd.hadamard_matrix_highdim(model, sel, d=2)
    assert np.allclose(flat.matrix, -2 * model.mu * sel.matrix, rtol=1e-12)


def test_recovered_directions_for_the_3d_tube():
    model = hd.HighDimModel(3, 2)
    cf = hd.select_basis_k(model, constant_first=True)
    assert cf.labels == ("constant", "sigma0.0:ball(n=2,l=1).0")
    ae = hd.select_basis_k(model)
    assert {lab.split(":")[1].rsplit(".", 1)[0] for lab in ae.labels} == {"ball(n=2,l=1)", "ball(n=0,l=1)"}


def test_canonical_basis_makes_selection_reproducible():
    a = hd.select_basis_k(hd.HighDimModel(4, 2), constant_first=True)
    b = hd.select_basis_k(hd.HighDimModel(4, 2, n_sphere=14), constant_first=True)
    assert a.labels == b.labels
    assert np.allclose(a.matrix, b.matrix, atol=1e-10)


def test_impossible_selection_is_reported():
    model = hd.HighDimModel(3, 2)
    with pytest.raises(hd.HighDimError):
        hd.select_basis_k(model, mu_max=1e-3)


def test_report_structure():
    rep = hd.report(cases=((3, 2),))
    entry = rep["d3_m2"]
    assert entry["cluster_dimension"] == 2
    for variant in ("constant_first", "all_eigenmode"):
        assert entry[variant]["certificate"] > 0
        assert len(entry[variant]["hadamard"]["matrix"]) == 2
