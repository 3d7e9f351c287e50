import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nodalknot import collapse as co, highdim, knotgeom as kg, specfun
from nodalknot.fem import FormAssembler, mesh_product_tube


@pytest.fixture(scope="module")
def tube_ctx():
    """Standalone product tube: the first cluster is an exact pair by the disk mesh symmetry."""
    mesh = mesh_product_tube(16, 1 / 4)
    asm = FormAssembler(mesh, kg.ProductTubeField(A=1.0))
    return co.SpectralContext(asm, co.default_directions(1.0, 0.5), count=4)


@given(st.floats(0, 3))
def test_collar_cutoff(r):
    v = co.collar_cutoff(r, 0.5)
    assert 0.0 <= v <= 1.0
    if r <= 1.0:
        assert v == 1.0
    if r >= 1.5:
        assert v == 0.0


def test_collar_extension_is_flat_across_the_boundary():
    mode = specfun.model_eigenfunction(2, 1, 0, A=1.0)
    ext = co.extend_with_neumann_collar(mode, 0.5)
    r = np.array([1 - 1e-6, 1.0, 1 + 1e-6])
    chart = kg.ChartSample(np.full(3, 0.3), np.stack([r * np.cos(0.4), r * np.sin(0.4)], 1),
                           np.array([kg.TUBE_INTERIOR, kg.TUBE_INTERIOR, kg.COLLAR], np.int8))
    v = ext(chart)
    assert abs(v[2] - v[1]) < 1e-9 and abs(v[1] - v[0]) < 1e-9
    far = kg.ChartSample(np.array([np.nan]), np.full((1, 2), np.nan), np.array([kg.EXTERIOR], np.int8))
    assert ext(far)[0] == 0.0


def test_tube_quadrature_volume_and_orthonormality():
    for A in (0.5, 1.0, 2.0):
        s, z, w = co.tube_quadrature(A)
        assert w.sum() == pytest.approx(np.pi / np.sqrt(A), rel=1e-12)
    s, z, w = co.tube_quadrature(1.0)
    modes = specfun.tube_modes(1.0, 20.0)
    V = np.stack([m(s, z) for m in modes])
    assert np.allclose((V * w) @ V.T, np.eye(len(modes)), atol=1e-10)


def test_model_k0_is_the_cos2theta_mode_and_rotation_invariant():
    mode, value, _, _ = co.model_select_k0(1.0)
    assert (mode.disk.n, mode.disk.l, mode.k) == (2, 1, 0)
    assert abs(value) == pytest.approx(0.8623, abs=5e-5)
    # rotating the pair by 45 degrees moves the coupling to the sine partner
    mode45, value45, _, _ = co.model_select_k0(1.0, angle=np.pi / 4)
    assert (mode45.disk.n, mode45.disk.l) == (2, 1) and mode45.angular != mode.angular
    assert abs(value45) == pytest.approx(abs(value), rel=1e-10)


def test_select_k0_requires_a_visible_candidate():
    with pytest.raises(co.ClusterError):
        co.select_k0(np.ones((2, 4)), np.ones((3, 4)), np.ones(4))
    k0, val, _ = co.select_k0(np.array([[1.0, 0.0], [0.0, 1.0]]), np.array([[1.0, 1.0], [1.0, -1.0]]), np.ones(2))
    assert k0 == 1 and val == 2.0


def test_model_hadamard_constant_column_and_highdim_agreement():
    H = co.model_hadamard(1.0, 3)
    mu = specfun.model_tube_spectrum(1.0).first_cluster().mu
    # psi = 1 rescales the whole metric: both eigenvalues move by -2 mu
    assert np.allclose(H[:, 0], -2 * mu, rtol=1e-10)
    assert H[0, 1] == pytest.approx(-H[1, 1], rel=1e-10)
    model = highdim.HighDimModel(3, 2)
    sel = highdim.select_basis_k(model, constant_first=True)
    assert np.abs(highdim.hadamard_matrix_highdim(model, sel).matrix - H).max() < 1e-8


def test_newton_step_on_a_synthetic_linear_cluster():
    rng = np.random.default_rng(0)
    H = rng.standard_normal((3, 2, 2))
    H = 0.5 * (H + H.transpose(0, 2, 1))
    ds_true = np.array([0.01, -0.02, 0.015])
    B = np.diag([3.0, 3.0]) - np.einsum("i,ijk->jk", ds_true, H)
    # a symmetric B: rotate the problem into its eigenbasis
    w, Q = np.linalg.eigh(B)
    Hq = np.einsum("ji,njk,kl->nil", Q, H, Q)
    ds, A, cond = co._newton_step(Hq, w, 3.0, cap=0.5)
    assert np.allclose(ds, ds_true, atol=1e-12)
    assert np.isfinite(cond)
    capped, *_ = co._newton_step(Hq, w, 3.0, cap=1e-3)
    assert np.linalg.norm(capped) == pytest.approx(1e-3)


def test_base_cluster_is_degenerate(tube_ctx):
    cl = tube_ctx.cluster()
    assert (cl.values[1] - cl.values[0]) / cl.values[0] < 1e-10
    assert cl.lam3 > 2 * cl.values[1]


def test_constant_direction_law_and_hadamard_vs_fd(tube_ctx):
    cl = tube_ctx.cluster()
    had = co.hadamard_jacobian(tube_ctx, cl)
    fd = co.fd_jacobian(tube_ctx, cl, 1e-4)
    assert co.relative_discrepancy(had, fd) < 1e-3
    assert np.allclose(had.J[:, 0], -2 * cl.values, rtol=1e-8)


def test_hadamard_vs_fd_at_a_random_state(tube_ctx):
    rng = np.random.default_rng(7)
    s = rng.uniform(-0.05, 0.05, tube_ctx.n_directions)
    cl = tube_ctx.cluster(s)
    had = co.hadamard_jacobian(tube_ctx, cl)
    fd = co.fd_jacobian(tube_ctx, cl, 1e-4)
    assert co.relative_discrepancy(had, fd) < 1e-2


def test_conformal_identity(tube_ctx):
    s = np.array([0.0, 0.04, -0.03])
    base = tube_ctx.cluster(s).pairs.values
    for c in (-0.3, 0.3):
        shifted = tube_ctx.cluster(s + np.array([c, 0.0, 0.0])).pairs.values
        assert np.allclose(shifted, np.exp(-2 * c) * base, rtol=1e-10, atol=1e-12)


def test_fd_delta_is_validated(tube_ctx):
    with pytest.raises(ValueError):
        co.fd_jacobian(tube_ctx, tube_ctx.cluster(), 1e-2)


def test_newton_recovers_a_degenerate_pair(tube_ctx, tmp_path):
    mu_star = float(np.mean(tube_ctx.cluster().values))
    state = co.newton_collapse(tube_ctx, np.array([0.0, 0.1, 0.0]), mu_star=mu_star)
    assert state.converged
    assert state.split < 1e-8
    assert abs(np.mean(state.values[:2]) - mu_star) < 1e-9 * mu_star
    assert len(state.history) - 1 <= 10
    state.write_trace(tmp_path / "trace.csv")
    state.write_json(tmp_path / "state.json")
    rows = (tmp_path / "trace.csv").read_text().splitlines()
    assert rows[0].startswith("iteration,s1,s2,s3,lambda1")
    assert len(rows) == len(state.history) + 1
    assert json.loads((tmp_path / "state.json").read_text())["converged"] is True


def test_newton_reports_failure_when_out_of_iterations(tube_ctx):
    mu_star = float(np.mean(tube_ctx.cluster().values))
    with pytest.raises(co.CollapseError) as exc:
        co.newton_collapse(tube_ctx, np.array([0.0, 0.1, 0.0]), mu_star=mu_star, max_iters=0)
    assert len(exc.value.history) == 1
