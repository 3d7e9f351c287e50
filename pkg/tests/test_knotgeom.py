import numpy as np
import pytest
from hypothesis import given, strategies as st

from nodalknot import knotgeom as kg


@pytest.fixture(scope="module")
def trefoil_tube():
    return kg.build_frame(kg.trefoil())


@pytest.fixture(scope="module")
def circle_tube():
    return kg.build_frame(kg.circle())


def test_frame_closes_up(trefoil_tube):
    (T0, a0, b0), (T1, a1, b1) = trefoil_tube.frame(0.0), trefoil_tube.frame(1.0)
    assert np.abs(a1 - a0).max() < 1e-10 and np.abs(b1 - b0).max() < 1e-10


def test_frame_is_orthonormal_and_resampling_agrees(trefoil_tube):
    s = np.linspace(0, 1, 97)
    T, e1, e2 = trefoil_tube.frame(s)
    for u, v in ((T, e1), (T, e2), (e1, e2)):
        assert np.abs(np.sum(u * v, axis=1)).max() < 1e-12
    assert np.allclose(np.linalg.norm(e1, axis=1), 1.0, atol=1e-12)
    finer = kg.build_frame(kg.trefoil(), n_samples=4096)
    _, f1, _ = finer.frame(s)
    assert np.abs(f1 - e1).max() < 1e-8


def test_rotation_minimising_frame_has_no_tangential_twist(trefoil_tube):
    # de1/ds . e2 is constant along the curve (the holonomy spread linearly)
    s = np.linspace(0, 1, 200, endpoint=False)
    (T, e1, e2), (_, de1, _) = trefoil_tube.frame(s, derivatives=True)
    twist = np.sum(de1 * e2, axis=1)
    assert np.ptp(twist) < 1e-6


@given(st.floats(0, 1, exclude_max=True), st.floats(0, 0.99 * np.pi), st.floats(0.05, 1.45))
def test_chart_inverse_roundtrip(s, angle, r):
    tube = kg.build_frame(kg.trefoil())
    z = np.array([[r * np.cos(angle), r * np.sin(angle)]])
    ch = tube.chart_inverse(tube.chart([s], z))
    ds = (ch.s[0] - s + 0.5) % 1.0 - 0.5
    assert abs(ds) < 1e-9
    assert np.allclose(ch.z[0], z[0], atol=1e-9)
    assert ch.tag[0] == (kg.TUBE_INTERIOR if r <= 1.0 else kg.COLLAR)


def test_chart_jacobian_matches_finite_differences(circle_tube):
    s, z = np.array([0.3]), np.array([[0.2, -0.4]])
    J = circle_tube.chart_jacobian(s, z)[0]
    h = 1e-6
    col = (circle_tube.chart(s + h, z) - circle_tube.chart(s - h, z))[0] / (2 * h)
    assert np.allclose(J[:, 0], col, atol=1e-6)


def test_far_points_are_exterior(circle_tube):
    ch = circle_tube.chart_inverse(np.array([[0.5, 0.5, 0.5], [0.0, 0.0, 0.0]]))
    assert np.all(ch.tag == kg.EXTERIOR) and np.all(np.isnan(ch.s))


def test_reach_check_is_positive_for_the_catalog():
    for name in kg.CATALOG:
        assert kg.reach_check(kg.build_frame(kg.knot_catalog(name))) > 0
    fat = kg.build_frame(kg.circle(), rho=0.2)
    assert kg.reach_check(fat) < 0


def test_curve_serialisation_roundtrip():
    c = kg.trefoil()
    d = kg.KnotCurve.from_dict(c.to_dict())
    s = np.linspace(0, 1, 50)
    assert np.array_equal(c(s), d(s))


def test_self_intersecting_curve_is_rejected():
    # figure-eight planar lemniscate crosses itself at the centre
    bad = kg.KnotCurve([0.5, 0.5, 0.5], [[0.2, 0.0, 0.0], [0.0, 0.0, 0.0]], [[0.0, 0.0, 0.0], [0.0, 0.1, 0.0]])
    with pytest.raises(kg.CurveError):
        bad.validate()


def test_eq_a_threshold_and_config_validation():
    thr = kg.eq_a_threshold()
    assert thr == pytest.approx(3.389957 / (4 * np.pi**2), rel=1e-6)
    with pytest.raises(ValueError):
        kg.MetricConfig(A=0.5 * thr)
    with pytest.raises(ValueError):
        kg.MetricConfig(eps=0.0)
    with pytest.raises(ValueError):
        kg.MetricConfig(eps=0.1, t=0.5)
    assert kg.MetricConfig(eps=0.01).t_value == pytest.approx(100.0)


@given(st.floats(0, 1.5), st.sampled_from([1e-1, 1e-2, 1e-3]))
def test_cutoff_is_between_eps_and_one(r, eps):
    cfg = kg.MetricConfig(eps=eps)
    tag = kg.tags_from_radius(np.array([r]), 0.5)
    f = kg.cutoff_f(tag, np.array([r]), cfg)[0]
    assert eps - 1e-15 <= f <= 1.0 + 1e-15
    if r <= 1.0 - 1.0 / cfg.t_value:
        assert f == 1.0
    if r > 1.0:
        assert f == eps


def test_smooth_transition_is_monotone_and_flat_at_the_ends():
    x = np.linspace(-0.5, 1.5, 401)
    y = kg.smooth_transition(x)
    assert np.all(np.diff(y) >= 0)
    assert y[0] == 0.0 and y[-1] == 1.0
    assert kg.smooth_transition(np.array([1e-3]))[0] < 1e-300


def test_metric_is_spd_and_matches_product_metric_in_the_tube(trefoil_tube, rng):
    fld = kg.MetricField(trefoil_tube, kg.MetricConfig(A=1.7, eps=1.0))
    s = rng.random(20)
    ang = rng.uniform(0, 2 * np.pi, 20)
    r = np.sqrt(rng.random(20)) * 0.95
    z = np.stack([r * np.cos(ang), r * np.sin(ang)], 1)
    x = trefoil_tube.chart(s, z)
    G, tag, (lo, hi) = fld.evaluate(x)
    assert np.all(tag == kg.TUBE_INTERIOR) and lo > 0
    J = trefoil_tube.chart_jacobian(s, z)
    pulled = np.einsum("nki,nkl,nlj->nij", J, G, J)
    assert np.allclose(pulled, np.diag([1 / 1.7, 1.0, 1.0]), atol=1e-8)


def test_exterior_metric_is_eps_identity(circle_tube):
    fld = kg.MetricField(circle_tube, kg.MetricConfig(eps=0.01))
    G, tag, _ = fld.evaluate(np.array([[0.5, 0.5, 0.5]]))
    assert tag[0] == kg.EXTERIOR
    assert np.allclose(G[0], 0.01 * np.eye(3))


def test_constant_direction_rescales_metric(circle_tube):
    fld = kg.MetricField(circle_tube, kg.MetricConfig(eps=0.1), (kg.constant_direction,))
    x = np.array([[0.1, 0.2, 0.3]])
    G0 = fld.evaluate(x)[0]
    G1 = fld.with_directions((kg.constant_direction,), (0.25,)).evaluate(x)[0]
    assert np.allclose(G1, np.exp(0.5) * G0, rtol=1e-14)
