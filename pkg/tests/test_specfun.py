import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from nodalknot import specfun as sf


@pytest.mark.parametrize("n,l", [(0, 1), (0, 2), (1, 1), (1, 2), (2, 1), (3, 1), (4, 2)])
def test_disk_neumann_zeros_match_mpmath(n, l):
    # mpmath counts x = 0 as the first zero of J_0'
    ref = float(mpmath.besseljzero(n, l + 1 if n == 0 else l, derivative=1))
    assert sf.radial_profile_deriv_zero(2, n, l) == pytest.approx(ref, rel=1e-12)


@pytest.mark.parametrize("m,n", [(3, 1), (3, 2), (4, 1), (5, 1), (5, 2)])
def test_ball_neumann_condition_is_satisfied_in_high_precision(m, n):
    x = sf.radial_profile_deriv_zero(m, n, 1)
    nu = n + m / 2 - 1
    mpmath.mp.dps = 40
    F = lambda t: (1 - mpmath.mpf(m) / 2) * mpmath.besselj(nu, t) + t * mpmath.besselj(nu, t, derivative=1)
    root = mpmath.findroot(F, x)
    assert float(root) == pytest.approx(x, rel=1e-12)
    # and it is the first positive root: no sign change of F on (0, x)
    grid = np.linspace(1e-3, x * (1 - 1e-6), 400)
    vals = np.array([float(F(t)) for t in grid])
    assert np.all(np.sign(vals) == np.sign(vals[0]))


def test_spherical_bessel_oracle_for_the_3_ball():
    # j_1'(x) = 0 first root, from an independent high-precision computation
    mpmath.mp.dps = 30
    root = mpmath.findroot(lambda t: mpmath.diff(lambda u: mpmath.sin(u) / u**2 - mpmath.cos(u) / u, t), 2.08)
    assert sf.ball_neumann_first(3) == pytest.approx(float(root) ** 2, rel=1e-12)


def test_model_tube_spectrum_values():
    vals = sf.model_tube_spectrum(A=1.0, count=6).values(6)
    expected = [0.0, 3.38996, 3.38996, 9.32836, 9.32836, 14.68197]
    assert np.allclose(vals, expected, atol=5e-6)


def test_model_spectrum_includes_longitudinal_modes_when_A_small():
    # 4 pi^2 A = 3.9478 at A = 0.1: first longitudinal level lies between the disk levels
    spec = sf.model_tube_spectrum(A=0.1, count=8)
    assert spec.first_cluster().multiplicity == 2
    assert any(abs(v - 4 * np.pi**2 * 0.1) < 1e-9 for v in spec.values())


def test_eq_a_violation_raises():
    with pytest.raises(ValueError):
        sf.model_tube_spectrum(A=0.05)


@given(st.integers(2, 6), st.integers(0, 6))
def test_harmonic_multiplicity_formula(m, n):
    # dim H_n(S^(m-1)) = C(n+m-1, m-1) - C(n+m-3, m-1)
    expected = math.comb(n + m - 1, m - 1) - (math.comb(n + m - 3, m - 1) if n >= 2 else 0)
    assert sf.harmonic_multiplicity(m, n) == expected
    if m == 2:
        assert sf.harmonic_multiplicity(m, n) == (1 if n == 0 else 2)
    if m == 3:
        assert sf.harmonic_multiplicity(m, n) == 2 * n + 1


@pytest.mark.parametrize("m", [2, 3, 4, 5])
def test_sphere_quadrature_integrates_even_monomials(m):
    pts, w = sf.sphere_quadrature(m, 10)
    assert w.sum() == pytest.approx(sf.sphere_area(m), rel=1e-13)
    # int_{S^{m-1}} x_1^2 x_2^2 = area / (m (m + 2)); int x_1^4 = 3 area / (m (m + 2))
    area = sf.sphere_area(m)
    assert np.dot(w, pts[:, 0] ** 2 * pts[:, 1] ** 2) == pytest.approx(area / (m * (m + 2)), rel=1e-12)
    assert np.dot(w, pts[:, 0] ** 4) == pytest.approx(3 * area / (m * (m + 2)), rel=1e-12)
    assert abs(np.dot(w, pts[:, 0] ** 3 * pts[:, -1])) < 1e-13


@pytest.mark.parametrize("m", [2, 3, 5])
def test_first_harmonics_are_orthonormal(m):
    pts, w = sf.sphere_quadrature(m, 8)
    Y = np.stack([sf.first_harmonics(m, k, pts) for k in range(1, m + 1)])
    G = (Y * w) @ Y.T
    assert np.allclose(G, np.eye(m), atol=1e-12)


@pytest.mark.parametrize("n,l,k,A", [(1, 1, 0, 1.0), (2, 1, 0, 1.0), (0, 1, 0, 2.0), (1, 1, 1, 0.5)])
def test_tube_mode_is_unit_and_satisfies_the_neumann_condition(n, l, k, A):
    v = sf.model_eigenfunction(n, l, k, A=A)
    xg, wg = np.polynomial.legendre.leggauss(60)
    r = 0.5 * (xg + 1)
    th = 2 * np.pi * np.arange(64) / 64
    s = np.arange(8) / 8
    S, R, T = np.meshgrid(s, r, th, indexing="ij")
    W = (1 / 8) * (0.5 * wg * r)[None, :, None] * (2 * np.pi / 64) / np.sqrt(A)
    z = np.stack([R * np.cos(T), R * np.sin(T)], axis=-1)
    assert np.sum(W * v(S, z) ** 2) == pytest.approx(1.0, rel=1e-10)
    # radial derivative vanishes on |z| = 1
    assert abs(v.disk.radial_deriv(np.array([1.0]))[0]) < 1e-10


def test_tube_mode_gradient_matches_finite_differences(rng):
    v = sf.model_eigenfunction(2, 1, 1, angular="sin", A=1.3)
    s = rng.random(5)
    z = rng.uniform(-0.6, 0.6, size=(5, 2))
    g = v.gradient(s, z)
    h = 1e-6
    fd_s = (v(s + h, z) - v(s - h, z)) / (2 * h)
    e = np.array([h, 0.0])
    fd_1 = (v(s, z + e) - v(s, z - e)) / (2 * h)
    assert np.allclose(g[:, 0], fd_s, atol=1e-6)
    assert np.allclose(g[:, 1], fd_1, atol=1e-6)


def test_disk_modes_are_sorted_and_below_cutoff():
    modes = sf.disk_modes(2, 40.0)
    mus = [d.mu for d in modes]
    assert mus == sorted(mus) and mus[-1] <= 40.0
    assert modes[0].mu == 0.0 and modes[1].n == 1


def test_bessel_order_validation():
    with pytest.raises(ValueError):
        sf.radial_profile_deriv_zero(2, 9, 1)
