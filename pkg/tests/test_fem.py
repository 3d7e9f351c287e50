import numpy as np
import pytest
from hypothesis import given, strategies as st

from nodalknot import eigen, knotgeom as kg, specfun
from nodalknot.fem import (FormAssembler, RegionError, assemble, assemble_weighted_eps, dirichlet_lowest,
                           disk_mesh, euler_characteristic, harmonic_extension, mesh_product_tube, mesh_torus3,
                           quadrature_rule, region_weights)

from helpers import EuclideanField


@pytest.fixture(scope="module")
def box8():
    return mesh_torus3(8)


@pytest.fixture(scope="module")
def circle_setup():
    tube = kg.build_frame(kg.circle())
    mesh = mesh_torus3(8, tube, elements_across=4)
    asm = FormAssembler(mesh, kg.MetricField(tube, kg.MetricConfig()))
    return tube, mesh, asm


def test_torus_mesh_volume_and_orientation(box8):
    assert box8.n_tets == 6 * 8**3
    assert np.all(box8.signed_volumes() > 0)
    assert box8.volumes().sum() == pytest.approx(1.0, rel=1e-13)


def test_periodic_identification_is_idempotent(box8):
    pos, ident = box8.identification()
    assert np.array_equal(ident[ident], ident)
    assert np.allclose(np.mod(pos, 1.0), np.mod(pos[ident], 1.0))


def test_refined_mesh_is_conforming_and_tagged(circle_setup):
    tube, mesh, _ = circle_setup
    assert mesh.volumes().sum() == pytest.approx(1.0, rel=1e-12)
    tags = np.bincount(mesh.tags, minlength=3)
    assert np.all(tags > 0)
    # every interior face is shared by exactly two tets (closed manifold without boundary)
    assert len(mesh.boundary_of(np.ones(mesh.n_tets, bool))) == 0
    inside = mesh.tags == kg.TUBE_INTERIOR
    size = (6 * mesh.volumes()[inside]) ** (1 / 3)
    assert size.max() <= 2 * tube.rho / 4 * (1 + 1e-9)


@given(st.integers(1, 6))
def test_disk_mesh_topology(n_rings):
    pts, tris, ring, _ = disk_mesh(n_rings)
    assert len(pts) == 1 + 3 * n_rings * (n_rings + 1)
    assert euler_characteristic(tris) == 1
    a, b, c = pts[tris[:, 0]], pts[tris[:, 1]], pts[tris[:, 2]]
    area = 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))
    assert np.all(area > 0)
    # the outer ring is a regular 6n-gon
    assert area.sum() == pytest.approx(0.5 * 6 * n_rings * np.sin(2 * np.pi / (6 * n_rings)), rel=1e-12)


def test_product_tube_boundary_is_a_torus():
    pm = mesh_product_tube(16, 1 / 4)
    assert euler_characteristic(pm.boundary_faces) == 0
    assert np.all(pm.signed_volumes() > 0)


@pytest.mark.parametrize("order", [1, 2, 4])
def test_quadrature_rules_on_the_reference_tet(order):
    bary, w = quadrature_rule(order)
    assert w.sum() == pytest.approx(1.0, rel=1e-14)
    # average of lam_0^a lam_1^b over the tet is a! b! 3! / (a + b + 3)!
    from math import factorial

    for a in range(order + 1):
        b = order - a
        exact = factorial(a) * factorial(b) * 6 / factorial(a + b + 3)
        assert np.dot(w, bary[:, 0] ** a * bary[:, 1] ** b) == pytest.approx(exact, rel=1e-12)


def test_euclidean_forms_basic_identities(box8):
    f = assemble(box8, EuclideanField())
    one = np.ones(f.n)
    assert np.abs(f.K @ one).max() < 1e-12
    assert one @ (f.M @ one) == pytest.approx(1.0, rel=1e-13)
    assert abs(f.K - f.K.T).max() < 1e-14
    # a single Fourier mode: the lumped row sums of M integrate it to zero
    c = np.cos(2 * np.pi * box8.points[:, 2])
    assert abs(one @ (f.M @ c)) < 1e-12


def test_euclidean_torus_spectrum_converges_quadratically():
    errs = []
    for n in (8, 16):
        f = assemble(mesh_torus3(n), EuclideanField())
        vals = eigen.lowest_pairs(f, 7).values
        assert np.ptp(vals[1:7]) / vals[1] < 1e-8  # six-fold by the lattice symmetries of the mesh
        assert vals[7] > 1.5 * vals[1]
        errs.append(abs(vals[1] - 4 * np.pi**2) / (4 * np.pi**2))
    assert errs[1] < 0.05
    assert 3.0 < errs[0] / errs[1] < 5.0


def test_product_tube_matches_model_at_coarse_resolution():
    pm = mesh_product_tube(16, 1 / 6)
    vals = eigen.lowest_pairs(assemble(pm, kg.ProductTubeField(A=1.0)), 5).values
    model = specfun.model_tube_spectrum(A=1.0, count=6).values(6)
    assert np.allclose(vals[1:5], model[1:5], rtol=0.03)
    assert abs(vals[2] - vals[1]) / vals[1] < 1e-10


def test_region_weights():
    tags = np.array([kg.TUBE_INTERIOR, kg.COLLAR, kg.EXTERIOR])
    kw, mw = region_weights(tags, 1e-2)
    assert np.allclose(kw, [1, 0.1, 0.1]) and np.allclose(mw, [1, 1e-3, 1e-3])


def test_weighted_eps_at_one_equals_reference_forms(circle_setup):
    _, mesh, asm = circle_setup
    a = assemble_weighted_eps(mesh, 1.0, assembler=asm)
    b = asm.forms()
    assert abs(a.K - b.K).max() < 1e-12 * abs(b.K).max()
    assert abs(a.M - b.M).max() < 1e-12 * abs(b.M).max()
    with pytest.raises(ValueError):
        assemble_weighted_eps(mesh, 0.0, assembler=asm)


def test_derivative_forms_match_finite_differences(circle_setup, rng):
    _, mesh, asm = circle_setup
    psi = rng.standard_normal(asm.m0.shape)
    c = asm.scale_factor()
    dK, dM = asm.derivative_forms(psi, c)
    h = 1e-6
    Kp, Km = asm.stiffness(np.sqrt(c * np.exp(2 * h * psi))), asm.stiffness(np.sqrt(c * np.exp(-2 * h * psi)))
    Mp = asm.mass((c * np.exp(2 * h * psi)) ** 1.5)
    Mm = asm.mass((c * np.exp(-2 * h * psi)) ** 1.5)
    assert abs((Kp - Km) / (2 * h) - dK).max() < 1e-6 * abs(dK).max()
    assert abs((Mp - Mm) / (2 * h) - dM).max() < 1e-6 * abs(dM).max()


def test_harmonic_extension_reproduces_linear_functions(box8):
    asm = FormAssembler(box8, EuclideanField())
    bx = box8.barycenters()[:, 0]
    region = (bx > 0.25) & (bx < 0.75)
    he = harmonic_extension(box8, box8.points[:, 0], region=region, assembler=asm)
    ok = ~np.isnan(he.values)
    assert np.allclose(he.values[ok], box8.points[ok, 0], atol=1e-12)
    assert he.energy == pytest.approx(0.5, rel=1e-12)
    const = harmonic_extension(box8, np.full(box8.n_vertices, 2.5), region=region, assembler=asm)
    assert np.nanmax(np.abs(const.values - 2.5)) < 1e-12 and const.energy < 1e-10


def test_dirichlet_lowest_on_a_slab(box8):
    asm = FormAssembler(box8, EuclideanField())
    bx = box8.barycenters()[:, 0]
    region = (bx > 0.25) & (bx < 0.75)
    lam = dirichlet_lowest(box8, region=region, assembler=asm)
    assert lam == pytest.approx(4 * np.pi**2, rel=0.1)
    with pytest.raises(RegionError):
        dirichlet_lowest(box8, region=np.zeros(box8.n_tets, bool), assembler=asm)


def test_maximum_principle_in_the_euclidean_exterior(circle_setup):
    _, mesh, asm = circle_setup
    trace = np.cos(2 * np.pi * mesh.points[:, 0]) + mesh.points[:, 1] ** 2
    he = harmonic_extension(mesh, trace, region=mesh.tags == kg.EXTERIOR, assembler=asm)
    b = he.values[he.boundary_vertices]
    vals = he.values[~np.isnan(he.values)]
    assert vals.min() >= b.min() - 1e-12 and vals.max() <= b.max() + 1e-12


def test_exterior_dirichlet_eigenvalue_decreases_under_refinement():
    # lowest Dirichlet eigenvalue outside the tube; the refinements approach the limit from above
    tube = kg.build_frame(kg.circle())
    vals = []
    for n, ea in ((8, 4), (16, 8)):
        mesh = mesh_torus3(n, tube, elements_across=ea)
        asm = FormAssembler(mesh, kg.MetricField(tube, kg.MetricConfig()))
        vals.append(dirichlet_lowest(mesh, assembler=asm))
    assert vals[1] < vals[0]
    assert vals == pytest.approx([6.98, 6.20], abs=0.01)
