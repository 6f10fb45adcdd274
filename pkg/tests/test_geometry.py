import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pbforce import geometry as geo


def test_fejer_rule_is_exact_for_polynomials():
    theta, w = geo.fejer1(16)
    x = np.cos(theta)
    assert w.sum() == pytest.approx(2.0, abs=1e-14)
    assert np.sum(w * x**2) == pytest.approx(2 / 3, abs=1e-14)
    assert np.sum(w * x**7) == pytest.approx(0.0, abs=1e-14)


@pytest.mark.parametrize("surface, area", [
    (geo.Sphere(), 12.566370614359172),
    (geo.Sphere(radius=2.5), 78.53981633974483),
    # Legendre's elliptic-integral formula
    (geo.Ellipsoid(axes=(1.5, 1.0, 0.7)), 13.984244729192563),
    # 4 pi^2 R a with R = 2, a = 0.5
    (geo.Torus(), 39.478417604357434),
])
def test_areas(surface, area):
    assert surface.area() == pytest.approx(area, rel=1e-10)


def test_unit_sphere_curvatures():
    fr = geo.Sphere(resolution=(16, 16)).frame()
    assert np.allclose(fr.H, 1.0)
    assert np.allclose(fr.K, 1.0)
    assert np.allclose(np.sum(fr.n * fr.r, -1), 1.0)


def test_flip_reverses_normal_and_mean_curvature():
    fr = geo.Sphere(resolution=(8, 8), flip=True).frame()
    assert np.allclose(fr.H, -1.0)
    assert np.allclose(np.sum(fr.n * fr.r, -1), -1.0)


def test_torus_normal_points_outward():
    fr = geo.Torus().frame(np.array([0.0, np.pi]), np.array([0.0, 0.0]))
    assert np.allclose(fr.n[:, 0], [1.0, -1.0])
    # H = (1/a + 1/(R +- a)) / 2 on the outer and inner equators
    assert np.allclose(fr.H, [1.2, (2.0 - 1 / 1.5) / 2])


def test_torus_mean_curvature_integral():
    # integral of H over a torus is 2 pi^2 R
    assert geo.closed_surface_integral(geo.Torus(), lambda fr: fr.H) == pytest.approx(39.478417604357434, rel=1e-12)


@pytest.mark.parametrize("surface, total", [(geo.Sphere(), 4 * np.pi), (geo.Torus(), 0.0),
                                            (geo.Ellipsoid(axes=(1.5, 1.0, 0.7)), 4 * np.pi)])
def test_gauss_bonnet(surface, total):
    assert geo.closed_surface_integral(surface, lambda fr: fr.K) == pytest.approx(total, abs=1e-9)


def test_position_field_has_surface_divergence_two_on_unit_sphere():
    s = geo.Sphere(resolution=(16, 16))
    U, V = s.nodes()
    assert np.allclose(geo.surface_divergence(s, geo.dilation(1.0), U, V), 2.0)


@settings(max_examples=25, deadline=None)
@given(st.tuples(*[st.floats(-2, 2)] * 3))
def test_rigid_rotation_is_area_preserving(omega):
    s = geo.Sphere(resolution=(24, 24))
    U, V = s.nodes()
    div = geo.surface_divergence(s, geo.rotation(omega), U, V)
    assert np.max(np.abs(div)) < 1e-12


@pytest.mark.parametrize("surface, velocity", [
    (geo.Sphere(resolution=(32, 32)), geo.shear(0.4)),
    (geo.Ellipsoid(axes=(1.5, 1.0, 0.7), resolution=(32, 32)), geo.dilation(0.5)),
    (geo.Torus(resolution=(32, 32)), geo.TorusNormalBump()),
])
def test_surface_jacobian_rate_matches_difference(surface, velocity):
    U, V = surface.nodes()
    tau = 1e-5
    fd = (geo.surface_jacobian(geo.TransformState(tau, velocity), surface, U, V)
          - geo.surface_jacobian(geo.TransformState(-tau, velocity), surface, U, V)) / (2 * tau)
    assert np.max(np.abs(fd - geo.surface_jacobian_rate0(surface, velocity, U, V))) < 1e-7


def test_normal_rate_matches_difference():
    s = geo.Ellipsoid(axes=(1.5, 1.0, 0.7), resolution=(16, 16))
    U, V = s.nodes()
    vel = geo.shear(0.3) + geo.translation((0.1, 0.0, 0.0))
    tau = 1e-6
    fd = (geo.transformed_normal(geo.TransformState(tau, vel), s, U, V)
          - geo.transformed_normal(geo.TransformState(-tau, vel), s, U, V)) / (2 * tau)
    assert np.max(np.abs(fd - geo.normal_rate0(s, vel, U, V))) < 1e-7


def test_transform_tensor_at_zero_is_identity():
    vel = geo.LinearField(np.arange(9.0).reshape(3, 3) / 10)
    A, A0 = geo.transform_tensor_A(geo.TransformState(0.0, vel), np.zeros(3))
    assert np.allclose(A, np.eye(3))
    M = vel.matrix
    assert np.allclose(A0, np.trace(M) * np.eye(3) - M - M.T)


def test_volume_jacobian_of_linear_map():
    M = np.array([[0.2, 0.1, 0.0], [0.0, -0.3, 0.4], [0.1, 0.0, 0.5]])
    J, _ = geo.volume_jacobian(geo.TransformState(0.5, geo.LinearField(M)), np.ones(3))
    assert J == pytest.approx(np.linalg.det(np.eye(3) + 0.5 * M), rel=1e-14)


def test_folding_map_is_rejected():
    with pytest.raises(geo.NonInvertibleError):
        geo.volume_jacobian(geo.TransformState(-2.0, geo.dilation(1.0)), np.ones(3))


def test_radial_bump_jacobian_matches_difference():
    bump = geo.RadialBump(radius=1.0, half_width=0.6, amplitude=0.8)
    x = np.array([0.7, 0.4, -0.5])
    h = 1e-6
    fd = np.stack([(bump(x + h * e) - bump(x - h * e)) / (2 * h) for e in np.eye(3)], -1)
    assert np.allclose(fd, bump.jacobian(x), atol=1e-8)
    assert np.all(bump(np.array([3.0, 0, 0])) == 0)


def test_open_surface_warns():
    with pytest.warns(geo.NotClosedWarning):
        geo.warn_if_open(geo.PlanePatch())
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        geo.warn_if_open(geo.Sphere())


def test_surface_laplacian_of_y1():
    # Y1 = z is an eigenfunction of the Laplace-Beltrami operator with eigenvalue -2
    s = geo.Sphere(resolution=(128, 128))
    z = s.frame().r[..., 2]
    lap = geo.surface_div_flux(s, 1.0, z)
    interior = slice(8, -8)
    assert np.max(np.abs(lap[interior] + 2 * z[interior])) < 1e-3
