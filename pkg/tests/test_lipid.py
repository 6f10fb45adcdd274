import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pbforce.geometry import Sphere, Torus
from pbforce.lipid import (LITERAL_BOLTZMANN, NormalizationError, electrodiffusion_residual,
                           lipid_conservation, lipid_density, residual_norm, uniform_face_density)
from pbforce.params import PhysicalParams


def trace(fr):
    x = fr.r
    return 0.4 * x[..., 2] + 0.3 * x[..., 0] * x[..., 1] + 0.2 * x[..., 0]


@pytest.mark.parametrize("surface", [Sphere(resolution=(64, 64)), Torus(resolution=(64, 64))])
def test_density_integrates_to_pool(surface):
    dens = lipid_density(PhysicalParams(), surface, trace(surface.frame()), 7.5)
    assert lipid_conservation(dens) == pytest.approx(7.5, abs=1e-10)


@settings(max_examples=30, deadline=None)
@given(shift=st.floats(-50, 50), scale=st.floats(-3, 3))
def test_gauge_invariance(shift, scale):
    s = Sphere(resolution=(32, 32))
    phi = scale * trace(s.frame())
    a = lipid_density(PhysicalParams(), s, phi, 2.0).values
    b = lipid_density(PhysicalParams(), s, phi + shift, 2.0).values
    assert np.max(np.abs(a - b)) <= 1e-12 * np.max(np.abs(a))


def test_constant_potential_gives_uniform_density():
    s = Sphere(radius=2.0, resolution=(32, 32))
    dens = lipid_density(PhysicalParams(), s, np.full(s.resolution, 0.3), 4.0)
    assert np.allclose(dens.values, 4.0 / (16 * np.pi))
    assert uniform_face_density(PhysicalParams(), 4.0, 16 * np.pi, 0.3) == pytest.approx(4.0 / (16 * np.pi))


def test_negative_lipids_gather_where_potential_is_high():
    s = Sphere(resolution=(32, 32))
    z = s.frame().r[..., 2]
    dens = lipid_density(PhysicalParams(lipid_charge=-1.0), s, z, 1.0).values
    assert dens[z > 0.5].min() > dens[z < -0.5].max()


def test_literal_kind_integrates_to_minus_pool():
    # gamma = -exp(-q_l beta phi) in the literal density formula flips the sign of the total
    p = PhysicalParams(gamma_kind=LITERAL_BOLTZMANN)
    s = Sphere(resolution=(32, 32))
    dens = lipid_density(p, s, trace(s.frame()), 3.0)
    assert lipid_conservation(dens) == pytest.approx(-3.0, abs=1e-10)


def test_literal_kind_needs_charged_lipids():
    p = PhysicalParams(gamma_kind=LITERAL_BOLTZMANN, lipid_charge=0.0)
    s = Sphere(resolution=(8, 8))
    with pytest.raises(NormalizationError):
        lipid_density(p, s, np.zeros(s.resolution), 1.0)


@pytest.mark.parametrize("beta", [0.5, 1.0, 2.0])
def test_boltzmann_density_is_stationary(beta):
    p = PhysicalParams(beta=beta)
    norms = []
    for n in (32, 64, 128):
        s = Sphere(resolution=(n, n))
        phi = trace(s.frame())
        rho = lipid_density(p, s, phi, 3.0).values
        norms.append(residual_norm(s, electrodiffusion_residual(p, s, rho, phi)))
    orders = np.log2(np.array(norms[:-1]) / np.array(norms[1:]))
    assert np.all(orders > 1.9)


def test_non_boltzmann_density_is_not_stationary():
    p = PhysicalParams()
    s = Sphere(resolution=(64, 64))
    phi = trace(s.frame())
    rho = lipid_density(p, s, -phi, 3.0).values   # wrong sign in the exponent
    assert residual_norm(s, electrodiffusion_residual(p, s, rho, phi)) > 1e-2


def test_zero_diffusion_has_zero_residual():
    p = PhysicalParams(diffusion=0.0)
    s = Sphere(resolution=(16, 16))
    phi = trace(s.frame())
    rho = lipid_density(p, s, phi, 1.0).values
    assert np.all(electrodiffusion_residual(p, s, rho, phi) == 0)


def test_residual_telescopes_over_cells():
    # flux form: the residual sums to zero against the scheme's own cell areas, for any density
    p = PhysicalParams()
    s = Sphere(resolution=(48, 48))
    fr = s.frame()
    phi = trace(fr)
    rho = 1 + 0.2 * fr.r[..., 0]
    res = electrodiffusion_residual(p, s, rho, phi)
    hu, hv = s.spacing
    cells = fr.area_weight * hu * hv
    assert abs(np.sum(res * cells)) < 1e-12 * np.sum(np.abs(res) * cells)
