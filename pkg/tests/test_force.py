import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pbforce import geometry as geo
from pbforce.force import (InterfaceTraces, MissingTraceError, force_alt, force_mst, force_paper,
                           force_profile, radial_shape_derivative, shape_derivative_integral)
from pbforce.params import IonSpecies, PhysicalParams
from pbforce.solver1d import PlanarGeometry, solve_planar


def traces(a, b, t=(0.0, 0.0, 0.0), phi=0.0, rho=0.0):
    return InterfaceTraces(phi=np.array(phi), grad_s_n=np.array(a), grad_m_n=np.array(b),
                           tangential=np.array(t, dtype=float), rho=np.array(rho))


finite = st.floats(-5, 5, allow_nan=False)


@settings(max_examples=200, deadline=None)
@given(a=finite, t1=finite, t2=finite, rho=st.floats(0, 3), phi=st.floats(-2, 2))
def test_three_forms_agree_when_jump_holds(a, t1, t2, rho, phi):
    p = PhysicalParams(eps_s=80.0, eps_m=2.0, ions=(IonSpecies(1, 1.0), IonSpecies(-1, 1.0)))
    b = (p.eps_s * a + p.lipid_charge * rho) / p.eps_m
    tr = traces(a, b, (t1, t2, 0.0), phi, rho)
    fm = float(force_mst(p, tr))
    scale = 1 + abs(fm) + p.eps_m * b * b + p.eps_s * a * a
    assert abs(float(force_paper(p, tr)) - fm) <= 1e-12 * scale
    assert abs(float(force_alt(p, tr)) - fm) <= 1e-12 * scale


def test_forms_differ_off_the_jump():
    p = PhysicalParams(eps_s=80.0, eps_m=2.0)
    tr = traces(0.1, 0.1)
    assert float(force_paper(p, tr)) != pytest.approx(float(force_mst(p, tr)))


def test_uniform_dielectric_has_no_force():
    p = PhysicalParams(eps_s=4.0, eps_m=4.0)
    tr = traces(0.3, 0.3, (0.2, -0.1, 0.0))
    for F in (force_paper, force_alt, force_mst):
        assert float(F(p, tr)) == pytest.approx(0.0, abs=1e-15)


def test_dielectric_capacitor_force():
    # series capacitor: D = 1 / (40/80 + 4/2) = 0.4 and F = D^2/2 (1/eps_s - 1/eps_m) = -0.039
    p = PhysicalParams(eps_s=80.0, eps_m=2.0)
    sol = solve_planar(p, PlanarGeometry(n_cells=256, phi_left=0.0, phi_right=1.0))
    for face in ("c", "e"):
        prof = force_profile(p, sol.traces[face])
        for F in (prof.F_paper, prof.F_alt, prof.F_mst):
            assert F[0] == pytest.approx(-0.039, rel=1e-10)


def test_missing_tangential_trace():
    tr = InterfaceTraces(phi=np.array(0.0), grad_s_n=np.array(1.0), grad_m_n=np.array(1.0))
    with pytest.raises(MissingTraceError):
        force_mst(PhysicalParams(), tr)


def test_profile_gaps(ref_solution):
    for face, tr in ref_solution.traces.items():
        prof = force_profile(ref_solution.params, tr)
        assert prof.face == face
        assert prof.max_mst_gap() <= 1e-10
        assert prof.max_alt_gap() <= 1e-10


def test_constant_force_under_dilation():
    # -F * integral of (x . n) over the unit sphere = -4 pi F
    s = geo.Sphere(resolution=(48, 48))
    val = shape_derivative_integral(s, 0.25, geo.dilation(1.0))
    assert val == pytest.approx(-np.pi, rel=1e-10)


@pytest.mark.parametrize("coord, expected", [
    ("spherical", -(2.0 * 0.5 * 4 * np.pi * 4.0) - (-1.0 * 1.0 * 4 * np.pi * 9.0)),
    ("planar", -(2.0 * 0.5) - (-1.0 * 1.0)),
])
def test_radial_shape_derivative(coord, expected):
    val = radial_shape_derivative({"c": 2.0, "e": -1.0}, {"c": 2.0, "e": 3.0},
                                  {"c": 0.5, "e": 1.0}, coord)
    assert val == pytest.approx(expected, rel=1e-14)
