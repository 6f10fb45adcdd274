import numpy as np
import pytest

from pbforce import geometry as geo
from pbforce.params import IonSpecies, PhysicalParams
from pbforce.solver1d import PlanarGeometry, Problem1D
from pbforce.verify import (CheckResult, SupportError, VerificationReport, bending_suite,
                            check_maximizer, check_mst_equivalence, check_weak_form,
                            fd_shape_derivative, geometry_suite, lemma_diagnostic, lipid_suite,
                            newton_tail_ok, random_test_functions, run_all, volume_transform_suite)


def test_check_result_constructors():
    c = CheckResult.compare("x", 1.0 + 1e-9, 1.0, 1e-8, metric="rel")
    assert c.passed and c.rel_error == pytest.approx(1e-9, rel=1e-6)
    assert not CheckResult.bound("y", 2e-6, 1e-6).passed
    assert CheckResult.at_least("z", 1.95, 1.9).passed
    assert not CheckResult.at_least("z", 1.5, 1.9).passed


def test_report_json_roundtrip():
    rep = VerificationReport(fingerprint="abc", seed=7, runtime=1.5)
    rep.add(CheckResult.bound("a", 0.0, 1e-8))
    back = VerificationReport.from_json(rep.to_json())
    assert back.checks == rep.checks and back.seed == 7 and back.runtime == 1.5
    assert "runtime" not in rep.to_dict(timings=False)
    assert "PASS" in rep.table()


@pytest.mark.parametrize("suite", [geometry_suite, volume_transform_suite, lipid_suite, bending_suite])
def test_suites_pass(suite):
    rep = suite()
    failed = [c.name for c in rep.checks if not c.passed]
    assert not failed


def test_lemma_diagnostic_position_field():
    d = lemma_diagnostic(geo.Sphere(resolution=(128, 128)), geo.dilation(1.0))
    assert d["integral_of_surface_divergence"] == pytest.approx(8 * np.pi, rel=1e-10)
    assert d["curvature_integral"] == pytest.approx(8 * np.pi, rel=1e-10)


def test_reference_solver_checks(ref_solution):
    assert all(c.passed for c in check_mst_equivalence(ref_solution))
    assert check_weak_form(ref_solution).passed
    assert check_maximizer(ref_solution).passed


def test_test_functions_avoid_faces(ref_solution):
    faces = list(ref_solution.disc.faces.values())
    for psi in random_test_functions(ref_solution, 20, seed=4):
        assert np.all(psi[faces] == 0.0)
        assert psi[0] == 0.0 and psi[-1] == 0.0


def test_newton_tail_detector():
    assert newton_tail_ok([1.0, 1e-2, 1e-5, 1e-11, 1e-16])
    assert not newton_tail_ok([1e-6, 5e-7, 2.5e-7])


def test_spherical_shape_derivative(ref_problem):
    out = fd_shape_derivative(ref_problem, geo.RadialBump(radius=8.0, half_width=3.5), tau=1e-3)
    assert out["relative"] <= 1e-3
    assert out["formula_value"] == pytest.approx(-0.0205523443, rel=1e-8)


def test_planar_shape_derivative_single_face():
    p = PhysicalParams(eps_s=80.0, eps_m=2.0, ions=(IonSpecies(1, 1.0), IonSpecies(-1, 1.0)),
                       lipid_pool=(2.0, 0.5))
    prob = Problem1D(p, PlanarGeometry(n_cells=4096))
    out = fd_shape_derivative(prob, geo.SlabBump(height=20.0, half_width=1.5), tau=1e-3)
    assert out["relative"] <= 1e-2


@pytest.mark.parametrize("velocity", [
    geo.RadialBump(radius=1.0, half_width=2.0),     # reaches the source charge
    geo.RadialBump(radius=28.0, half_width=5.0),    # reaches the outer boundary
])
def test_velocity_support_rejected(small_problem, velocity):
    with pytest.raises(SupportError):
        fd_shape_derivative(small_problem, velocity)


def test_oversized_step_rejected(small_problem):
    with pytest.raises(SupportError):
        fd_shape_derivative(small_problem, geo.RadialBump(radius=8.0, half_width=3.5, amplitude=1.0), tau=2.0)


def test_run_all_is_reproducible(small_problem):
    a = run_all(small_problem, seed=3).to_json(timings=False)
    b = run_all(small_problem, seed=3).to_json(timings=False)
    assert a == b
