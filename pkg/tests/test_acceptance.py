"""The ten acceptance criteria at their stated tolerances.

Each test prints one PASS/FAIL line (uncaptured) before asserting, so a
plain ``pytest`` run shows the full table.
"""
import time

import numpy as np
import pytest

from pbforce import geometry as geo
from pbforce.params import BoundaryData, IonSpecies, PhysicalParams, SourceCharge
from pbforce.solver1d import PlanarGeometry, Problem1D
from pbforce.solver3d import GridSpec, RegionSdf, assemble_and_solve_3d
from pbforce.verify import (bending_suite, check_maximizer, check_mst_equivalence, check_theorem_s1,
                            check_weak_form, concentric_comparison, concentric_problem,
                            fd_shape_derivative, geometry_corpus, lemma_diagnostic, linear_convergence,
                            lipid_suite, newton_tail_ok, reference_problem, volume_transform_suite)


@pytest.fixture
def report(capsys):
    def emit(number, title, checks, runtime):
        ok = all(passed for _, passed in checks)
        detail = "; ".join(f"{text} [{'ok' if passed else 'FAIL'}]" for text, passed in checks)
        with capsys.disabled():
            print(f"\nACCEPTANCE {number:2d} {'PASS' if ok else 'FAIL'}  {title} ({runtime:.2f}s): {detail}")
        return ok
    return emit


def test_01_geometry_theorem_suite(report):
    t0 = time.perf_counter()
    worst = max(check_theorem_s1(s, v, tau=1e-5).value for _, s, v in geometry_corpus(128))
    res = (128, 128)
    gb_sphere = geo.closed_surface_integral(geo.Sphere(resolution=res), lambda fr: fr.K)
    gb_torus = geo.closed_surface_integral(geo.Torus(resolution=res), lambda fr: fr.K)
    runtime = time.perf_counter() - t0
    checks = [
        (f"max |FD(J_s) - div_s V| = {worst:.2e} <= 1e-6", worst <= 1e-6),
        (f"sphere Gauss-Bonnet error {abs(gb_sphere - 4 * np.pi):.2e} <= 1e-6", abs(gb_sphere - 4 * np.pi) <= 1e-6),
        (f"torus Gauss-Bonnet {abs(gb_torus):.2e} <= 1e-6", abs(gb_torus) <= 1e-6),
        (f"runtime {runtime:.2f}s < 5s", runtime < 5.0),
    ]
    assert report(1, "geometry theorem suite", checks, runtime)


def test_02_lemma_diagnostic(report):
    t0 = time.perf_counter()
    sphere = geo.Sphere(resolution=(128, 128))
    tangential = [lemma_diagnostic(sphere, geo.rotation(w))["integral_of_surface_divergence"]
                  for w in ((0.2, 0.5, -0.4), (1.0, 0.0, 0.0), (-0.3, 0.7, 0.1))]
    pos = lemma_diagnostic(sphere, geo.dilation(1.0))
    runtime = time.perf_counter() - t0
    lhs, rhs = pos["integral_of_surface_divergence"], pos["curvature_integral"]
    worst_t = max(abs(v) for v in tangential)
    checks = [
        (f"tangential |int div_s F| = {worst_t:.2e} <= 1e-8", worst_t <= 1e-8),
        (f"F = x: {lhs:.12f} vs 8 pi, error {abs(lhs - 8 * np.pi):.2e} <= 1e-6", abs(lhs - 8 * np.pi) <= 1e-6),
        (f"matches int 2H (F.n) dS to {abs(lhs - rhs):.2e}", abs(lhs - rhs) <= 1e-6),
    ]
    assert report(2, "lemma diagnostic", checks, runtime)


def test_03_volume_transformation(report):
    rep = volume_transform_suite(seed=0, samples=10)
    checks = [(f"{c.name} error {c.value:.2e} <= {c.tolerance:g}", c.passed) for c in rep.checks]
    assert report(3, "volume transformation suite", checks, rep.runtime)


def test_04_solver_accuracy(report):
    t0 = time.perf_counter()
    conv = linear_convergence(reference_problem(), ladder=(512, 1024, 2048, 4096))
    prob = reference_problem(4096)
    ts = time.perf_counter()
    sol = prob.solve()
    t_solve = time.perf_counter() - ts
    runtime = time.perf_counter() - t0
    slowest = max(max(conv["runtimes"]), t_solve)
    checks = [
        (f"linearized L-inf rel error {conv['errors'][-1]:.2e} <= 1e-6 at N=4096", conv["errors"][-1] <= 1e-6),
        (f"observed orders {', '.join(f'{o:.2f}' for o in conv['orders'])} >= 1.9", min(conv["orders"]) >= 1.9),
        (f"Newton residual {sol.residual:.1e} <= 1e-12", sol.residual <= 1e-12),
        ("quadratic tail " + " ".join(f"{r:.0e}" for r in sol.residual_history), newton_tail_ok(sol.residual_history)),
        (f"slowest solve {slowest:.3f}s < 1s", slowest < 1.0),
    ]
    assert report(4, "1D solver accuracy", checks, runtime)


def test_05_weak_form_and_maximizer(report):
    t0 = time.perf_counter()
    sol = reference_problem(4096).solve()
    weak = check_weak_form(sol, n_tests=20, seed=0)
    best = check_maximizer(sol, n_tests=20, seed=0)
    runtime = time.perf_counter() - t0
    checks = [
        (f"weak-form residual {weak.value:.2e} <= 1e-8 over 20 seeded tests", weak.passed),
        (f"max G increase {best.value:.2e} <= {best.tolerance:.0e} over 20 perturbations", best.passed),
        (f"runtime {runtime:.2f}s < 5s", runtime < 5.0),
    ]
    assert report(5, "weak form and maximizer", checks, runtime)


def _one_d_references():
    salt = lambda c: (IonSpecies(1.0, c), IonSpecies(-1.0, c))
    return {
        "reference spherical": reference_problem(4096),
        "concentric spherical": concentric_problem(4096),
        "planar double layer": Problem1D(PhysicalParams(eps_s=80.0, eps_m=2.0, ions=salt(10.0),
                                                        lipid_pool=(40.0, 40.0)),
                                         PlanarGeometry(z_c=40.0, z_e=44.0, L=84.0, n_cells=4096)),
        "planar asymmetric": Problem1D(PhysicalParams(eps_s=80.0, eps_m=2.0, ions=salt(0.1),
                                                      lipid_pool=(0.3, 0.1)),
                                       PlanarGeometry(n_cells=4096, phi_left=0.05, phi_right=-0.02)),
    }


def test_06_mst_equivalence(report):
    t0 = time.perf_counter()
    checks = []
    for name, prob in _one_d_references().items():
        mst, alt = check_mst_equivalence(prob.solve(), tolerance=1e-10)
        checks.append((f"{name}: paper-mst {mst.value:.1e}, paper-alt {alt.value:.1e}", mst.passed and alt.passed))
    assert report(6, "MST equivalence", checks, time.perf_counter() - t0)


def test_07_shape_derivative(report):
    t0 = time.perf_counter()
    velocity = geo.RadialBump(radius=8.0, half_width=3.5)
    ladder = (1024, 2048, 4096)
    rel = [fd_shape_derivative(reference_problem(n), velocity, tau=1e-3)["relative"] for n in ladder]
    runtime = time.perf_counter() - t0
    checks = [
        (f"relative discrepancy {rel[-1]:.2e} <= 1e-2 at N=4096", rel[-1] <= 1e-2),
        ("decreasing under refinement " + " > ".join(f"{r:.1e}" for r in rel),
         all(a > b for a, b in zip(rel[:-1], rel[1:]))),
        (f"runtime {runtime:.2f}s < 30s", runtime < 30.0),
    ]
    assert report(7, "shape-derivative oracle", checks, runtime)


def test_08_lipid_suite(report):
    rep = lipid_suite(resolutions=(32, 64, 128), y1_resolution=256)
    checks = [(f"{c.name} {c.value:.6g} ({c.note or 'tol ' + format(c.tolerance, 'g')})", c.passed)
              for c in rep.checks]
    assert report(8, "lipid suite", checks, rep.runtime)


def test_09_bending(report):
    rep = bending_suite(K_C=1.3, K_G=-0.7, resolution=128)
    checks = [(f"{c.name} error {(c.rel_error if c.metric == 'rel' else c.abs_error):.1e} <= {c.tolerance:g}",
               c.passed) for c in rep.checks]
    assert report(9, "bending energy", checks, rep.runtime)


def test_10_solver_3d(report):
    t0 = time.perf_counter()
    prob = concentric_problem()
    coarse = concentric_comparison(prob, 65)
    fine = concentric_comparison(prob, 129)
    grid = GridSpec.cube(12.0, 65)
    b = np.array([0.05, -0.02, 0.01])
    aff = assemble_and_solve_3d(PhysicalParams(eps_s=80.0, eps_m=80.0), RegionSdf.concentric(grid, 6.0, 10.0),
                                SourceCharge.none(), BoundaryData.affine(0.3, b))
    aff_err = float(np.max(np.abs(aff.phi - (0.3 + grid.points() @ b))))
    runtime = time.perf_counter() - t0
    ratio = coarse["phi_error"] / fine["phi_error"]
    worst = max(fine["trace_errors"], key=fine["trace_errors"].get)
    checks = [
        (f"129^3 phi L-inf rel {fine['phi_error']:.4f} <= 0.02", fine["phi_error"] <= 0.02),
        (f"129^3 traces max rel {fine['max_trace_error']:.4f} ({worst}) <= 0.05", fine["max_trace_error"] <= 0.05),
        (f"65->129 error ratio {ratio:.2f} >= 2", ratio >= 2.0),
        (f"affine Dirichlet max error {aff_err:.1e} <= 1e-10", aff_err <= 1e-10),
        (f"129^3 solve {fine['runtime']:.1f}s <= 300s", fine["runtime"] <= 300.0),
    ]
    assert report(10, "3D solver vs 1D reference", checks, runtime)
