import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pbforce.force import force_mst
from pbforce.params import (BoundaryData, ConfigError, IonSpecies, PhysicalParams, SourceCharge,
                            b_energy)
from pbforce.solver1d import (PlanarGeometry, Problem1D, RadialGeometry, SolverError, extract_traces,
                              fitted_mesh, screened_gaussian, solve_linearized_spherical,
                              solve_planar, solve_spherical)
from pbforce.verify import linear_convergence, newton_tail_ok

from conftest import coulomb_problem, rel_inf


# --------------------------------------------------------------------------
# closed forms
# --------------------------------------------------------------------------

@pytest.mark.parametrize("r, expected", [
    (0.0, 0.006216734474180851),
    (1.0, 0.0036652046602768587),
    (6.0, 0.00053051647697298445),
    (10.0, 0.00026525823848649223),
    (20.0, 6.6314559621623057e-05),
])
def test_coulomb_limit(r, expected):
    # Gaussian charge 4 (width 0.5) in eps = 80, grounded at R = 30
    sol = coulomb_problem().solve()
    assert np.interp(r, sol.nodes, sol.phi) == pytest.approx(expected, rel=1e-5)


def test_screened_gaussian_unscreened_limit():
    phi, dphi = screened_gaussian(np.array([1.0]), 1.0, 0.5, 1.0, 0.0)
    assert phi[0] == pytest.approx(0.075956675590402096, rel=1e-13)


def test_screened_gaussian_derivative():
    r = np.array([0.3, 2.0, 7.5])
    h = 1e-6
    p1, _ = screened_gaussian(r + h, 2.0, 0.5, 80.0, 0.3)
    p0, _ = screened_gaussian(r - h, 2.0, 0.5, 80.0, 0.3)
    _, d = screened_gaussian(r, 2.0, 0.5, 80.0, 0.3)
    assert np.allclose((p1 - p0) / (2 * h), d, rtol=1e-7)


def test_linearized_closed_form_and_order(ref_problem):
    out = linear_convergence(ref_problem, ladder=(1024, 2048, 4096))
    assert out["errors"][-1] <= 1e-6
    assert min(out["orders"]) >= 1.9


def test_closed_form_satisfies_matching():
    prob = Problem1D(PhysicalParams(eps_s=80, eps_m=2, ions=(IonSpecies(1, 1), IonSpecies(-1, 1)),
                                    lipid_pool=(20.0, 30.0)),
                     RadialGeometry(), SourceCharge.central(5.0, 0.5))
    cf = solve_linearized_spherical(prob.params, prob.geometry, prob.source).meta["closed_form"]
    for face, R, sign in (("c", 6.0, -1.0), ("e", 10.0, 1.0)):
        lo, hi = cf.evaluate(np.array([R - 1e-9, R + 1e-9]))
        assert lo == pytest.approx(hi, rel=1e-7)
        _, d = cf.evaluate(np.array([R - 1e-9, R + 1e-9]), derivative=True)
        s_side, m_side = (d[0], d[1]) if face == "c" else (d[1], d[0])
        rho = prob.params.pool(face) / (4 * np.pi * R**2)
        jump = 80 * sign * s_side - 2 * sign * m_side
        assert jump == pytest.approx(-prob.params.lipid_charge * rho, rel=1e-7)


# --------------------------------------------------------------------------
# planar oracles
# --------------------------------------------------------------------------

def test_planar_uniform_is_linear():
    p = PhysicalParams(eps_s=5.0, eps_m=5.0)
    sol = solve_planar(p, PlanarGeometry(n_cells=256, phi_left=0.0, phi_right=1.0))
    assert np.max(np.abs(sol.phi - sol.nodes / 44.0)) < 1e-12


def test_planar_dielectric_series():
    # no charges: constant displacement D, piecewise-linear phi
    p = PhysicalParams(eps_s=80.0, eps_m=2.0)
    sol = solve_planar(p, PlanarGeometry(n_cells=256, phi_left=0.0, phi_right=1.0))
    D = 1.0 / (40.0 / 80.0 + 4.0 / 2.0)
    assert np.interp(20.0, sol.nodes, sol.phi) == pytest.approx(20.0 * D / 80.0, rel=1e-12)
    assert np.interp(24.0, sol.nodes, sol.phi) == pytest.approx(20.0 * D / 80.0 + 4.0 * D / 2.0, rel=1e-12)


def transfer_matrix(params, z_c, z_e, L):
    """Linearized slab with grounded ends: coefficients of A sinh(kz), B + Cz, D sinh(k(L-z))."""
    es, em, q = params.eps_s, params.eps_m, params.lipid_charge
    k = np.sqrt(sum(i.bulk_concentration * i.charge**2 for i in params.ions) * params.beta / es)
    Cc, Ce = params.lipid_pool
    M = np.array([
        [np.sinh(k * z_c), -1.0, -z_c, 0.0],
        [0.0, -1.0, -z_e, np.sinh(k * (L - z_e))],
        [-es * k * np.cosh(k * z_c), 0.0, em, 0.0],
        [0.0, 0.0, -em, -es * k * np.cosh(k * (L - z_e))],
    ])
    A, B, C, D = np.linalg.solve(M, [0.0, 0.0, -q * Cc, -q * Ce])

    def phi(z):
        z = np.asarray(z, dtype=float)
        return np.where(z <= z_c, A * np.sinh(k * z),
                        np.where(z <= z_e, B + C * z, D * np.sinh(k * (L - z))))
    return phi


@pytest.mark.parametrize("pools", [(0.3, 0.1), (0.0, 0.5), (0.2, 0.2)])
def test_planar_transfer_matrix(pools):
    p = PhysicalParams(eps_s=80.0, eps_m=2.0, ions=(IonSpecies(1, 0.1), IonSpecies(-1, 0.1)),
                       lipid_pool=pools)
    sol = solve_planar(p, PlanarGeometry(n_cells=1024), linear=True)
    exact = transfer_matrix(p, 20.0, 24.0, 44.0)(sol.nodes)
    assert rel_inf(sol.phi, exact) < 1e-9


def grahame_setup(pool=40.0, n_cells=16800):
    # 16800 cells split 8000 / 800 / 8000, so the mesh is mirror symmetric
    p = PhysicalParams(eps_s=80.0, eps_m=2.0, ions=(IonSpecies(1, 10.0), IonSpecies(-1, 10.0)),
                       lipid_pool=(pool, pool))
    return p, solve_planar(p, PlanarGeometry(z_c=40.0, z_e=44.0, L=84.0, n_cells=n_cells))


def test_grahame_surface_potential():
    # sigma = -40 against sqrt(8 c eps_s / beta) = 80: psi0 = 2 asinh(-1/2)
    p, sol = grahame_setup()
    for face in ("c", "e"):
        assert sol.traces[face].phi == pytest.approx(-0.96242365011920689, rel=1e-6)


def test_isolated_double_layer_carries_no_normal_force():
    # symmetric slab: no field in the membrane, so Maxwell stress balances the osmotic term
    p, sol = grahame_setup()
    scale = b_energy(sol.traces["c"].phi, p)
    for face in ("c", "e"):
        t = sol.traces[face]
        assert abs(float(t.grad_m_n)) < 1e-10
        assert abs(float(force_mst(p, t))) < 1e-6 * scale


def test_planar_mirror_symmetry():
    p, sol = grahame_setup(pool=5.0, n_cells=4200)
    assert np.max(np.abs(sol.phi - sol.phi[::-1])) < 1e-12


# --------------------------------------------------------------------------
# Newton, traces, errors
# --------------------------------------------------------------------------

def test_newton_converges_quadratically(ref_solution):
    assert ref_solution.residual <= 1e-12
    assert newton_tail_ok(ref_solution.residual_history)
    assert ref_solution.converged


def test_conservative_traces_satisfy_jump(ref_solution):
    p = ref_solution.params
    for face, t in ref_solution.traces.items():
        jump = p.eps_s * t.grad_s_n - p.eps_m * t.grad_m_n + p.lipid_charge * t.rho
        assert abs(float(jump)) < 1e-14


def test_difference_traces_agree_with_conservative(ref_solution):
    for face in ("c", "e"):
        fd = extract_traces(ref_solution, face)
        t = ref_solution.traces[face]
        assert float(fd.grad_s_n) == pytest.approx(float(t.grad_s_n), rel=1e-4)
        assert float(fd.grad_m_n) == pytest.approx(float(t.grad_m_n), rel=1e-4)


def test_face_density_is_pool_over_area(ref_solution):
    assert float(ref_solution.rho["c"]) == pytest.approx(50.0 / (4 * np.pi * 36.0), rel=1e-12)
    assert float(ref_solution.rho["e"]) == pytest.approx(80.0 / (4 * np.pi * 100.0), rel=1e-12)


def test_shared_pool_moves_lipids_to_favourable_face():
    base = dict(eps_s=80.0, eps_m=2.0, ions=(IonSpecies(1, 1.0), IonSpecies(-1, 1.0)),
                lipid_pool=(10.0, 10.0))
    src = SourceCharge.central(20.0, 0.5)
    shared = solve_spherical(PhysicalParams(shared_pool=True, **base), RadialGeometry(n_cells=1024), src)
    counts = {f: float(shared.rho[f]) * 4 * np.pi * R**2 for f, R in (("c", 6.0), ("e", 10.0))}
    assert sum(counts.values()) == pytest.approx(20.0, rel=1e-10)
    # the positive source pulls the negative lipids inward beyond their area share
    assert counts["c"] > 20.0 * 36.0 / 136.0


@pytest.mark.parametrize("kwargs", [
    {"R_c": 12.0, "R_e": 10.0},
    {"R_e": 40.0},
    {"protein_radius": 7.0},
    {"n_cells": 4},
])
def test_invalid_radial_geometry(kwargs):
    with pytest.raises(ConfigError):
        RadialGeometry(**kwargs)


def test_newton_iteration_cap_raises():
    p = PhysicalParams(eps_s=80.0, eps_m=2.0, ions=(IonSpecies(1, 10.0), IonSpecies(-1, 10.0)),
                       lipid_pool=(50.0, 80.0))
    with pytest.raises(SolverError):
        solve_spherical(p, RadialGeometry(n_cells=256), SourceCharge.central(20.0, 0.5), max_iter=1)


def test_fitted_mesh_hits_breaks():
    nodes, counts = fitted_mesh([0.0, 6.0, 10.0, 30.0], 64)
    assert counts.sum() == 64
    for b in (6.0, 10.0, 30.0):
        assert np.min(np.abs(nodes - b)) == 0.0
    assert np.all(np.diff(nodes) > 0)


@settings(max_examples=10, deadline=None)
@given(q1=st.floats(-10, 10), q2=st.floats(-10, 10))
def test_linear_solve_is_superposable(q1, q2):
    p = PhysicalParams(eps_s=80.0, eps_m=2.0, ions=(IonSpecies(1, 0.5), IonSpecies(-1, 0.5)))
    geom = RadialGeometry(n_cells=256)

    def solve(q):
        return solve_spherical(p, geom, SourceCharge.central(q, 0.5), linear=True).phi
    both = solve(q1 + q2)
    scale = max(np.max(np.abs(both)), 1e-300)
    assert np.max(np.abs(both - solve(q1) - solve(q2))) <= 1e-10 * scale + 1e-300


def test_constant_dirichlet_shifts_uncharged_solution():
    p = PhysicalParams(eps_s=80.0, eps_m=2.0)
    a = solve_spherical(p, RadialGeometry(n_cells=256), SourceCharge.central(1.0, 0.5))
    b = solve_spherical(p, RadialGeometry(n_cells=256), SourceCharge.central(1.0, 0.5),
                        BoundaryData.constant(0.25))
    assert np.allclose(b.phi - a.phi, 0.25, atol=1e-13)
