import numpy as np
import pytest

from pbforce.params import IonSpecies, PhysicalParams, SourceCharge
from pbforce.solver1d import PlanarGeometry, Problem1D, RadialGeometry
from pbforce.verify import reference_problem


@pytest.fixture(scope="session")
def ref_problem():
    return reference_problem(n_cells=4096)


@pytest.fixture(scope="session")
def ref_solution(ref_problem):
    return ref_problem.solve()


@pytest.fixture(scope="session")
def small_problem():
    return reference_problem(n_cells=512)


@pytest.fixture
def salt():
    return PhysicalParams(eps_s=80.0, eps_m=2.0,
                          ions=(IonSpecies(1.0, 1.0), IonSpecies(-1.0, 1.0)),
                          lipid_pool=(10.0, 15.0))


def planar_problem(params, **geom):
    return Problem1D(params, PlanarGeometry(**geom))


def coulomb_problem(n_cells=4096, charge=4.0):
    params = PhysicalParams(eps_s=80.0, eps_m=80.0)
    geom = RadialGeometry(R_c=6.0, R_e=10.0, R_outer=30.0, n_cells=n_cells, membrane=False)
    return Problem1D(params, geom, SourceCharge.central(charge, 0.5))


def rel_inf(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.max(np.abs(a - b)) / np.max(np.abs(b)))
