"""Oracle harness: geometry theorems, force equivalences, weak form, shape derivative."""
from __future__ import annotations

import hashlib
import json
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Dict, List, Optional

import numpy as np

from . import geometry as geo
from .energy import bending_energy, electrostatic_energy, functional_1d
from .force import force_alt, force_mst, force_paper, radial_shape_derivative
from .lipid import electrodiffusion_residual, lipid_conservation, lipid_density, residual_norm
from .params import PhysicalParams, ion_model
from .solver1d import (PlanarGeometry, PotentialSolution, Problem1D, RadialGeometry,
                       residual_vector, solve_linearized_spherical, surface_sources)

REPORT_SCHEMA = 1


class SupportError(ValueError):
    """Velocity support meets the source charges or the outer boundary."""


@dataclass
class CheckResult:
    name: str
    value: float
    reference: float
    abs_error: float
    rel_error: float
    tolerance: float
    passed: bool
    metric: str = "abs"
    note: str = ""

    @classmethod
    def compare(cls, name, value, reference, tolerance, metric="abs", note=""):
        value, reference = float(value), float(reference)
        abs_err = abs(value - reference)
        rel_err = abs_err / abs(reference) if reference != 0 else (0.0 if abs_err == 0 else float("inf"))
        err = rel_err if metric == "rel" else abs_err
        return cls(name, value, reference, abs_err, rel_err, tolerance, bool(err <= tolerance), metric, note)

    @classmethod
    def bound(cls, name, error, tolerance, note=""):
        """A check whose value is itself an error measure with reference 0."""
        error = float(error)
        return cls(name, error, 0.0, error, error, tolerance, bool(error <= tolerance), "abs", note)

    @classmethod
    def at_least(cls, name, value, minimum, note=""):
        value = float(value)
        return cls(name, value, minimum, max(minimum - value, 0.0), 0.0, minimum,
                   bool(value >= minimum), "min", note)


@dataclass
class VerificationReport:
    checks: List[CheckResult] = field(default_factory=list)
    fingerprint: str = ""
    runtime: float = 0.0
    seed: Optional[int] = None

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, check: CheckResult) -> CheckResult:
        self.checks.append(check)
        return check

    def extend(self, other: "VerificationReport") -> "VerificationReport":
        self.checks.extend(other.checks)
        self.runtime += other.runtime
        return self

    def to_dict(self, timings: bool = True) -> dict:
        """Plain-data form; ``timings=False`` drops the wall-clock field for byte-stable output."""
        out = {"schema_version": REPORT_SCHEMA, "fingerprint": self.fingerprint,
               "seed": self.seed, "passed": self.passed,
               "checks": [asdict(c) for c in self.checks]}
        if timings:
            out["runtime"] = self.runtime
        return out

    def to_json(self, timings: bool = True) -> str:
        return json.dumps(self.to_dict(timings), indent=2, sort_keys=True, default=_json_float)

    @classmethod
    def from_json(cls, text: str) -> "VerificationReport":
        data = json.loads(text)
        checks = [CheckResult(**c) for c in data["checks"]]
        return cls(checks, data.get("fingerprint", ""), data.get("runtime", 0.0), data.get("seed"))

    def table(self) -> str:
        rows = [f"{'check':<44} {'value':>14} {'reference':>14} {'error':>10} {'tol':>8}  result"]
        for c in self.checks:
            err = c.rel_error if c.metric == "rel" else c.abs_error
            rows.append(f"{c.name:<44} {c.value:>14.6g} {c.reference:>14.6g} {err:>10.2e} "
                        f"{c.tolerance:>8.0e}  {'PASS' if c.passed else 'FAIL'}")
        return "\n".join(rows)


def _json_float(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    raise TypeError(type(x).__name__)


def fingerprint(obj) -> str:
    return hashlib.sha256(repr(obj).encode()).hexdigest()[:16]


# --------------------------------------------------------------------------
# geometry
# --------------------------------------------------------------------------

def geometry_corpus(resolution: int = 128):
    """The five (surface, velocity) pairs used for the surface-Jacobian check."""
    res = (resolution, resolution)
    return [
        ("sphere+radial", geo.Sphere(resolution=res), geo.dilation(1.0)),
        ("sphere+translation", geo.Sphere(resolution=res), geo.translation((0.3, -0.2, 0.5))),
        ("sphere+rotation", geo.Sphere(resolution=res), geo.rotation((0.2, 0.5, -0.4))),
        ("ellipsoid+shear", geo.Ellipsoid(axes=(1.5, 1.0, 0.7), resolution=res), geo.shear(0.3)),
        ("torus+normal-bump", geo.Torus(resolution=res), geo.TorusNormalBump()),
    ]


def check_theorem_s1(surface, velocity, tau: float = 1e-5, name: str = "theorem-s1",
                     tolerance: float = 1e-6) -> CheckResult:
    """max over nodes of |(J_s(tau) - J_s(-tau)) / 2 tau - div_s V|."""
    U, V = surface.nodes()
    plus = geo.surface_jacobian(geo.TransformState(tau, velocity), surface, U, V)
    minus = geo.surface_jacobian(geo.TransformState(-tau, velocity), surface, U, V)
    fd = (plus - minus) / (2 * tau)
    div = geo.surface_divergence(surface, velocity, U, V)
    return CheckResult.bound(name, np.max(np.abs(fd - div)), tolerance,
                             note=f"tau={tau:g}, {surface.resolution[0]}x{surface.resolution[1]} nodes")


def lemma_diagnostic(surface, velocity) -> Dict[str, float]:
    """Integral of div_s F next to the curvature oracle, the integral of 2H (F . n)."""
    U, V = surface.nodes()
    div = geo.surface_divergence(surface, velocity, U, V)
    lhs = geo.closed_surface_integral(surface, div)
    rhs = geo.closed_surface_integral(
        surface, lambda fr: 2 * fr.H * np.sum(velocity(fr.r) * fr.n, axis=-1))
    return {"integral_of_surface_divergence": lhs, "curvature_integral": rhs}


def geometry_suite(resolution: int = 128, tau: float = 1e-5) -> VerificationReport:
    t0 = time.perf_counter()
    rep = VerificationReport()
    for name, surf, vel in geometry_corpus(resolution):
        rep.add(check_theorem_s1(surf, vel, tau, name=f"theorem-s1/{name}"))
    res = (resolution, resolution)
    sphere, torus = geo.Sphere(resolution=res), geo.Torus(resolution=res)
    rep.add(CheckResult.compare("gauss-bonnet/sphere",
                                geo.closed_surface_integral(sphere, lambda fr: fr.K), 4 * np.pi, 1e-6))
    rep.add(CheckResult.compare("gauss-bonnet/torus",
                                geo.closed_surface_integral(torus, lambda fr: fr.K), 0.0, 1e-6))
    rot = lemma_diagnostic(sphere, geo.rotation((0.2, 0.5, -0.4)))
    rep.add(CheckResult.bound("lemma/tangential-rotation",
                              abs(rot["integral_of_surface_divergence"]), 1e-8))
    lin = lemma_diagnostic(sphere, geo.dilation(1.0))
    rep.add(CheckResult.compare("lemma/position-field", lin["integral_of_surface_divergence"],
                                8 * np.pi, 1e-6))
    rep.add(CheckResult.compare("lemma/position-field-vs-curvature",
                                lin["integral_of_surface_divergence"], lin["curvature_integral"], 1e-6))
    bump = lemma_diagnostic(torus, geo.TorusNormalBump())
    rep.add(CheckResult.compare("lemma/torus-bump-vs-curvature",
                                bump["integral_of_surface_divergence"], bump["curvature_integral"], 1e-6,
                                note="nonzero: the integral of div_s F vanishes only for tangential F"))
    rep.runtime = time.perf_counter() - t0
    return rep


def _random_linear_field(rng) -> geo.LinearField:
    return geo.LinearField(rng.normal(size=(3, 3)), rng.normal(size=3))


def _random_bump_field(rng) -> geo.VelocityField:
    return geo.RadialBump(radius=1.0 + rng.uniform(0, 0.5), half_width=1.0 + rng.uniform(0, 0.5),
                          amplitude=rng.uniform(0.5, 1.5), center=tuple(rng.normal(size=3) * 0.1))


def volume_transform_suite(seed: int = 0, samples: int = 10, h: float = 1e-5) -> VerificationReport:
    """dJ_t/dt and A'(0) against central differences in t at t = 0."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    rep = VerificationReport(seed=seed)
    err_j, err_a = 0.0, 0.0
    for k in range(samples):
        vel = _random_linear_field(rng) if k % 2 == 0 else _random_bump_field(rng)
        X = rng.normal(size=3)
        _, dJ = geo.volume_jacobian(geo.TransformState(0.0, vel), X)
        jp, _ = geo.volume_jacobian(geo.TransformState(h, vel), X)
        jm, _ = geo.volume_jacobian(geo.TransformState(-h, vel), X)
        err_j = max(err_j, abs((jp - jm) / (2 * h) - dJ))
        _, A0 = geo.transform_tensor_A(geo.TransformState(0.0, vel), X)
        ap, _ = geo.transform_tensor_A(geo.TransformState(h, vel), X)
        am, _ = geo.transform_tensor_A(geo.TransformState(-h, vel), X)
        err_a = max(err_a, float(np.max(np.abs((ap - am) / (2 * h) - A0))))
    rep.add(CheckResult.bound("volume/dJ_dt", err_j, 1e-6, note=f"{samples} seeded samples"))
    rep.add(CheckResult.bound("volume/A_prime_0", err_a, 1e-6, note=f"{samples} seeded samples"))
    rep.runtime = time.perf_counter() - t0
    return rep


# --------------------------------------------------------------------------
# lipids and bending
# --------------------------------------------------------------------------

def _sphere_potential(fr):
    x = fr.r
    return 0.4 * x[..., 2] + 0.3 * x[..., 0] * x[..., 1] + 0.2 * x[..., 0]


def lipid_suite(params: Optional[PhysicalParams] = None, pool: float = 3.0,
                resolutions=(32, 64, 128), y1_resolution: int = 256) -> VerificationReport:
    t0 = time.perf_counter()
    params = params or PhysicalParams(lipid_charge=-1.0, beta=1.0, diffusion=1.0)
    rep = VerificationReport()
    sphere = geo.Sphere(resolution=(resolutions[-1],) * 2)
    phi = _sphere_potential(sphere.frame())
    dens = lipid_density(params, sphere, phi, pool)
    rep.add(CheckResult.compare("lipid/conservation", lipid_conservation(dens), pool, 1e-10))
    shifted = lipid_density(params, sphere, phi + 3.7, pool)
    rep.add(CheckResult.bound("lipid/gauge-invariance",
                              np.max(np.abs(shifted.values - dens.values)) / np.max(np.abs(dens.values)),
                              1e-12))
    norms = []
    for n in resolutions:
        s = geo.Sphere(resolution=(n, n))
        p = _sphere_potential(s.frame())
        rho = lipid_density(params, s, p, pool).values
        norms.append(residual_norm(s, electrodiffusion_residual(params, s, rho, p)))
    order = float(np.log2(norms[-2] / norms[-1]))
    rep.add(CheckResult.at_least("lipid/electrodiffusion-order", order, 1.9,
                                 note="residual norms " + ", ".join(f"{v:.3e}" for v in norms)))
    s = geo.Sphere(resolution=(y1_resolution, y1_resolution))
    y1 = s.frame().r[..., 2]
    lap = geo.surface_div_flux(s, params.diffusion, y1)
    quotient = geo.closed_surface_integral(s, y1 * lap) / geo.closed_surface_integral(s, y1 * y1)
    rep.add(CheckResult.compare("lipid/Y1-eigenvalue", quotient, -2 * params.diffusion, 1e-4, metric="rel"))
    rep.runtime = time.perf_counter() - t0
    return rep


def bending_suite(K_C: float = 1.3, K_G: float = -0.7, resolution: int = 128) -> VerificationReport:
    t0 = time.perf_counter()
    rep = VerificationReport()
    res = (resolution, resolution)
    rep.add(CheckResult.compare("bending/unit-sphere",
                                bending_energy(geo.Sphere(resolution=res), K_C, K_G),
                                8 * np.pi * K_C + 4 * np.pi * K_G, 1e-6, metric="rel"))
    rep.add(CheckResult.bound("bending/torus-gauss-term",
                              abs(bending_energy(geo.Torus(resolution=res), 0.0, 1.0)), 1e-8))
    R = 2.5
    rep.add(CheckResult.bound("bending/matched-spontaneous-curvature",
                              abs(bending_energy(geo.Sphere(radius=R, resolution=res), K_C, 0.0, 2 / R)),
                              1e-10))
    rep.runtime = time.perf_counter() - t0
    return rep


# --------------------------------------------------------------------------
# 1D solver checks
# --------------------------------------------------------------------------

def check_mst_equivalence(solution: PotentialSolution, faces=None, tolerance: float = 1e-10) -> List[CheckResult]:
    """max relative gap of F_paper against F_mst and against F_alt over face nodes."""
    params = solution.params
    faces = faces or list(solution.traces)
    gap_mst, gap_alt = 0.0, 0.0
    for f in faces:
        tr = solution.traces[f]
        fp, fm, fa = force_paper(params, tr), force_mst(params, tr), force_alt(params, tr)
        gap_mst = max(gap_mst, float(np.max(np.abs(fp - fm) / (1 + np.abs(fm)))))
        gap_alt = max(gap_alt, float(np.max(np.abs(fp - fa) / (1 + np.abs(fa)))))
    return [CheckResult.bound("mst/paper-vs-mst", gap_mst, tolerance),
            CheckResult.bound("mst/paper-vs-alt", gap_alt, tolerance)]


def bspline_bump(x, center, half_width):
    """Cubic B-spline with support [center - half_width, center + half_width]."""
    s = 2 * np.abs(np.asarray(x, dtype=float) - center) / half_width
    out = np.where(s < 1, 2 / 3 - s**2 + s**3 / 2, 0.0)
    return np.where((s >= 1) & (s < 2), (2 - s) ** 3 / 6, out)


def random_test_functions(solution: PotentialSolution, n: int, seed: int = 0, margin_cells: int = 2):
    """Seeded B-spline bumps whose support stays >= margin cells off faces and the boundary."""
    rng = np.random.default_rng(seed)
    disc = solution.disc
    x = disc.nodes
    h = np.diff(x)
    blocked = sorted(set(disc.faces.values()) | set(disc.dirichlet))
    out = []
    while len(out) < n:
        i = int(rng.integers(1, x.size - 1))
        width = int(rng.integers(4, 40))
        lo, hi = i - width - margin_cells, i + width + margin_cells
        if lo < 0 or hi >= x.size or any(lo <= b <= hi for b in blocked):
            continue
        half = 0.5 * (x[i + width] - x[i - width])
        out.append(bspline_bump(x, x[i], half))
    return out


def weak_form_residual(solution: PotentialSolution, psi) -> float:
    """Normalized discrete residual of the variational equation against one test function."""
    disc, params = solution.disc, solution.params
    ions = ion_model(params, solution.linear)
    S = surface_sources(disc, params, solution.rho)
    R = residual_vector(disc, ions, solution.phi, S)
    free = disc.free()
    psi = np.where(free, psi, 0.0)
    # magnitude of every term before cancellation: cellwise bilinear form plus nodal terms
    E, phi = disc.stiff, solution.phi
    cell = (psi[:-1] * (E[:, 0] * phi[:-1] + E[:, 1] * phi[1:])
            + psi[1:] * (E[:, 1] * phi[:-1] + E[:, 2] * phi[1:]))
    m = disc.mass
    ionic = np.zeros_like(m)
    solvent = m > 0
    if np.any(solvent):
        ionic[solvent] = m[solvent] * np.abs(ions.prime(phi[solvent]) - disc.k2 * phi[solvent])
    scale = np.sum(np.abs(cell)) + np.sum((np.abs(disc.load) + ionic + np.abs(S)) * np.abs(psi))
    if scale == 0:
        return 0.0
    return float(abs(R @ psi) / scale)


def check_weak_form(solution: PotentialSolution, n_tests: int = 20, seed: int = 0,
                    tolerance: float = 1e-8) -> CheckResult:
    tests = random_test_functions(solution, n_tests, seed)
    worst = max((weak_form_residual(solution, psi) for psi in tests), default=0.0)
    return CheckResult.bound("weak-form/residual", worst, tolerance, note=f"{n_tests} seeded B-spline bumps")


def check_maximizer(solution: PotentialSolution, n_tests: int = 20, seed: int = 0,
                    amplitude: float = 1e-3) -> CheckResult:
    """G(phi + delta) <= G(phi) for seeded compactly supported perturbations."""
    disc, params = solution.disc, solution.params
    G0 = functional_1d(params, disc, solution.phi, solution.linear).G
    worst = -np.inf
    scale = max(np.max(np.abs(solution.phi)), 1e-12)
    for k, psi in enumerate(random_test_functions(solution, n_tests, seed + 1)):
        sign = 1 if k % 2 == 0 else -1
        G1 = functional_1d(params, disc, solution.phi + sign * amplitude * scale * psi, solution.linear).G
        worst = max(worst, G1 - G0)
    tol = 1e-12 * max(abs(G0), 1.0)
    return CheckResult(name="maximizer/G-increase", value=float(worst), reference=0.0,
                       abs_error=max(float(worst), 0.0), rel_error=0.0, tolerance=tol,
                       passed=bool(worst <= tol), note=f"{n_tests} seeded perturbations")


def _face_normal_speed(problem: Problem1D, velocity, face: str, position: float) -> float:
    """V . n at a face (n points into the solvent)."""
    sign = -1.0 if face == "c" else 1.0
    if problem.coord == "planar":
        return sign * float(velocity(np.array([0.0, 0.0, position]))[2])
    return sign * float(velocity(np.array([0.0, 0.0, position]))[2])


def _displacement(problem: Problem1D, velocity, position: float) -> float:
    """Component of V along the coordinate axis at a face (radial or z)."""
    return float(velocity(np.array([0.0, 0.0, position]))[2])


def check_velocity_support(problem: Problem1D, velocity, samples: int = 2001):
    """Reject velocities that move the source region or the outer boundary."""
    geom = problem.geometry
    if problem.coord == "planar":
        ends = (0.0, geom.L)
        for z in ends:
            if abs(_displacement(problem, velocity, z)) > 0:
                raise SupportError(f"velocity is nonzero at the boundary z={z}")
        return
    src = problem.source
    r_f = max((src.support_radius(i) for i in range(src.magnitudes.size)), default=0.0)
    faces = problem.face_positions()
    for name, R in faces.items():
        if R <= r_f:
            raise SupportError(f"face {name} at {R} lies inside the source support radius {r_f}")
    r = np.concatenate([np.linspace(0.0, r_f, samples // 2), [geom.R_outer]])
    pts = np.stack([np.zeros_like(r), np.zeros_like(r), r], -1)
    if np.any(np.abs(velocity(pts)) > 0):
        raise SupportError("velocity support meets the source charges or the outer boundary")


def fd_shape_derivative(problem: Problem1D, velocity, tau: float = 1e-3) -> Dict[str, float]:
    """Central difference of G under face displacement against the force integral."""
    check_velocity_support(problem, velocity)
    base = problem.pinned()
    faces = base.face_positions()
    disp = {f: _displacement(base, velocity, x) for f, x in faces.items()}
    for f, x in faces.items():
        if abs(tau * disp[f]) >= 0.25 * (faces["e"] - faces["c"]):
            raise SupportError(f"tau too large: face {f} would move by {tau * disp[f]:g}")

    def G_at(t):
        moved = base.with_faces(faces["c"] + t * disp["c"], faces["e"] + t * disp["e"])
        sol = moved.solve()
        return electrostatic_energy(moved.params, sol).G

    if all(d == 0 for d in disp.values()):
        fd = 0.0
    else:
        fd = (G_at(tau) - G_at(-tau)) / (2 * tau)
    sol = base.solve()
    forces = {f: force_paper(base.params, sol.traces[f]) for f in sol.traces}
    speeds = {f: _face_normal_speed(base, velocity, f, x) for f, x in faces.items()}
    formula = radial_shape_derivative(forces, faces, speeds, base.coord)
    disc = abs(fd - formula)
    rel = disc / abs(fd) if fd != 0 else (0.0 if disc == 0 else float("inf"))
    return {"fd_value": fd, "formula_value": formula, "discrepancy": disc, "relative": rel}


def linear_convergence(problem: Problem1D, ladder=(512, 1024, 2048, 4096)) -> Dict[str, object]:
    """L-infinity error of the linearized numeric solve against the closed form."""
    errors, runtimes, histories = [], [], []
    for n in ladder:
        geom = replace(problem.geometry, n_cells=n, cells=None)
        t0 = time.perf_counter()
        num = replace(problem, geometry=geom, linear=True).solve()
        runtimes.append(time.perf_counter() - t0)
        exact = solve_linearized_spherical(problem.params, geom, problem.source, problem.bc)
        ref = exact.meta["closed_form"].evaluate(num.nodes)
        errors.append(float(np.max(np.abs(num.phi - ref)) / np.max(np.abs(ref))))
        histories.append(num.residual_history)
    orders = [float(np.log2(a / b)) for a, b in zip(errors[:-1], errors[1:])]
    return {"ladder": list(ladder), "errors": errors, "orders": orders,
            "runtimes": runtimes, "histories": histories}


def newton_tail_ok(history, threshold: float = 1e-3, c: float = 1e4) -> bool:
    """r_{k+1} <= c r_k^2 once r_k < threshold (steps that hit round-off are exempt)."""
    for a, b in zip(history[:-1], history[1:]):
        if a < threshold and b > c * a * a and b > 1e-14:
            return False
    return True


def solver_suite(problem: Problem1D, seed: int = 0, n_tests: int = 20) -> VerificationReport:
    t0 = time.perf_counter()
    rep = VerificationReport(fingerprint=fingerprint(problem), seed=seed)
    sol = problem.solve()
    rep.add(CheckResult.bound("newton/final-residual", sol.residual, 1e-12))
    rep.add(CheckResult.bound("newton/quadratic-tail", 0.0 if newton_tail_ok(sol.residual_history) else 1.0, 0.0))
    for c in check_mst_equivalence(sol):
        rep.add(c)
    rep.add(check_weak_form(sol, n_tests, seed))
    rep.add(check_maximizer(sol, n_tests, seed))
    rep.runtime = time.perf_counter() - t0
    return rep


def run_all(problem: Optional[Problem1D] = None, seed: int = 0, resolution: int = 128) -> VerificationReport:
    """Geometry, volume, lipid and bending suites, plus solver checks when a 1D problem is given."""
    rep = VerificationReport(seed=seed)
    rep.extend(geometry_suite(resolution))
    rep.extend(volume_transform_suite(seed))
    rep.extend(lipid_suite())
    rep.extend(bending_suite(resolution=resolution))
    if problem is not None:
        rep.fingerprint = fingerprint(problem)
        rep.extend(solver_suite(problem, seed))
    return rep


def reference_problem(n_cells: int = 4096, linear: bool = False) -> Problem1D:
    """The reference spherical config: eps_s=80, eps_m=2, 1:1 ions, charged faces, central source."""
    from .params import IonSpecies, SourceCharge
    params = PhysicalParams(beta=1.0, eps_s=80.0, eps_m=2.0,
                            ions=(IonSpecies(1.0, 10.0), IonSpecies(-1.0, 10.0)),
                            lipid_charge=-1.0, lipid_pool=(50.0, 80.0))
    geom = RadialGeometry(R_c=6.0, R_e=10.0, R_outer=30.0, n_cells=n_cells)
    return Problem1D(params, geom, SourceCharge.central(20.0, 0.5), linear=linear)


# --------------------------------------------------------------------------
# 3D against the spherical reference
# --------------------------------------------------------------------------

TRACE_FIELDS = ("phi", "grad_s_n", "grad_m_n", "rho")


def concentric_problem(n_cells: int = 4096) -> Problem1D:
    """Concentric shell with moderate screening (Debye length 6.3), used for the 3D comparison."""
    from .params import IonSpecies, SourceCharge
    params = PhysicalParams(beta=1.0, eps_s=80.0, eps_m=2.0,
                            ions=(IonSpecies(1.0, 1.0), IonSpecies(-1.0, 1.0)),
                            lipid_charge=-1.0, lipid_pool=(10.0, 15.0))
    geom = RadialGeometry(R_c=6.0, R_e=10.0, R_outer=30.0, n_cells=n_cells)
    return Problem1D(params, geom, SourceCharge.central(5.0, 0.5))


def concentric_comparison(problem: Problem1D, n: int, half_width: float = 12.0,
                          reference_cells: int = 16384, quadrature: int = 32) -> Dict[str, object]:
    """Solve the concentric shell on an n^3 box and compare with a fine 1D solve.

    The box boundary takes its Dirichlet data from the 1D solution, which is
    solved out to just past the box corners. Errors are L-infinity relative:
    phi over all grid nodes, traces over the quadrature nodes of each face.
    """
    from .params import BoundaryData
    from .solver1d import solve_spherical
    from .solver3d import GridSpec, RegionSdf, assemble_and_solve_3d, extract_traces_3d

    geom = problem.geometry
    outer = 1.01 * np.sqrt(3.0) * half_width
    ref = solve_spherical(problem.params,
                          RadialGeometry(geom.R_c, geom.R_e, outer, n_cells=reference_cells,
                                         protein_radius=geom.protein_radius),
                          problem.source, linear=problem.linear)
    bc = BoundaryData.radial(lambda r: np.interp(r, ref.nodes, ref.phi))
    grid = GridSpec.cube(half_width, n)
    t0 = time.perf_counter()
    sol = assemble_and_solve_3d(problem.params, RegionSdf.concentric(grid, geom.R_c, geom.R_e,
                                                                     geom.protein_radius),
                                problem.source, bc, linear=problem.linear)
    runtime = time.perf_counter() - t0
    r = np.linalg.norm(grid.points(), axis=-1)
    exact = np.interp(r, ref.nodes, ref.phi)
    phi_err = float(np.max(np.abs(sol.phi - exact)) / np.max(np.abs(exact)))
    trace_err = {}
    for face, R in (("c", geom.R_c), ("e", geom.R_e)):
        t3 = extract_traces_3d(sol, geo.Sphere(R, resolution=(quadrature, quadrature)), face)
        t1 = ref.traces[face]
        for k in TRACE_FIELDS:
            b = float(np.squeeze(getattr(t1, k)))
            a = np.asarray(getattr(t3, k), dtype=float)
            trace_err[f"{face}/{k}"] = float(np.max(np.abs(a - b)) / abs(b)) if b != 0 else float(np.max(np.abs(a)))
    return {"n": n, "phi_error": phi_err, "trace_errors": trace_err,
            "max_trace_error": max(trace_err.values()), "runtime": runtime,
            "newton_iterations": sol.iterations, "solution": sol}
