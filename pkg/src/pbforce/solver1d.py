"""Reference Poisson-Boltzmann solvers in spherical and planar symmetry.

Discretization: vertex-centred finite volumes on an interface-fitted mesh.
Each cell lies in one region, so its dielectric coefficient is constant and
the harmonic face mean reduces to that constant. Spherical cells use the
two-point flux 4 pi eps r_k r_{k+1} / h, which is exact for a + b/r, and
the matching hat functions for the source load; the ionic term is lumped.
The discrete system is the gradient of the discrete energy functional, so
Newton iterates on an exactly concave problem.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Dict, Optional

import numpy as np
from scipy.linalg import solve_banded
from scipy.special import erfc, erfcx

from .force import InterfaceTraces
from .lipid import uniform_face_density
from .params import (BoundaryData, ConfigError, PhysicalParams, SourceCharge,
                     debye_kappa_sq, ion_model)


class SolverError(RuntimeError):
    """Newton or fixed-point iteration failed to converge."""


class MeshError(ValueError):
    pass


GAUSS_POINTS = 8
_GL_X, _GL_W = np.polynomial.legendre.leggauss(GAUSS_POINTS)


@dataclass(frozen=True)
class RadialGeometry:
    """Concentric membrane faces at R_c < R_e inside a ball of radius R_outer.

    ``n_cells`` is the number of mesh intervals (nodes = n_cells + 1);
    ``cells`` optionally pins the per-region counts, which keeps the mesh
    topology fixed while faces move. ``grading`` > 1 stretches the outer
    solvent cells geometrically by that overall ratio. ``protein_radius`` > 0 adds a cavity of eps_p around the
    origin; ``membrane=False`` makes the whole ball solvent.
    """

    R_c: float = 6.0
    R_e: float = 10.0
    R_outer: float = 30.0
    n_cells: int = 4096
    grading: float = 1.0
    protein_radius: float = 0.0
    membrane: bool = True
    cells: Optional[tuple] = None

    def __post_init__(self):
        problems = []
        if self.membrane and not (0 < self.R_c < self.R_e < self.R_outer):
            problems.append(
                f"need 0 < R_c < R_e < R_outer, got R_c={self.R_c}, R_e={self.R_e}, R_outer={self.R_outer}"
            )
        if not self.membrane and not self.R_outer > 0:
            problems.append("R_outer must be > 0")
        if self.protein_radius < 0 or (self.membrane and self.protein_radius >= self.R_c):
            problems.append("protein_radius must lie in [0, R_c)")
        if self.n_cells < 8:
            problems.append("n_cells must be >= 8")
        if problems:
            raise ConfigError("; ".join(problems))

    def with_faces(self, R_c: float, R_e: float) -> "RadialGeometry":
        return replace(self, R_c=R_c, R_e=R_e)


@dataclass(frozen=True)
class PlanarGeometry:
    """Slab membrane z_c < z < z_e in the domain [0, L] (per unit area)."""

    z_c: float = 20.0
    z_e: float = 24.0
    L: float = 44.0
    n_cells: int = 4096
    phi_left: float = 0.0
    phi_right: float = 0.0
    membrane: bool = True
    cells: Optional[tuple] = None

    def __post_init__(self):
        if self.membrane and not (0 < self.z_c < self.z_e < self.L):
            raise ConfigError(
                f"need 0 < z_c < z_e < L, got z_c={self.z_c}, z_e={self.z_e}, L={self.L}"
            )
        if self.n_cells < 8:
            raise ConfigError("n_cells must be >= 8")

    def with_faces(self, z_c: float, z_e: float) -> "PlanarGeometry":
        return replace(self, z_c=z_c, z_e=z_e)


# --------------------------------------------------------------------------
# mesh and discrete operator
# --------------------------------------------------------------------------

def _allocate(lengths, n_cells, minimum=4):
    lengths = np.asarray(lengths, dtype=float)
    raw = n_cells * lengths / lengths.sum()
    counts = np.maximum(np.floor(raw).astype(int), minimum)
    while counts.sum() < n_cells:
        counts[np.argmax(raw - counts)] += 1
    while counts.sum() > n_cells:
        counts[np.argmax(counts - raw)] -= 1
    return counts


def fitted_mesh(breaks, n_cells, last_grading=1.0, counts=None):
    """Nodes covering [breaks[0], breaks[-1]] with a node on every break."""
    breaks = np.asarray(breaks, dtype=float)
    if counts is None:
        counts = _allocate(np.diff(breaks), n_cells)
    else:
        counts = np.asarray(counts, dtype=int)
        if counts.size != breaks.size - 1 or np.any(counts < 1):
            raise MeshError(f"cells {tuple(counts)} do not match {breaks.size - 1} regions")
    pieces = []
    for k, (a, b, m) in enumerate(zip(breaks[:-1], breaks[1:], counts)):
        if k == len(counts) - 1 and last_grading != 1.0:
            q = last_grading ** (1.0 / (m - 1))
            steps = q ** np.arange(m)
            x = a + (b - a) * np.concatenate([[0.0], np.cumsum(steps)]) / steps.sum()
        else:
            x = np.linspace(a, b, m + 1)
        pieces.append(x if k == 0 else x[1:])
    nodes = np.concatenate(pieces)
    nodes[-1] = breaks[-1]
    return nodes, counts


@dataclass
class Discretization:
    """Assembled 1D operator: element matrices, hat integrals and face data.

    Element matrices are stored per cell as (LL, LR, RR) entries. ``stiff``
    holds the field part plus the linear ionic part k2 phi absorbed by the
    exponentially fitted solvent basis; ``field`` is the field part alone.
    """

    coord: str                      # "spherical" | "planar"
    nodes: np.ndarray
    regions: np.ndarray             # per cell: 's', 'm', 'p'
    eps_cell: np.ndarray
    stiff: np.ndarray               # (n_cells, 3)
    field: np.ndarray               # (n_cells, 3)
    k2: float                       # linear ionic coefficient absorbed into ``stiff``
    load_left: np.ndarray           # per cell: source integral against the left hat
    load_right: np.ndarray
    mass_left: np.ndarray           # per cell: solvent measure against the left hat
    mass_right: np.ndarray
    faces: Dict[str, int]           # face name -> node index
    face_sign: Dict[str, float]     # n . e_r (or e_z) at the face
    dirichlet: Dict[int, float]     # node -> value

    @property
    def n_nodes(self):
        return self.nodes.size

    @property
    def load(self):
        F = np.zeros(self.n_nodes)
        F[:-1] += self.load_left
        F[1:] += self.load_right
        return F

    @property
    def mass(self):
        m = np.zeros(self.n_nodes)
        m[:-1] += self.mass_left
        m[1:] += self.mass_right
        return m

    def apply(self, phi, which="stiff"):
        """Matrix-vector product with the assembled element matrices."""
        E = self.stiff if which == "stiff" else self.field
        left, right = phi[:-1], phi[1:]
        out = np.zeros_like(phi)
        out[:-1] += E[:, 0] * left + E[:, 1] * right
        out[1:] += E[:, 1] * left + E[:, 2] * right
        return out

    def quadratic(self, phi, which="stiff"):
        return float(phi @ self.apply(phi, which))

    def element_action(self, phi):
        """(K_e phi_e) at the left and right node of every cell."""
        E = self.stiff
        left, right = phi[:-1], phi[1:]
        return E[:, 0] * left + E[:, 1] * right, E[:, 1] * left + E[:, 2] * right

    def face_area(self, face: str) -> float:
        if self.coord == "planar":
            return 1.0
        r = self.nodes[self.faces[face]]
        return 4 * np.pi * r * r

    def free(self):
        mask = np.ones(self.n_nodes, bool)
        mask[list(self.dirichlet)] = False
        return mask


def _cell_basis(coord, a, b, kappa, x):
    """Left/right hats and their derivatives at points x (n_cells, q).

    Spherical cells use a + b/r hats (even hats in r^2 at the origin), or r psi in span{sinh, cosh}(kappa r)
    where kappa > 0; planar cells use linear or sinh hats. The cell touching
    touching the origin must be passed kappa = 0.
    """
    a2, b2 = a[:, None], b[:, None]
    h = b2 - a2
    k = np.broadcast_to(np.asarray(kappa, dtype=float), a.shape)[:, None]
    fitted = k > 0
    ks = np.where(fitted, k, 1.0)
    S = np.sinh(ks * h)
    if coord == "planar":
        lin_l, dlin_l = (b2 - x) / h, -1.0 / h + 0 * x
        ex_l = np.sinh(ks * (b2 - x)) / S
        dex_l = -ks * np.cosh(ks * (b2 - x)) / S
        ex_r = np.sinh(ks * (x - a2)) / S
        dex_r = ks * np.cosh(ks * (x - a2)) / S
        psi_l = np.where(fitted, ex_l, lin_l)
        dpsi_l = np.where(fitted, dex_l, dlin_l)
        psi_r = np.where(fitted, ex_r, 1 - lin_l)
        dpsi_r = np.where(fitted, dex_r, -dlin_l)
        return psi_l, psi_r, dpsi_l, dpsi_r
    origin = (a2 == 0)
    # harmonic hats (a + b/r), linear in the origin cell
    with np.errstate(divide="ignore", invalid="ignore"):
        har_l = a2 * (b2 - x) / (x * h)
        dhar_l = -a2 * b2 / (h * x * x)
    # even hats 1 - (r/b)^2 at the origin: regular, and exact for phi0 + c r^2
    har_l = np.where(origin, 1 - (x / b2) ** 2, har_l)
    dhar_l = np.where(origin, -2 * x / b2**2, dhar_l)
    har_r, dhar_r = 1 - har_l, -dhar_l
    # fitted hats: r psi is a combination of sinh(kappa (r - a)), sinh(kappa (b - r))
    sl, cl = np.sinh(ks * (b2 - x)), np.cosh(ks * (b2 - x))
    sr, cr = np.sinh(ks * (x - a2)), np.cosh(ks * (x - a2))
    ex_l = a2 * sl / (x * S)
    dex_l = a2 / S * (-ks * cl / x - sl / x**2)
    ex_r = b2 * sr / (x * S)
    dex_r = b2 / S * (ks * cr / x - sr / x**2)
    psi_l = np.where(fitted, ex_l, har_l)
    psi_r = np.where(fitted, ex_r, har_r)
    dpsi_l = np.where(fitted, dex_l, dhar_l)
    dpsi_r = np.where(fitted, dex_r, dhar_r)
    return psi_l, psi_r, dpsi_l, dpsi_r


def _assemble(coord, nodes, regions, eps_cell, k2, density):
    """Element matrices and load/mass hat integrals by cellwise Gauss-Legendre."""
    a, b = nodes[:-1], nodes[1:]
    xm, xh = 0.5 * (a + b), 0.5 * (b - a)
    x = xm[:, None] + xh[:, None] * _GL_X[None, :]
    w = xh[:, None] * _GL_W[None, :]
    if coord == "spherical":
        w = w * 4 * np.pi * x**2
    solvent = regions == "s"
    kappa = np.where(solvent & (k2 > 0), np.sqrt(k2 / eps_cell), 0.0)
    # no regular homogeneous solution vanishes at the origin: plain hats there
    kappa[a == 0] = 0.0
    pl, pr, dl, dr = _cell_basis(coord, a, b, kappa, x)
    eps = eps_cell[:, None]
    field = np.stack([np.sum(w * eps * dl * dl, 1), np.sum(w * eps * dl * dr, 1),
                      np.sum(w * eps * dr * dr, 1)], axis=1)
    react = np.where(solvent, k2, 0.0)[:, None] * np.stack(
        [np.sum(w * pl * pl, 1), np.sum(w * pl * pr, 1), np.sum(w * pr * pr, 1)], axis=1)
    f = density(x)
    load_l, load_r = np.sum(w * f * pl, 1), np.sum(w * f * pr, 1)
    # lumped solvent measure uses the plain hats so it stays positive
    hl, hr, _, _ = _cell_basis(coord, a, b, 0.0, x)
    mass_l = np.sum(w * hl, 1) * solvent
    mass_r = np.sum(w * hr, 1) * solvent
    return field + react, field, load_l, load_r, mass_l, mass_r


def _radial_density(source: SourceCharge):
    if source.magnitudes.size == 0:
        return lambda r: np.zeros_like(r)
    if not source.is_centered():
        raise ConfigError("spherical solver needs every source charge at the origin")
    mags, widths = source.magnitudes, source.widths

    def f(r):
        out = np.zeros_like(r)
        for q, s in zip(mags, widths):
            out += q * (2 * np.pi * s * s) ** -1.5 * np.exp(-r * r / (2 * s * s))
        return out

    return f


def _linear_coefficient(params, fitted):
    return debye_kappa_sq(params) if fitted else 0.0


def discretize_spherical(params: PhysicalParams, geom: RadialGeometry,
                         source: SourceCharge, bc: BoundaryData,
                         fitted: bool = True) -> Discretization:
    breaks, tags = [0.0], []
    if geom.protein_radius > 0:
        breaks.append(geom.protein_radius)
        tags.append("p")
    if geom.membrane:
        breaks += [geom.R_c, geom.R_e, geom.R_outer]
        tags += ["s", "m", "s"]
    else:
        breaks.append(geom.R_outer)
        tags.append("s")
    nodes, counts = fitted_mesh(breaks, geom.n_cells, geom.grading, geom.cells)
    regions = np.repeat(np.array(tags), counts)
    eps_cell = np.array([params.eps(t) for t in regions])
    k2 = _linear_coefficient(params, fitted)
    parts = _assemble("spherical", nodes, regions, eps_cell, k2, _radial_density(source))
    faces, sign = {}, {}
    if geom.membrane:
        faces = {"c": int(np.argmin(np.abs(nodes - geom.R_c))),
                 "e": int(np.argmin(np.abs(nodes - geom.R_e)))}
        sign = {"c": -1.0, "e": 1.0}
        for k, idx in faces.items():
            if abs(nodes[idx] - (geom.R_c if k == "c" else geom.R_e)) > 1e-12 * geom.R_outer:
                raise MeshError(f"mesh not fitted to face {k}")
    g_out = float(bc(np.array([0.0, 0.0, geom.R_outer])))
    return Discretization("spherical", nodes, regions, eps_cell, parts[0], parts[1], k2,
                          *parts[2:], faces, sign, {nodes.size - 1: g_out})


def discretize_planar(params: PhysicalParams, geom: PlanarGeometry,
                      bc: Optional[BoundaryData] = None, fitted: bool = True) -> Discretization:
    if geom.membrane:
        breaks, tags = [0.0, geom.z_c, geom.z_e, geom.L], ["s", "m", "s"]
    else:
        breaks, tags = [0.0, geom.L], ["s"]
    nodes, counts = fitted_mesh(breaks, geom.n_cells, counts=geom.cells)
    regions = np.repeat(np.array(tags), counts)
    eps_cell = np.array([params.eps(t) for t in regions])
    k2 = _linear_coefficient(params, fitted)
    parts = _assemble("planar", nodes, regions, eps_cell, k2, lambda x: np.zeros_like(x))
    faces, sign = {}, {}
    if geom.membrane:
        faces = {"c": int(np.argmin(np.abs(nodes - geom.z_c))),
                 "e": int(np.argmin(np.abs(nodes - geom.z_e)))}
        sign = {"c": -1.0, "e": 1.0}
    if bc is not None:
        left = float(bc(np.array([0.0, 0.0, 0.0])))
        right = float(bc(np.array([0.0, 0.0, geom.L])))
    else:
        left, right = geom.phi_left, geom.phi_right
    return Discretization("planar", nodes, regions, eps_cell, parts[0], parts[1], k2,
                          *parts[2:], faces, sign, {0: left, nodes.size - 1: right})


# --------------------------------------------------------------------------
# solution record
# --------------------------------------------------------------------------

@dataclass
class PotentialSolution:
    nodes: np.ndarray
    phi: np.ndarray
    regions: np.ndarray
    traces: Dict[str, InterfaceTraces]
    iterations: int
    residual: float
    residual_history: list
    rho: Dict[str, float]
    params: PhysicalParams
    disc: Optional[Discretization] = None
    linear: bool = False
    fixed_point_iterations: int = 0
    converged: bool = True
    meta: dict = field(default_factory=dict)

    @property
    def coord(self):
        return self.disc.coord if self.disc is not None else self.meta.get("coord", "spherical")

    def face_radius(self, face: str) -> float:
        return float(self.nodes[self.disc.faces[face]])


# --------------------------------------------------------------------------
# residual, Jacobian and Newton
# --------------------------------------------------------------------------

def surface_sources(disc: Discretization, params: PhysicalParams, rho: Dict[str, float]):
    S = np.zeros(disc.n_nodes)
    for face, idx in disc.faces.items():
        S[idx] += params.lipid_charge * rho[face] * disc.face_area(face)
    return S


def ionic_remainder(disc: Discretization, ions, phi):
    """B'(phi) - k2 phi on solvent nodes (the part not absorbed by the element matrices)."""
    out = np.zeros_like(phi)
    solvent = disc.mass > 0
    if np.any(solvent):
        out[solvent] = ions.prime(phi[solvent]) - disc.k2 * phi[solvent]
    return out


def residual_vector(disc: Discretization, ions, phi, S):
    """dG/dphi_i: -K phi - m (B'(phi) - k2 phi) + F + S (zero at the discrete solution)."""
    return -disc.apply(phi) - disc.mass * ionic_remainder(disc, ions, phi) + disc.load + S


def _jacobian_bands(disc: Discretization, ions, phi):
    E = disc.stiff
    diag = np.zeros_like(phi)
    diag[:-1] -= E[:, 0]
    diag[1:] -= E[:, 2]
    m = disc.mass
    solvent = m > 0
    if np.any(solvent):
        diag[solvent] -= m[solvent] * (ions.second(phi[solvent]) - disc.k2)
    upper = np.concatenate([[0.0], -E[:, 1]])
    lower = np.concatenate([-E[:, 1], [0.0]])
    return upper, diag, lower


_PHI_FLOOR = 1e-150


def _scaled_norm(R, diag, free, phi):
    """max |R_i / J_ii| relative to max(|phi|, that same correction size).

    Potentials below ``_PHI_FLOOR`` count as zero, so solves driven by
    vanishing charges stop before sinking into subnormal arithmetic.
    """
    if not np.any(free):
        return 0.0
    r = np.max(np.abs(R[free] / diag[free]))
    if r == 0.0:
        return 0.0
    return float(r / max(np.max(np.abs(phi)), r, _PHI_FLOOR))


def newton(disc: Discretization, ions, S, phi0=None, tol=1e-12, max_iter=60):
    """Damped Newton on the tridiagonal system; returns phi, residual history, iterations."""
    phi = np.zeros(disc.n_nodes) if phi0 is None else phi0.copy()
    free = disc.free()
    for idx, val in disc.dirichlet.items():
        phi[idx] = val
    history = []
    for it in range(max_iter + 1):
        R = residual_vector(disc, ions, phi, S)
        R[~free] = 0.0
        upper, diag, lower = _jacobian_bands(disc, ions, phi)
        res = _scaled_norm(R, diag, free, phi)
        history.append(res)
        if res <= tol:
            return phi, history, it
        ab = np.vstack([upper, diag, lower])
        for idx in disc.dirichlet:
            ab[1, idx] = 1.0
            if idx + 1 < phi.size:
                ab[0, idx + 1] = 0.0
            if idx - 1 >= 0:
                ab[2, idx - 1] = 0.0
        step = solve_banded((1, 1), ab, -R)
        step[~free] = 0.0
        # backtracking on the residual 2-norm guards the first steps of strongly nonlinear solves
        base = np.linalg.norm(R[free])
        lam = 1.0
        while True:
            trial = phi + lam * step
            if res < 1e-6:
                break  # inside the quadratic basin: take full steps
            try:
                Rt = residual_vector(disc, ions, trial, S)
                ok = np.linalg.norm(Rt[free]) < base
            except ArithmeticError:
                ok = False
            if ok or lam < 1e-6:
                break
            lam *= 0.5
        phi = trial
    raise SolverError(f"Newton did not converge in {max_iter} iterations (last residual {history[-1]:.3e})")


def _traces_from_balance(disc: Discretization, ions, phi, params: PhysicalParams, rho) -> Dict[str, InterfaceTraces]:
    """One-sided normal derivatives from half-cell flux balances.

    The flux through a face node from each adjacent cell is that cell's
    share of the node residual, so the two traces obey the discrete jump
    condition to solver tolerance.
    """
    out = {}
    act_l, act_r = disc.element_action(phi)
    rem = ionic_remainder(disc, ions, phi)
    for face, i in disc.faces.items():
        area = disc.face_area(face)
        # outward (increasing r or z) flux of eps grad(phi) * area on each side
        q_left = -act_r[i - 1] + disc.load_right[i - 1] - disc.mass_right[i - 1] * rem[i]
        q_right = act_l[i] - disc.load_left[i] + disc.mass_left[i] * rem[i]
        d_left = -q_left / (area * disc.eps_cell[i - 1])
        d_right = -q_right / (area * disc.eps_cell[i])
        if disc.face_sign[face] > 0:   # solvent outside (right)
            gs, gm = d_right, d_left
        else:                          # solvent inside (left), n = -e_r
            gs, gm = -d_left, -d_right
        jump = params.eps_s * gs - params.eps_m * gm + params.lipid_charge * rho[face]
        out[face] = InterfaceTraces(
            phi=np.array(phi[i]), grad_s_n=np.array(gs), grad_m_n=np.array(gm),
            tangential=np.zeros(3), rho=np.array(rho[face]), face=face,
            jump_residual=float(abs(jump)),
        )
    return out


def _face_rho(disc: Discretization, params: PhysicalParams, phi) -> Dict[str, float]:
    rho = {}
    if params.shared_pool and disc.faces:
        # one pool C_c + C_e split by the Boltzmann weights of the two faces
        total = sum(params.lipid_pool)
        kind = params.gamma_kind
        w = {f: disc.face_area(f) * float(kind.gamma(phi[i], params.lipid_charge, params.beta))
             for f, i in disc.faces.items()}
        norm = sum(w.values())
        for f in disc.faces:
            rho[f] = total * (w[f] / norm) / disc.face_area(f)
        return rho
    for f, i in disc.faces.items():
        rho[f] = uniform_face_density(params, params.pool(f), disc.face_area(f), float(phi[i]))
    return rho


def solve_discretization(disc: Discretization, params: PhysicalParams, linear: bool = False,
                         tol: float = 1e-12, rho_tol: float = 1e-10, damping: float = 0.5,
                         max_iter: int = 60, max_fixed_point: int = 200) -> PotentialSolution:
    ions = ion_model(params, linear)
    phi = np.zeros(disc.n_nodes)
    rho = _face_rho(disc, params, phi)
    history_all = []
    total_newton = 0
    for k in range(1, max_fixed_point + 1):
        S = surface_sources(disc, params, rho)
        phi, history, its = newton(disc, ions, S, phi, tol=tol, max_iter=max_iter)
        history_all = history
        total_newton += its
        target = _face_rho(disc, params, phi)
        delta = max((abs(target[f] - rho[f]) for f in rho), default=0.0)
        if delta <= rho_tol:
            break
        rho = {f: (1 - damping) * rho[f] + damping * target[f] for f in rho}
    else:
        raise SolverError(f"lipid density fixed point stagnated (last change {delta:.3e})")
    traces = _traces_from_balance(disc, ions, phi, params, rho)
    return PotentialSolution(
        nodes=disc.nodes, phi=phi, regions=disc.regions, traces=traces,
        iterations=total_newton, residual=history_all[-1], residual_history=history_all,
        rho=rho, params=params, disc=disc, linear=linear, fixed_point_iterations=k,
        meta={"coord": disc.coord},
    )


def solve_spherical(params: PhysicalParams, geometry: RadialGeometry, source: SourceCharge,
                    bc: Optional[BoundaryData] = None, linear: bool = False, **kw) -> PotentialSolution:
    """Solve the spherically symmetric PB problem with charged membrane faces."""
    bc = bc or BoundaryData()
    disc = discretize_spherical(params, geometry, source, bc)
    sol = solve_discretization(disc, params, linear=linear, **kw)
    sol.meta.update(geometry=geometry, source=source)
    return sol


def solve_planar(params: PhysicalParams, geometry: PlanarGeometry,
                 bc: Optional[BoundaryData] = None, linear: bool = False, **kw) -> PotentialSolution:
    """Solve the slab PB problem per unit area."""
    disc = discretize_planar(params, geometry, bc)
    sol = solve_discretization(disc, params, linear=linear, **kw)
    sol.meta.update(geometry=geometry)
    return sol


# --------------------------------------------------------------------------
# one-sided finite-difference traces
# --------------------------------------------------------------------------

def extract_traces(solution: PotentialSolution, face: str) -> InterfaceTraces:
    """Second-order one-sided difference traces at a face, with the jump residual."""
    disc = solution.disc
    i = disc.faces[face]
    x, phi = solution.nodes, solution.phi
    regions = disc.regions
    # nodes strictly on each side, same region as the adjacent cell
    left = [i]
    j = i - 1
    while j >= 0 and len(left) < 3 and regions[j] == regions[i - 1]:
        left.append(j)
        j -= 1
    right = [i]
    j = i + 1
    while j < x.size and len(right) < 3 and regions[j - 1] == regions[i]:
        right.append(j)
        j += 1
    if len(left) < 3 or len(right) < 3:
        raise MeshError(f"fewer than 3 nodes on one side of face {face}")

    def one_sided(idx):
        xs, fs = x[idx], phi[idx]
        # derivative at xs[0] of the quadratic through three points
        x0, x1, x2 = xs
        w1 = (x0 - x2) / ((x1 - x0) * (x1 - x2))
        w2 = (x0 - x1) / ((x2 - x0) * (x2 - x1))
        w0 = -(w1 + w2)
        return w0 * fs[0] + w1 * fs[1] + w2 * fs[2]

    d_left, d_right = one_sided(left), one_sided(right)
    if disc.face_sign[face] > 0:
        gs, gm = d_right, d_left
    else:
        gs, gm = -d_left, -d_right
    p = solution.params
    rho = solution.rho[face]
    jump = p.eps_s * gs - p.eps_m * gm + p.lipid_charge * rho
    return InterfaceTraces(phi=np.array(phi[i]), grad_s_n=np.array(gs), grad_m_n=np.array(gm),
                           tangential=np.zeros(3), rho=np.array(rho), face=face,
                           jump_residual=float(abs(jump)))


# --------------------------------------------------------------------------
# closed-form linearized oracle
# --------------------------------------------------------------------------

def screened_gaussian(r, charge, width, eps, kappa):
    """Potential of a Gaussian charge in an unbounded screened medium, and d/dr.

    Solves eps (phi'' + 2 phi'/r) - eps kappa^2 phi = -f with
    f = Q (2 pi s^2)^{-3/2} exp(-r^2 / 2 s^2).
    """
    r = np.asarray(r, dtype=float)
    s = width
    pref = charge / (4 * np.pi * eps)
    g = np.exp(-r * r / (2 * s * s))
    a = (kappa * s * s + r) / (math.sqrt(2) * s)
    b = (kappa * s * s - r) / (math.sqrt(2) * s)
    # e^{k^2 s^2/2 + kr} erfc(a) and e^{k^2 s^2/2 - kr} erfc(b), overflow-safe
    plus = erfcx(a) * g
    with np.errstate(over="ignore"):
        minus = np.where(b >= 0, erfcx(np.maximum(b, 0)) * g,
                         np.exp(0.5 * (kappa * s) ** 2 - kappa * r) * erfc(b))
    small = r < 1e-6 * s
    rs = np.where(small, 1.0, r)
    phi = pref * 0.5 * (minus - plus) / rs
    c = kappa * s / math.sqrt(2)
    phi0 = pref * (2 / (math.sqrt(2 * np.pi) * s) - kappa * erfcx(c))
    phi = np.where(small, phi0, phi)
    dh = -kappa * (minus + plus) + 4 / (math.sqrt(2 * np.pi) * s) * g
    dphi = np.where(small, 0.0, -phi / rs + pref * 0.5 * dh / rs)
    return phi, dphi


@dataclass
class LinearizedSpherical:
    """Piecewise closed form: coefficients and evaluation helpers."""

    params: PhysicalParams
    geometry: RadialGeometry
    source: SourceCharge
    kappa: float
    shift: float
    coef: np.ndarray
    sigma: Dict[str, float]
    rho: Dict[str, float]
    g_outer: float

    def _basis_solvent(self, r, region):
        k = self.kappa
        r = np.asarray(r, dtype=float)
        if region == "inner":
            if k > 0:
                kr = k * r
                small = kr < 1e-8
                krs = np.where(small, 1.0, kr)
                i0 = np.where(small, 1.0, np.sinh(krs) / krs)
                di0 = np.where(small, 0.0, k * (np.cosh(krs) / krs - np.sinh(krs) / krs**2))
            else:
                i0, di0 = np.ones_like(r), np.zeros_like(r)
            with np.errstate(divide="ignore"):
                if k > 0:
                    k0 = np.exp(-k * r) / r
                    dk0 = -k0 * (k + 1 / r)
                else:
                    k0, dk0 = 1 / r, -1 / r**2
            return (i0, k0), (di0, dk0)
        Re, Ro = self.geometry.R_e if self.geometry.membrane else 0.0, self.geometry.R_outer
        if k > 0:
            f1 = np.exp(-k * (r - Re)) / r
            f2 = np.exp(k * (r - Ro)) / r
            return (f1, f2), (-f1 * (k + 1 / r), f2 * (k - 1 / r))
        return (1 / r, np.ones_like(r)), (-1 / r**2, np.zeros_like(r))

    def _particular(self, r):
        phi = np.zeros_like(np.asarray(r, dtype=float)) + self.shift
        dphi = np.zeros_like(phi)
        for q, s in zip(self.source.magnitudes, self.source.widths):
            p, dp = screened_gaussian(r, q, s, self.params.eps_s, self.kappa)
            phi = phi + p
            dphi = dphi + dp
        return phi, dphi

    def evaluate(self, r, derivative=False):
        r = np.asarray(r, dtype=float)
        A, A2, a, b, C, D = self.coef
        geom = self.geometry
        phi = np.empty_like(r)
        dphi = np.empty_like(r)
        if geom.membrane:
            inner = r <= geom.R_c
            mem = (r > geom.R_c) & (r < geom.R_e)
            outer = r >= geom.R_e
        else:
            inner = np.ones_like(r, bool)
            mem = outer = np.zeros_like(r, bool)
        if np.any(inner):
            ri = r[inner]
            (i0, _), (di0, _) = self._basis_solvent(ri, "inner")
            p, dp = self._particular(ri)
            phi[inner] = p + A * i0
            dphi[inner] = dp + A * di0
        if np.any(mem):
            rm = r[mem]
            phi[mem] = a + b / rm
            dphi[mem] = -b / rm**2
        if np.any(outer):
            ro = r[outer]
            (f1, f2), (d1, d2) = self._basis_solvent(ro, "outer")
            phi[outer] = C * f1 + D * f2 + self.shift
            dphi[outer] = C * d1 + D * d2
        return (phi, dphi) if derivative else phi


def solve_linearized_spherical(params: PhysicalParams, geometry: RadialGeometry,
                               source: SourceCharge, bc: Optional[BoundaryData] = None,
                               n_nodes: Optional[int] = None) -> PotentialSolution:
    """Closed-form solution with B'(phi) replaced by B'(0) + B''(0) phi.

    Screened Gaussian plus homogeneous terms in solvent, a + b/r in the
    membrane; the six coefficients come from regularity, two continuity
    rows, two flux-jump rows and the outer Dirichlet row.
    """
    if geometry.protein_radius > 0:
        raise ConfigError("the closed form covers the cavity-free layout only")
    if not source.is_centered():
        raise ConfigError("closed form needs a centred source")
    bc = bc or BoundaryData()
    k2 = debye_kappa_sq(params)
    offset = float(ion_model(params, True).offset)
    kappa = math.sqrt(k2 / params.eps_s)
    shift = -offset / k2 if k2 > 0 else 0.0
    g_out = float(bc(np.array([0.0, 0.0, geometry.R_outer])))
    rho, sigma = {}, {}
    if geometry.membrane:
        for face, R in (("c", geometry.R_c), ("e", geometry.R_e)):
            area = 4 * np.pi * R * R
            rho[face] = uniform_face_density(params, params.pool(face), area, 0.0)
            sigma[face] = params.lipid_charge * rho[face]
    sol = LinearizedSpherical(params, geometry, source, kappa, shift, np.zeros(6), sigma, rho, g_out)
    es, em = params.eps_s, params.eps_m
    M = np.zeros((6, 6))
    rhs = np.zeros(6)
    M[0, 1] = 1.0  # regularity: no singular homogeneous part at the origin
    if geometry.membrane:
        Rc, Re, Ro = geometry.R_c, geometry.R_e, geometry.R_outer
        (i0, _), (di0, _) = sol._basis_solvent(np.array(Rc), "inner")
        p, dp = sol._particular(np.array(Rc))
        # continuity at R_c
        M[1, [0, 2, 3]] = [i0, -1.0, -1.0 / Rc]
        rhs[1] = -p
        # eps_s phi_s' - eps_m phi_m' = sigma_c at R_c (n = -e_r)
        M[2, [0, 3]] = [es * di0, em / Rc**2]
        rhs[2] = sigma["c"] - es * dp
        (f1, f2), (d1, d2) = sol._basis_solvent(np.array(Re), "outer")
        M[3, [2, 3, 4, 5]] = [1.0, 1.0 / Re, -f1, -f2]
        rhs[3] = shift
        # eps_s phi_s' - eps_m phi_m' = -sigma_e at R_e (n = +e_r)
        M[4, [3, 4, 5]] = [em / Re**2, es * d1, es * d2]
        rhs[4] = -sigma["e"]
        (f1, f2), _ = sol._basis_solvent(np.array(Ro), "outer")
        M[5, [4, 5]] = [f1, f2]
        rhs[5] = g_out - shift
    else:
        Ro = geometry.R_outer
        (i0, _), _ = sol._basis_solvent(np.array(Ro), "inner")
        p, _ = sol._particular(np.array(Ro))
        M[1, 0] = i0
        rhs[1] = g_out - p
        for row, col in ((2, 2), (3, 3), (4, 4), (5, 5)):
            M[row, col] = 1.0
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > 1e14:
        raise ConfigError(f"singular matching system (condition {cond:.3e})")
    sol.coef = np.linalg.solve(M, rhs)

    n = n_nodes or geometry.n_cells
    nodes, counts = fitted_mesh(
        [0.0] + ([geometry.R_c, geometry.R_e] if geometry.membrane else []) + [geometry.R_outer],
        n, geometry.grading, geometry.cells if n_nodes is None else None)
    tags = ["s", "m", "s"] if geometry.membrane else ["s"]
    phi = sol.evaluate(nodes)
    traces = {}
    if geometry.membrane:
        for face, R, sgn in (("c", geometry.R_c, -1.0), ("e", geometry.R_e, 1.0)):
            _, d_in = sol.evaluate(np.array([R * (1 - 1e-15)]), derivative=True)
            # one-sided limits straight from the piecewise formulas
            if face == "c":
                (i0, _), (di0, _) = sol._basis_solvent(np.array(R), "inner")
                _, dp = sol._particular(np.array(R))
                d_s = float(dp + sol.coef[0] * di0)
                d_m = float(-sol.coef[3] / R**2)
                gs, gm = -d_s, -d_m
            else:
                _, (d1, d2) = sol._basis_solvent(np.array(R), "outer")
                d_s = float(sol.coef[4] * d1 + sol.coef[5] * d2)
                d_m = float(-sol.coef[3] / R**2)
                gs, gm = d_s, d_m
            phi_face = float(sol.evaluate(np.array([R]))[0])
            jump = es * gs - em * gm + params.lipid_charge * rho[face]
            traces[face] = InterfaceTraces(phi=np.array(phi_face), grad_s_n=np.array(gs),
                                           grad_m_n=np.array(gm), tangential=np.zeros(3),
                                           rho=np.array(rho[face]), face=face,
                                           jump_residual=float(abs(jump)))
    return PotentialSolution(
        nodes=nodes, phi=phi, regions=np.repeat(np.array(tags), counts), traces=traces,
        iterations=0, residual=0.0, residual_history=[0.0], rho=rho, params=params,
        disc=None, linear=True, meta={"coord": "spherical", "closed_form": sol,
                                       "geometry": geometry, "source": source},
    )


# --------------------------------------------------------------------------
# problem bundle
# --------------------------------------------------------------------------

def region_counts(regions) -> tuple:
    """Run lengths of the per-cell region tags."""
    regions = np.asarray(regions)
    cuts = np.flatnonzero(regions[1:] != regions[:-1]) + 1
    return tuple(int(n) for n in np.diff(np.concatenate([[0], cuts, [regions.size]])))


@dataclass(frozen=True)
class Problem1D:
    """Everything a 1D solve needs, so checks can re-solve at moved faces."""

    params: PhysicalParams
    geometry: object
    source: SourceCharge = field(default_factory=SourceCharge.none)
    bc: BoundaryData = field(default_factory=BoundaryData)
    linear: bool = False

    @property
    def coord(self) -> str:
        return "planar" if isinstance(self.geometry, PlanarGeometry) else "spherical"

    def face_positions(self) -> Dict[str, float]:
        g = self.geometry
        if not g.membrane:
            return {}
        if self.coord == "planar":
            return {"c": g.z_c, "e": g.z_e}
        return {"c": g.R_c, "e": g.R_e}

    def solve(self, **kw) -> PotentialSolution:
        if self.coord == "planar":
            return solve_planar(self.params, self.geometry, self.bc, linear=self.linear, **kw)
        return solve_spherical(self.params, self.geometry, self.source, self.bc,
                               linear=self.linear, **kw)

    def pinned(self) -> "Problem1D":
        """Same problem with the per-region cell counts frozen."""
        disc = (discretize_planar(self.params, self.geometry, self.bc) if self.coord == "planar"
                else discretize_spherical(self.params, self.geometry, self.source, self.bc))
        return replace(self, geometry=replace(self.geometry, cells=region_counts(disc.regions)))

    def with_faces(self, c: float, e: float) -> "Problem1D":
        return replace(self, geometry=self.geometry.with_faces(c, e))
