"""Cartesian-grid Poisson-Boltzmann solver for regions given by signed distances.

Vertex-centred 7-point finite volumes. Edge coefficients are harmonic means
of eps weighted by the fraction of the edge in each region (zero crossings
of the linearly interpolated SDFs). Lipid charge lives on the edge
crossings of each face and is shared by the two edge ends in proportion
to the series resistance of the edge, the exact 1D flux split. The lipid
density is part of the Newton unknowns through its Boltzmann weights.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Optional

import numpy as np
import pyamg
import scipy.sparse as sp
from scipy.ndimage import map_coordinates
from scipy.sparse.linalg import LinearOperator, cg

from .energy import EnergyBreakdown
from .force import InterfaceTraces
from .geometry import ParametricSurface, grid_surface_gradient
from .params import BoundaryData, ConfigError, PhysicalParams, SourceCharge, ion_model
from .solver1d import SolverError

SOLVENT, MEMBRANE, PROTEIN = 0, 1, 2
REGION_CODES = {"solvent": SOLVENT, "membrane": MEMBRANE, "protein": PROTEIN}
DUMP_SCHEMA = 1


class GeometryError(ValueError):
    """Shell under-resolved, SDF not distance-like, or probes leave their region."""


@dataclass(frozen=True)
class GridSpec:
    origin: tuple
    h: float
    dims: tuple

    @classmethod
    def cube(cls, half_width: float, n: int) -> "GridSpec":
        """n^3 nodes covering [-half_width, half_width]^3."""
        h = 2 * half_width / (n - 1)
        return cls((-half_width,) * 3, h, (n, n, n))

    def axes(self):
        return [self.origin[k] + self.h * np.arange(self.dims[k]) for k in range(3)]

    def points(self):
        X, Y, Z = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([X, Y, Z], -1)

    def boundary_mask(self):
        m = np.zeros(self.dims, bool)
        m[0, :, :] = m[-1, :, :] = True
        m[:, 0, :] = m[:, -1, :] = True
        m[:, :, 0] = m[:, :, -1] = True
        return m


SdfFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class RegionSdf:
    """Region layout from signed distances.

    ``face_c`` is negative on the enclosed solvent side of the cytosolic
    face, ``face_e`` negative on the membrane side of the exoplasmic face;
    the membrane is {face_c > 0, face_e < 0}. ``protein`` is negative inside
    the cavity.
    """

    grid: GridSpec
    face_c: Optional[SdfFn] = None
    face_e: Optional[SdfFn] = None
    protein: Optional[SdfFn] = None

    @classmethod
    def concentric(cls, grid: GridSpec, R_c: float, R_e: float, protein_radius: float = 0.0):
        radius = lambda x: np.linalg.norm(x, axis=-1)
        prot = (lambda x: radius(x) - protein_radius) if protein_radius > 0 else None
        return cls(grid, lambda x: radius(x) - R_c, lambda x: radius(x) - R_e, prot)

    @classmethod
    def slab(cls, grid: GridSpec, z_c: float, z_e: float):
        return cls(grid, lambda x: x[..., 2] - z_c, lambda x: x[..., 2] - z_e)

    @classmethod
    def empty(cls, grid: GridSpec):
        return cls(grid)

    def functions(self) -> Dict[str, SdfFn]:
        out = {}
        for name in ("protein", "face_c", "face_e"):
            fn = getattr(self, name)
            if fn is not None:
                out[name] = fn
        return out

    def classify(self, values: Dict[str, np.ndarray]) -> np.ndarray:
        shape = next(iter(values.values())).shape if values else ()
        lab = np.full(shape, SOLVENT, dtype=np.uint8)
        if "face_c" in values and "face_e" in values:
            lab[(values["face_c"] > 0) & (values["face_e"] < 0)] = MEMBRANE
        if "protein" in values:
            lab[values["protein"] < 0] = PROTEIN
        return lab

    def labels(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        vals = {k: fn(pts) for k, fn in self.functions().items()}
        if not vals:
            return np.zeros(pts.shape[:-1], dtype=np.uint8)
        return self.classify(vals)

    def validate(self, values: Dict[str, np.ndarray]):
        h = self.grid.h
        problems = []
        for name, v in values.items():
            g = np.gradient(v, h)
            mag = np.sqrt(sum(gi * gi for gi in g))
            near = np.abs(v) < 2 * h
            interior = np.zeros_like(near)
            interior[1:-1, 1:-1, 1:-1] = True
            sel = near & interior
            if np.any(sel) and (np.min(mag[sel]) < 0.8 or np.max(mag[sel]) > 1.2):
                problems.append(f"{name}: |grad sdf| in [{mag[sel].min():.3f}, {mag[sel].max():.3f}] near its zero set")
        if "face_c" in values and "face_e" in values:
            lab = self.classify(values)
            mem = lab == MEMBRANE
            if not np.any(mem):
                problems.append("membrane shell contains no grid nodes")
            else:
                thick = np.min(values["face_c"][mem] - values["face_e"][mem])
                if thick < 3 * h:
                    problems.append(f"membrane shell thickness {thick:.4g} is below 3h = {3 * h:.4g}")
        if problems:
            raise GeometryError("; ".join(problems))


# --------------------------------------------------------------------------
# assembly
# --------------------------------------------------------------------------

def _edge_eps(region: RegionSdf, params: PhysicalParams, vals, axis):
    """Fraction-weighted harmonic mean of eps along every edge in ``axis``."""
    sl0 = [slice(None)] * 3
    sl1 = [slice(None)] * 3
    sl0[axis] = slice(None, -1)
    sl1[axis] = slice(1, None)
    ends0 = {k: v[tuple(sl0)] for k, v in vals.items()}
    ends1 = {k: v[tuple(sl1)] for k, v in vals.items()}
    shape = next(iter(ends0.values())).shape if ends0 else None
    eps_by_code = np.array([params.eps_s, params.eps_m, params.eps_p])
    if not ends0:
        return None
    breaks = [np.zeros(shape), np.ones(shape)]
    for k in ends0:
        a, b = ends0[k], ends1[k]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = a / (a - b)
        t = np.where((a * b < 0) & np.isfinite(t), t, 1.0)
        breaks.append(t)
    T = np.sort(np.stack(breaks, -1), axis=-1)
    lengths = np.diff(T, axis=-1)
    mids = 0.5 * (T[..., 1:] + T[..., :-1])
    inv = np.zeros(shape)
    for j in range(mids.shape[-1]):
        t = mids[..., j]
        interp = {k: ends0[k] + t * (ends1[k] - ends0[k]) for k in ends0}
        code = region.classify(interp)
        inv += lengths[..., j] / eps_by_code[code]
    return 1.0 / inv


def solvent_fraction(region: RegionSdf, vals, labels, sub: int = 4) -> np.ndarray:
    """Solvent share of each node's control cube, sub-sampled near interfaces."""
    frac = (labels == SOLVENT).astype(float)
    if not vals:
        return frac
    h = region.grid.h
    near = np.zeros(labels.shape, bool)
    for v in vals.values():
        near |= np.abs(v) < 0.5 * np.sqrt(3) * h * 1.01
    idx = np.argwhere(near)
    if idx.size == 0:
        return frac
    centers = np.asarray(region.grid.origin) + h * idx
    o = (np.arange(sub) + 0.5) / sub - 0.5
    offs = np.stack(np.meshgrid(o, o, o, indexing="ij"), -1).reshape(-1, 3) * h
    pts = centers[:, None, :] + offs[None, :, :]
    sub_labels = region.labels(pts)
    frac[tuple(idx.T)] = np.mean(sub_labels == SOLVENT, axis=1)
    return frac


@dataclass
class FaceCharge:
    """Edge crossings of one face.

    Each crossing k carries area ``area[k]`` = h^2 |n_a| (a = edge axis), so
    the areas sum to the face area. ``interp`` maps node values to the
    crossing; its weights are the series-resistance split of the edge, which
    is also how a charge sitting at the crossing is shared by the two nodes.
    """

    interp: sp.csr_matrix          # (n_cross, n_nodes)
    area: np.ndarray
    points: np.ndarray             # crossing coordinates

    @property
    def total_area(self) -> float:
        return float(self.area.sum())

    def values(self, phi_flat):
        return self.interp @ phi_flat

    @staticmethod
    def concat(parts) -> "FaceCharge":
        parts = list(parts)
        return FaceCharge(sp.vstack([p.interp for p in parts]).tocsr(),
                          np.concatenate([p.area for p in parts]),
                          np.concatenate([p.points for p in parts]))


def face_crossings(grid: GridSpec, v, eps_nodes) -> FaceCharge:
    """Locate the zero crossings of a nodal SDF along grid edges."""
    h = grid.h
    grad = np.gradient(v, h)
    strides = np.array([grid.dims[1] * grid.dims[2], grid.dims[2], 1])
    rows, cols, vals, area, pts = [], [], [], [], []
    flat_v, flat_eps = v.ravel(), eps_nodes.ravel()
    origin = np.asarray(grid.origin)
    count = 0
    for axis in range(3):
        sl0 = [slice(None)] * 3
        sl0[axis] = slice(None, -1)
        full = np.zeros(grid.dims, bool)
        full[tuple(sl0)] = True
        i = np.flatnonzero(full.ravel())
        j = i + strides[axis]
        a, b = flat_v[i], flat_v[j]
        cut = (a * b < 0) | ((a == 0) & (b != 0))
        i, j, a, b = i[cut], j[cut], a[cut], b[cut]
        t = a / (a - b)
        g = np.stack([(1 - t) * gk.ravel()[i] + t * gk.ravel()[j] for gk in grad], -1)
        n_a = np.abs(g[:, axis]) / np.linalg.norm(g, axis=-1)
        r_i = t * h / flat_eps[i]
        r_j = (1 - t) * h / flat_eps[j]
        th_i = r_j / (r_i + r_j)
        k = count + np.arange(i.size)
        rows += [k, k]
        cols += [i, j]
        vals += [th_i, 1 - th_i]
        area.append(h * h * n_a)
        p0 = origin + h * np.stack(np.unravel_index(i, grid.dims), -1)
        p0[:, axis] += t * h
        pts.append(p0)
        count += i.size
    n = int(np.prod(grid.dims))
    P = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(count, n))
    return FaceCharge(P, np.concatenate(area), np.concatenate(pts))


@dataclass
class Assembly3D:
    grid: GridSpec
    labels: np.ndarray
    edge_cond: list              # per axis: eps_edge * h
    matrix: sp.csr_matrix        # field operator K on the full grid
    load: np.ndarray             # flattened source load F
    mass: np.ndarray             # flattened solvent volume per node
    faces: Dict[str, FaceCharge]
    interior: np.ndarray         # flat indices of unknowns
    boundary: np.ndarray
    g: np.ndarray                # Dirichlet values on the boundary nodes

    def pools(self, params: PhysicalParams):
        """(crossings, pool) groups: one per face, or one for a shared pool."""
        if params.shared_pool and self.faces:
            return {"shared": (FaceCharge.concat(self.faces.values()), sum(params.lipid_pool))}
        return {f: (fc, params.pool(f)) for f, fc in self.faces.items()}


def _laplacian(grid: GridSpec, cond):
    nx, ny, nz = grid.dims
    n = nx * ny * nz
    strides = (ny * nz, nz, 1)
    diag = np.zeros(n)
    offs, bands = [], []
    for axis in range(3):
        c = cond[axis]
        full = np.zeros(grid.dims)
        sl = [slice(None)] * 3
        sl[axis] = slice(None, -1)
        full[tuple(sl)] = c
        band = full.ravel()[: n - strides[axis]]
        diag[: n - strides[axis]] += band
        diag[strides[axis]:] += band
        offs += [strides[axis], -strides[axis]]
        bands += [-band, -band]
    return sp.diags([diag] + bands, [0] + offs, shape=(n, n), format="csr")


def assemble_3d(params: PhysicalParams, region: RegionSdf, source: SourceCharge,
                bc: BoundaryData) -> Assembly3D:
    grid = region.grid
    h = grid.h
    pts = grid.points()
    vals = {k: fn(pts) for k, fn in region.functions().items()}
    region.validate(vals)
    labels = region.classify(vals) if vals else np.zeros(grid.dims, np.uint8)
    cond = []
    for axis in range(3):
        eps_e = _edge_eps(region, params, vals, axis)
        if eps_e is None:
            shape = list(grid.dims)
            shape[axis] -= 1
            eps_e = np.full(shape, params.eps_s)
        cond.append(eps_e * h)
    K = _laplacian(grid, cond)
    load = np.zeros(grid.dims)
    for c, q, s in zip(source.centers, source.magnitudes, source.widths):
        r2 = np.sum((pts - c) ** 2, axis=-1)
        bump = np.exp(-r2 / (2 * s * s))
        total = bump.sum()
        if total == 0:
            raise GeometryError("source Gaussian falls between grid nodes; refine the grid")
        load += q * bump / total
    mass = h**3 * solvent_fraction(region, vals, labels)
    eps_by_code = np.array([params.eps_s, params.eps_m, params.eps_p])
    eps_nodes = eps_by_code[labels]
    faces = {}
    for face, key in (("c", "face_c"), ("e", "face_e")):
        if key in vals:
            faces[face] = face_crossings(grid, vals[key], eps_nodes)
            if faces[face].area.size == 0:
                raise GeometryError(f"face {face} crosses no grid edge")
    bmask = grid.boundary_mask().ravel()
    boundary = np.flatnonzero(bmask)
    interior = np.flatnonzero(~bmask)
    g = np.asarray(bc(pts.reshape(-1, 3)[boundary]), dtype=float)
    return Assembly3D(grid, labels, cond, K, load.ravel(), mass.ravel(), faces,
                      interior, boundary, g)


# --------------------------------------------------------------------------
# solution
# --------------------------------------------------------------------------

@dataclass
class Solution3D:
    grid: GridSpec
    phi: np.ndarray               # (nx, ny, nz)
    labels: np.ndarray
    params: PhysicalParams
    rho: Dict[str, np.ndarray]    # lipid density at the edge crossings of each pool
    assembly: Assembly3D
    region: RegionSdf
    iterations: int
    residual: float
    residual_history: list
    damping_history: list
    converged: bool = True
    linear: bool = False
    runtime: float = 0.0
    meta: dict = field(default_factory=dict)

    def interpolate(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        idx = (pts - np.asarray(self.grid.origin)) / self.grid.h
        coords = np.moveaxis(idx, -1, 0).reshape(3, -1)
        out = map_coordinates(self.phi, coords, order=1, mode="nearest")
        return out.reshape(pts.shape[:-1])


def _lipid_state(params: PhysicalParams, asm: Assembly3D, phi_flat):
    """Per pool: crossings, pool, Boltzmann weights, normalizer Z and density rho."""
    kind = params.gamma_kind
    if asm.faces and not kind.normalized:
        raise ConfigError("the grid solver supports the normalized Boltzmann lipid kind only")
    out = {}
    for name, (fc, pool) in asm.pools(params).items():
        x = -params.lipid_charge * params.beta * fc.values(phi_flat)
        w = np.exp(x - np.max(x))
        Z = float(fc.area @ w)
        out[name] = (fc, pool, w, Z, pool * w / Z)
    return out


def _surface_source(params, asm, state):
    S = np.zeros_like(asm.load)
    for fc, pool, w, Z, rho in state.values():
        S += params.lipid_charge * (fc.interp.T @ (fc.area * rho))
    return S


def _residual(asm, ions, phi, S):
    R = -(asm.matrix @ phi) + asm.load + S
    solvent = asm.mass > 0
    if np.any(solvent):
        R[solvent] -= asm.mass[solvent] * ions.prime(phi[solvent])
    return R


def _jacobian(params, asm, ions, phi, state, K_II):
    """Interior Jacobian as (sparse part, low-rank columns).

    The lipid term adds beta q_l^2 C P^T (diag(u) - u u^T) P with u = a w / Z,
    which is positive semidefinite; the diagonal piece stays sparse and the
    rank-one pieces are applied matrix-free.
    """
    I = asm.interior
    d2 = np.zeros(I.size)
    solvent = asm.mass[I] > 0
    if np.any(solvent):
        d2[solvent] = asm.mass[I][solvent] * ions.second(phi[I][solvent])
    J = K_II + sp.diags(d2)
    low_rank = []
    for fc, pool, w, Z, rho in state.values():
        coef = params.beta * params.lipid_charge ** 2 * pool
        u = fc.area * w / Z
        P = fc.interp[:, I]
        J = J + coef * (P.T @ sp.diags(u) @ P)
        low_rank.append(np.sqrt(coef) * (P.T @ u))
    return J.tocsr(), low_rank


def _amg_preconditioner(J):
    """Smoothed-aggregation V-cycle.

    pyamg draws the start vector of its spectral-radius estimate from the
    global numpy RNG; a fixed seed (caller's state restored) keeps solves
    bit-reproducible.
    """
    state = np.random.get_state()
    try:
        np.random.seed(0)
        ml = pyamg.smoothed_aggregation_solver(J, symmetry="symmetric", max_coarse=500)
    finally:
        np.random.set_state(state)
    return ml.aspreconditioner(cycle="V")


def assemble_and_solve_3d(params: PhysicalParams, regions: RegionSdf, source: SourceCharge,
                          bc: Optional[BoundaryData] = None, linear: bool = False,
                          tol: float = 1e-8, linear_tol: float = 1e-12, max_iter: int = 60) -> Solution3D:
    """Newton on the coupled potential and lipid density, AMG-preconditioned CG inside."""
    t0 = time.perf_counter()
    bc = bc or BoundaryData()
    asm = assemble_3d(params, regions, source, bc)
    ions = ion_model(params, linear)
    n = asm.load.size
    I, B = asm.interior, asm.boundary
    phi = np.zeros(n)
    phi[B] = asm.g
    K_II = asm.matrix[I][:, I].tocsr()
    history, damps, cg_iters = [], [], []
    precond = None
    state = _lipid_state(params, asm, phi)

    def residual(ph):
        st = _lipid_state(params, asm, ph)
        return _residual(asm, ions, ph, _surface_source(params, asm, st))[I], st

    R, state = residual(phi)
    for it in range(max_iter + 1):
        J, low = _jacobian(params, asm, ions, phi, state, K_II)
        diag = J.diagonal()
        r = float(np.max(np.abs(R / diag))) if R.size else 0.0
        res = 0.0 if r == 0 else r / max(float(np.max(np.abs(phi))), r)
        history.append(res)
        if res <= tol:
            break
        if precond is None:
            # the hierarchy of the first Jacobian preconditions every later step
            precond = _amg_preconditioner(J)
        op = J
        if low:
            op = LinearOperator(J.shape, matvec=lambda x, J=J, low=low: J @ x - sum(v * (v @ x) for v in low),
                                dtype=float)
        count = [0]
        step, info = cg(op, R, rtol=linear_tol, atol=0.0, M=precond, maxiter=1000,
                        callback=lambda _x: count.__setitem__(0, count[0] + 1))
        cg_iters.append(count[0])
        if info != 0:
            raise SolverError(f"linear solver stagnated (cg info {info}) at Newton step {it}")
        base = np.linalg.norm(R)
        lam = 1.0
        while True:
            trial = phi.copy()
            trial[I] += lam * step
            try:
                R_trial, st_trial = residual(trial)
                ok = np.isfinite(R_trial).all() and (res < 1e-4 or np.linalg.norm(R_trial) < base)
            except (ArithmeticError, FloatingPointError):
                ok = False
            if ok or lam < 1e-4:
                break
            lam *= 0.5
        damps.append(lam)
        phi, R, state = trial, R_trial, st_trial
    else:
        raise SolverError(f"Newton did not converge (residual {history[-1]:.3e}, damping {damps[-5:]})")
    rho = {name: st[4] for name, st in state.items()}
    return Solution3D(regions.grid, phi.reshape(regions.grid.dims), asm.labels, params, rho, asm,
                      regions, len(damps), history[-1], history, damps, True, linear,
                      time.perf_counter() - t0, {"cg_iterations": cg_iters})


def flux_imbalance(solution: Solution3D, cells) -> np.ndarray:
    """Net outward flux minus enclosed source for the given interior flat indices."""
    asm = solution.assembly
    ions = ion_model(solution.params, solution.linear)
    flat = solution.phi.ravel()
    S = _surface_source(solution.params, asm, _lipid_state(solution.params, asm, flat))
    R = _residual(asm, ions, flat, S)
    return R[np.asarray(cells)]


# --------------------------------------------------------------------------
# traces, energy, dump
# --------------------------------------------------------------------------

FIT_RADIUS = 3.0    # one-sided fit stencil radius, in grid spacings
FIT_MIN_NODES = 16


def _quadratic_basis(d):
    """Monomials up to degree 2 in local coordinates d (..., 3)."""
    x, y, z = d[..., 0], d[..., 1], d[..., 2]
    one = np.ones_like(x)
    return np.stack([one, x, y, z, x * x, y * y, z * z, x * y, x * z, y * z], -1)


def one_sided_fit(solution: Solution3D, points, code: int, radius: float = FIT_RADIUS):
    """Value and gradient at each point from a least-squares quadratic through
    the nodes of one region within ``radius`` grid spacings.

    Only nodes carrying the region code enter the fit, so the kink of phi
    across the face never contaminates the derivative.
    """
    grid = solution.grid
    h = grid.h
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    k = int(np.ceil(radius)) + 1
    rng = np.arange(-k, k + 1)
    offs = np.stack(np.meshgrid(rng, rng, rng, indexing="ij"), -1).reshape(-1, 3)
    base = np.floor((pts - np.asarray(grid.origin)) / h).astype(int)
    idx = base[:, None, :] + offs[None, :, :]
    dims = np.asarray(grid.dims)
    inside = np.all((idx >= 0) & (idx < dims), axis=-1)
    idx = np.clip(idx, 0, dims - 1)
    node = np.asarray(grid.origin) + h * idx
    d = (node - pts[:, None, :]) / h
    w = inside & (solution.labels[idx[..., 0], idx[..., 1], idx[..., 2]] == code)
    w &= np.sum(d * d, axis=-1) <= radius * radius
    counts = w.sum(axis=1)
    if np.any(counts < FIT_MIN_NODES):
        raise GeometryError(f"one-sided fit has only {int(counts.min())} nodes of region {code} "
                            f"within {radius}h; refine the grid")
    A = _quadratic_basis(d) * w[..., None]
    vals = solution.phi[idx[..., 0], idx[..., 1], idx[..., 2]] * w
    # the SVD cutoff drops monomials the local node set cannot resolve
    coef = np.einsum("pim,pm->pi", np.linalg.pinv(A, rcond=1e-8), vals)
    shape = np.asarray(points).shape[:-1]
    return coef[:, 0].reshape(shape), (coef[:, 1:4] / h).reshape(shape + (3,))


PROBE_OFFSETS = (1.5, 2.5, 3.5)


def _extrapolation_weights(offsets):
    d = np.asarray(offsets, dtype=float)
    V = np.stack([np.ones_like(d), d, d * d], 1)
    inv = np.linalg.inv(V)
    return inv[0], inv[1]   # value and slope at 0


def _probe_side(solution, x, n_side, code, face):
    """Quadratic extrapolation of interpolated probes at PROBE_OFFSETS along n_side."""
    offs = np.asarray(PROBE_OFFSETS) * solution.grid.h
    w0, w1 = _extrapolation_weights(offs)
    grid = solution.grid
    lo = np.asarray(grid.origin)
    hi = lo + grid.h * (np.asarray(grid.dims) - 1)
    vals = []
    for d in offs:
        pts = x + d * n_side
        if np.any(pts < lo) or np.any(pts > hi):
            raise GeometryError(f"probe at offset {d / grid.h:.1f}h leaves the grid on face {face}")
        if np.any(solution.region.labels(pts) != code):
            raise GeometryError(f"probe at offset {d / solution.grid.h:.1f}h leaves its region on face {face}")
        vals.append(solution.interpolate(pts))
    vals = np.stack(vals, -1)
    return vals @ w0, vals @ w1


def extract_traces_3d(solution: Solution3D, surface: ParametricSurface, face: str,
                      method: str = "probe") -> InterfaceTraces:
    """One-sided traces at the surface quadrature nodes, normals into the solvent.

    ``method="probe"`` samples phi at 1.5h, 2.5h and 3.5h along the normal
    on each side and extrapolates a quadratic to the face. ``method="fit"``
    takes each side's value and gradient from a least-squares quadratic
    through that side's grid nodes. The face value is the mean of the sides.
    """
    h = solution.grid.h
    fr = surface.frame()
    x, n = fr.r, fr.n
    lab_plus = solution.region.labels(x + 1.5 * h * n)
    sign = np.where(lab_plus == SOLVENT, 1.0, -1.0)
    n_s = n * sign[..., None]
    if method == "probe":
        phi_s, gs = _probe_side(solution, x, n_s, SOLVENT, face)
        phi_m, slope_m = _probe_side(solution, x, -n_s, MEMBRANE, face)
        gm = -slope_m
    elif method == "fit":
        if np.any(solution.region.labels(x - 1.5 * h * n_s) != MEMBRANE):
            raise GeometryError(f"face {face}: membrane thinner than 1.5h below some nodes")
        phi_s, grad_s = one_sided_fit(solution, x, SOLVENT)
        phi_m, grad_m = one_sided_fit(solution, x, MEMBRANE)
        gs = np.sum(grad_s * n_s, axis=-1)
        gm = np.sum(grad_m * n_s, axis=-1)
    else:
        raise ValueError(f"unknown trace method {method!r}")
    phi_face = 0.5 * (phi_s + phi_m)
    tangential = grid_surface_gradient(surface, phi_face)
    p = solution.params
    state = _lipid_state(p, solution.assembly, solution.phi.ravel())
    name = "shared" if "shared" in state else face
    fc, pool, w, Z, _ = state[name]
    x = -p.lipid_charge * p.beta * fc.values(solution.phi.ravel())
    rho = pool * np.exp(-p.lipid_charge * p.beta * phi_face - np.max(x)) / Z
    jump = p.eps_s * gs - p.eps_m * gm + p.lipid_charge * rho
    return InterfaceTraces(phi=phi_face, grad_s_n=gs, grad_m_n=gm, tangential=tangential,
                           rho=rho, face=face, jump_residual=np.abs(jump))


def functional_3d(params: PhysicalParams, solution: Solution3D, surfaces=None) -> EnergyBreakdown:
    """Cell-sum version of G; the entropy averages the lipid weight over the edge crossings."""
    asm = solution.assembly
    phi = solution.phi
    field_term = 0.0
    for axis, c in enumerate(asm.edge_cond):
        field_term -= 0.5 * float(np.sum(c * np.diff(phi, axis=axis) ** 2))
    flat = phi.ravel()
    source_term = float(asm.load @ flat)
    ions = ion_model(params, solution.linear)
    solvent = asm.mass > 0
    ionic_term = -float(asm.mass[solvent] @ ions.energy(flat[solvent])) if np.any(solvent) else 0.0
    entropy = {}
    for name, (fc, pool, w, Z, rho) in _lipid_state(params, asm, flat).items():
        x = -params.lipid_charge * params.beta * fc.values(flat)
        lm = float(np.max(x)) + float(np.log(Z / fc.total_area))
        entropy[name] = -(pool / params.beta) * lm
    return EnergyBreakdown(field_term, source_term, ionic_term, entropy)


def dump_binary(solution: Solution3D, path) -> Dict[str, Path]:
    """Write phi (float64) and region codes (uint8) as flat C-order arrays with a JSON header."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    phi_path = path.with_suffix(".phi.bin")
    lab_path = path.with_suffix(".regions.bin")
    solution.phi.astype("<f8").tofile(phi_path)
    solution.labels.astype(np.uint8).tofile(lab_path)
    header = {
        "schema_version": DUMP_SCHEMA,
        "dims": list(solution.grid.dims),
        "spacing": solution.grid.h,
        "origin": list(solution.grid.origin),
        "order": "C",
        "phi": {"file": phi_path.name, "dtype": "float64-le"},
        "regions": {"file": lab_path.name, "dtype": "uint8", "codes": REGION_CODES},
    }
    head_path = path.with_suffix(".json")
    head_path.write_text(json.dumps(header, indent=2, sort_keys=True))
    return {"header": head_path, "phi": phi_path, "regions": lab_path}


def load_binary(header_path):
    header_path = Path(header_path)
    header = json.loads(header_path.read_text())
    dims = tuple(header["dims"])
    phi = np.fromfile(header_path.parent / header["phi"]["file"], dtype="<f8").reshape(dims)
    labels = np.fromfile(header_path.parent / header["regions"]["file"], dtype=np.uint8).reshape(dims)
    return header, phi, labels
