"""Parametric surfaces, velocity fields and the deformation map T_t = X + tV(X).

Charts are evaluated with analytic first and second partials. Quadrature
nodes sit at parameter-cell centers, so the degenerate poles of spherical
charts are never sampled:

* periodic axes use the uniform (trapezoid) rule,
* polar axes (a chart parameter running pole to pole) use Fejer's first
  rule in cos(u), which integrates the smooth sin(u)-weighted integrands of
  closed genus-0 charts spectrally,
* plain intervals use the midpoint rule.

Sign convention: H = (k1 + k2)/2 is positive on a sphere whose normal points
outward, i.e. H = div_s(n)/2.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple, Optional, Union

import numpy as np

DEGENERATE_TOL = 1e-12


class DegenerateMetricError(ValueError):
    pass


class NonInvertibleError(ValueError):
    pass


class NotClosedWarning(UserWarning):
    pass


# --------------------------------------------------------------------------
# quadrature rules
# --------------------------------------------------------------------------

def fejer1(n: int):
    """Fejer's first rule on [-1, 1] with nodes cos(theta_k), theta_k = (k+1/2) pi/n."""
    theta = (np.arange(n) + 0.5) * np.pi / n
    j = np.arange(1, n // 2 + 1)
    s = np.cos(2 * np.outer(theta, j)) / (4 * j**2 - 1)
    w = 2.0 / n * (1 - 2 * s.sum(axis=1))
    return theta, w


def _axis_rule(kind: str, lo: float, hi: float, n: int):
    h = (hi - lo) / n
    nodes = lo + (np.arange(n) + 0.5) * h
    if kind == "polar":
        theta, w = fejer1(n)
        # integrand * area_weight already carries sin(u); undo it for Fejer
        return nodes, w / np.sin(theta) * (hi - lo) / np.pi
    if kind in ("periodic", "interval"):
        return nodes, np.full(n, h)
    raise ValueError(f"unknown axis kind {kind!r}")


# --------------------------------------------------------------------------
# surfaces
# --------------------------------------------------------------------------

class Frame(NamedTuple):
    r: np.ndarray
    r_u: np.ndarray
    r_v: np.ndarray
    n: np.ndarray
    area_weight: np.ndarray
    H: np.ndarray
    K: np.ndarray
    metric: np.ndarray  # (..., 2, 2) first fundamental form


def _dot(a, b):
    return np.einsum("...i,...i->...", a, b)


class ParametricSurface:
    """A chart r(u, v) over a parameter rectangle with a tensor quadrature rule."""

    name = "surface"
    u_kind = "interval"
    v_kind = "interval"
    u_range = (0.0, 1.0)
    v_range = (0.0, 1.0)
    resolution = (128, 128)
    flip = False

    def chart(self, u, v):
        """Return r, r_u, r_v, r_uu, r_uv, r_vv, each shaped (..., 3)."""
        raise NotImplementedError

    @property
    def closed(self) -> bool:
        return self.u_kind != "interval" and self.v_kind != "interval"

    def with_resolution(self, nu: int, nv: Optional[int] = None):
        return replace(self, resolution=(int(nu), int(nv if nv is not None else nu)))

    def _rules(self):
        nu, nv = self.resolution
        return (_axis_rule(self.u_kind, *self.u_range, nu),
                _axis_rule(self.v_kind, *self.v_range, nv))

    def nodes(self):
        (u, _), (v, _) = self._rules()
        return np.meshgrid(u, v, indexing="ij")

    def weights(self):
        (_, wu), (_, wv) = self._rules()
        return np.outer(wu, wv)

    @property
    def spacing(self):
        nu, nv = self.resolution
        return ((self.u_range[1] - self.u_range[0]) / nu,
                (self.v_range[1] - self.v_range[0]) / nv)

    def frame(self, u=None, v=None) -> Frame:
        if u is None:
            u, v = self.nodes()
        return surface_frame(self, u, v)

    def area(self) -> float:
        return closed_surface_integral(self, 1.0)


@dataclass(frozen=True)
class Sphere(ParametricSurface):
    radius: float = 1.0
    center: tuple = (0.0, 0.0, 0.0)
    resolution: tuple = (128, 128)
    flip: bool = False
    name = "sphere"
    u_kind = "polar"
    v_kind = "periodic"
    u_range = (0.0, np.pi)
    v_range = (0.0, 2 * np.pi)

    def chart(self, u, v):
        R = self.radius
        su, cu, sv, cv = np.sin(u), np.cos(u), np.sin(v), np.cos(v)
        r = R * np.stack([su * cv, su * sv, cu], -1) + np.asarray(self.center)
        r_u = R * np.stack([cu * cv, cu * sv, -su], -1)
        r_v = R * np.stack([-su * sv, su * cv, np.zeros_like(su)], -1)
        r_uu = R * np.stack([-su * cv, -su * sv, -cu], -1)
        r_uv = R * np.stack([-cu * sv, cu * cv, np.zeros_like(su)], -1)
        r_vv = R * np.stack([-su * cv, -su * sv, np.zeros_like(su)], -1)
        return r, r_u, r_v, r_uu, r_uv, r_vv


@dataclass(frozen=True)
class Ellipsoid(ParametricSurface):
    axes: tuple = (1.0, 1.0, 1.0)
    center: tuple = (0.0, 0.0, 0.0)
    resolution: tuple = (128, 128)
    flip: bool = False
    name = "ellipsoid"
    u_kind = "polar"
    v_kind = "periodic"
    u_range = (0.0, np.pi)
    v_range = (0.0, 2 * np.pi)

    def chart(self, u, v):
        a = np.asarray(self.axes, dtype=float)
        su, cu, sv, cv = np.sin(u), np.cos(u), np.sin(v), np.cos(v)
        z = np.zeros_like(su)
        r = a * np.stack([su * cv, su * sv, cu], -1) + np.asarray(self.center)
        r_u = a * np.stack([cu * cv, cu * sv, -su], -1)
        r_v = a * np.stack([-su * sv, su * cv, z], -1)
        r_uu = a * np.stack([-su * cv, -su * sv, -cu], -1)
        r_uv = a * np.stack([-cu * sv, cu * cv, z], -1)
        r_vv = a * np.stack([-su * cv, -su * sv, z], -1)
        return r, r_u, r_v, r_uu, r_uv, r_vv


@dataclass(frozen=True)
class Torus(ParametricSurface):
    major: float = 2.0
    minor: float = 0.5
    resolution: tuple = (128, 128)
    flip: bool = False
    name = "torus"
    u_kind = "periodic"
    v_kind = "periodic"
    u_range = (0.0, 2 * np.pi)
    v_range = (0.0, 2 * np.pi)

    def chart(self, u, v):
        # u: angle around the tube (run clockwise so r_u x r_v points outward),
        # v: angle around the z axis
        R, a = self.major, self.minor
        su, cu, sv, cv = np.sin(u), np.cos(u), np.sin(v), np.cos(v)
        rho = R + a * cu
        z = np.zeros_like(su)
        r = np.stack([rho * cv, rho * sv, -a * su], -1)
        r_u = np.stack([-a * su * cv, -a * su * sv, -a * cu], -1)
        r_v = np.stack([-rho * sv, rho * cv, z], -1)
        r_uu = np.stack([-a * cu * cv, -a * cu * sv, a * su], -1)
        r_uv = np.stack([a * su * sv, -a * su * cv, z], -1)
        r_vv = np.stack([-rho * cv, -rho * sv, z], -1)
        return r, r_u, r_v, r_uu, r_uv, r_vv


@dataclass(frozen=True)
class PlanePatch(ParametricSurface):
    """The patch z = height over [x0, x1] x [y0, y1], normal +z (or -z if flipped)."""

    height: float = 0.0
    u_range: tuple = (-1.0, 1.0)
    v_range: tuple = (-1.0, 1.0)
    resolution: tuple = (64, 64)
    flip: bool = False
    name = "plane"
    u_kind = "interval"
    v_kind = "interval"

    def chart(self, u, v):
        u = np.asarray(u, dtype=float)
        z = np.zeros_like(u)
        o = np.ones_like(u)
        r = np.stack([u, np.asarray(v, dtype=float) + z, z + self.height], -1)
        r_u = np.stack([o, z, z], -1)
        r_v = np.stack([z, o, z], -1)
        zz = np.zeros_like(r)
        return r, r_u, r_v, zz, zz, zz


SURFACES = {"sphere": Sphere, "ellipsoid": Ellipsoid, "torus": Torus, "plane": PlanePatch}


def surface_frame(surface: ParametricSurface, u, v) -> Frame:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    r, r_u, r_v, r_uu, r_uv, r_vv = surface.chart(u, v)
    cross = np.cross(r_u, r_v)
    sqrt_a = np.linalg.norm(cross, axis=-1)
    if np.any(sqrt_a < DEGENERATE_TOL):
        raise DegenerateMetricError(
            f"|r_u x r_v| < {DEGENERATE_TOL:g} on {surface.name}"
        )
    n = cross / sqrt_a[..., None]
    if surface.flip:
        n = -n
    E, F, G = _dot(r_u, r_u), _dot(r_u, r_v), _dot(r_v, r_v)
    L, M, N = _dot(r_uu, n), _dot(r_uv, n), _dot(r_vv, n)
    det = E * G - F**2
    H = -(E * N - 2 * F * M + G * L) / (2 * det)
    K = (L * N - M**2) / det
    metric = np.stack([np.stack([E, F], -1), np.stack([F, G], -1)], -2)
    return Frame(r, r_u, r_v, n, sqrt_a, H, K, metric)


def _tangent_basis_dual(frame: Frame):
    """Contravariant basis vectors r^u, r^v with r^a . r_b = delta."""
    inv = np.linalg.inv(frame.metric)
    ru_up = inv[..., 0, 0, None] * frame.r_u + inv[..., 0, 1, None] * frame.r_v
    rv_up = inv[..., 1, 0, None] * frame.r_u + inv[..., 1, 1, None] * frame.r_v
    return ru_up, rv_up


def surface_gradient(surface, g_grad: Callable, u, v) -> np.ndarray:
    """Tangential gradient of a field whose ambient gradient is ``g_grad(x)``."""
    fr = surface_frame(surface, u, v)
    grad = np.asarray(g_grad(fr.r), dtype=float)
    grad = np.broadcast_to(grad, fr.n.shape)
    return grad - _dot(grad, fr.n)[..., None] * fr.n


def surface_gradient_from_partials(frame: Frame, g_u, g_v) -> np.ndarray:
    """grad_s g = g^{ab} d_b g r_a from chart partials of g."""
    ru_up, rv_up = _tangent_basis_dual(frame)
    return np.asarray(g_u)[..., None] * ru_up + np.asarray(g_v)[..., None] * rv_up


def surface_divergence(surface, field, u, v) -> np.ndarray:
    """div_s F = div F - n.(grad F) n for a field with an ambient Jacobian."""
    fr = surface_frame(surface, u, v)
    J = field.jacobian(fr.r)
    return np.trace(J, axis1=-2, axis2=-1) - np.einsum("...i,...ij,...j->...", fr.n, J, fr.n)


def closed_surface_integral(surface: ParametricSurface, integrand) -> float:
    """Quadrature of ``integrand`` (array on the node grid, scalar, or callable(frame))."""
    fr = surface.frame()
    if callable(integrand):
        vals = integrand(fr)
    else:
        vals = integrand
    vals = np.broadcast_to(np.asarray(vals, dtype=float), fr.area_weight.shape)
    return float(np.sum(surface.weights() * vals * fr.area_weight))


# --------------------------------------------------------------------------
# velocity fields
# --------------------------------------------------------------------------

class VelocityField:
    """Smooth field V with analytic Jacobian; ``support`` is the distance d."""

    support = np.inf

    def __call__(self, x):
        raise NotImplementedError

    def jacobian(self, x):
        raise NotImplementedError

    def divergence(self, x):
        return np.trace(self.jacobian(x), axis1=-2, axis2=-1)

    def __add__(self, other):
        return SumField((self, other))


@dataclass(frozen=True)
class SumField(VelocityField):
    parts: tuple

    def __call__(self, x):
        return sum(p(x) for p in self.parts)

    def jacobian(self, x):
        return sum(p.jacobian(x) for p in self.parts)


@dataclass(frozen=True)
class LinearField(VelocityField):
    """V(x) = M (x - origin) + offset; covers dilation, shear, rotation, translation."""

    matrix: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))
    offset: tuple = (0.0, 0.0, 0.0)
    origin: tuple = (0.0, 0.0, 0.0)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return (x - np.asarray(self.origin)) @ np.asarray(self.matrix).T + np.asarray(self.offset)

    def jacobian(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.asarray(self.matrix, dtype=float), x.shape[:-1] + (3, 3)).copy()


def dilation(scale: float = 1.0) -> LinearField:
    return LinearField(scale * np.eye(3))


def translation(vector) -> LinearField:
    return LinearField(np.zeros((3, 3)), tuple(vector))


def rotation(omega) -> LinearField:
    w = np.asarray(omega, dtype=float)
    skew = np.array([[0, -w[2], w[1]], [w[2], 0, -w[0]], [-w[1], w[0], 0]])
    return LinearField(skew)


def shear(amount: float = 0.3) -> LinearField:
    m = np.zeros((3, 3))
    m[0, 1] = amount
    m[1, 2] = 0.5 * amount
    return LinearField(m)


def _bump(s):
    """C-infinity bump exp(1 - 1/(1 - s^2)) on |s| < 1 with value 1 at 0, and its derivative."""
    s = np.asarray(s, dtype=float)
    inside = np.abs(s) < 1
    psi = np.zeros_like(s)
    dpsi = np.zeros_like(s)
    si = s[inside]
    q = 1 - si**2
    psi[inside] = np.exp(1 - 1 / q)
    dpsi[inside] = psi[inside] * (-2 * si / q**2)
    return psi, dpsi


@dataclass(frozen=True)
class RadialBump(VelocityField):
    """V = A psi((|x - c| - R0)/d) x_hat: moves a sphere of radius R0 radially."""

    radius: float
    half_width: float
    amplitude: float = 1.0
    center: tuple = (0.0, 0.0, 0.0)

    @property
    def support(self):
        return self.half_width

    def _polar(self, x):
        y = np.asarray(x, dtype=float) - np.asarray(self.center)
        r = np.linalg.norm(y, axis=-1)
        rs = np.where(r > 0, r, 1.0)
        return y, r, rs

    def radial_speed(self, r):
        psi, _ = _bump((np.asarray(r, dtype=float) - self.radius) / self.half_width)
        return self.amplitude * psi

    def __call__(self, x):
        y, r, rs = self._polar(x)
        return self.radial_speed(r)[..., None] * y / rs[..., None]

    def jacobian(self, x):
        y, r, rs = self._polar(x)
        psi, dpsi = _bump((r - self.radius) / self.half_width)
        v = self.amplitude * psi
        dv = self.amplitude * dpsi / self.half_width
        e = y / rs[..., None]
        ee = e[..., :, None] * e[..., None, :]
        eye = np.eye(3)
        return dv[..., None, None] * ee + (v / rs)[..., None, None] * (eye - ee)


@dataclass(frozen=True)
class SlabBump(VelocityField):
    """V = A psi((z - z0)/d) z_hat: moves the plane z = z0 along z."""

    height: float
    half_width: float
    amplitude: float = 1.0

    @property
    def support(self):
        return self.half_width

    def normal_speed(self, z):
        psi, _ = _bump((np.asarray(z, dtype=float) - self.height) / self.half_width)
        return self.amplitude * psi

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        out[..., 2] = self.normal_speed(x[..., 2])
        return out

    def jacobian(self, x):
        x = np.asarray(x, dtype=float)
        _, dpsi = _bump((x[..., 2] - self.height) / self.half_width)
        J = np.zeros(x.shape[:-1] + (3, 3))
        J[..., 2, 2] = self.amplitude * dpsi / self.half_width
        return J


@dataclass(frozen=True)
class TorusNormalBump(VelocityField):
    """Gaussian-modulated extension of the torus normal, a(x) N(x).

    N = w/|w| with w = x - R (x, y, 0)/rho is the gradient of the distance to
    the core circle, so on the torus it coincides with the outward normal.
    """

    major: float = 2.0
    amplitude: float = 0.3
    center: tuple = (2.0, 0.0, 0.5)
    width: float = 1.0

    def _parts(self, x):
        x = np.asarray(x, dtype=float)
        rho = np.hypot(x[..., 0], x[..., 1])
        p = x.copy()
        p[..., 2] = 0.0
        w = x - self.major * p / rho[..., None]
        q = np.linalg.norm(w, axis=-1)
        N = w / q[..., None]
        d = x - np.asarray(self.center)
        a = self.amplitude * np.exp(-np.sum(d**2, -1) / self.width**2)
        return x, rho, p, w, q, N, d, a

    def __call__(self, x):
        *_, N, _, a = self._parts(x)
        return a[..., None] * N

    def jacobian(self, x):
        x, rho, p, w, q, N, d, a = self._parts(x)
        eye = np.eye(3)
        pxy = np.diag([1.0, 1.0, 0.0])
        Dw = eye - self.major * (
            pxy / rho[..., None, None] - p[..., :, None] * p[..., None, :] / rho[..., None, None] ** 3
        )
        proj = eye - N[..., :, None] * N[..., None, :]
        DN = proj @ Dw / q[..., None, None]
        grad_a = -2 * a[..., None] * d / self.width**2
        return N[..., :, None] * grad_a[..., None, :] + a[..., None, None] * DN


# --------------------------------------------------------------------------
# transformation T_t(X) = X + t V(X)
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class TransformState:
    t: float
    velocity: VelocityField

    def map(self, X):
        X = np.asarray(X, dtype=float)
        return X + self.t * self.velocity(X)

    def grad(self, X):
        return np.eye(3) + self.t * self.velocity.jacobian(np.asarray(X, dtype=float))


def _checked_det(gradT):
    det = np.linalg.det(gradT)
    if np.any(det <= 0):
        raise NonInvertibleError("det(grad T_t) <= 0: t too large for this velocity field")
    return det


def volume_jacobian(state: TransformState, X):
    """J_t = det(I + t grad V) and dJ_t/dt = J_t (div V)(T_t X).

    The rate uses the flow-map identity; for the first-order map it is exact
    at t = 0, which is where every shape derivative is taken.
    """
    X = np.asarray(X, dtype=float)
    J = _checked_det(state.grad(X))
    dJ = J * state.velocity.divergence(state.map(X))
    return J, dJ


def transform_tensor_A(state: TransformState, X):
    """A(t) = J_t gradT^-1 gradT^-T and A'(0) = (div V) I - grad V - grad V^T."""
    X = np.asarray(X, dtype=float)
    gT = state.grad(X)
    J = _checked_det(gT)
    inv = np.linalg.inv(gT)
    A = J[..., None, None] * inv @ np.swapaxes(inv, -1, -2)
    gV = state.velocity.jacobian(X)
    div = np.trace(gV, axis1=-2, axis2=-1)
    A0 = div[..., None, None] * np.eye(3) - gV - np.swapaxes(gV, -1, -2)
    return A, A0


def surface_jacobian(state: TransformState, surface, u, v):
    """J_s = det(grad T_t) |grad T_t^{-T} n|."""
    fr = surface_frame(surface, u, v)
    gT = state.grad(fr.r)
    J = _checked_det(gT)
    invT = np.swapaxes(np.linalg.inv(gT), -1, -2)
    return J * np.linalg.norm(np.einsum("...ij,...j->...i", invT, fr.n), axis=-1)


def surface_jacobian_rate0(surface, velocity: VelocityField, u, v):
    """dJ_s/dt at t = 0, which equals div_s V."""
    return surface_divergence(surface, velocity, u, v)


def normal_rate0(surface, velocity: VelocityField, u, v):
    """dn/dt at t = 0 from R = (dV/du) x r_v + r_u x (dV/dv), projected off n."""
    fr = surface_frame(surface, u, v)
    J = velocity.jacobian(fr.r)
    s_u = np.einsum("...ij,...j->...i", J, fr.r_u)
    s_v = np.einsum("...ij,...j->...i", J, fr.r_v)
    R = np.cross(s_u, fr.r_v) + np.cross(fr.r_u, s_v)
    if surface.flip:
        R = -R
    tang = R - _dot(fr.n, R)[..., None] * fr.n
    return tang / fr.area_weight[..., None]


def transformed_normal(state: TransformState, surface, u, v):
    """Normal of T_t(Gamma) at T_t(r(u, v)) using the chart of the moved surface."""
    fr = surface_frame(surface, u, v)
    J = state.velocity.jacobian(fr.r)
    a = fr.r_u + state.t * np.einsum("...ij,...j->...i", J, fr.r_u)
    b = fr.r_v + state.t * np.einsum("...ij,...j->...i", J, fr.r_v)
    c = np.cross(a, b)
    if surface.flip:
        c = -c
    return c / np.linalg.norm(c, axis=-1)[..., None]


# --------------------------------------------------------------------------
# grid operators on the node lattice (used for sampled fields)
# --------------------------------------------------------------------------

def _half_frame(surface, axis):
    """Frames at the half points between neighbouring nodes along ``axis``."""
    (u, _), (v, _) = surface._rules()
    hu, hv = surface.spacing
    if axis == 0:
        uh = u + 0.5 * hu
        if surface.u_kind != "periodic":
            uh = uh[:-1]
        U, V = np.meshgrid(uh, v, indexing="ij")
    else:
        vh = v + 0.5 * hv
        if surface.v_kind != "periodic":
            vh = vh[:-1]
        U, V = np.meshgrid(u, vh, indexing="ij")
    return surface_frame(surface, U, V)


def _fwd(f, axis, periodic):
    if periodic:
        return np.roll(f, -1, axis=axis) - f
    return np.diff(f, axis=axis)


def _avg(f, axis, periodic):
    if periodic:
        return 0.5 * (np.roll(f, -1, axis=axis) + f)
    sl1 = [slice(None)] * f.ndim
    sl2 = [slice(None)] * f.ndim
    sl1[axis] = slice(1, None)
    sl2[axis] = slice(None, -1)
    return 0.5 * (f[tuple(sl1)] + f[tuple(sl2)])


def _central(f, axis, periodic, h):
    if periodic:
        return (np.roll(f, -1, axis=axis) - np.roll(f, 1, axis=axis)) / (2 * h)
    return np.gradient(f, h, axis=axis, edge_order=2)


def surface_div_flux(surface: ParametricSurface, coef, f) -> np.ndarray:
    """Flux-form div_s(coef grad_s f) for node-sampled ``coef`` and ``f``.

    Contravariant fluxes live on half points, where the metric is evaluated
    from the chart; closing faces of polar and interval axes carry zero flux.
    Second order on smooth fields.
    """
    f = np.asarray(f, dtype=float)
    coef = np.broadcast_to(np.asarray(coef, dtype=float), f.shape)
    hu, hv = surface.spacing
    per_u = surface.u_kind == "periodic"
    per_v = surface.v_kind == "periodic"
    fu_c = _central(f, 0, per_u, hu)
    fv_c = _central(f, 1, per_v, hv)
    node = surface.frame()

    # fluxes through u-faces
    fr = _half_frame(surface, 0)
    inv = np.linalg.inv(fr.metric)
    du = _fwd(f, 0, per_u) / hu
    dv = _avg(fv_c, 0, per_u)
    c = _avg(coef, 0, per_u)
    flux_u = fr.area_weight * c * (inv[..., 0, 0] * du + inv[..., 0, 1] * dv)
    if not per_u:
        z = np.zeros((1, f.shape[1]))
        flux_u = np.concatenate([z, flux_u, z], axis=0)
        div_u = np.diff(flux_u, axis=0) / hu
    else:
        div_u = (flux_u - np.roll(flux_u, 1, axis=0)) / hu

    fr = _half_frame(surface, 1)
    inv = np.linalg.inv(fr.metric)
    dv = _fwd(f, 1, per_v) / hv
    du = _avg(fu_c, 1, per_v)
    c = _avg(coef, 1, per_v)
    flux_v = fr.area_weight * c * (inv[..., 1, 0] * du + inv[..., 1, 1] * dv)
    if not per_v:
        z = np.zeros((f.shape[0], 1))
        flux_v = np.concatenate([z, flux_v, z], axis=1)
        div_v = np.diff(flux_v, axis=1) / hv
    else:
        div_v = (flux_v - np.roll(flux_v, 1, axis=1)) / hv

    return (div_u + div_v) / node.area_weight


def grid_surface_gradient(surface: ParametricSurface, f) -> np.ndarray:
    """Tangential gradient of node-sampled f by central chart differences."""
    hu, hv = surface.spacing
    f = np.asarray(f, dtype=float)
    f_u = _central(f, 0, surface.u_kind == "periodic", hu)
    f_v = _central(f, 1, surface.v_kind == "periodic", hv)
    return surface_gradient_from_partials(surface.frame(), f_u, f_v)


def warn_if_open(surface):
    if not surface.closed:
        warnings.warn(f"{surface.name} is not a closed surface", NotClosedWarning, stacklevel=3)
