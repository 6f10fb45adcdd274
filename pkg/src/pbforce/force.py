"""Normal dielectric boundary force in three algebraically equivalent forms.

With a = grad phi_s . n, b = grad phi_m . n and |grad phi|^2 rebuilt from the
shared tangential gradient plus each side's normal trace:

    F_paper = -eps_s/2 |gs|^2 + eps_m/2 |gm|^2 - eps_m b^2 + eps_m a b - B - q_l rho a
    F_alt   = -eps_s/2 |gs|^2 + eps_m/2 |gm|^2 + eps_s a^2 - eps_s a b - B - q_l rho b
    F_mst   = n.M_s n - n.M_m n

All three coincide whenever eps_s a = eps_m b - q_l rho.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .geometry import ParametricSurface, VelocityField, closed_surface_integral
from .params import PhysicalParams, b_energy


class MissingTraceError(ValueError):
    pass


@dataclass(frozen=True)
class InterfaceTraces:
    """Potential and one-sided normal derivatives on a face (per node).

    ``tangential`` is the surface gradient of phi (shape (..., 3)); it is
    continuous across the face because phi is.
    """

    phi: np.ndarray
    grad_s_n: np.ndarray
    grad_m_n: np.ndarray
    tangential: Optional[np.ndarray] = None
    rho: Optional[np.ndarray] = None
    face: str = ""
    jump_residual: float = float("nan")

    def tangential_sq(self):
        if self.tangential is None:
            raise MissingTraceError("traces carry no tangential gradient")
        t = np.asarray(self.tangential, dtype=float)
        return np.sum(t * t, axis=-1)


def _parts(params: PhysicalParams, traces: InterfaceTraces):
    a = np.asarray(traces.grad_s_n, dtype=float)
    b = np.asarray(traces.grad_m_n, dtype=float)
    t2 = traces.tangential_sq()
    gs2 = t2 + a * a
    gm2 = t2 + b * b
    B = b_energy(traces.phi, params)
    return a, b, gs2, gm2, B


def _rho(traces, rho):
    if rho is None:
        rho = traces.rho
    return 0.0 if rho is None else np.asarray(rho, dtype=float)


def force_paper(params: PhysicalParams, traces: InterfaceTraces, rho=None):
    a, b, gs2, gm2, B = _parts(params, traces)
    es, em = params.eps_s, params.eps_m
    sigma = params.lipid_charge * _rho(traces, rho)
    return -0.5 * es * gs2 + 0.5 * em * gm2 - em * b * b + em * a * b - B - sigma * a


def force_alt(params: PhysicalParams, traces: InterfaceTraces, rho=None):
    a, b, gs2, gm2, B = _parts(params, traces)
    es, em = params.eps_s, params.eps_m
    sigma = params.lipid_charge * _rho(traces, rho)
    return -0.5 * es * gs2 + 0.5 * em * gm2 + es * a * a - es * a * b - B - sigma * b


def force_mst(params: PhysicalParams, traces: InterfaceTraces):
    """Jump of the normal Maxwell stress, n.M_s n - n.M_m n."""
    a, b, gs2, gm2, B = _parts(params, traces)
    es, em = params.eps_s, params.eps_m
    normal_s = es * a * a - 0.5 * es * gs2 - B
    normal_m = em * b * b - 0.5 * em * gm2
    return normal_s - normal_m


@dataclass
class ForceProfile:
    face: str
    F_paper: np.ndarray
    F_alt: np.ndarray
    F_mst: np.ndarray
    traces: InterfaceTraces
    meta: dict = field(default_factory=dict)

    def max_mst_gap(self) -> float:
        gap = np.abs(self.F_paper - self.F_mst) / (1 + np.abs(self.F_mst))
        return float(np.max(gap))

    def max_alt_gap(self) -> float:
        gap = np.abs(self.F_paper - self.F_alt) / (1 + np.abs(self.F_alt))
        return float(np.max(gap))


def force_profile(params: PhysicalParams, traces: InterfaceTraces, face: str = "") -> ForceProfile:
    return ForceProfile(
        face=face or traces.face,
        F_paper=np.atleast_1d(force_paper(params, traces)),
        F_alt=np.atleast_1d(force_alt(params, traces)),
        F_mst=np.atleast_1d(force_mst(params, traces)),
        traces=traces,
    )


def shape_derivative_integral(surface: ParametricSurface, F_n, velocity: VelocityField) -> float:
    """delta G = integral over the face of -F_n (V . n)."""
    def integrand(fr):
        vn = np.sum(velocity(fr.r) * fr.n, axis=-1)
        return -np.asarray(F_n, dtype=float) * vn
    return closed_surface_integral(surface, integrand)


def radial_shape_derivative(forces: dict, radii: dict, normal_speed: dict, coord: str = "spherical") -> float:
    """Symmetric-geometry version: sum over faces of -F_n v_n |Gamma|.

    ``normal_speed`` is V . n per face (n points into the solvent); planar
    faces have unit area.
    """
    total = 0.0
    for face, F in forces.items():
        area = 4 * np.pi * radii[face] ** 2 if coord == "spherical" else 1.0
        total += -float(np.squeeze(F)) * float(normal_speed[face]) * area
    return total
