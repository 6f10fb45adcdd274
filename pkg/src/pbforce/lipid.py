"""Charged-lipid surface density and the surface electrodiffusion residual."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import ParametricSurface, closed_surface_integral, surface_div_flux
from .params import GammaKind, PhysicalParams


class NormalizationError(ArithmeticError):
    pass


def _literal_gamma(phi, q_l, beta):
    return -np.exp(-q_l * beta * np.asarray(phi, dtype=float))


def _literal_dgamma(phi, q_l, beta):
    return q_l * beta * np.exp(-q_l * beta * np.asarray(phi, dtype=float))


# gamma = -exp(-q_l beta phi) with the literal density formula; integrates to -C
LITERAL_BOLTZMANN = GammaKind("literal-boltzmann", _literal_gamma, _literal_dgamma, normalized=False)


@dataclass(frozen=True)
class SurfaceChargeDensity:
    values: np.ndarray
    pool: float
    kind: str
    surface: ParametricSurface


def density_from_weights(params: PhysicalParams, pool: float, gamma_vals, dgamma_vals, gamma_integral):
    """rho at nodes given gamma, gamma' samples and the face integral of gamma."""
    kind = params.gamma_kind
    if not np.isfinite(gamma_integral) or gamma_integral == 0:
        raise NormalizationError(f"integral of gamma is {gamma_integral!r}")
    if kind.normalized:
        if gamma_integral <= 0:
            raise NormalizationError("normalized lipid weight must integrate to a positive value")
        return pool * np.asarray(gamma_vals) / gamma_integral
    q_l = params.lipid_charge
    if q_l == 0:
        raise NormalizationError("literal gamma kinds need a nonzero lipid charge")
    return pool * np.asarray(dgamma_vals) / (params.beta * q_l * gamma_integral)


def lipid_density(params: PhysicalParams, surface: ParametricSurface, phi_trace, pool: float) -> SurfaceChargeDensity:
    """Lipid density on a face from the potential sampled at its quadrature nodes."""
    kind = params.gamma_kind
    phi = np.asarray(phi_trace, dtype=float)
    q_l, beta = params.lipid_charge, params.beta
    if kind.normalized:
        # shift by the mean for overflow safety; the normalization cancels it
        shift = float(np.mean(phi))
        g = kind.gamma(phi - shift, q_l, beta)
        dg = kind.dgamma(phi - shift, q_l, beta)
    else:
        g = kind.gamma(phi, q_l, beta)
        dg = kind.dgamma(phi, q_l, beta)
    total = closed_surface_integral(surface, g)
    vals = density_from_weights(params, pool, g, dg, total)
    return SurfaceChargeDensity(vals, pool, kind.name, surface)


def uniform_face_density(params: PhysicalParams, pool: float, area: float, phi_face: float) -> float:
    """Density on a face where phi is constant (spherical or planar symmetry)."""
    kind = params.gamma_kind
    if kind.normalized:
        return pool / area
    q_l, beta = params.lipid_charge, params.beta
    g = float(kind.gamma(phi_face, q_l, beta))
    dg = float(kind.dgamma(phi_face, q_l, beta))
    return float(density_from_weights(params, pool, g, dg, g * area))


def lipid_conservation(density: SurfaceChargeDensity) -> float:
    """Total lipid count, the face integral of rho."""
    return closed_surface_integral(density.surface, density.values)


def electrodiffusion_residual(params: PhysicalParams, surface: ParametricSurface, rho, phi_trace) -> np.ndarray:
    """div_s(D grad_s rho + D beta q_l rho grad_s phi) on the node grid.

    The drift term carries beta so that the Boltzmann density is exactly
    stationary for any beta.
    """
    D = params.diffusion
    rho = np.asarray(rho, dtype=float)
    if D == 0:
        return np.zeros_like(rho)
    drift = params.beta * params.lipid_charge
    return D * surface_div_flux(surface, 1.0, rho) + D * drift * surface_div_flux(surface, rho, phi_trace)


def residual_norm(surface: ParametricSurface, residual) -> float:
    """Area-weighted L2 norm of a node field."""
    return float(np.sqrt(closed_surface_integral(surface, np.asarray(residual) ** 2)))
