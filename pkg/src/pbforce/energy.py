"""Electrostatic free energy G, bending energy E and the total Pi = E + G.

The 1D functional is evaluated with the solver's own element matrices and
hat integrals, so the converged potential is an exact critical point of
the discrete G and the maximizer property holds at the discrete level.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Dict, Iterable, Optional, Union

import numpy as np

from .geometry import ParametricSurface, closed_surface_integral, warn_if_open
from .lipid import NormalizationError
from .params import PhysicalParams, ion_model


class NotConvergedError(RuntimeError):
    pass


@dataclass
class EnergyBreakdown:
    field_term: float = 0.0
    source_term: float = 0.0
    ionic_term: float = 0.0
    surface_entropy: Dict[str, float] = field(default_factory=dict)
    bending: Dict[str, float] = field(default_factory=dict)

    @property
    def G(self) -> float:
        return self.field_term + self.source_term + self.ionic_term + sum(self.surface_entropy.values())

    @property
    def Pi(self) -> float:
        return sum(self.bending.values()) + self.G

    def to_dict(self) -> dict:
        out = asdict(self)
        out["G"] = self.G
        out["Pi"] = self.Pi
        return out


# --------------------------------------------------------------------------
# surface entropy
# --------------------------------------------------------------------------

def entropy_from_mean(params: PhysicalParams, pool: float, mean_gamma: float) -> float:
    """Entropy term from the face average of gamma.

    Normalized kinds (w = exp(-q_l beta phi), rho = C w / int w) use
    -(C/beta) ln<w>, whose phi-derivative is the surface charge q_l rho.
    Literal kinds use (C/beta) ln<gamma> as written and need <gamma> > 0.
    """
    if params.gamma_kind.normalized:
        if not mean_gamma > 0:
            raise NormalizationError(f"mean lipid weight must be positive, got {mean_gamma!r}")
        return -(pool / params.beta) * float(np.log(mean_gamma))
    if not mean_gamma > 0:
        raise NormalizationError(
            f"face average of gamma is {mean_gamma!r}; the logarithm needs a positive argument"
        )
    return (pool / params.beta) * float(np.log(mean_gamma))


def _normalized_log_mean(q_l, beta, phi_values, weights):
    """ln(sum w_k exp(-q_l beta phi_k) / sum w_k) without overflow."""
    x = -q_l * beta * np.asarray(phi_values, dtype=float)
    w = np.asarray(weights, dtype=float)
    top = np.max(x)
    return float(top + np.log(np.sum(w * np.exp(x - top)) / np.sum(w)))


def surface_entropy_faces(params: PhysicalParams, face_phi: Dict[str, float],
                          face_area: Dict[str, float]) -> Dict[str, float]:
    """Entropy terms for faces on which phi is constant."""
    out = {}
    q_l, beta = params.lipid_charge, params.beta
    kind = params.gamma_kind
    if params.shared_pool and face_phi:
        faces = list(face_phi)
        total = sum(params.lipid_pool)
        if kind.normalized:
            lm = _normalized_log_mean(q_l, beta, [face_phi[f] for f in faces],
                                      [face_area[f] for f in faces])
            val = -(total / beta) * lm
        else:
            num = sum(float(kind.gamma(face_phi[f], q_l, beta)) * face_area[f] for f in faces)
            val = entropy_from_mean(params, total, num / sum(face_area.values()))
        out["shared"] = val
        return out
    for f, phi in face_phi.items():
        pool = params.pool(f)
        if kind.normalized:
            out[f] = -(pool / beta) * (-q_l * beta * float(phi))
        else:
            out[f] = entropy_from_mean(params, pool, float(kind.gamma(phi, q_l, beta)))
    return out


def surface_entropy(params: PhysicalParams, surface: ParametricSurface, phi_trace, pool: float) -> float:
    """Entropy term of one face from its sampled potential (general geometry)."""
    kind = params.gamma_kind
    fr = surface.frame()
    weights = surface.weights() * fr.area_weight
    if kind.normalized:
        lm = _normalized_log_mean(params.lipid_charge, params.beta, phi_trace, weights)
        return -(pool / params.beta) * lm
    g = kind.gamma(phi_trace, params.lipid_charge, params.beta)
    mean = closed_surface_integral(surface, g) / surface.area()
    return entropy_from_mean(params, pool, mean)


# --------------------------------------------------------------------------
# volume functional
# --------------------------------------------------------------------------

def functional_1d(params: PhysicalParams, disc, phi, linear: bool = False) -> EnergyBreakdown:
    """Discrete G for any node vector phi on a 1D discretization."""
    phi = np.asarray(phi, dtype=float)
    ions = ion_model(params, linear)
    field_term = -0.5 * disc.quadratic(phi, "field")
    source_term = float(disc.load @ phi)
    m = disc.mass
    solvent = m > 0
    react = disc.quadratic(phi, "stiff") - disc.quadratic(phi, "field")
    lumped = 0.0
    if np.any(solvent):
        ps = phi[solvent]
        lumped = float(m[solvent] @ (ions.energy(ps) - 0.5 * disc.k2 * ps * ps))
    ionic_term = -(0.5 * react + lumped)
    face_phi = {f: float(phi[i]) for f, i in disc.faces.items()}
    face_area = {f: disc.face_area(f) for f in disc.faces}
    entropy = surface_entropy_faces(params, face_phi, face_area) if disc.faces else {}
    return EnergyBreakdown(field_term, source_term, ionic_term, entropy)


def electrostatic_energy(params: PhysicalParams, solution, surfaces: Optional[dict] = None) -> EnergyBreakdown:
    """G for a converged solution (1D or 3D).

    ``surfaces`` maps face names to ParametricSurface objects; when given,
    the entropy is recomputed from the traces on those surfaces (3D only).
    """
    if not getattr(solution, "converged", True):
        raise NotConvergedError("energy requested for a non-converged solution")
    if hasattr(solution, "grid"):
        from .solver3d import functional_3d
        return functional_3d(params, solution, surfaces)
    if solution.disc is None:
        raise ValueError("closed-form solutions carry no discretization; solve numerically")
    return functional_1d(params, solution.disc, solution.phi, solution.linear)


# --------------------------------------------------------------------------
# bending
# --------------------------------------------------------------------------

def bending_energy(surface: ParametricSurface, K_C: float, K_G: float, C0: float = 0.0) -> float:
    """Integral of K_C/2 (2H - C0)^2 + K_G K over the surface."""
    warn_if_open(surface)
    fr = surface.frame()
    dens = 0.5 * K_C * (2 * fr.H - C0) ** 2 + K_G * fr.K
    return closed_surface_integral(surface, dens)


def total_energy(breakdowns: Union[EnergyBreakdown, Iterable[EnergyBreakdown]]) -> float:
    """Pi = sum of bending terms + G, summed over the given breakdowns."""
    if isinstance(breakdowns, EnergyBreakdown):
        breakdowns = [breakdowns]
    return float(sum(b.Pi for b in breakdowns))
