"""Physical parameters, the ionic energy B and its derivatives.

All formulas work in reduced (nondimensional) units. The config supplies
reduced numbers directly; :func:`reduced_units` is the one place where SI
inputs are converted.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

# exp() overflows for arguments above ~709.78
EXP_LIMIT = 700.0


class ConfigError(ValueError):
    """Raised when a parameter record violates one of its invariants."""


class IonRangeError(ArithmeticError):
    """Boltzmann factor of an ion species would overflow."""

    def __init__(self, species: int, exponent: float):
        self.species = species
        self.exponent = exponent
        super().__init__(
            f"ion species {species}: exponent -beta*q*phi = {exponent:.6g} exceeds {EXP_LIMIT}"
        )


@dataclass(frozen=True)
class IonSpecies:
    charge: float
    bulk_concentration: float

    def __post_init__(self):
        if not np.isfinite(self.charge):
            raise ConfigError("ion charge must be finite")
        if not (self.bulk_concentration >= 0.0):
            raise ConfigError(
                f"bulk_concentration must be >= 0, got {self.bulk_concentration}"
            )


@dataclass(frozen=True)
class GammaKind:
    """Lipid weight function gamma and its derivative.

    ``normalized=True`` marks the default Boltzmann kind, for which the
    density is built as C*w/int(w) and the entropy term is -(C/beta)ln(<w>).
    Any other kind is used with the literal rho = C gamma'/(beta q_l int gamma).
    """

    name: str
    gamma: Callable[[np.ndarray, float, float], np.ndarray]
    dgamma: Callable[[np.ndarray, float, float], np.ndarray]
    normalized: bool = False


def _boltz(phi, q_l, beta):
    return np.exp(-q_l * beta * np.asarray(phi, dtype=float))


def _dboltz(phi, q_l, beta):
    return -q_l * beta * np.exp(-q_l * beta * np.asarray(phi, dtype=float))


BOLTZMANN = GammaKind("boltzmann", _boltz, _dboltz, normalized=True)


@dataclass(frozen=True)
class PhysicalParams:
    beta: float = 1.0
    eps_s: float = 80.0
    eps_m: float = 2.0
    eps_p: float = 2.0
    ions: tuple = ()
    lipid_charge: float = -1.0
    # lipid pool per face: (cytosolic, exoplasmic)
    lipid_pool: tuple = (0.0, 0.0)
    shared_pool: bool = False
    gamma_kind: GammaKind = BOLTZMANN
    diffusion: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "ions", tuple(self.ions))
        object.__setattr__(self, "lipid_pool", tuple(float(c) for c in self.lipid_pool))
        problems = []
        if not (self.beta > 0):
            problems.append(f"beta must be > 0, got {self.beta}")
        for name in ("eps_s", "eps_m", "eps_p"):
            if not (getattr(self, name) > 0):
                problems.append(f"{name} must be > 0, got {getattr(self, name)}")
        if not (self.diffusion >= 0):
            problems.append(f"diffusion must be >= 0, got {self.diffusion}")
        if len(self.lipid_pool) != 2:
            problems.append("lipid_pool needs one value per membrane face (C_c, C_e)")
        for ion in self.ions:
            if not isinstance(ion, IonSpecies):
                problems.append(f"ions must be IonSpecies, got {type(ion).__name__}")
        if problems:
            raise ConfigError("; ".join(problems))

    @property
    def charges(self) -> np.ndarray:
        return np.array([ion.charge for ion in self.ions], dtype=float)

    @property
    def concentrations(self) -> np.ndarray:
        return np.array([ion.bulk_concentration for ion in self.ions], dtype=float)

    def pool(self, face: str) -> float:
        return self.lipid_pool[0 if face == "c" else 1]

    def eps(self, region: str) -> float:
        return {"s": self.eps_s, "m": self.eps_m, "p": self.eps_p}[region]


@dataclass(frozen=True)
class SourceCharge:
    """Gaussian-regularized fixed charges."""

    centers: np.ndarray
    magnitudes: np.ndarray
    widths: np.ndarray
    # mass beyond this many widths is treated as outside supp(f)
    support_sigmas: float = 8.0

    def __post_init__(self):
        centers = np.atleast_2d(np.asarray(self.centers, dtype=float))
        mags = np.atleast_1d(np.asarray(self.magnitudes, dtype=float))
        widths = np.atleast_1d(np.asarray(self.widths, dtype=float))
        if widths.size == 1 and mags.size > 1:
            widths = np.full(mags.size, widths[0])
        if centers.shape != (mags.size, 3) or widths.size != mags.size:
            raise ConfigError("source centers, magnitudes and widths must have matching lengths")
        if np.any(widths <= 0):
            raise ConfigError("source widths must be strictly positive")
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "magnitudes", mags)
        object.__setattr__(self, "widths", widths)

    @classmethod
    def central(cls, charge: float, width: float = 0.5) -> "SourceCharge":
        return cls(np.zeros((1, 3)), np.array([charge]), np.array([width]))

    @classmethod
    def none(cls) -> "SourceCharge":
        return cls(np.zeros((0, 3)), np.zeros(0), np.zeros(0))

    @property
    def total_charge(self) -> float:
        return float(self.magnitudes.sum())

    def density(self, x: np.ndarray) -> np.ndarray:
        """Charge density f at points ``x`` (shape (..., 3))."""
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1])
        for c, q, s in zip(self.centers, self.magnitudes, self.widths):
            r2 = np.sum((x - c) ** 2, axis=-1)
            out += q * (2 * np.pi * s**2) ** -1.5 * np.exp(-r2 / (2 * s**2))
        return out

    def support_radius(self, i: int) -> float:
        return self.support_sigmas * float(self.widths[i])

    def is_centered(self, tol: float = 1e-12) -> bool:
        return self.magnitudes.size == 0 or bool(np.all(np.abs(self.centers) <= tol))


@dataclass(frozen=True)
class BoundaryData:
    """Dirichlet data g on the outer boundary."""

    g: Callable[[np.ndarray], np.ndarray] = field(default=lambda x: np.zeros(np.shape(x)[:-1]))

    @classmethod
    def constant(cls, value: float) -> "BoundaryData":
        return cls(lambda x: np.full(np.shape(x)[:-1], float(value)))

    @classmethod
    def affine(cls, a: float, b: Sequence[float]) -> "BoundaryData":
        b = np.asarray(b, dtype=float)
        return cls(lambda x: a + np.asarray(x, dtype=float) @ b)

    @classmethod
    def radial(cls, func: Callable[[np.ndarray], np.ndarray]) -> "BoundaryData":
        return cls(lambda x: func(np.linalg.norm(np.asarray(x, dtype=float), axis=-1)))

    def __call__(self, x) -> np.ndarray:
        vals = np.asarray(self.g(np.asarray(x, dtype=float)), dtype=float)
        if not np.all(np.isfinite(vals)):
            raise ConfigError("boundary data g is not finite at every evaluation point")
        return vals


def _exponents(phi, params: PhysicalParams) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    expo = -params.beta * np.multiply.outer(phi, params.charges)
    if expo.size:
        worst = np.unravel_index(np.argmax(expo), expo.shape)
        if expo[worst] > EXP_LIMIT:
            raise IonRangeError(int(worst[-1]), float(expo[worst]))
    return expo


def b_energy(phi, params: PhysicalParams):
    """Ionic energy density B(phi) = beta^-1 sum_j c_j (exp(-beta q_j phi) - 1)."""
    if not params.ions:
        return np.zeros_like(np.asarray(phi, dtype=float))[()]
    expo = _exponents(phi, params)
    return (np.expm1(expo) @ params.concentrations / params.beta)[()]


def b_prime(phi, params: PhysicalParams):
    """dB/dphi = -sum_j c_j q_j exp(-beta q_j phi)."""
    if not params.ions:
        return np.zeros_like(np.asarray(phi, dtype=float))[()]
    expo = _exponents(phi, params)
    return (-(np.exp(expo) @ (params.concentrations * params.charges)))[()]


def b_second(phi, params: PhysicalParams):
    """d2B/dphi2 = beta sum_j c_j q_j^2 exp(-beta q_j phi)."""
    if not params.ions:
        return np.zeros_like(np.asarray(phi, dtype=float))[()]
    expo = _exponents(phi, params)
    return (params.beta * (np.exp(expo) @ (params.concentrations * params.charges**2)))[()]


def debye_kappa_sq(params: PhysicalParams) -> float:
    """B''(0) = beta sum_j c_j q_j^2; divide by eps_s for the inverse Debye length squared."""
    if not params.ions:
        return 0.0
    return float(params.beta * np.sum(params.concentrations * params.charges**2))


def linearized(params: PhysicalParams) -> "LinearIons":
    """Ion model with B'(phi) replaced by B''(0) phi (and B by B''(0) phi^2 / 2)."""
    return LinearIons(debye_kappa_sq(params), float(b_prime(0.0, params)))


@dataclass(frozen=True)
class LinearIons:
    k2: float
    offset: float = 0.0

    def energy(self, phi):
        phi = np.asarray(phi, dtype=float)
        return (self.offset * phi + 0.5 * self.k2 * phi**2)[()]

    def prime(self, phi):
        return (self.offset + self.k2 * np.asarray(phi, dtype=float))[()]

    def second(self, phi):
        return (np.full_like(np.asarray(phi, dtype=float), self.k2))[()]


@dataclass(frozen=True)
class NonlinearIons:
    params: PhysicalParams

    def energy(self, phi):
        return b_energy(phi, self.params)

    def prime(self, phi):
        return b_prime(phi, self.params)

    def second(self, phi):
        return b_second(phi, self.params)


def ion_model(params: PhysicalParams, linear: bool = False):
    return linearized(params) if linear else NonlinearIons(params)


# SI constants (CODATA 2018)
_E = 1.602176634e-19
_KB = 1.380649e-23
_EPS0 = 8.8541878128e-12
_NA = 6.02214076e23


def reduced_units(temperature: float, molar: Sequence[float], length: float = 1e-10):
    """Convert temperature (K) and molar concentrations to reduced units.

    Reduced units take the length unit ``length`` (m), the elementary charge,
    and vacuum permittivity = 1, so energies are in e^2/(eps0 * length).
    Returns ``(beta, concentrations)`` with concentrations as number per
    length^3.
    """
    energy_unit = _E**2 / (_EPS0 * length)
    beta = energy_unit / (_KB * temperature)
    conc = [c * 1e3 * _NA * length**3 for c in molar]
    return beta, conc
