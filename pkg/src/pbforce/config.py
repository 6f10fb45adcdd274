"""Run configuration: YAML text validated into a RunConfig.

Every block rejects unknown keys. Validation collects all violations and
reports each with its dotted path, e.g. ``geometry.R_c``.
"""
from __future__ import annotations

import hashlib
import json
from typing import List, Literal, Optional, Tuple

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .params import (BOLTZMANN, BoundaryData, ConfigError, IonSpecies, PhysicalParams,
                     SourceCharge)


class ConfigSyntaxError(ConfigError):
    """Malformed YAML; carries the 1-based line and column."""

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        self.line, self.column = line, column
        where = f" at line {line}, column {column}" if line is not None else ""
        super().__init__(f"config syntax error{where}: {message}")


class ConfigValidationError(ConfigError):
    """One or more field violations, each as (dotted path, message)."""

    def __init__(self, violations: List[Tuple[str, str]]):
        self.violations = violations
        lines = [f"  {path}: {msg}" for path, msg in violations]
        super().__init__("invalid config:\n" + "\n".join(lines))


class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GeometryBlock(_Block):
    kind: Literal["spherical", "planar", "sdf3d"] = "spherical"
    # spherical and sdf3d (concentric shell)
    R_c: float = Field(6.0, gt=0)
    R_e: float = Field(10.0, gt=0)
    R_outer: float = Field(30.0, gt=0)
    protein_radius: float = Field(0.0, ge=0)
    # planar slab
    z_c: float = 20.0
    z_e: float = 24.0
    L: float = Field(44.0, gt=0)
    # sdf3d box [-half_width, half_width]^3
    half_width: float = Field(12.0, gt=0)
    membrane: bool = True


class IonBlock(_Block):
    charge: float
    concentration: float = Field(ge=0)


class PhysicsBlock(_Block):
    beta: float = Field(1.0, gt=0)
    eps_s: float = Field(80.0, gt=0)
    eps_m: float = Field(2.0, gt=0)
    eps_p: float = Field(2.0, gt=0)
    ions: List[IonBlock] = []
    lipid_charge: float = -1.0
    lipid_pool: Tuple[float, float] = (0.0, 0.0)
    shared_pool: bool = False
    gamma_kind: Literal["boltzmann"] = "boltzmann"
    diffusion: float = Field(1.0, gt=0)
    K_C: float = Field(0.0, ge=0)
    K_G: float = 0.0
    C0: float = 0.0


class ChargeBlock(_Block):
    center: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    charge: float
    width: float = Field(0.5, gt=0)


class SourceBlock(_Block):
    charges: List[ChargeBlock] = []


class BoundaryBlock(_Block):
    kind: Literal["zero", "constant", "affine", "spherical_reference"] = "zero"
    value: float = 0.0
    gradient: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    phi_left: float = 0.0
    phi_right: float = 0.0


class NumericsBlock(_Block):
    n_cells: int = Field(4096, ge=8)
    grading: float = Field(1.0, gt=0)
    grid: int = Field(65, ge=9)
    linear: bool = False
    tol: float = Field(1e-12, gt=0)
    tol_3d: float = Field(1e-8, gt=0)
    damping: float = Field(0.5, gt=0, le=1)
    quadrature: int = Field(64, ge=8)
    reference_cells: int = Field(16384, ge=64)


class OutputBlock(_Block):
    prefix: str = "run"
    dump_binary: bool = False


class SweepBlock(_Block):
    key: str
    values: List[float] = Field(min_length=1)


class RunConfig(_Block):
    geometry: GeometryBlock = GeometryBlock()
    physics: PhysicsBlock = PhysicsBlock()
    source: SourceBlock = SourceBlock()
    boundary: BoundaryBlock = BoundaryBlock()
    numerics: NumericsBlock = NumericsBlock()
    output: OutputBlock = OutputBlock()
    sweep: Optional[SweepBlock] = None

    @model_validator(mode="after")
    def _cross_fields(self):
        bad = cross_field_violations(self.model_dump(mode="json"))
        if bad:
            raise ValueError("; ".join(f"{path}: {msg}" for path, msg in bad))
        return self

    # -- conversions -----------------------------------------------------

    def physical_params(self) -> PhysicalParams:
        p = self.physics
        return PhysicalParams(
            beta=p.beta, eps_s=p.eps_s, eps_m=p.eps_m, eps_p=p.eps_p,
            ions=tuple(IonSpecies(i.charge, i.concentration) for i in p.ions),
            lipid_charge=p.lipid_charge, lipid_pool=tuple(p.lipid_pool),
            shared_pool=p.shared_pool, gamma_kind=BOLTZMANN, diffusion=p.diffusion,
        )

    def source_charge(self) -> SourceCharge:
        ch = self.source.charges
        if not ch:
            return SourceCharge.none()
        return SourceCharge(centers=np.array([c.center for c in ch], dtype=float),
                            magnitudes=np.array([c.charge for c in ch], dtype=float),
                            widths=np.array([c.width for c in ch], dtype=float))

    def boundary_data(self) -> BoundaryData:
        b = self.boundary
        if b.kind == "constant":
            return BoundaryData.constant(b.value)
        if b.kind == "affine":
            return BoundaryData.affine(b.value, b.gradient)
        return BoundaryData()

    def with_value(self, dotted: str, value) -> "RunConfig":
        """Copy with one dotted key replaced, e.g. ``physics.lipid_pool.0``; re-validated."""
        data = self.model_dump(mode="json")
        parts = dotted.split(".")
        node = data
        for i, key in enumerate(parts):
            last = i == len(parts) - 1
            if isinstance(node, list) and key.isdigit() and int(key) < len(node):
                key = int(key)
            elif not (isinstance(node, dict) and key in node):
                raise ConfigValidationError([(dotted, "unknown key")])
            if last:
                node[key] = value
            else:
                node = node[key]
        return validate_config(data)

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))

    def fingerprint(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:16]


def _number(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _merged(data, name, block):
    raw = data.get(name) if isinstance(data, dict) else None
    merged = block().model_dump(mode="json")
    if isinstance(raw, dict):
        merged.update(raw)
    return merged


def cross_field_violations(data) -> List[Tuple[str, str]]:
    """Relations between fields, checked on raw data so they are reported
    alongside per-field errors instead of after them."""
    bad = []
    g = _merged(data, "geometry", GeometryBlock)
    kind = g.get("kind")

    def less(a, b, where=""):
        x, y = g.get(a), g.get(b)
        if _number(x) and _number(y) and not x < y:
            bad.append((f"geometry.{a}", f"geometry.{a} ({x}) must be smaller than geometry.{b} ({y}){where}"))

    if kind in ("spherical", "sdf3d"):
        less("R_c", "R_e")
        if _number(g.get("protein_radius")) and g["protein_radius"] > 0:
            less("protein_radius", "R_c")
    if kind == "spherical":
        less("R_e", "R_outer")
    if kind == "sdf3d":
        less("R_e", "half_width", " (the shell must fit in the box)")
    if kind == "planar":
        if _number(g.get("z_c")) and not g["z_c"] > 0:
            bad.append(("geometry.z_c", f"geometry.z_c ({g['z_c']}) must be positive"))
        less("z_c", "z_e")
        less("z_e", "L")
    phys = _merged(data, "physics", PhysicsBlock)
    pool = phys.get("lipid_pool")
    if isinstance(pool, (list, tuple)):
        for i, c in enumerate(pool):
            if _number(c) and c < 0:
                bad.append((f"physics.lipid_pool.{i}", f"lipid pool must be >= 0, got {c}"))
    num = _merged(data, "numerics", NumericsBlock)
    if isinstance(num.get("grid"), int) and num["grid"] % 2 == 0:
        bad.append(("numerics.grid", f"grid must be odd so the box centre is a node, got {num['grid']}"))
    return bad


def validate_config(data) -> RunConfig:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigValidationError([("<root>", f"expected a mapping, got {type(data).__name__}")])
    cross = cross_field_violations(data)
    try:
        cfg = RunConfig.model_validate(data)
    except ValidationError as exc:
        violations = []
        for err in exc.errors():
            if not err["loc"]:
                continue   # the cross-field validator; reported from ``cross`` below
            path = ".".join(str(p) for p in err["loc"])
            msg = "unknown key" if err["type"] == "extra_forbidden" else err["msg"]
            violations.append((path, msg))
        raise ConfigValidationError(violations + cross) from None
    return cfg


def parse_config(text: str) -> RunConfig:
    """Parse YAML text into a validated RunConfig."""
    try:
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        line = mark.line + 1 if mark is not None else None
        col = mark.column + 1 if mark is not None else None
        raise ConfigSyntaxError(str(exc.problem or exc), line, col) from None
    except yaml.YAMLError as exc:
        raise ConfigSyntaxError(str(exc)) from None
    return validate_config(data)


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
