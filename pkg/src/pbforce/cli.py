"""Command line: ``pbforce {solve,force,energy,verify,sweep} --config run.yaml``.

Exit codes: 0 success, 1 usage or config error, 2 solver failure,
3 verification failure. ``PBFORCE_OUT`` and ``PBFORCE_WORKERS`` supply
the output directory and worker count when the flags are absent.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from .config import RunConfig, load_config
from .energy import EnergyBreakdown, NotConvergedError, bending_energy, electrostatic_energy
from .force import ForceProfile, force_profile
from .geometry import Sphere, closed_surface_integral
from .lipid import NormalizationError
from .params import BoundaryData, ConfigError, IonRangeError
from .solver1d import (MeshError, PlanarGeometry, Problem1D, RadialGeometry, SolverError,
                       solve_spherical)
from .solver3d import GeometryError, GridSpec, RegionSdf, assemble_and_solve_3d, dump_binary, extract_traces_3d
from .verify import run_all

CSV_SCHEMA = 1
JSON_SCHEMA = 1
EXIT_OK, EXIT_USAGE, EXIT_SOLVER, EXIT_VERIFY = 0, 1, 2, 3
SOLVER_ERRORS = (SolverError, MeshError, GeometryError, NotConvergedError, NormalizationError,
                 IonRangeError, ArithmeticError)

log = logging.getLogger("pbforce")


class UsageError(Exception):
    pass


class RunFailure(Exception):
    """A solver error tagged with the config fingerprint."""

    def __init__(self, fingerprint: str, cause: BaseException):
        self.fingerprint = fingerprint
        self.cause = cause
        super().__init__(f"[config {fingerprint}] {type(cause).__name__}: {cause}")

    def __reduce__(self):
        # sweep workers send failures back across process boundaries
        return (RunFailure, (self.fingerprint, self.cause))


# --------------------------------------------------------------------------
# serialization
# --------------------------------------------------------------------------

def fmt(x) -> str:
    """17 significant digits: enough to round-trip any float64."""
    if isinstance(x, str):
        return x
    return format(float(x) + 0.0, ".17g")   # + 0.0 folds -0.0 into 0.0


def write_csv(path: Path, kind: str, columns: List[str], rows, extra: str = ""):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# pbforce-csv schema_version={CSV_SCHEMA} kind={kind}{extra}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    return x


def write_json(path: Path, payload: dict):
    # json writes floats with repr, the shortest string that round-trips
    body = {"schema_version": JSON_SCHEMA, **_plain(payload)}
    path.write_text(json.dumps(body, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# --------------------------------------------------------------------------
# running a config
# --------------------------------------------------------------------------

def problem_1d(cfg: RunConfig) -> Problem1D:
    g, num = cfg.geometry, cfg.numerics
    params = cfg.physical_params()
    if g.kind == "planar":
        geom = PlanarGeometry(z_c=g.z_c, z_e=g.z_e, L=g.L, n_cells=num.n_cells,
                              phi_left=cfg.boundary.phi_left, phi_right=cfg.boundary.phi_right,
                              membrane=g.membrane)
        return Problem1D(params, geom, linear=num.linear)
    geom = RadialGeometry(R_c=g.R_c, R_e=g.R_e, R_outer=g.R_outer, n_cells=num.n_cells,
                          grading=num.grading, protein_radius=g.protein_radius, membrane=g.membrane)
    bc = BoundaryData.constant(cfg.boundary.value) if cfg.boundary.kind == "constant" else BoundaryData()
    return Problem1D(params, geom, cfg.source_charge(), bc, linear=num.linear)


def _reference_boundary(cfg: RunConfig) -> BoundaryData:
    """Dirichlet data for the box taken from a fine 1D spherical solve."""
    g = cfg.geometry
    if not cfg.source_charge().is_centered():
        raise ConfigError("boundary.kind spherical_reference needs centred source charges")
    outer = 1.01 * np.sqrt(3.0) * g.half_width
    ref = solve_spherical(cfg.physical_params(),
                          RadialGeometry(g.R_c, g.R_e, outer, n_cells=cfg.numerics.reference_cells,
                                         protein_radius=g.protein_radius, membrane=g.membrane),
                          cfg.source_charge(), linear=cfg.numerics.linear)
    nodes, phi = ref.nodes, ref.phi
    return BoundaryData.radial(lambda r: np.interp(r, nodes, phi))


def regions_3d(cfg: RunConfig) -> RegionSdf:
    g = cfg.geometry
    grid = GridSpec.cube(g.half_width, cfg.numerics.grid)
    if not g.membrane:
        return RegionSdf.empty(grid)
    return RegionSdf.concentric(grid, g.R_c, g.R_e, g.protein_radius)


@dataclass
class RunResult:
    cfg: RunConfig
    solution: object
    problem: Optional[Problem1D] = None
    regions: Optional[RegionSdf] = None

    @property
    def is_3d(self) -> bool:
        return self.regions is not None


def run_solution(cfg: RunConfig) -> RunResult:
    try:
        if cfg.geometry.kind == "sdf3d":
            bc = (_reference_boundary(cfg) if cfg.boundary.kind == "spherical_reference"
                  else cfg.boundary_data())
            regions = regions_3d(cfg)
            sol = assemble_and_solve_3d(cfg.physical_params(), regions, cfg.source_charge(), bc,
                                        linear=cfg.numerics.linear, tol=cfg.numerics.tol_3d)
            return RunResult(cfg, sol, regions=regions)
        if cfg.boundary.kind in ("affine", "spherical_reference"):
            raise ConfigError(f"boundary.kind {cfg.boundary.kind} applies to sdf3d geometry only")
        problem = problem_1d(cfg)
        sol = problem.solve(tol=cfg.numerics.tol, damping=cfg.numerics.damping)
        return RunResult(cfg, sol, problem=problem)
    except ConfigError:
        raise
    except SOLVER_ERRORS as exc:
        raise RunFailure(cfg.fingerprint(), exc) from exc


def face_radii(cfg: RunConfig) -> Dict[str, float]:
    g = cfg.geometry
    if not g.membrane:
        return {}
    if g.kind == "planar":
        return {"c": g.z_c, "e": g.z_e}
    return {"c": g.R_c, "e": g.R_e}


def _face_surface(cfg: RunConfig, face: str) -> Sphere:
    q = cfg.numerics.quadrature
    return Sphere(radius=face_radii(cfg)[face], resolution=(q, q))


def forces(run: RunResult) -> Dict[str, ForceProfile]:
    params = run.cfg.physical_params()
    out = {}
    try:
        for face in face_radii(run.cfg):
            if run.is_3d:
                traces = extract_traces_3d(run.solution, _face_surface(run.cfg, face), face)
            else:
                traces = run.solution.traces[face]
            out[face] = force_profile(params, traces, face)
    except SOLVER_ERRORS as exc:
        raise RunFailure(run.cfg.fingerprint(), exc) from exc
    return out


def bending_terms(cfg: RunConfig) -> Dict[str, float]:
    p = cfg.physics
    if cfg.geometry.kind == "planar" or (p.K_C == 0 and p.K_G == 0):
        # flat faces: H = K = 0, so only the spontaneous-curvature term survives per unit area
        return {f: 0.5 * p.K_C * p.C0 ** 2 for f in face_radii(cfg)}
    return {f: bending_energy(_face_surface(cfg, f), p.K_C, p.K_G, p.C0) for f in face_radii(cfg)}


def energy(run: RunResult) -> EnergyBreakdown:
    try:
        br = electrostatic_energy(run.cfg.physical_params(), run.solution)
    except SOLVER_ERRORS as exc:
        raise RunFailure(run.cfg.fingerprint(), exc) from exc
    br.bending = bending_terms(run.cfg)
    return br


def face_average(run: RunResult, face: str, values) -> float:
    values = np.asarray(values, dtype=float)
    if values.size == 1:
        return float(values.reshape(-1)[0])
    surf = _face_surface(run.cfg, face)
    return closed_surface_integral(surf, values) / surf.area()


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def _meta(run: RunResult, seed) -> dict:
    sol = run.solution
    meta = {"fingerprint": run.cfg.fingerprint(), "seed": seed,
            "config": json.loads(run.cfg.canonical_json()),
            "iterations": int(sol.iterations), "residual": float(sol.residual),
            "converged": bool(getattr(sol, "converged", True)), "faces": face_radii(run.cfg)}
    if run.is_3d:
        meta.update(dims=list(sol.grid.dims), spacing=sol.grid.h, origin=list(sol.grid.origin))
    else:
        meta.update(n_nodes=int(sol.nodes.size), coord=run.problem.coord,
                    fixed_point_iterations=int(sol.fixed_point_iterations))
    return meta


CELL_CODES = {"s": 0, "m": 1, "p": 2}


def node_region_codes(cell_regions) -> np.ndarray:
    """Per-node codes from per-cell regions, using the 3D codes (0 solvent, 1 membrane, 2 protein).

    A node between two regions takes the lower code, so face nodes count
    as solvent as they do on the 3D grid.
    """
    cells = np.array([CELL_CODES[str(r)] for r in cell_regions], dtype=np.uint8)
    left = np.concatenate([cells[:1], cells])
    right = np.concatenate([cells, cells[-1:]])
    return np.minimum(left, right)


def cmd_solve(run: RunResult, out: Path, seed) -> int:
    prefix = run.cfg.output.prefix
    sol = run.solution
    if run.is_3d:
        pts = sol.grid.points().reshape(-1, 3)
        labels = [str(int(c)) for c in sol.labels.ravel()]
        rows = zip(pts[:, 0], pts[:, 1], pts[:, 2], labels, sol.phi.ravel())
        write_csv(out / f"{prefix}_phi.csv", "phi", ["x", "y", "z", "region", "phi"], rows)
        if run.cfg.output.dump_binary:
            dump_binary(sol, out / f"{prefix}_phi")
    else:
        coord = "z" if run.problem.coord == "planar" else "r"
        regions = [str(c) for c in node_region_codes(sol.regions)]
        write_csv(out / f"{prefix}_phi.csv", "phi", [coord, "region", "phi"],
                  zip(sol.nodes, regions, sol.phi))
    write_json(out / f"{prefix}_solution.json", _meta(run, seed))
    return EXIT_OK


def cmd_force(run: RunResult, out: Path, seed) -> int:
    rows = []
    for face, prof in forces(run).items():
        t = prof.traces
        arrays = [np.atleast_1d(np.asarray(a, dtype=float)).ravel() for a in
                  (t.phi, t.grad_s_n, t.grad_m_n,
                   t.rho if t.rho is not None else np.zeros_like(np.asarray(t.phi, dtype=float)),
                   prof.F_paper, prof.F_alt, prof.F_mst)]
        n = max(a.size for a in arrays)
        arrays = [np.broadcast_to(a, (n,)) if a.size == 1 else a for a in arrays]
        if run.is_3d:
            u, v = (x.ravel() for x in _face_surface(run.cfg, face).nodes())
        else:
            u = v = [""] * n   # 1D faces carry one uniform value, no chart
        for k in range(n):
            rows.append([face, str(k), u[k], v[k]] + [a[k] for a in arrays])
    cols = ["face", "node", "u", "v", "phi", "grad_s_n", "grad_m_n", "rho", "F_paper", "F_alt", "F_mst"]
    write_csv(out / f"{run.cfg.output.prefix}_forces.csv", "force", cols, rows)
    return EXIT_OK


def cmd_energy(run: RunResult, out: Path, seed) -> int:
    br = energy(run)
    write_json(out / f"{run.cfg.output.prefix}_energy.json",
               {"fingerprint": run.cfg.fingerprint(), "energy": br.to_dict()})
    return EXIT_OK


def cmd_verify(cfg: RunConfig, out: Path, seed, quiet: bool) -> int:
    if cfg.geometry.kind == "sdf3d":
        raise UsageError("verify needs a 1D (spherical or planar) geometry for its tight tolerances")
    problem = problem_1d(cfg)
    try:
        report = run_all(problem, seed=seed)
    except SOLVER_ERRORS as exc:
        raise RunFailure(cfg.fingerprint(), exc) from exc
    report.fingerprint = cfg.fingerprint()
    (out / f"{cfg.output.prefix}_verify.json").write_text(report.to_json(timings=False) + "\n",
                                                         encoding="utf-8")
    if not quiet:
        print(report.table())
        print(f"{sum(c.passed for c in report.checks)}/{len(report.checks)} checks passed")
    return EXIT_OK if report.passed else EXIT_VERIFY


SWEEP_FACE_COLUMNS = ("F_paper", "F_alt", "F_mst", "sigma_grad_s")


def sweep_point(cfg: RunConfig) -> List[float]:
    """G, Pi and face-averaged force terms for one configuration."""
    run = run_solution(cfg)
    br = energy(run)
    row = [br.G, br.Pi]
    params = cfg.physical_params()
    profiles = forces(run)
    for face in ("c", "e"):
        if face not in profiles:
            row += [float("nan")] * len(SWEEP_FACE_COLUMNS)
            continue
        prof = profiles[face]
        t = prof.traces
        rho = t.rho if t.rho is not None else 0.0
        sigma_term = params.lipid_charge * np.asarray(rho, dtype=float) * np.asarray(t.grad_s_n, dtype=float)
        row += [face_average(run, face, v) for v in (prof.F_paper, prof.F_alt, prof.F_mst, sigma_term)]
    return row


def _sweep_task(args):
    cfg, key, value = args
    return sweep_point(cfg.with_value(key, value))


def cmd_sweep(cfg: RunConfig, out: Path, workers: int, quiet: bool) -> int:
    if cfg.sweep is None:
        raise UsageError("sweep needs a 'sweep' block with 'key' and 'values'")
    key, values = cfg.sweep.key, list(cfg.sweep.values)
    for v in values:
        cfg.with_value(key, v)   # validate every point before running any
    cols = [key, "G", "Pi"] + [f"{c}_{f}" for f in ("c", "e") for c in SWEEP_FACE_COLUMNS]
    path = out / f"{cfg.output.prefix}_sweep.csv"
    tasks = [(cfg, key, v) for v in values]
    done = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# pbforce-csv schema_version={CSV_SCHEMA} kind=sweep fingerprint={cfg.fingerprint()}\n")
        fh.write(",".join(cols) + "\n")
        fh.flush()
        pool = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
        try:
            results = pool.map(_sweep_task, tasks) if pool else map(_sweep_task, tasks)
            # map yields in submission order, so rows are ordered whatever finishes first
            for v, row in zip(values, results):
                fh.write(",".join(fmt(x) for x in [v] + row) + "\n")
                fh.flush()
                done += 1
                if not quiet:
                    log.info("sweep point %s = %s done", key, v)
        except RunFailure as exc:
            fh.write(f"# status=incomplete rows={done} error={exc}\n")
            raise
        finally:
            if pool:
                pool.shutdown(cancel_futures=True)
        fh.write(f"# status=complete rows={done}\n")
    return EXIT_OK


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="YAML run configuration")
    common.add_argument("--out", default=None, help="output directory (env PBFORCE_OUT, default .)")
    common.add_argument("--seed", type=int, default=0, help="seed for randomized checks (u64)")
    common.add_argument("--workers", type=int, default=None,
                        help="concurrent sweep points (env PBFORCE_WORKERS, default 1)")
    common.add_argument("--quiet", action="store_true", help="suppress progress and tables")
    parser = _Parser(prog="pbforce", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, text in (("solve", "solve for the potential; writes phi CSV and metadata JSON"),
                       ("force", "normal force on each face; writes a force CSV"),
                       ("energy", "energy breakdown JSON"),
                       ("verify", "run the oracle suites; exit 3 on any failure"),
                       ("sweep", "one CSV row per value of the swept key")):
        sub.add_parser(name, parents=[common], help=text)
    return parser


def _resolve(args):
    out = Path(args.out or os.environ.get("PBFORCE_OUT") or ".")
    workers = args.workers
    if workers is None:
        env = os.environ.get("PBFORCE_WORKERS")
        try:
            workers = int(env) if env else 1
        except ValueError:
            raise UsageError(f"PBFORCE_WORKERS must be an integer, got {env!r}") from None
    if workers < 1:
        raise UsageError(f"workers must be >= 1, got {workers}")
    if not 0 <= args.seed < 2**64:
        raise UsageError(f"seed must be an unsigned 64-bit integer, got {args.seed}")
    return out, workers


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        out, workers = _resolve(args)
        cfg = load_config(args.config)
        out.mkdir(parents=True, exist_ok=True)
        t0 = time.perf_counter()
        if args.command == "verify":
            code = cmd_verify(cfg, out, args.seed, args.quiet)
        elif args.command == "sweep":
            code = cmd_sweep(cfg, out, workers, args.quiet)
        else:
            run = run_solution(cfg)
            handler = {"solve": cmd_solve, "force": cmd_force, "energy": cmd_energy}[args.command]
            code = handler(run, out, args.seed)
        log.info("%s finished in %.2fs", args.command, time.perf_counter() - t0)
        return code
    except (UsageError, ConfigError, OSError) as exc:
        print(f"pbforce: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RunFailure as exc:
        print(f"pbforce: solver failure {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
