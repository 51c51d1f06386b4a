"""Run configuration, experiment orchestration and result persistence.

Configs are JSON.  Results are written as a bundle JSON plus per-series
CSV files; every reported scalar is deterministic (independent of thread
count and repeat runs), and floats are serialized in shortest round-trip
form (lossless, at most 17 significant digits).
"""
from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analysis import (BESystem, DichotomyViolation, ProbeReport, SweepResult,
                       be_system_probe, nonexistence_probe, structural_contrast,
                       sweep)
from .functionals import SolverError, SystemSpec, energy_J
from .ground import GroundState, least_energy_set
from .minimax import box_energy_surface, make_box
from .nonlinearity import (NonlinearityError, NonlinearitySpec,
                           check_conditions)
from .radial import make_grid

BRANCHES = ("X", "Y", "probe", "be_probe", "ground_only", "surface")

_GRID_DEFAULTS = {"dim": 3, "r_max": 20.0, "n": 2000}
_BOX_DEFAULTS = {"half_width": None, "samples_per_axis": 9, "mu_factor": 0.3}
_SOLVER_DEFAULTS = {"tol": 1e-8, "max_iters": 2000, "epsilon_kick": 1e-3}
_PROBE_DEFAULTS = {"epsilons": [1e-3, 3e-3, 1e-2, 3e-2, 0.1, 0.3, 1.0]}
_SHOOT_DEFAULTS = {"h_max_factor": 10.0}
_SPECIES_KEYS = {"m", "a", "b", "p", "q"}


class ConfigError(ValueError):
    """Aggregated configuration problems; message lists every field path."""


@dataclass
class RunConfig:
    grid: dict
    species: list
    branch: str
    alphas: list | None = None
    betas: list | None = None
    box: dict = field(default_factory=lambda: dict(_BOX_DEFAULTS))
    solver: dict = field(default_factory=lambda: dict(_SOLVER_DEFAULTS))
    probe: dict = field(default_factory=lambda: dict(_PROBE_DEFAULTS))
    shooting: dict = field(default_factory=lambda: dict(_SHOOT_DEFAULTS))
    output_dir: str = "out"
    seed_label: str = "default"

    def to_dict(self) -> dict:
        return {
            "grid": dict(self.grid),
            "species": [dict(s) for s in self.species],
            "branch": self.branch,
            "alphas": list(self.alphas) if self.alphas is not None else None,
            "betas": list(self.betas) if self.betas is not None else None,
            "box": dict(self.box),
            "solver": dict(self.solver),
            "probe": dict(self.probe),
            "shooting": dict(self.shooting),
            "output_dir": self.output_dir,
            "seed_label": self.seed_label,
        }


def _merge_section(errors, raw, name, defaults, numeric_keys):
    sec = dict(defaults)
    given = raw.get(name, {})
    if not isinstance(given, dict):
        errors.append(f"{name}: expected an object")
        return sec
    for k, v in given.items():
        if k not in defaults:
            errors.append(f"{name}.{k}: unknown key")
            continue
        sec[k] = v
    for k in numeric_keys:
        v = sec.get(k)
        if v is not None and not isinstance(v, (int, float)):
            errors.append(f"{name}.{k}: expected a number, got {type(v).__name__}")
    return sec


def parse_config(text: str) -> RunConfig:
    """Parse and validate a JSON run configuration.

    All problems are aggregated into one ConfigError listing each field
    path; defaults are applied and echoed in the returned object.
    """
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    errors = []
    known_top = {"grid", "species", "branch", "alphas", "betas", "box",
                 "solver", "probe", "shooting", "output_dir", "seed_label"}
    for k in raw:
        if k not in known_top:
            errors.append(f"{k}: unknown key")

    grid = _merge_section(errors, raw, "grid", _GRID_DEFAULTS, ("dim", "r_max", "n"))
    if grid["dim"] not in (3, 4, 5):
        errors.append(f"grid.dim: {grid['dim']} out of range, requires 3 <= N <= 5")
    if isinstance(grid.get("r_max"), (int, float)) and grid["r_max"] <= 0:
        errors.append("grid.r_max: must be positive")
    if isinstance(grid.get("n"), (int, float)) and grid["n"] < 16:
        errors.append("grid.n: needs at least 16 nodes")

    species = raw.get("species")
    parsed_species = []
    if not isinstance(species, list) or len(species) != 3:
        errors.append("species: expected a list of exactly three parameter blocks")
        species = []
    for i, blk in enumerate(species):
        if not isinstance(blk, dict):
            errors.append(f"species[{i}]: expected an object")
            continue
        for k in blk:
            if k not in _SPECIES_KEYS:
                errors.append(f"species[{i}].{k}: unknown key")
        params = {"m": 1.0, "a": 1.0, "b": 0.0, "p": 3.0, "q": 5.0}
        params.update({k: blk[k] for k in blk if k in _SPECIES_KEYS})
        try:
            parsed_species.append(NonlinearitySpec(**params))
        except (NonlinearityError, TypeError) as exc:
            errors.append(f"species[{i}]: {exc}")

    branch = raw.get("branch", "ground_only")
    if branch not in BRANCHES:
        errors.append(f"branch: {branch!r} not one of {BRANCHES}")

    alphas = raw.get("alphas")
    betas = raw.get("betas")
    if alphas is not None and (not isinstance(alphas, list)
                               or not all(isinstance(a, (int, float)) for a in alphas)):
        errors.append("alphas: expected a list of numbers")
        alphas = None
    if betas is not None and (not isinstance(betas, list)
                              or not all(isinstance(b, (int, float)) for b in betas)):
        errors.append("betas: expected a list of numbers")
        betas = None

    box = _merge_section(errors, raw, "box", _BOX_DEFAULTS,
                         ("half_width", "samples_per_axis", "mu_factor"))
    if isinstance(box.get("mu_factor"), (int, float)) and not (0 < box["mu_factor"] < 1 / 3):
        errors.append("box.mu_factor: must lie in (0, 1/3) so all neighborhood "
                      "components stay nontrivial")
    if isinstance(box.get("samples_per_axis"), (int, float)) and box["samples_per_axis"] < 9:
        errors.append("box.samples_per_axis: needs at least 9 samples")

    solver = _merge_section(errors, raw, "solver", _SOLVER_DEFAULTS,
                            ("tol", "max_iters", "epsilon_kick"))
    if isinstance(solver.get("tol"), (int, float)) and solver["tol"] <= 0:
        errors.append("solver.tol: must be positive")

    probe = _merge_section(errors, raw, "probe", _PROBE_DEFAULTS, ())
    eps = probe.get("epsilons")
    if not isinstance(eps, list) or not all(isinstance(e, (int, float)) and e > 0 for e in eps):
        errors.append("probe.epsilons: expected a list of positive numbers")
    elif any(x >= y for x, y in zip(eps, eps[1:])):
        errors.append("probe.epsilons: must be strictly ascending")

    shooting = _merge_section(errors, raw, "shooting", _SHOOT_DEFAULTS, ("h_max_factor",))

    output_dir = raw.get("output_dir", "out")
    seed_label = raw.get("seed_label", "default")
    if not isinstance(output_dir, str):
        errors.append("output_dir: expected a string path")
    if not isinstance(seed_label, str):
        errors.append("seed_label: expected a string")

    # branch-dependent requirements, checked against condition reports
    if not errors and parsed_species:
        dim = grid["dim"]
        reports = [check_conditions(s, dim) for s in parsed_species]
        for i, rep in enumerate(reports):
            if not rep.f1:
                errors.append(
                    f"species[{i}]: violates subcritical growth (f1) for N={dim} "
                    f"(requires exponents below {(dim + 2) / (dim - 2):g})")
            if not rep.f2:
                errors.append(f"species[{i}]: violates (f2), needs m > 0")
        need_f3 = {"X": (0, 1, 2), "surface": (0, 1, 2), "Y": (0, 1),
                   "probe": (0,), "be_probe": (0,), "ground_only": ()}[branch] \
            if branch in BRANCHES else ()
        for i in need_f3:
            if i < len(reports) and not reports[i].f3:
                errors.append(
                    f"species[{i}]: branch {branch!r} requires (f3) for this species "
                    f"({'; '.join(reports[i].notes) or 'no positive-primitive point'})")
        if branch == "ground_only" and not any(r.f3 for r in reports):
            errors.append("species: ground_only requires at least one species passing (f3)")
        if branch in ("X", "Y") and not alphas:
            errors.append(f"alphas: branch {branch!r} requires a coupling list")
        if branch in ("X", "Y") and alphas:
            if any(a <= 0 for a in alphas):
                errors.append("alphas: branch sweeps require positive couplings "
                              "(negative couplings map to the mirrored system)")
            if not all(x > y for x, y in zip(alphas, alphas[1:])):
                errors.append("alphas: must be strictly decreasing for a sweep")
        if branch in ("probe", "surface") and not alphas:
            errors.append(f"alphas: branch {branch!r} requires a coupling list")
        if branch == "be_probe" and not betas:
            errors.append("betas: be_probe requires a coupling list")
    if errors:
        raise ConfigError("invalid configuration:\n  " + "\n  ".join(errors))
    return RunConfig(grid=grid, species=[{k: getattr(s, k) for k in ("m", "a", "b", "p", "q")}
                                         for s in parsed_species],
                     branch=branch, alphas=alphas, betas=betas, box=box,
                     solver=solver, probe=probe, shooting=shooting,
                     output_dir=output_dir, seed_label=seed_label)


def render(config: RunConfig) -> str:
    """Canonical JSON text of a config; parse_config(render(c)) == c."""
    return json.dumps(config.to_dict(), indent=2, sort_keys=True)


@dataclass
class ResultBundle:
    config: dict
    grounds: list
    results: dict
    meta: dict

    def to_dict(self) -> dict:
        return {"config": self.config, "grounds": self.grounds,
                "results": self.results, "meta": self.meta}

    def scalar_payload(self) -> str:
        """Deterministic part of the bundle (excludes timing metadata)."""
        return json.dumps({"config": self.config, "grounds": self.grounds,
                           "results": self.results}, indent=2, sort_keys=True)


def _f(x):
    return None if x is None else float(x)


def _ground_meta(idx: int, gs: GroundState, profile_file: str) -> dict:
    return {
        "species": idx + 1,
        "method": gs.method,
        "c": _f(gs.c),
        "c_oracle": _f(gs.c_oracle),
        "lambda": _f(gs.lam),
        "pohozaev_residual": _f(gs.pohozaev_residual),
        "shoot_height": _f(gs.shoot_height),
        "gradient_sq": _f(gs.gradient_sq()),
        "h1_norm": _f(gs.h1_norm()),
        "oracle_h1_gap": _f(gs.oracle_h1_gap),
        "profile_file": profile_file,
    }


def _sweep_payload(sw: SweepResult) -> dict:
    recs = []
    for r in sw.records:
        recs.append({
            "alpha": _f(r.alpha),
            "dual_norm": _f(r.dual_norm),
            "I_value": _f(r.I_value),
            "dist_X": _f(r.dist_X),
            "dist_Y": _f(r.dist_Y),
            "dist_Z": _f(r.dist_Z),
            "component_norms": [[_f(p[0]), _f(p[1])] for p in r.component_norms],
        })
    return {"branch": sw.branch, "records": recs,
            "failed_alpha": sw.failed_alpha, "error": sw.error}


def _probe_payload(pr: ProbeReport) -> dict:
    return {
        "alpha": _f(pr.alpha),
        "rho_empirical": _f(pr.rho_empirical) if np.isfinite(pr.rho_empirical) else None,
        "rho_paper": _f(pr.rho_paper),
        "sobolev_constant": _f(pr.sobolev_constant),
        "alpha_window": _f(pr.alpha_window),
        "collapse_threshold": _f(pr.collapse_threshold),
        "attempts": [{
            "seed": at.seed_label, "eps": _f(at.eps), "sign": _f(at.sign),
            "outcome": at.outcome, "coupled_norm_sq": _f(at.coupled_norm_sq),
            "component_lambda_sq": [_f(c) for c in at.component_lambda_sq],
        } for at in pr.attempts],
    }


def _write_profile(path: Path, gs: GroundState) -> None:
    lines = ["r,omega"]
    for r, v in zip(gs.grid.nodes, gs.omega.values):
        lines.append(f"{float(r)!r},{float(v)!r}")
    path.write_text("\n".join(lines) + "\n")


def run(config: RunConfig, threads: int = 1) -> ResultBundle:
    """Execute the configured pipeline and persist the result bundle.

    Ground states are computed (in parallel over distinct species when
    threads > 1), then the selected branch/probe/surface stage runs.  On a
    solver failure the partial bundle is written with a "failed" status
    before the error propagates.
    """
    t_start = time.perf_counter()
    grid = make_grid(int(config.grid["dim"]), float(config.grid["r_max"]),
                     int(config.grid["n"]))
    specs = tuple(NonlinearitySpec(**blk) for blk in config.species)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    tol = float(config.solver["tol"])
    h_max_factor = float(config.shooting["h_max_factor"])

    reports = [check_conditions(s, grid.dim) for s in specs]
    need = {"X": (0, 1, 2), "surface": (0, 1, 2), "Y": (0, 1), "probe": (0,),
            "be_probe": (0,), "ground_only": tuple(i for i, r in enumerate(reports) if r.f3)}
    wanted = need[config.branch]

    grounds_meta: list = []
    results: dict = {"status": "ok", "branch": config.branch,
                     "seed_label": config.seed_label}
    bundle = ResultBundle(config=config.to_dict(), grounds=grounds_meta,
                          results=results, meta={})

    def finalize(status: str, error: str | None = None) -> ResultBundle:
        from . import __version__
        results["status"] = status
        if error:
            results["error"] = error
        bundle.meta = {"version": __version__,
                       "timing_seconds": time.perf_counter() - t_start}
        (out / "bundle.json").write_text(
            json.dumps(bundle.to_dict(), indent=2, sort_keys=True) + "\n")
        return bundle

    try:
        # distinct parameter blocks share one ground-state computation; the
        # certification tolerance is decoupled from aggressive branch tols
        unique: dict = {}
        for i in wanted:
            unique.setdefault(specs[i], []).append(i)
        ground_tol = float(np.clip(tol, 1e-12, 1e-7))

        def compute(sp):
            return least_energy_set(sp, grid, tol=ground_tol)

        grounds_by_spec = {}
        items = sorted(unique.items(), key=lambda kv: kv[1][0])
        if threads > 1 and len(items) > 1:
            with ThreadPoolExecutor(max_workers=min(threads, len(items))) as ex:
                futures = [(sp, ex.submit(compute, sp)) for sp, _ in items]
            grounds_by_spec = {sp: fut.result() for sp, fut in futures}
        else:
            for sp, _ in items:
                grounds_by_spec[sp] = compute(sp)
        grounds = {i: grounds_by_spec[specs[i]] for i in wanted}

        for i in sorted(grounds):
            fname = f"ground_species{i+1}.csv"
            _write_profile(out / fname, grounds[i])
            grounds_meta.append(_ground_meta(i, grounds[i], fname))

        if config.branch == "ground_only":
            pass
        elif config.branch in ("X", "Y"):
            sys0 = SystemSpec(specs, 0.0, grid)
            if config.branch == "X":
                box = make_box("X_box", tuple(grounds[i] for i in (0, 1, 2)),
                               mu_factor=float(config.box["mu_factor"]),
                               half_width=config.box["half_width"],
                               samples_per_axis=int(config.box["samples_per_axis"]))
            else:
                box = make_box("Y_box", (grounds[0], grounds[1]),
                               mu_factor=float(config.box["mu_factor"]),
                               half_width=config.box["half_width"],
                               samples_per_axis=int(config.box["samples_per_axis"]),
                               j3_check=lambda u: energy_J(specs[2], u))
            sw = sweep(sys0, box, config.alphas, config.branch, tol=tol,
                       epsilon_kick=float(config.solver["epsilon_kick"]))
            results["sweep"] = _sweep_payload(sw)
            if sw.failed_alpha is not None:
                return finalize("failed", sw.error)
        elif config.branch == "surface":
            box = make_box("X_box", tuple(grounds[i] for i in (0, 1, 2)),
                           mu_factor=float(config.box["mu_factor"]),
                           half_width=config.box["half_width"],
                           samples_per_axis=int(config.box["samples_per_axis"]))
            surfaces = []
            for a in config.alphas:
                sys_a = SystemSpec(specs, float(a), grid)
                surf = box_energy_surface(sys_a, box)
                surfaces.append({
                    "alpha": float(a),
                    "d_alpha": _f(surf.d_alpha),
                    "boundary_max": _f(surf.boundary_max),
                    "maximizer": [float(s) for s in surf.maximizer],
                    "D": _f(surf.D),
                    "sum_c": _f(sum(g.c for g in box.grounds)),
                    "axes": [float(s) for s in surf.axes],
                    "I_values": surf.I_values.tolist(),
                })
            results["surfaces"] = surfaces
        elif config.branch == "probe":
            probes = []
            for a in config.alphas:
                sys_a = SystemSpec(specs, float(a), grid)
                pr = nonexistence_probe(sys_a, (grounds[0],),
                                        config.probe["epsilons"], tol=tol)
                probes.append(_probe_payload(pr))
            results["probes"] = probes
        elif config.branch == "be_probe":
            probes = []
            for b in config.betas:
                sys_b = BESystem(specs, (float(b), float(b), float(b)), grid)
                pr = be_system_probe(sys_b, (grounds[0],),
                                     config.probe["epsilons"], tol=tol)
                probes.append(_probe_payload(pr))
            results["probes"] = probes
    except DichotomyViolation as exc:
        finalize("failed", str(exc))
        raise
    except SolverError as exc:
        finalize("failed", str(exc))
        raise

    bundle = finalize("ok")
    emit_plotdata(bundle, "branch_asymptotics", out)
    emit_plotdata(bundle, "energy_surface", out)
    emit_plotdata(bundle, "probe_dichotomy", out)
    return bundle


def write_descent_trace(trace, path) -> None:
    """Stream a per-iteration descent trace to CSV.

    Columns: iteration, I (discrete action), dual_norm, dist_to_product_set.
    Collect the trace by calling `descend(..., keep_trace=True)`.
    """
    lines = ["iteration,I,dual_norm,dist_to_product_set"]
    for it, I, dual, dist in trace:
        lines.append(f"{it},{float(I)!r},{float(dual)!r},{float(dist)!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def emit_plotdata(bundle: ResultBundle, kind: str, out_dir=None) -> dict:
    """Write the plot-data CSV for one figure kind.

    Returns {"written": [paths], "missing": [series]}; a missing series is
    reported, not fatal.
    """
    out = Path(out_dir if out_dir is not None else bundle.config["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    written, missing = [], []
    if kind == "branch_asymptotics":
        sw = bundle.results.get("sweep")
        if not sw or not sw.get("records"):
            missing.append("sweep records")
        else:
            lines = ["alpha,dist_X,dist_Y,u3_h1"]
            for r in sw["records"]:
                dx = "" if r["dist_X"] is None else repr(r["dist_X"])
                u3 = r["component_norms"][2][1]
                lines.append(f"{r['alpha']!r},{dx},{r['dist_Y']!r},{u3!r}")
            p = out / "branch_asymptotics.csv"
            p.write_text("\n".join(lines) + "\n")
            written.append(str(p))
    elif kind == "energy_surface":
        surfaces = bundle.results.get("surfaces")
        if not surfaces:
            missing.append("energy surfaces")
        else:
            for s in surfaces:
                lines = ["s1,s2,s3,I"]
                axes = s["axes"]
                I = s["I_values"]
                for i, a1 in enumerate(axes):
                    for j, a2 in enumerate(axes):
                        for k, a3 in enumerate(axes):
                            lines.append(f"{a1!r},{a2!r},{a3!r},{I[i][j][k]!r}")
                p = out / f"energy_surface_alpha{s['alpha']:g}.csv"
                p.write_text("\n".join(lines) + "\n")
                written.append(str(p))
    elif kind == "probe_dichotomy":
        probes = bundle.results.get("probes")
        if not probes:
            missing.append("probe reports")
        else:
            lines = ["coupling,eps,sign,coupled_norm_sq,outcome"]
            for pr in probes:
                for at in pr["attempts"]:
                    lines.append(f"{pr['alpha']!r},{at['eps']!r},{at['sign']!r},"
                                 f"{at['coupled_norm_sq']!r},{at['outcome']}")
            p = out / "probe_dichotomy.csv"
            p.write_text("\n".join(lines) + "\n")
            written.append(str(p))
    else:
        raise ValueError(f"unknown plot-data kind {kind!r}")
    return {"written": written, "missing": missing}
