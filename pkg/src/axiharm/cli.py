"""Command-line entry point: ``axiharm {solve,validate,reconstruct,report}``.

``solve`` runs seed -> exhaustion -> diagnostics -> reconstruction and
writes into the output directory:

* ``checkpoint_R<i>.npz``: fields on ball ``i`` with their grid and metadata,
* ``report.json``: seed decay fit, solve histories, diagnostics verdicts,
  closedness and conical reports (no timings, so reruns are byte-identical),
* ``sigma_rays.csv``, ``metric.csv``, ``fields.csv``: columnar tables.

``report`` rebuilds ``report.json`` and the tables from the checkpoints;
``reconstruct`` writes only the spacetime artifacts.  Exit status: 0 on
success, 1 if a validation suite fails, 2 on bad input, 3 if a solve fails.
The only environment variable read is ``AXIHARM_THREADS``.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from .config import RunConfig, help_text, parse_config
from .diagnostics import decay_at_infinity, run_diagnostics, uniformity_across_R
from .discretization import Grid
from .errors import ConfigError, SolverError
from .seed import build_seed, measured_constant, seed_tension_report
from .solver import FieldState, SolveReport, cauchy_difference, probe_points, solve_on_ball
from .spacetime import assemble_metric, conical_deficit, reconstruct
from .validation import run_suites

log = logging.getLogger("axiharm")

EXIT_OK, EXIT_FAILED_CHECK, EXIT_BAD_INPUT, EXIT_SOLVER = 0, 1, 2, 3
CHECKPOINT_FORMAT = "axiharm-checkpoint/1"
BUNDLED = ("schwarzschild",)


# ---------------------------------------------------------------------------
# artifacts


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    return obj


def write_json(path: Path, obj):
    path.write_text(json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n")


def write_csv(path: Path, columns: dict):
    names = list(columns)
    cols = [np.asarray(columns[n], dtype=float).ravel() for n in names]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for row in zip(*cols):
            w.writerow([repr(float(v)) for v in row])


def save_checkpoint(path: Path, state: FieldState, cfg: RunConfig, report: SolveReport):
    """Fields in the gauge of the config file, with everything needed to reload them."""
    gauge = cfg.gauge
    x_user = gauge.inverse().apply_packed(state.x)
    g = state.grid
    meta = {
        "format": CHECKPOINT_FORMAT,
        "layout": ["U = u - u0", "v"] + [f"chi[{a}]" for a in range(state.k)] + [f"psi[{a}]" for a in range(state.k)],
        "k": state.k,
        "rods": [list(gap) for gap in g.rods.gaps],
        "R": g.R,
        "h": g.h,
        "converged": bool(state.converged),
        "residual": float(state.residual),
        "iterations": int(state.iterations),
        "gauge": {"a": gauge.a.tolist(), "b": gauge.b.tolist(), "c": gauge.c},
        "solve_report": report.to_dict(),
        "config": cfg.text,
        "overrides": cfg.overrides,
    }
    np.savez(path, x=x_user, rho=g.rho, z=g.z, meta=np.array(json.dumps(_clean(meta), sort_keys=True)))


def load_checkpoint(path: Path):
    """Returns ``(cfg, state, report_dict)`` with ``state`` in the solved gauge."""
    with np.load(path, allow_pickle=False) as f:
        meta = json.loads(str(f["meta"]))
        if meta.get("format") != CHECKPOINT_FORMAT:
            raise ConfigError(f"{path}: not an axiharm checkpoint")
        cfg = parse_config(meta["config"], meta["overrides"], announce=False)
        grid = Grid(cfg.rods, f["rho"], f["z"], meta["R"], meta["h"])
        x = cfg.gauge.apply_packed(f["x"])
    state = FieldState(grid, x, meta["k"], meta["iterations"], meta["converged"], meta["residual"])
    return cfg, state, meta["solve_report"]


def _checkpoints(out: Path):
    paths = sorted(out.glob("checkpoint_R*.npz"), key=lambda p: int(p.stem.split("R")[-1]))
    if not paths:
        raise ConfigError(f"no checkpoints in {out}; run 'axiharm solve' first")
    return paths


# ---------------------------------------------------------------------------
# pipeline stages


def seed_section(cfg: RunConfig, seed):
    Rs = seed.cfg.R_star
    radii = np.geomspace(2 * Rs, 64 * Rs, cfg.decay_radii)
    angles = np.linspace(0.0, np.pi, 35)[1:-1]
    decay = seed_tension_report(seed, radii, angles)
    c_meas = measured_constant(seed, extra_radii=radii)
    return decay, c_meas


def run_solve(cfg: RunConfig, out: Path) -> int:
    """Exhaustion with a checkpoint per ball; the report is built from the checkpoints."""
    seed = build_seed(cfg.rods, cfg.solve_spec, cfg.seed)
    p = cfg.params
    prev = None
    done = []
    for i, R in enumerate(p.schedule(cfg.rods)):
        log.info("solving on the ball of radius %g", R)
        try:
            grid = Grid.build(cfg.rods, R, p.h, p.grading, min_gap_cells=p.min_gap_cells).refined(p.refine)
            state, rep = solve_on_ball(seed, cfg.rods, grid, p, prev, cfg.k)
        except SolverError as exc:
            partial = exc.report.to_dict() if exc.report is not None else None
            write_json(out / "report.json", {"status": "failed", "message": str(exc), "config": cfg.resolved(),
                                             "runs": done, "failed_run": partial})
            log.error("solve failed at R = %g: %s", R, exc)
            return EXIT_SOLVER
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        save_checkpoint(out / f"checkpoint_R{i}.npz", state, cfg, rep)
        done.append(rep.to_dict())
        if not rep.converged:
            write_json(out / "report.json", {"status": "failed", "message": rep.message, "config": cfg.resolved(),
                                             "runs": done})
            log.error("no convergence at R = %g: %s", R, rep.message)
            return EXIT_SOLVER
        prev = state
    return run_report(out, cfg)


def _reconstruction(cfg: RunConfig, state: FieldState):
    fields = reconstruct(state, cfg.twist_convention, cfg.tube, cfg.warn_above)
    conical = conical_deficit(fields)
    metric = assemble_metric(fields)
    section = {
        "twist_convention": cfg.twist_convention,
        "closedness": fields.closedness(),
        "det_identity_error": metric.det_identity_error(),
        "signature_ok": metric.signature_ok(),
        "warnings": fields.warnings,
    }
    for w in fields.warnings:
        log.warning(w)
    return fields, conical, metric, section


def _field_columns(cfg: RunConfig, state: FieldState, fields):
    g = state.grid
    sel = g.inside & ~g.sigma_nodes
    x = cfg.gauge.inverse().apply_packed(state.x)
    cols = {"rho": g.RHO[sel], "z": g.Z[sel], "U": x[0][sel], "v": x[1][sel]}
    for a in range(state.k):
        cols[f"chi[{a}]"] = x[2 + a][sel]
        cols[f"psi[{a}]"] = x[2 + state.k + a][sel]
    cols["w"] = fields.w.values[sel]
    cols["lambda"] = fields.lam.values[sel]
    for a, t in enumerate(fields.theta):
        cols[f"theta[{a}]"] = t.values[sel]
    return cols


def run_report(out: Path, cfg: RunConfig | None = None) -> int:
    paths = _checkpoints(out)
    loaded = [load_checkpoint(p) for p in paths]
    cfg = cfg or loaded[0][0]
    seed = build_seed(cfg.rods, cfg.solve_spec, cfg.seed)
    decay, c_meas = seed_section(cfg, seed)
    states = [s for _, s, _ in loaded]
    runs = []
    bounds = []
    for (_, st, rep), path in zip(loaded, paths):
        x = cfg.gauge.inverse().apply_packed(st.x)
        diag = run_diagnostics(st, seed, c_meas)
        bounds.append(diag.bound)
        runs.append({"checkpoint": path.name, "solve": rep, "diagnostics": diag.to_dict(),
                     "sup_u_reg": float(np.max(np.abs(x[0][st.grid.inside]))),
                     "sup_v": float(np.max(np.abs(x[1][st.grid.inside])))})
    rho, z = probe_points(states[0].grid, min(states[0].R / 2, 2 * cfg.rods.outer_extent + cfg.rods.min_length))
    cauchy = [cauchy_difference(states[i], states[i + 1], rho, z) for i in range(len(states) - 1)]
    final = states[-1]
    decay_inf = decay_at_infinity(final, seed, c_meas, n_rays=cfg.n_rays)
    fields, conical, metric, recon = _reconstruction(cfg, final)
    report = {
        "status": "ok",
        "config": cfg.resolved(),
        "gauge": {"a": cfg.gauge.a, "b": cfg.gauge.b, "c": cfg.gauge.c},
        "free_parameters": cfg.n_free_parameters,
        "seed_decay": decay.to_dict(),
        "c_measured": c_meas,
        "runs": runs,
        "cauchy": cauchy,
        "cauchy_decreasing": bool(all(b < a for a, b in zip(cauchy, cauchy[1:]))),
        "uniformity": uniformity_across_R(bounds).to_dict() if len(bounds) >= 3 else None,
        "decay_at_infinity": decay_inf.to_dict(),
        "reconstruction": recon,
        "conical": conical.to_dict(),
    }
    write_json(out / "report.json", report)
    write_csv(out / "sigma_rays.csv", decay_inf.to_columns())
    write_csv(out / "metric.csv", metric.to_columns())
    write_csv(out / "fields.csv", _field_columns(cfg, final, fields))
    return EXIT_OK


def run_reconstruct(out: Path, cfg: RunConfig | None = None) -> int:
    ck_cfg, state, _ = load_checkpoint(_checkpoints(out)[-1])
    cfg = cfg or ck_cfg
    fields, conical, metric, recon = _reconstruction(cfg, state)
    write_json(out / "reconstruction.json", {"reconstruction": recon, "conical": conical.to_dict()})
    write_csv(out / "metric.csv", metric.to_columns())
    write_csv(out / "fields.csv", _field_columns(cfg, state, fields))
    return EXIT_OK


def run_validate(out: Path | None) -> int:
    results = run_suites()
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}")
    if out is not None:
        write_json(out / "validate.json", {"suites": [r.to_dict() for r in results]})
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAILED_CHECK


# ---------------------------------------------------------------------------
# argument handling


def bundled_config(name: str) -> str:
    return (resources.files("axiharm") / "configs" / f"{name}.toml").read_text()


def _read_config_text(spec: str) -> tuple[str, str]:
    path = Path(spec)
    if path.is_file():
        return path.read_text(), str(path)
    if spec in BUNDLED:
        return bundled_config(spec), f"<bundled {spec}>"
    raise ConfigError(f"config {spec!r} is neither a file nor a bundled config ({', '.join(BUNDLED)})")


def _overrides(args, command):
    ov = {"command": command}
    if args.out is not None:
        ov["output"] = args.out
    if getattr(args, "refine", None) is not None:
        ov["grid.refine"] = args.refine
    if getattr(args, "tol", None) is not None:
        ov["solver.tol"] = args.tol
    if getattr(args, "R_schedule", None) is not None:
        try:
            ov["solver.R_schedule"] = [float(s) for s in args.R_schedule.split(",") if s.strip()]
        except ValueError:
            raise ConfigError(f"--R-schedule must be comma-separated numbers, got {args.R_schedule!r}") from None
    return ov


def build_parser():
    parser = argparse.ArgumentParser(
        prog="axiharm", formatter_class=argparse.RawDescriptionHelpFormatter,
        description="Axisymmetric harmonic maps into complex hyperbolic space with prescribed rod singularities.",
        epilog=help_text() + f"\n\nBundled configs: {', '.join(BUNDLED)}. "
               "Environment: AXIHARM_THREADS caps the worker threads.")
    parser.add_argument("-q", "--quiet", action="store_true", help="only log warnings and errors")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, need_config):
        p.add_argument("--config", required=need_config,
                       help="TOML config file or bundled config name")
        p.add_argument("--out", help="output directory (overrides 'output')")

    p = sub.add_parser("solve", help="seed, exhaustion, diagnostics and reconstruction")
    common(p, True)
    p.add_argument("--refine", type=int, help="nested refinement level (overrides grid.refine)")
    p.add_argument("--R-schedule", dest="R_schedule", help="comma-separated ball radii")
    p.add_argument("--tol", type=float, help="tension tolerance (overrides solver.tol)")
    p = sub.add_parser("validate", help="analytic-oracle suites; exit 0 iff all pass")
    p.add_argument("--out", help="also write validate.json here")
    for name, doc in (("reconstruct", "spacetime fields from the last checkpoint"),
                      ("report", "rebuild report.json and tables from the checkpoints")):
        p = sub.add_parser(name, help=doc)
        common(p, False)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "validate":
            out = Path(args.out) if args.out else None
            if out is not None:
                out.mkdir(parents=True, exist_ok=True)
            return run_validate(out)
        cfg = None
        if args.config is not None:
            text, origin = _read_config_text(args.config)
            try:
                cfg = parse_config(text, _overrides(args, args.command))
            except ConfigError as exc:
                raise ConfigError(f"{origin}: {exc}") from None
        out = Path(args.out if args.out is not None else (cfg.output if cfg else "axiharm-out"))
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "solve":
            return run_solve(cfg, out)
        if args.command == "report":
            return run_report(out, cfg)
        return run_reconstruct(out, cfg)
    except ConfigError as exc:
        print(f"axiharm: error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
