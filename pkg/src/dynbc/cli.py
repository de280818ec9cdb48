"""Command line entry point: ``dynbc {solve,study,infsup,list-presets}``."""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .pdae import PdaeError, consistent_init
from .problems import (
    build_geometry,
    build_system,
    full_bulk_vector,
    l2_error_boundary,
    l2_error_bulk,
    multiplier_mesh_for,
)
from .timestepping import StepperConfig, integrate
from .verification.infsup import garding_constant, infsup_for_system
from .verification.manufactured import list_presets
from .verification.studies import run_convergence_study, run_temporal_study

EXIT_OK, EXIT_INTERNAL, EXIT_CONFIG = 0, 1, 2


def _multiplier_arg(cfg: RunConfig):
    mm = cfg.multiplier_mesh
    if isinstance(mm, dict):
        return ("independent", int(mm["m"]), float(mm.get("offset", 0.0)))
    return None


def system_from_config(cfg: RunConfig, n=None):
    """Build ``(system, initial_state, case)`` for ``cfg`` on level ``n`` (default ``cfg.n``)."""
    n = cfg.n if n is None else n
    mesh = build_geometry(cfg.geometry, n)
    mult = multiplier_mesh_for(mesh, _multiplier_arg(cfg))
    case = cfg.case
    coeffs, arc = cfg.coefficients()
    if case is not None:
        sys_ = build_system(cfg.formulation, mesh, coeffs, case.f, case.g, mult)
        return sys_, consistent_init(sys_, case.u0), case
    if arc and cfg.formulation in ("wentzell", "nonlocal"):
        from .pdae import build_nonlocal_pdae, build_wentzell_pdae

        builder = build_wentzell_pdae if cfg.formulation == "wentzell" else build_nonlocal_pdae
        sys_ = builder(mesh, mult, coeffs, alpha_arc=True)
    else:
        sys_ = build_system(cfg.formulation, mesh, coeffs, None, None, mult)
    return sys_, consistent_init(sys_, lambda X: np.full(len(X), float(cfg.u0))), None


def _stepper(cfg: RunConfig) -> StepperConfig:
    try:
        return StepperConfig(cfg.scheme, cfg.tau, cfg.t_end, cfg.solver_tol)
    except ValueError as exc:
        raise ConfigError(str(exc), field="scheme,tau,t_end") from None


def _write(outdir: Path, name: str, text: str, written: list):
    path = outdir / name
    path.write_text(text)
    written.append(name)


def _manifest(cfg: RunConfig, mode: str, written: list, extra=None) -> str:
    doc = {
        "mode": mode,
        "version": __version__,
        "config": cfg.to_dict(),
        "config_hash": cfg.content_hash(),
        "files": sorted(written),
    }
    if extra:
        doc.update(extra)
    return json.dumps(doc, indent=2, sort_keys=True)


def _outdir(cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError("output directory %s is not writable: %s" % (out, exc.strerror),
                          field="outputs.directory") from None
    return out


def cmd_solve(cfg: RunConfig) -> int:
    step_cfg = _stepper(cfg)
    sys_, init, case = system_from_config(cfg)
    traj = integrate(sys_, init, step_cfg)
    out = _outdir(cfg)
    written = []
    probes = [("u[0]", 0)] + ([("p[0]", sys_.n_u)] if sys_.n_p else [])
    if "csv" in cfg.formats:
        _write(out, "trajectory.csv", traj.to_csv(probes), written)
    if "json" in cfg.formats:
        _write(out, "trajectory.json", traj.to_json(), written)
        _write(out, "system.json", sys_.summary_json(init), written)
    extra = {"max_constraint_residual": float(traj.constraint_residual.max())}
    if case is not None:
        t = cfg.t_end
        u, p = sys_.split(traj.states[-1])
        extra["err_u"] = l2_error_bulk(sys_.mesh, full_bulk_vector(sys_, u), lambda X: case.exact_u(X, t))
        if sys_.n_p:
            extra["err_p"] = l2_error_boundary(sys_.trace_mesh, p, lambda X: case.exact_u(X, t))
    written.append("manifest.json")
    (out / "manifest.json").write_text(_manifest(cfg, "solve", written, extra))
    return EXIT_OK


def _eoc_csv(table) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    keys = table.error_keys
    level = "n" if "n" in table.rows[0] else "tau"
    w.writerow([level + "_coarse", level + "_fine"] + ["eoc_" + k for k in keys])
    for a, b in zip(table.rows, table.rows[1:]):
        w.writerow([a[level], b[level]] + ["%.17g" % b["eoc_" + k] for k in keys])
    return buf.getvalue()


def cmd_study(cfg: RunConfig) -> int:
    case = cfg.case
    if case is None:
        raise ConfigError("study requires a manufactured data preset", field="data")
    step_cfg = _stepper(cfg)
    if cfg.study == "space":
        levels = [int(n) for n in cfg.levels]
        if len(levels) < 3:
            raise ConfigError("study needs at least 3 levels", field="levels")
        table = run_convergence_study(case, levels, step_cfg, _multiplier_arg(cfg))
    else:
        taus = [float(t) for t in cfg.taus]
        if len(taus) < 3:
            raise ConfigError("time study needs at least 3 step sizes", field="taus")
        table = run_temporal_study(case, cfg.n, cfg.scheme, taus, cfg.t_end)
    out = _outdir(cfg)
    written = []
    if "csv" in cfg.formats:
        _write(out, "errors.csv", table.to_csv(), written)
        _write(out, "eoc.csv", _eoc_csv(table), written)
    if "json" in cfg.formats:
        _write(out, "eoc.json", table.to_json(), written)
    written.append("manifest.json")
    (out / "manifest.json").write_text(
        _manifest(cfg, "study", written, {"non_monotone": table.non_monotone}))
    return EXIT_OK


def cmd_infsup(cfg: RunConfig) -> int:
    if cfg.formulation not in ("wentzell", "nonlocal"):
        raise ConfigError("infsup needs a coupled formulation (wentzell or nonlocal)",
                          field="formulation")
    rows = []
    for n in cfg.levels:
        sys_, _, _ = system_from_config(cfg, int(n))
        row = {"n": int(n), "beta_h": infsup_for_system(sys_)}
        try:
            row["garding_c"] = garding_constant(sys_)
        except np.linalg.LinAlgError:
            row["garding_c"] = float("nan")
        rows.append(row)
    out = _outdir(cfg)
    written = []
    if "csv" in cfg.formats:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "beta_h", "garding_c"])
        for r in rows:
            w.writerow([r["n"], "%.17g" % r["beta_h"], "%.17g" % r["garding_c"]])
        _write(out, "infsup.csv", buf.getvalue(), written)
    if "json" in cfg.formats:
        _write(out, "infsup.json", json.dumps(rows, indent=2), written)
    written.append("manifest.json")
    (out / "manifest.json").write_text(_manifest(cfg, "infsup", written))
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "study": cmd_study, "infsup": cmd_infsup}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dynbc",
        description="Parabolic problems with dynamic boundary conditions as constrained FE systems.",
    )
    parser.add_argument("--version", action="version", version="%(prog)s " + __version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (("solve", "integrate one configuration"),
                        ("study", "mesh or time-step convergence study"),
                        ("infsup", "discrete inf-sup and Garding constants over mesh levels")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("config", help="TOML or JSON run configuration")
    sub.add_parser("list-presets", help="print manufactured cases and geometries")
    return parser


def _error(doc: dict) -> None:
    sys.stderr.write(json.dumps(doc) + "\n")


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list-presets":
        print(list_presets())
        return EXIT_OK
    try:
        cfg = load_config(args.config)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        _error(exc.to_dict())
        return EXIT_CONFIG
    except (PdaeError, ValueError) as exc:
        _error({"error": "config", "message": str(exc)})
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - reported as machine-readable JSON
        _error({"error": "internal", "type": type(exc).__name__, "message": str(exc)})
        return EXIT_INTERNAL


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
