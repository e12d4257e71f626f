"""Command-line front end.

Subcommands: characterize, dispatch, reliability, make-testcase.  Exit codes:
0 success, 2 validation error, 3 solver did not reach optimality, 4 I/O error.
Every output file carries a provenance header (tool version, SHA-256 of the
inputs, echo of the configuration) and no timestamps, so repeated runs with
the same inputs produce identical bytes.
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from . import characterization as ch
from .dispatch import (CaseError, FormulationError, VerificationError, build_dispatch, load_case,
                       make_formulation, read_battery_schedule, save_case, schedule_from_vector,
                       solve_dispatch, verify_schedule, write_schedule)
from .electrochem import BatteryParams, DomainError, ParameterError, default_battery, load_battery, save_battery
from .optim import OPTIMAL, ModelError, Tolerances, export_mps, import_solution, write_solution
from .reliability import realize_battery_schedule, realize_schedule
from .testcase import make_testcase

log = logging.getLogger("battdispatch")

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_SOLVER = 3
EXIT_IO = 4

MILP_DEFAULT_HORIZON = 24
DISPATCH_MODES = ("ideal", "envelope", "milp", "nlp-eval")
_FORMULATION_KIND = {"ideal": "ideal", "envelope": "envelope", "nlp-eval": "envelope",
                     "milp": "milp-triangle"}


class CliError(Exception):
    """Carries an exit code and a machine-readable payload."""

    def __init__(self, code: int, message: str, details: dict | None = None):
        super().__init__(message)
        self.code = code
        self.details = details or {}


# --------------------------------------------------------------------------
# helpers


def _sha256(path) -> str:
    h = hashlib.sha256()
    try:
        with open(path, "rb") as fh:
            for block in iter(lambda: fh.read(1 << 16), b""):
                h.update(block)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read {path}: {exc}") from exc
    return h.hexdigest()


def provenance(command: str, inputs: dict[str, str | None], config: dict) -> list[str]:
    lines = [f"battdispatch {__version__} {command}"]
    for label, path in sorted(inputs.items()):
        if path is None:
            lines.append(f"input {label}: bundled default")
        else:
            lines.append(f"input {label}: {Path(path).name} sha256={_sha256(path)}")
    lines.append("config: " + json.dumps(config, sort_keys=True, default=str))
    return lines


def _float_list(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _load_params(path) -> BatteryParams:
    if path is None:
        return default_battery()
    try:
        return load_battery(path)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read battery file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CliError(EXIT_VALIDATION, f"battery file {path}: invalid JSON ({exc})") from exc


def _mkdir(path: Path) -> Path:
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot create output directory {path}: {exc}") from exc
    return path


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(_plain(payload), indent=2) + "\n")


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _tolerances(args) -> Tolerances:
    tol = Tolerances()
    for name in ("primal", "dual", "integrality", "mip_gap", "max_iterations"):
        value = getattr(args, name, None)
        if value is not None:
            setattr(tol, name, value)
    return tol


# --------------------------------------------------------------------------
# characterize


def cmd_characterize(args) -> int:
    params = _load_params(args.battery)
    T = params.T_ref if args.temperature is None else args.temperature
    out = _mkdir(Path(args.out))
    fractions = args.power_grid or list(ch.DEFAULT_POWER_FRACTIONS)
    grids = {
        mode: (getattr(args, f"{mode}_soc_grid") or args.soc_grid or list(ch.DEFAULT_SOC_GRID[mode]))
        for mode in ch.MODES
    }
    config = {"temperature_K": T, "soc_grid": grids, "power_grid": fractions,
              "eval_points": args.eval_points, "surface_grid": [args.surface_soc_points,
                                                                args.surface_power_points]}
    header = provenance("characterize", {"battery": args.battery}, config)
    reports = {}
    eval_grid = ch.default_eval_grid(args.eval_points)
    for mode in ("discharge", "charge"):
        env = ch.sample_surface(mode, grids[mode], fractions, T, params)
        env.save(out / f"envelope_{mode}.json", header)
        rep = ch.envelope_error(env, T, params, eval_grid=eval_grid)
        reports[mode] = rep.to_dict() | {"n_envelope_samples": len(env)}
        rows = ch.surface_table(mode, T, params, args.surface_soc_points, args.surface_power_points)
        ch.write_surface_csv(out / f"surface_{mode}.csv", rows, header)
        log.info("%s envelope: %d samples, mean error %.4g", mode, len(env), rep.mean_rel_error)
    _write_json(out / "error_report.json", {"provenance": header, "temperature_K": T, **reports})
    with open(out / "limits.csv", "w") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        fh.write("soc,i_dis_over_inom,i_cha_over_inom,p_dis_max_W,p_cha_max_W\n")
        for row in ch.limits_table(T, params):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    return EXIT_OK


# --------------------------------------------------------------------------
# dispatch


def _formulations(case, mode: str, args, T_override):
    kind = _FORMULATION_KIND[mode]
    forms = {}
    for b in case.batteries:
        T = b.params.T_ref if T_override is None else T_override
        kwargs = {}
        if kind == "ideal":
            if args.eta_cha is not None:
                kwargs["eta_cha"] = args.eta_cha
            if args.eta_dis is not None:
                kwargs["eta_dis"] = args.eta_dis
        elif kind == "envelope":
            if args.envelope_dir:
                d = Path(args.envelope_dir)
                try:
                    kwargs["discharge"] = ch.EnvelopeSet.load(d / "envelope_discharge.json")
                    kwargs["charge"] = ch.EnvelopeSet.load(d / "envelope_charge.json")
                except OSError as exc:
                    raise CliError(EXIT_IO, f"cannot read envelope files in {d}: {exc}") from exc
            elif args.soc_grid or args.power_grid:
                fr = args.power_grid or list(ch.DEFAULT_POWER_FRACTIONS)
                for m in ch.MODES:
                    kwargs[m] = ch.sample_surface(m, args.soc_grid or ch.DEFAULT_SOC_GRID[m], fr, T, b.params)
        forms[b.id] = make_formulation(kind, b.params, T, **kwargs)
    return forms


def _dispatch_inputs(case_path: str, args) -> dict:
    inputs = {"case": case_path}
    if args.battery:
        inputs["battery"] = args.battery
    if args.solution:
        inputs["solution"] = args.solution
    if args.envelope_dir:
        for m in ("discharge", "charge"):
            inputs[f"envelope_{m}"] = str(Path(args.envelope_dir) / f"envelope_{m}.json")
    return inputs


def _dispatch_config(args, horizon) -> dict:
    keys = ("mode", "temperature", "eta_cha", "eta_dis", "soc_grid", "power_grid", "shed_penalty",
            "primal", "dual", "integrality", "mip_gap", "max_iterations", "node_limit", "time_limit",
            "export_mps", "timing")
    cfg = {k: getattr(args, k) for k in keys}
    cfg["horizon"] = horizon
    return cfg


def run_dispatch(case_path: str, out_dir: str, args) -> dict:
    """Build, solve (or import) and write one dispatch case; returns the summary."""
    try:
        case = load_case(case_path)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read case {case_path}: {exc}") from exc
    if args.battery:
        params = _load_params(args.battery)
        case.batteries = [dataclasses.replace(b, params=params, params_source=args.battery)
                          for b in case.batteries]
    horizon = args.horizon
    if horizon is None and args.mode == "milp" and case.horizon > MILP_DEFAULT_HORIZON:
        horizon = MILP_DEFAULT_HORIZON
        log.warning("milp mode: using the first %d of %d steps (pass --horizon to change)",
                    horizon, case.horizon)
    if horizon is not None:
        if horizon > case.horizon:
            raise CliError(EXIT_VALIDATION, f"--horizon {horizon} exceeds the case horizon {case.horizon}")
        case = case.truncated(horizon)
    forms = _formulations(case, args.mode, args, args.temperature)
    dm = build_dispatch(case, forms, shed_penalty=args.shed_penalty)
    out = _mkdir(Path(out_dir))
    header = provenance("dispatch", _dispatch_inputs(case_path, args), _dispatch_config(args, case.horizon))

    if args.export_mps:
        path = Path(args.export_mps)
        if len(args.case) > 1:
            path = out / path.name
        try:
            export_mps(dm.model, path, header)
        except OSError as exc:
            raise CliError(EXIT_IO, str(exc)) from exc
        log.info("wrote %s (%s); no solve performed", path, dm.counts())
        return {"case": case.name, "mps": str(path), **dm.counts()}

    t0 = time.perf_counter()
    if args.solution:
        try:
            x = import_solution(args.solution, dm.model)
        except OSError as exc:
            raise CliError(EXIT_IO, f"cannot read solution {args.solution}: {exc}") from exc
        sched = schedule_from_vector(dm, x, status="imported", stats=dm.counts())
        try:
            sched.residuals = verify_schedule(dm, sched)
        except VerificationError as exc:
            raise CliError(EXIT_VALIDATION, f"imported solution violates the model: {exc}",
                           {"residuals": exc.residuals}) from exc
    else:
        try:
            sched, sol = solve_dispatch(dm, _tolerances(args), node_limit=args.node_limit,
                                        time_limit=args.time_limit)
        except VerificationError as exc:
            raise CliError(EXIT_SOLVER, f"solution failed verification: {exc}",
                           {"residuals": exc.residuals}) from exc
        if sched is None or sol.status != OPTIMAL:
            details = {"status": sol.status, "message": sol.message, "iterations": sol.iterations,
                       "nodes": sol.nodes, "bound": sol.bound, **dm.counts()}
            if sched is not None:
                write_schedule(sched, out, header)
                write_solution(out / "solution.csv", dm.model, sol.x, header)
            raise CliError(EXIT_SOLVER, f"solver stopped with status {sol.status!r}", details)
        write_solution(out / "solution.csv", dm.model, sol.x, header)
    elapsed = time.perf_counter() - t0
    log.info("%s %s: objective %.10g in %.2f s", case.name, args.mode, sched.objective, elapsed)
    if args.timing:
        sched.stats["runtime_s"] = elapsed
    if args.mode == "nlp-eval":
        sched.stats["nlp_eval"] = {}
        for b in case.batteries:
            bs = sched.batteries[b.id]
            T = b.params.T_ref if args.temperature is None else args.temperature
            rep = realize_battery_schedule(bs, b.params, T, case.delta_h, e_1=b.e_initial)
            sched.stats["nlp_eval"][b.id] = {"scheduled_soc_check": rep.nlp_check,
                                             "imbalance_fraction": rep.imbalance_fraction,
                                             "clipped_steps": rep.n_clipped}
    write_schedule(sched, out, header)
    return sched.summary()


def _dispatch_job(job):
    case_path, out_dir, args = job
    try:
        return EXIT_OK, run_dispatch(case_path, out_dir, args)
    except CliError as exc:
        _error_file(Path(out_dir), exc)
        return exc.code, {"error": str(exc), **exc.details}
    except Exception as exc:  # noqa: BLE001 - mapped to an exit code below
        err = _as_cli_error(exc)
        _error_file(Path(out_dir), err)
        return err.code, {"error": str(err), **err.details}


def cmd_dispatch(args) -> int:
    if args.solution and args.export_mps:
        raise CliError(EXIT_VALIDATION, "--solution and --export-mps are mutually exclusive")
    if args.solution and len(args.case) > 1:
        raise CliError(EXIT_VALIDATION, "--solution applies to a single --case")
    if len(args.case) == 1:
        jobs = [(args.case[0], args.out, args)]
    else:
        stems = [Path(c).stem for c in args.case]
        if len(set(stems)) != len(stems):
            raise CliError(EXIT_VALIDATION, "case file names must be distinct when several are given")
        jobs = [(c, str(Path(args.out) / s), args) for c, s in zip(args.case, stems)]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_dispatch_job, jobs))
    else:
        results = [_dispatch_job(j) for j in jobs]
    code = max(r[0] for r in results)
    for (case_path, _, _), (rc, payload) in zip(jobs, results):
        if rc != EXIT_OK:
            print(json.dumps(_plain({"case": case_path, "exit_code": rc, **payload}), sort_keys=True))
            print(f"battdispatch: error: {case_path}: {payload['error']}", file=sys.stderr)
    return code


# --------------------------------------------------------------------------
# reliability


def cmd_reliability(args) -> int:
    sched_dir = Path(args.schedule)
    summary_path = sched_dir / "summary.json"
    try:
        summary = json.loads(summary_path.read_text())
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read {summary_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CliError(EXIT_VALIDATION, f"{summary_path}: invalid JSON ({exc})") from exc
    for key in ("delta_h", "batteries"):
        if key not in summary:
            raise CliError(EXIT_VALIDATION, f"{summary_path}: missing field {key!r}")
    params = _load_params(args.battery)
    T = params.T_ref if args.temperature is None else args.temperature
    ids = args.battery_id or sorted(summary["batteries"])
    out = _mkdir(Path(args.out) if args.out else sched_dir)
    for bid in ids:
        if bid not in summary["batteries"]:
            raise CliError(EXIT_VALIDATION, f"battery {bid!r} not in schedule {sched_dir}")
        cap = float(summary["batteries"][bid]["capacity_Wh"])
        if abs(cap - params.energy_capacity_Wh) > 1e-9 * max(1.0, cap):
            raise CliError(EXIT_VALIDATION,
                           f"battery {bid!r}: schedule capacity {cap} Wh does not match the parameter "
                           f"file ({params.energy_capacity_Wh} Wh)")
        path = sched_dir / f"battery_{bid}.csv"
        try:
            cols = read_battery_schedule(path)
        except OSError as exc:
            raise CliError(EXIT_IO, f"cannot read {path}: {exc}") from exc
        except ValueError as exc:
            raise CliError(EXIT_VALIDATION, str(exc)) from exc
        e1 = float(cols["energy"][0]) if len(cols["energy"]) else 0.0
        rep = realize_schedule(cols["p_cha"], cols["p_dis"], cols["energy"], e1, params, T,
                               float(summary["delta_h"]))
        rep.metadata = {"battery": bid, "formulation": summary.get("formulation"),
                        "case": summary.get("case")}
        header = provenance("reliability", {"schedule": str(path), "summary": str(summary_path),
                                            "battery": args.battery},
                            {"temperature_K": T, "battery_id": bid})
        rep.write_json(out / f"reliability_{bid}.json", header)
        rep.write_csv(out / f"realization_{bid}.csv", header)
        log.info("battery %s: imbalance %.4g Wh (%.4g), %d clipped steps", bid, rep.imbalance_Wh,
                 rep.imbalance_fraction, rep.n_clipped)
    return EXIT_OK


# --------------------------------------------------------------------------
# make-testcase


def cmd_make_testcase(args) -> int:
    params = _load_params(args.battery)
    case = make_testcase(steps=args.steps, delta_h=args.delta_h, params=params, stressed=args.stressed,
                         initial_soc=args.initial_soc)
    out = _mkdir(Path(args.out))
    case.batteries = [dataclasses.replace(b, params_source="battery.json") for b in case.batteries]
    config = {"steps": args.steps, "delta_h": args.delta_h, "stressed": args.stressed,
              "initial_soc": args.initial_soc}
    header = provenance("make-testcase", {"battery": args.battery}, config)
    save_battery(params, out / "battery.json", header)
    save_case(case, out / f"{args.name}.json", header)
    return EXIT_OK


# --------------------------------------------------------------------------
# entry point


def _add_tolerances(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("solver tolerances")
    g.add_argument("--primal-tol", dest="primal", type=float, help="primal feasibility (default 1e-7)")
    g.add_argument("--dual-tol", dest="dual", type=float, help="dual feasibility (default 1e-7)")
    g.add_argument("--integrality-tol", dest="integrality", type=float, help="default 1e-6")
    g.add_argument("--mip-gap", dest="mip_gap", type=float, help="absolute gap (default 1e-6)")
    g.add_argument("--max-iterations", type=int)
    g.add_argument("--node-limit", type=int, default=100_000)
    g.add_argument("--time-limit", type=float, help="branch-and-bound wall-clock limit in seconds")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="battdispatch", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"battdispatch {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("characterize", help="sample envelopes, error report and surface tables")
    p.add_argument("--battery", help="battery parameter JSON (default: bundled synthetic set)")
    p.add_argument("--out", required=True)
    p.add_argument("--temperature", type=float, help="kelvin (default: the battery's T_ref)")
    p.add_argument("--soc-grid", type=_float_list, help="SOC levels for both modes, e.g. 0,0.5,1")
    p.add_argument("--discharge-soc-grid", type=_float_list)
    p.add_argument("--charge-soc-grid", type=_float_list)
    p.add_argument("--power-grid", type=_float_list, help="fractions of the SOC-dependent power limit")
    p.add_argument("--eval-points", type=int, default=ch.DEFAULT_EVAL_POINTS,
                   help="error grid size per axis (default 100)")
    p.add_argument("--surface-soc-points", type=int, default=51)
    p.add_argument("--surface-power-points", type=int, default=21)
    p.set_defaults(func=cmd_characterize)

    p = sub.add_parser("dispatch", help="build and solve the economic dispatch")
    p.add_argument("--case", required=True, action="append", help="case JSON (repeatable)")
    p.add_argument("--mode", required=True, choices=DISPATCH_MODES)
    p.add_argument("--out", required=True)
    p.add_argument("--battery", help="override the parameter file of every battery")
    p.add_argument("--temperature", type=float)
    p.add_argument("--horizon", type=int, help=f"steps to keep (milp default {MILP_DEFAULT_HORIZON})")
    p.add_argument("--eta-cha", type=float, help="ideal mode charge efficiency (default 0.972)")
    p.add_argument("--eta-dis", type=float, help="ideal mode discharge efficiency (default 0.868)")
    p.add_argument("--envelope-dir", help="use envelope_*.json written by characterize")
    p.add_argument("--soc-grid", type=_float_list)
    p.add_argument("--power-grid", type=_float_list)
    p.add_argument("--shed-penalty", type=float, help="$/Wh; adds load-shedding variables")
    p.add_argument("--export-mps", metavar="PATH", help="write the model as MPS and stop")
    p.add_argument("--solution", metavar="CSV", help="load a name,value solution instead of solving")
    p.add_argument("--jobs", type=int, default=1, help="parallel processes for several --case")
    p.add_argument("--timing", action="store_true", help="record wall time in summary.json")
    _add_tolerances(p)
    p.set_defaults(func=cmd_dispatch)

    p = sub.add_parser("reliability", help="replay a schedule against the nonlinear model")
    p.add_argument("--schedule", required=True, help="directory written by dispatch")
    p.add_argument("--battery", help="battery parameter JSON (default: bundled synthetic set)")
    p.add_argument("--battery-id", action="append")
    p.add_argument("--temperature", type=float)
    p.add_argument("--out", help="default: the schedule directory")
    p.set_defaults(func=cmd_reliability)

    p = sub.add_parser("make-testcase", help="write the synthetic 24-bus case")
    p.add_argument("--out", required=True)
    p.add_argument("--name", default="case")
    p.add_argument("--battery")
    p.add_argument("--steps", type=int, default=144)
    p.add_argument("--delta-h", type=float, default=1.0 / 6.0)
    p.add_argument("--stressed", action="store_true")
    p.add_argument("--initial-soc", type=float)
    p.set_defaults(func=cmd_make_testcase)
    return parser


def _as_cli_error(exc: Exception) -> CliError:
    if isinstance(exc, CliError):
        return exc
    if isinstance(exc, ParameterError):
        return CliError(EXIT_VALIDATION, f"invalid battery parameters: {exc}")
    if isinstance(exc, (CaseError, FormulationError, ModelError, DomainError, ValueError, KeyError)):
        return CliError(EXIT_VALIDATION, str(exc))
    if isinstance(exc, OSError):
        return CliError(EXIT_IO, str(exc))
    raise exc


def _error_file(out: Path, err: CliError) -> None:
    try:
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "error.json", {"exit_code": err.code, "error": str(err), **err.details})
    except OSError:
        pass


def main(argv=None) -> int:
    level = os.environ.get("BATTDISPATCH_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001
        err = _as_cli_error(exc)  # re-raises unexpected errors
        print(json.dumps(_plain({"exit_code": err.code, "error": str(err), **err.details}), sort_keys=True))
        print(f"battdispatch: error: {err}", file=sys.stderr)
        return err.code


if __name__ == "__main__":
    sys.exit(main())
