"""Solve dispatch models, verify schedules against the case data, write results."""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..optim import OPTIMAL, NODE_LIMIT, Solution, Tolerances, solve_lp, solve_milp
from .build import DispatchModel

log = logging.getLogger(__name__)

VERIFY_TOL = 1e-5


class VerificationError(RuntimeError):
    def __init__(self, message: str, residuals: dict):
        super().__init__(message)
        self.residuals = residuals


@dataclass
class BatterySchedule:
    p_dis: np.ndarray
    p_cha: np.ndarray
    p_in: np.ndarray
    p_out: np.ndarray
    energy: np.ndarray
    soc: np.ndarray
    capacity_Wh: float
    weights_dis: np.ndarray | None = None  # (J, T)
    weights_cha: np.ndarray | None = None  # (K, T)
    binaries_dis: np.ndarray | None = None  # (triangles, T), milp only
    binaries_cha: np.ndarray | None = None

    def columns(self) -> dict[str, np.ndarray]:
        return {"p_dis": self.p_dis, "p_cha": self.p_cha, "p_in": self.p_in, "p_out": self.p_out,
                "energy": self.energy, "soc": self.soc}


@dataclass
class DispatchSchedule:
    status: str
    objective: float
    kind: str
    case_name: str
    delta_h: float
    gen: np.ndarray
    flow: np.ndarray
    angle: np.ndarray
    batteries: dict[str, BatterySchedule]
    gen_ids: list[str]
    line_ids: list[str]
    node_ids: list[str]
    shed: np.ndarray | None = None
    stats: dict = field(default_factory=dict)
    residuals: dict = field(default_factory=dict)

    @property
    def horizon(self) -> int:
        return int(self.gen.shape[1]) if self.gen.size else (
            len(next(iter(self.batteries.values())).energy) if self.batteries else 0)

    def summary(self) -> dict:
        return {
            "case": self.case_name,
            "formulation": self.kind,
            "status": self.status,
            "objective": self.objective,
            "horizon_steps": self.horizon,
            "delta_h": self.delta_h,
            **self.stats,
            "max_residuals": self.residuals,
        }


def schedule_from_vector(dm: DispatchModel, x: np.ndarray, status: str = OPTIMAL,
                         objective: float | None = None, stats: dict | None = None) -> DispatchSchedule:
    """Unpack a primal vector (from the built-in solvers or an external one)."""
    x = np.asarray(x, dtype=float)
    case = dm.case
    bats = {}
    for b in case.batteries:
        ix = dm.batteries[b.id]
        bats[b.id] = BatterySchedule(
            p_dis=x[ix.p_dis], p_cha=x[ix.p_cha], p_in=x[ix.p_in], p_out=x[ix.p_out],
            energy=x[ix.energy], soc=x[ix.soc], capacity_Wh=b.capacity_Wh,
            weights_dis=None if ix.x is None else x[ix.x],
            weights_cha=None if ix.y is None else x[ix.y],
            binaries_dis=None if ix.z_dis is None else x[ix.z_dis],
            binaries_cha=None if ix.z_cha is None else x[ix.z_cha],
        )
    obj = float(np.dot(dm.model.obj, x)) if objective is None else objective
    return DispatchSchedule(
        status=status, objective=obj, kind=dm.kind, case_name=case.name, delta_h=case.delta_h,
        gen=x[dm.gen], flow=x[dm.flow], angle=x[dm.angle], batteries=bats,
        gen_ids=[g.id for g in case.generators], line_ids=[l.id for l in case.lines],
        node_ids=case.node_ids, shed=None if dm.shed is None else x[dm.shed], stats=stats or {},
    )


def solve_dispatch(dm: DispatchModel, tolerances: Tolerances | None = None, node_limit: int = 100_000,
                   time_limit: float | None = None, verify: bool = True) -> tuple[DispatchSchedule | None, Solution]:
    """Solve a built dispatch model.

    Returns ``(schedule, solution)``; the schedule is None when the solver
    found no primal point.  With ``verify`` set, every model constraint is
    re-checked against the case data and a :class:`VerificationError` is
    raised if a residual exceeds 1e-5.
    """
    model = dm.model
    if getattr(model, "binaries", None):
        sol = solve_milp(model, tolerances, node_limit=node_limit, time_limit=time_limit)
    else:
        sol = solve_lp(model, tolerances)
    stats = {"solver_status": sol.status, "iterations": sol.iterations, "nodes": sol.nodes,
             "wall_time_s": sol.wall_time, **dm.counts()}
    if sol.status == NODE_LIMIT or getattr(model, "binaries", None):
        stats["best_bound"] = sol.bound
    if sol.x is None:
        return None, sol
    sched = schedule_from_vector(dm, sol.x, sol.status, sol.objective, stats)
    if verify:
        sched.residuals = verify_schedule(dm, sched)
    return sched, sol


def verify_schedule(dm: DispatchModel, sched: DispatchSchedule, tol: float = VERIFY_TOL) -> dict:
    """Largest residual of each constraint family, computed from the case data.

    Nodal balance is measured relative to ``max(1, demand)``; everything else
    in absolute units.
    """
    case = dm.case
    T = case.horizon
    res: dict[str, float] = {}
    if T == 0:
        return res
    A = case.incidence()
    gen_at = case.generator_map().T @ sched.gen  # (N, T)
    bat_at = np.zeros((len(case.nodes), T))
    for s, b in enumerate(case.batteries):
        bs = sched.batteries[b.id]
        bat_at[case.node_index()[b.node]] += bs.p_dis - bs.p_cha
    supply = gen_at + bat_at
    if sched.shed is not None:
        supply = supply + sched.shed
    outflow = A @ sched.flow
    res["balance"] = float(np.max(np.abs(outflow - (supply - case.demand)) / np.maximum(1.0, case.demand),
                                  initial=0.0))
    k = np.array([case.base_power_W / l.reactance for l in case.lines])
    if case.lines:
        expected = k[:, None] * (A.T @ sched.angle)
        res["dc_flow"] = float(np.max(np.abs(sched.flow - expected)))
        lim = np.array([l.limit_W for l in case.lines])[:, None]
        res["flow_limit"] = float(np.max(np.abs(sched.flow) - lim, initial=0.0).clip(min=0.0))
    lo = np.array([n.angle_min for n in case.nodes])[:, None]
    hi = np.array([n.angle_max for n in case.nodes])[:, None]
    res["angle_limit"] = float(max(np.max(lo - sched.angle, initial=0.0), np.max(sched.angle - hi, initial=0.0),
                                   0.0))
    res["reference_angle"] = float(np.max(np.abs(sched.angle[case.reference_node]), initial=0.0))
    if case.generators:
        pmin = np.array([g.p_min_W for g in case.generators])[:, None]
        pmax = np.array([g.p_max_W for g in case.generators])[:, None]
        res["gen_limit"] = float(max(np.max(pmin - sched.gen), np.max(sched.gen - pmax), 0.0))
    cost = np.array([g.cost_per_Wh for g in case.generators])
    objective = float(np.sum(cost[:, None] * sched.gen) * case.delta_h) if case.generators else 0.0
    if sched.shed is not None and dm.shed_penalty is not None:
        objective += float(np.sum(sched.shed) * dm.shed_penalty * case.delta_h)
    res["objective"] = abs(objective - sched.objective) / max(1.0, abs(objective))

    for b in case.batteries:
        bs = sched.batteries[b.id]
        form = dm.formulations[b.id]
        dt = case.delta_h
        r = {}
        r["energy_balance"] = float(np.max(np.abs(bs.energy[1:] - bs.energy[:-1]
                                                  - (bs.p_in[:-1] - bs.p_out[:-1]) * dt), initial=0.0))
        r["cycle"] = abs(bs.energy[-1] - bs.energy[0])
        r["initial_energy"] = abs(bs.energy[0] - b.e_initial)
        r["cycle_closure"] = abs(bs.p_in[-1] - bs.p_out[-1])
        r["energy_bounds"] = float(max(np.max(-bs.energy), np.max(bs.energy - b.capacity_Wh), 0.0))
        if b.capacity_Wh > 0:
            r["soc_link"] = float(np.max(np.abs(bs.soc - bs.energy / b.capacity_Wh)))
        neg = min(bs.p_dis.min(), bs.p_cha.min(), bs.p_in.min(), bs.p_out.min())
        r["nonnegative_power"] = float(max(-neg, 0.0))
        if form.kind == "ideal":
            ideal = form.ideal
            r["p_in_def"] = float(np.max(np.abs(bs.p_in - ideal.eta_cha * bs.p_cha)))
            r["p_out_def"] = float(np.max(np.abs(bs.p_out - bs.p_dis / ideal.eta_dis)))
            r["power_limit"] = float(max(np.max(bs.p_dis - ideal.p_dis_max), np.max(bs.p_cha - ideal.p_cha_max), 0.0))
        elif form.kind == "envelope":
            dis = form.discharge.as_array()
            cha = form.charge.as_array()
            X, Y = bs.weights_dis, bs.weights_cha
            r["weights_nonnegative"] = float(max(-X.min(), -Y.min(), 0.0))
            r["weights_sum"] = float(max(np.max(np.abs(X.sum(axis=0) - 1)), np.max(np.abs(Y.sum(axis=0) - 1))))
            r["envelope_p_out"] = float(np.max(np.abs(bs.p_out - dis[:, 2] @ X)))
            r["envelope_p_dis"] = float(np.max(np.abs(bs.p_dis - dis[:, 1] @ X)))
            r["envelope_p_in"] = float(np.max(np.abs(bs.p_in - cha[:, 2] @ Y)))
            r["envelope_p_cha"] = float(np.max(np.abs(bs.p_cha - cha[:, 1] @ Y)))
            r["envelope_soc"] = float(np.max(np.abs(bs.soc - dis[:, 0] @ X - cha[:, 0] @ Y)))
        else:
            for tag, grid, W, Z, p_t, p_i in (
                ("dis", form.tri_discharge, bs.weights_dis, bs.binaries_dis, bs.p_dis, bs.p_out),
                ("cha", form.tri_charge, bs.weights_cha, bs.binaries_cha, bs.p_cha, bs.p_in),
            ):
                v_soc, v_pt, v_pi = grid.vertex_arrays()
                r[f"{tag}_weights_sum"] = float(np.max(np.abs(W.sum(axis=0) - 1)))
                r[f"{tag}_weights_nonnegative"] = float(max(-W.min(), 0.0))
                r[f"{tag}_binary_integrality"] = float(np.max(np.minimum(np.abs(Z), np.abs(Z - 1))))
                r[f"{tag}_one_triangle"] = float(np.max(np.abs(Z.sum(axis=0) - 1)))
                support = np.zeros_like(W)
                for q, tri in enumerate(grid.triangles):
                    support[tri] += Z[q]
                r[f"{tag}_support"] = float(max(np.max(W - support), 0.0))
                r[f"{tag}_p_terminal"] = float(np.max(np.abs(p_t - v_pt @ W)))
                r[f"{tag}_p_internal"] = float(np.max(np.abs(p_i - v_pi @ W)))
                r[f"{tag}_soc"] = float(np.max(np.abs(bs.soc - v_soc @ W)))
        for key, val in r.items():
            res[f"{b.id}.{key}"] = float(val)

    bad = {k: v for k, v in res.items() if v > tol}
    if bad:
        raise VerificationError(
            "schedule fails independent verification: "
            + ", ".join(f"{k}={v:.3g}" for k, v in sorted(bad.items())), res)
    return res


def simultaneous_operation(sched: DispatchSchedule, dm: DispatchModel) -> dict[str, float]:
    """Largest p_dis * p_cha / limit^2 per battery (0 when never simultaneous)."""
    out = {}
    for b in dm.case.batteries:
        bs = sched.batteries[b.id]
        form = dm.formulations[b.id]
        if form.kind == "ideal":
            scale = form.ideal.p_dis_max * form.ideal.p_cha_max
        elif form.kind == "envelope":
            scale = form.discharge.as_array()[:, 1].max() * form.charge.as_array()[:, 1].max()
        else:
            scale = form.tri_discharge.p_terminal.max() * form.tri_charge.p_terminal.max()
        out[b.id] = float(np.max(bs.p_dis * bs.p_cha) / max(scale, 1e-300))
    return out


# --------------------------------------------------------------------------
# output files


def _write_table(path: Path, header: list[str], rows, header_lines=()) -> None:
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([r if isinstance(r, (int, str)) else repr(float(r)) for r in row])


def write_schedule(sched: DispatchSchedule, out_dir, header_lines=()) -> list[Path]:
    """One CSV per entity class plus ``summary.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    T = sched.horizon
    steps = range(1, T + 1)
    written = []
    tables = [("generators.csv", sched.gen_ids, sched.gen), ("flows.csv", sched.line_ids, sched.flow),
              ("angles.csv", sched.node_ids, sched.angle)]
    if sched.shed is not None:
        tables.append(("shed.csv", sched.node_ids, sched.shed))
    for name, ids, arr in tables:
        path = out / name
        _write_table(path, ["t", *ids], ([t, *arr[:, t - 1]] for t in steps), header_lines)
        written.append(path)
    for bid, bs in sched.batteries.items():
        cols = bs.columns()
        path = out / f"battery_{bid}.csv"
        _write_table(path, ["t", *cols], ([t, *(c[t - 1] for c in cols.values())] for t in steps),
                     header_lines)
        written.append(path)
        for tag, W in (("dis", bs.weights_dis), ("cha", bs.weights_cha)):
            if W is None:
                continue
            path = out / f"weights_{tag}_{bid}.csv"
            _write_table(path, ["t", *(f"w{j}" for j in range(W.shape[0]))],
                         ([t, *W[:, t - 1]] for t in steps), header_lines)
            written.append(path)
    summary = sched.summary()
    # timings differ between runs; keep the files reproducible
    summary.pop("wall_time_s", None)
    summary["batteries"] = {bid: {"capacity_Wh": bs.capacity_Wh} for bid, bs in sched.batteries.items()}
    summary["provenance"] = list(header_lines)
    path = out / "summary.json"
    path.write_text(json.dumps(_jsonable(summary), indent=2) + "\n")
    written.append(path)
    return written


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items() if not str(k).startswith("_")}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def read_battery_schedule(path) -> dict[str, np.ndarray]:
    """Columns of a ``battery_<id>.csv`` file as arrays."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(line for line in fh if not line.startswith("#")))
    if not rows:
        raise ValueError(f"{path}: empty schedule file")
    header = rows[0]
    required = ["t", "p_dis", "p_cha", "p_in", "p_out", "energy", "soc"]
    missing = [c for c in required if c not in header]
    if missing:
        raise ValueError(f"{path}: schedule file lacks columns {missing}")
    data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float).reshape(-1, len(header))
    return {name: data[:, k] for k, name in enumerate(header)}
