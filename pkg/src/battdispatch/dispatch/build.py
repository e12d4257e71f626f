"""Assemble the network-constrained economic dispatch as an LP or MILP.

Variables and rows are named ``<entity>[<index>,<t>]`` with 1-based time.
Sign conventions:

* ``flow[l,t] = base_power / X_l * (angle[from,t] - angle[to,t])``, positive
  from the line's from-node to its to-node;
* nodal balance: net line outflow = generation + discharge - charge - demand;
* battery energy: ``energy[t] = energy[t-1] + (p_in[t-1] - p_out[t-1]) * dt``
  for t >= 2, ``energy[1]`` fixed to the case's initial energy and
  ``energy[T] = energy[1]``.  The last step's cell-side powers must net to
  zero (``p_in[T] = p_out[T]``) since no later energy level would account for
  them.
"""
from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np

from ..optim import INF, LinearProgram, MixedIntegerProgram
from .formulation import BatteryFormulation
from .network import NetworkCase


@dataclass
class BatteryIndex:
    """Column indices of one battery's variables, each of length T."""

    p_dis: np.ndarray
    p_cha: np.ndarray
    p_in: np.ndarray
    p_out: np.ndarray
    energy: np.ndarray
    soc: np.ndarray
    x: np.ndarray | None = None  # (J, T) discharge weights (envelope) or vertex weights (milp)
    y: np.ndarray | None = None  # (K, T) charge weights
    z_dis: np.ndarray | None = None  # (triangles, T) binaries
    z_cha: np.ndarray | None = None


@dataclass
class DispatchModel:
    case: NetworkCase
    formulations: dict[str, BatteryFormulation]
    model: LinearProgram
    gen: np.ndarray  # (G, T)
    flow: np.ndarray  # (L, T)
    angle: np.ndarray  # (N, T)
    shed: np.ndarray | None
    batteries: dict[str, BatteryIndex]
    shed_penalty: float | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def kind(self) -> str:
        kinds = {f.kind for f in self.formulations.values()}
        return kinds.pop() if len(kinds) == 1 else "none" if not kinds else "mixed"

    def counts(self) -> dict:
        m = self.model
        return {
            "variables": m.num_variables,
            "constraints": m.num_constraints,
            "binaries": len(getattr(m, "binaries", ())),
            "continuous": m.num_variables - len(getattr(m, "binaries", ())),
        }


def _formulation_for(formulations, battery_id: str) -> BatteryFormulation:
    if isinstance(formulations, BatteryFormulation):
        return formulations
    if isinstance(formulations, Mapping) and battery_id in formulations:
        return formulations[battery_id]
    raise ValueError(f"no battery formulation given for battery {battery_id!r}")


def build_dispatch(case: NetworkCase, formulations: BatteryFormulation | Mapping[str, BatteryFormulation]
                   | None = None, shed_penalty: float | None = None) -> DispatchModel:
    """Build the dispatch model for ``case``.

    ``formulations`` is one formulation used for every battery or a mapping
    from battery id.  ``shed_penalty`` (currency per Wh) adds a penalized
    load-shedding variable at every node and step.
    """
    case.validate()
    forms = {b.id: _formulation_for(formulations, b.id).validate() for b in case.batteries}
    use_mip = any(f.kind == "milp-triangle" for f in forms.values())
    m: LinearProgram = MixedIntegerProgram(case.name) if use_mip else LinearProgram(case.name)
    T = case.horizon
    dt = case.delta_h
    nodes = case.nodes
    ref = case.reference_node
    steps = range(1, T + 1)

    gen = np.empty((len(case.generators), T), dtype=np.int64)
    for g, unit in enumerate(case.generators):
        for t in steps:
            gen[g, t - 1] = m.add_variable(f"p_gen[{unit.id},{t}]", unit.p_min_W, unit.p_max_W,
                                           unit.cost_per_Wh * dt)
    flow = np.empty((len(case.lines), T), dtype=np.int64)
    for l, line in enumerate(case.lines):
        for t in steps:
            flow[l, t - 1] = m.add_variable(f"flow[{line.id},{t}]", -line.limit_W, line.limit_W)
    angle = np.empty((len(nodes), T), dtype=np.int64)
    for n, node in enumerate(nodes):
        lo, hi = (0.0, 0.0) if n == ref else (node.angle_min, node.angle_max)
        for t in steps:
            angle[n, t - 1] = m.add_variable(f"angle[{node.id},{t}]", lo, hi)
    shed = None
    if shed_penalty is not None:
        shed = np.empty((len(nodes), T), dtype=np.int64)
        for n, node in enumerate(nodes):
            for t in steps:
                shed[n, t - 1] = m.add_variable(f"shed[{node.id},{t}]", 0.0, case.demand[n, t - 1],
                                                shed_penalty * dt)

    bats = {b.id: _add_battery(m, b, forms[b.id], T, dt) for b in case.batteries}

    # DC flow definition
    idx = case.node_index()
    for l, line in enumerate(case.lines):
        k = case.base_power_W / line.reactance
        a, b = idx[line.from_node], idx[line.to_node]
        for t in steps:
            m.add_constraint(f"flow_def[{line.id},{t}]",
                             {flow[l, t - 1]: 1.0, angle[a, t - 1]: -k, angle[b, t - 1]: k}, "=", 0.0)

    # nodal balance
    A = case.incidence()
    for n, node in enumerate(nodes):
        lines_n = np.flatnonzero(A[n])
        gens_n = [g for g, unit in enumerate(case.generators) if unit.node == node.id]
        bats_n = [b for b in case.batteries if b.node == node.id]
        for t in steps:
            terms: dict[int, float] = {}
            for l in lines_n:
                terms[int(flow[l, t - 1])] = A[n, l]
            for g in gens_n:
                terms[int(gen[g, t - 1])] = -1.0
            for b in bats_n:
                terms[int(bats[b.id].p_dis[t - 1])] = -1.0
                terms[int(bats[b.id].p_cha[t - 1])] = 1.0
            if shed is not None:
                terms[int(shed[n, t - 1])] = -1.0
            m.add_constraint(f"balance[{node.id},{t}]", terms, "=", -case.demand[n, t - 1])

    meta = {"time_indexing": "1-based", "flow_sign": "from-node to to-node"}
    if use_mip:
        meta["triangle_diagonal"] = next(f.metadata.get("diagonal") for f in forms.values()
                                         if f.kind == "milp-triangle")
    return DispatchModel(case, forms, m, gen, flow, angle, shed, bats, shed_penalty, meta)


def _add_battery(m: LinearProgram, bat, form: BatteryFormulation, T: int, dt: float) -> BatteryIndex:
    cap = bat.capacity_Wh
    s = bat.id
    steps = range(1, T + 1)
    ideal = form.ideal if form.kind == "ideal" else None
    dis_ub = ideal.p_dis_max if ideal else INF
    cha_ub = ideal.p_cha_max if ideal else INF

    def series(name, lb=0.0, ub=INF):
        return np.array([m.add_variable(f"{name}[{s},{t}]", lb, ub) for t in steps], dtype=np.int64)

    p_dis = series("p_dis", 0.0, dis_ub)
    p_cha = series("p_cha", 0.0, cha_ub)
    p_in = series("p_in")
    p_out = series("p_out")
    energy = np.empty(T, dtype=np.int64)
    for t in steps:
        lo, hi = (bat.e_initial, bat.e_initial) if t == 1 else (0.0, cap)
        energy[t - 1] = m.add_variable(f"energy[{s},{t}]", lo, hi)
    soc = series("soc", 0.0, 1.0)
    idx = BatteryIndex(p_dis, p_cha, p_in, p_out, energy, soc)

    for t in steps:
        k = t - 1
        m.add_constraint(f"soc_link[{s},{t}]", {soc[k]: 1.0, energy[k]: -1.0 / cap if cap > 0 else 0.0},
                         "=", 0.0)
        if t >= 2:
            m.add_constraint(f"energy_balance[{s},{t}]",
                             {energy[k]: 1.0, energy[k - 1]: -1.0, p_in[k - 1]: -dt, p_out[k - 1]: dt},
                             "=", 0.0)
    if T > 0:
        m.add_constraint(f"cycle[{s}]", {energy[T - 1]: 1.0, energy[0]: -1.0} if T > 1 else {energy[0]: 0.0},
                         "=", 0.0)
        m.add_constraint(f"cycle_closure[{s}]", {p_in[T - 1]: 1.0, p_out[T - 1]: -1.0}, "=", 0.0)

    if form.kind == "ideal":
        for t in steps:
            k = t - 1
            m.add_constraint(f"p_in_def[{s},{t}]", {p_in[k]: 1.0, p_cha[k]: -ideal.eta_cha}, "=", 0.0)
            m.add_constraint(f"p_out_def[{s},{t}]", {p_out[k]: 1.0, p_dis[k]: -1.0 / ideal.eta_dis}, "=", 0.0)
    elif form.kind == "envelope":
        dis = form.discharge.as_array()
        cha = form.charge.as_array()
        x = np.array([[m.add_variable(f"x[{s}:{j},{t}]") for t in steps] for j in range(len(dis))],
                     dtype=np.int64).reshape(len(dis), T)
        y = np.array([[m.add_variable(f"y[{s}:{k},{t}]") for t in steps] for k in range(len(cha))],
                     dtype=np.int64).reshape(len(cha), T)
        idx.x, idx.y = x, y
        for t in steps:
            k = t - 1
            xs, ys = x[:, k], y[:, k]
            m.add_constraint(f"p_out_env[{s},{t}]", _combo(p_out[k], xs, dis[:, 2]), "=", 0.0)
            m.add_constraint(f"p_dis_env[{s},{t}]", _combo(p_dis[k], xs, dis[:, 1]), "=", 0.0)
            m.add_constraint(f"p_in_env[{s},{t}]", _combo(p_in[k], ys, cha[:, 2]), "=", 0.0)
            m.add_constraint(f"p_cha_env[{s},{t}]", _combo(p_cha[k], ys, cha[:, 1]), "=", 0.0)
            terms = _combo(soc[k], xs, dis[:, 0])
            for col, v in zip(ys, cha[:, 0]):
                if v != 0.0:
                    terms[int(col)] = -float(v)
            m.add_constraint(f"soc_env[{s},{t}]", terms, "=", 0.0)
            m.add_constraint(f"x_sum[{s},{t}]", {int(c): 1.0 for c in xs}, "=", 1.0)
            m.add_constraint(f"y_sum[{s},{t}]", {int(c): 1.0 for c in ys}, "=", 1.0)
    else:
        idx.x, idx.z_dis = _add_triangles(m, s, "dis", form.tri_discharge, p_dis, p_out, soc, T)
        idx.y, idx.z_cha = _add_triangles(m, s, "cha", form.tri_charge, p_cha, p_in, soc, T)
    return idx


def _combo(target: int, cols: np.ndarray, coefs: np.ndarray) -> dict[int, float]:
    terms = {int(target): 1.0}
    for c, v in zip(cols, coefs):
        if v != 0.0:
            terms[int(c)] = -float(v)
    return terms


def _add_triangles(m: MixedIntegerProgram, s: str, tag: str, grid, p_term, p_int, soc, T: int):
    v_soc, v_pt, v_pi = grid.vertex_arrays()
    nv = grid.n_vertices
    ntri = grid.triangles.shape[0]
    of_vertex = grid.triangles_of_vertex()
    lam = np.empty((nv, T), dtype=np.int64)
    z = np.empty((ntri, T), dtype=np.int64)
    for t in range(1, T + 1):
        k = t - 1
        for v in range(nv):
            lam[v, k] = m.add_variable(f"w_{tag}[{s}:{v},{t}]")
        for q in range(ntri):
            z[q, k] = m.add_binary(f"z_{tag}[{s}:{q},{t}]")
        m.add_constraint(f"w_{tag}_sum[{s},{t}]", {int(c): 1.0 for c in lam[:, k]}, "=", 1.0)
        m.add_constraint(f"z_{tag}_sum[{s},{t}]", {int(c): 1.0 for c in z[:, k]}, "=", 1.0)
        for v in range(nv):
            terms = {int(lam[v, k]): 1.0}
            for q in of_vertex[v]:
                terms[int(z[q, k])] = -1.0
            m.add_constraint(f"w_{tag}_support[{s}:{v},{t}]", terms, "<=", 0.0)
        m.add_constraint(f"p_{tag}_tri[{s},{t}]", _combo(p_term[k], lam[:, k], v_pt), "=", 0.0)
        m.add_constraint(f"p_{tag}_int_tri[{s},{t}]", _combo(p_int[k], lam[:, k], v_pi), "=", 0.0)
        m.add_constraint(f"soc_{tag}_tri[{s},{t}]", _combo(soc[k], lam[:, k], v_soc), "=", 0.0)
    return lam, z
