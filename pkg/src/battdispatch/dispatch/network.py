"""Network case data: buses, lines, generators, batteries and demand."""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..electrochem import BatteryParams, default_battery, load_battery

log = logging.getLogger(__name__)


class CaseError(ValueError):
    """A network case violates a structural or physical invariant."""


@dataclass(frozen=True)
class Node:
    id: str
    angle_min: float = -math.pi / 2
    angle_max: float = math.pi / 2
    reference: bool = False


@dataclass(frozen=True)
class Line:
    id: str
    from_node: str
    to_node: str
    reactance: float  # per unit on the case base
    limit_W: float


@dataclass(frozen=True)
class Generator:
    id: str
    node: str
    p_min_W: float
    p_max_W: float
    cost_per_Wh: float


@dataclass(frozen=True)
class Battery:
    id: str
    node: str
    params: BatteryParams
    initial_energy_Wh: float | None = None  # None: half the nameplate energy
    params_source: str = "default"

    @property
    def capacity_Wh(self) -> float:
        return self.params.energy_capacity_Wh

    @property
    def e_initial(self) -> float:
        if self.initial_energy_Wh is None:
            return 0.5 * self.capacity_Wh
        return self.initial_energy_Wh


@dataclass
class NetworkCase:
    """A DC network over a fixed horizon.

    ``demand`` has shape (nodes, steps) in watts, ordered like ``nodes``.
    Line flows are ``base_power_W / reactance * (angle_from - angle_to)``.
    """

    nodes: list[Node]
    lines: list[Line]
    generators: list[Generator]
    demand: np.ndarray
    delta_h: float
    batteries: list[Battery] = field(default_factory=list)
    base_power_W: float = 1.0
    name: str = "case"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.demand = np.asarray(self.demand, dtype=float)
        if self.demand.ndim == 1:
            self.demand = self.demand.reshape(len(self.nodes), -1)

    # -- derived data ------------------------------------------------------

    @property
    def horizon(self) -> int:
        return int(self.demand.shape[1])

    @property
    def node_ids(self) -> list[str]:
        return [n.id for n in self.nodes]

    def node_index(self) -> dict[str, int]:
        return {n.id: k for k, n in enumerate(self.nodes)}

    @property
    def reference_node(self) -> int:
        return next(k for k, n in enumerate(self.nodes) if n.reference)

    def incidence(self) -> np.ndarray:
        """Node-by-line matrix: +1 at the from-node, -1 at the to-node."""
        idx = self.node_index()
        A = np.zeros((len(self.nodes), len(self.lines)))
        for l, line in enumerate(self.lines):
            A[idx[line.from_node], l] = 1.0
            A[idx[line.to_node], l] = -1.0
        return A

    def generator_map(self) -> np.ndarray:
        """Generator-by-node placement matrix (Omega)."""
        idx = self.node_index()
        M = np.zeros((len(self.generators), len(self.nodes)))
        for g, gen in enumerate(self.generators):
            M[g, idx[gen.node]] = 1.0
        return M

    def battery_map(self) -> np.ndarray:
        """Battery-by-node placement matrix (Gamma)."""
        idx = self.node_index()
        M = np.zeros((len(self.batteries), len(self.nodes)))
        for s, bat in enumerate(self.batteries):
            M[s, idx[bat.node]] = 1.0
        return M

    def islands(self) -> list[list[str]]:
        parent = {n.id: n.id for n in self.nodes}

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for line in self.lines:
            parent[find(line.from_node)] = find(line.to_node)
        groups: dict[str, list[str]] = {}
        for n in self.nodes:
            groups.setdefault(find(n.id), []).append(n.id)
        return list(groups.values())

    def truncated(self, steps: int) -> "NetworkCase":
        """The same case over its first ``steps`` time steps."""
        if not 1 <= steps <= self.horizon:
            raise CaseError(f"sub-horizon {steps} outside 1..{self.horizon}")
        return replace(self, demand=self.demand[:, :steps].copy(),
                       metadata={**self.metadata, "truncated_to": steps})

    # -- validation ----------------------------------------------------------

    def problems(self) -> list[str]:
        out = []
        ids = self.node_ids
        if len(set(ids)) != len(ids):
            out.append("duplicate node ids")
        refs = [n.id for n in self.nodes if n.reference]
        if len(refs) != 1:
            out.append(f"expected exactly one reference node, found {len(refs)}")
        known = set(ids)
        for n in self.nodes:
            if not n.angle_min <= 0.0 <= n.angle_max and n.reference:
                out.append(f"reference node {n.id}: angle range excludes 0")
            if n.angle_min > n.angle_max:
                out.append(f"node {n.id}: angle_min > angle_max")
        for kind, items in (("line", self.lines), ("generator", self.generators),
                            ("battery", self.batteries)):
            seen = [x.id for x in items]
            if len(set(seen)) != len(seen):
                out.append(f"duplicate {kind} ids")
        for line in self.lines:
            for end in (line.from_node, line.to_node):
                if end not in known:
                    out.append(f"line {line.id}: unknown node {end}")
            if line.from_node == line.to_node:
                out.append(f"line {line.id}: both ends on node {line.from_node}")
            if not line.reactance > 0:
                out.append(f"line {line.id}: reactance must be > 0, got {line.reactance}")
            if not line.limit_W > 0:
                out.append(f"line {line.id}: flow limit must be > 0, got {line.limit_W}")
        for gen in self.generators:
            if gen.node not in known:
                out.append(f"generator {gen.id}: unknown node {gen.node}")
            if gen.p_min_W > gen.p_max_W:
                out.append(f"generator {gen.id}: p_min_W > p_max_W")
        for bat in self.batteries:
            if bat.node not in known:
                out.append(f"battery {bat.id}: unknown node {bat.node}")
            if not 0 <= bat.e_initial <= bat.capacity_Wh:
                out.append(f"battery {bat.id}: initial energy {bat.e_initial} Wh outside "
                           f"[0, {bat.capacity_Wh}]")
        if self.demand.shape[0] != len(self.nodes):
            out.append(f"demand has {self.demand.shape[0]} rows, expected {len(self.nodes)} nodes")
        if np.any(~np.isfinite(self.demand)) or np.any(self.demand < 0):
            out.append("demand must be finite and >= 0")
        if not self.delta_h > 0:
            out.append(f"time step must be > 0 hours, got {self.delta_h}")
        if not self.base_power_W > 0:
            out.append(f"base power must be > 0, got {self.base_power_W}")
        return out

    def validate(self) -> "NetworkCase":
        problems = self.problems()
        if problems:
            raise CaseError("invalid network case: " + "; ".join(problems))
        islands = self.islands()
        if len(islands) > 1:
            log.warning("network %s is split into %d islands: %s", self.name, len(islands),
                        [sorted(i) for i in islands])
        return self

    # -- serialization -----------------------------------------------------

    def to_dict(self, demand_csv: str = "demand.csv") -> dict:
        return {
            "name": self.name,
            "delta_h": self.delta_h,
            "base_power_W": self.base_power_W,
            "metadata": self.metadata,
            "nodes": [{"id": n.id, "angle_min": n.angle_min, "angle_max": n.angle_max,
                       "reference": n.reference} for n in self.nodes],
            "lines": [{"id": l.id, "from": l.from_node, "to": l.to_node,
                       "reactance_pu": l.reactance, "limit_W": l.limit_W} for l in self.lines],
            "generators": [{"id": g.id, "node": g.node, "p_min_W": g.p_min_W, "p_max_W": g.p_max_W,
                            "cost_per_Wh": g.cost_per_Wh} for g in self.generators],
            "batteries": [{"id": b.id, "node": b.node, "params": b.params_source,
                           "initial_energy_Wh": b.initial_energy_Wh} for b in self.batteries],
            "demand_csv": demand_csv,
        }


def _node_id(value) -> str:
    return str(value)


def read_demand_csv(path, node_ids: list[str]) -> np.ndarray:
    """Demand table with one row per time step and one column per node id.

    A leading ``t`` column is accepted and ignored; nodes missing from the
    header get zero demand.
    """
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(line for line in fh if not line.startswith("#")) if r]
    if not rows:
        raise CaseError(f"{path}: empty demand file")
    header = [h.strip() for h in rows[0]]
    cols = {h: k for k, h in enumerate(header) if h != "t"}
    unknown = set(cols) - set(node_ids)
    if unknown:
        raise CaseError(f"{path}: demand columns for unknown nodes {sorted(unknown)}")
    demand = np.zeros((len(node_ids), len(rows) - 1))
    for t, row in enumerate(rows[1:]):
        if len(row) != len(header):
            raise CaseError(f"{path}: row {t + 2} has {len(row)} fields, expected {len(header)}")
        for n, nid in enumerate(node_ids):
            if nid in cols:
                demand[n, t] = float(row[cols[nid]])
    return demand


def write_demand_csv(path, case: NetworkCase, header_lines=()) -> None:
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", *case.node_ids])
        for t in range(case.horizon):
            writer.writerow([t + 1, *(repr(float(v)) for v in case.demand[:, t])])


def load_case(path) -> NetworkCase:
    """Read a case JSON file and the demand CSV it references."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise CaseError(f"{path}: invalid JSON ({exc})") from exc
    base = path.parent
    try:
        nodes = [Node(_node_id(d["id"]), float(d.get("angle_min", -math.pi / 2)),
                      float(d.get("angle_max", math.pi / 2)), bool(d.get("reference", False)))
                 for d in data["nodes"]]
        lines = [Line(str(d["id"]), _node_id(d["from"]), _node_id(d["to"]), float(d["reactance_pu"]),
                      float(d["limit_W"])) for d in data.get("lines", [])]
        gens = [Generator(str(d["id"]), _node_id(d["node"]), float(d["p_min_W"]), float(d["p_max_W"]),
                          float(d["cost_per_Wh"])) for d in data.get("generators", [])]
        batteries = []
        for d in data.get("batteries", []):
            source = d.get("params") or "default"
            params = default_battery() if source == "default" else load_battery(base / source)
            e0 = d.get("initial_energy_Wh")
            batteries.append(Battery(str(d["id"]), _node_id(d["node"]), params,
                                     None if e0 is None else float(e0), source))
        demand_path = base / data.get("demand_csv", "demand.csv")
        demand = read_demand_csv(demand_path, [n.id for n in nodes])
        case = NetworkCase(nodes=nodes, lines=lines, generators=gens, demand=demand,
                           delta_h=float(data["delta_h"]), batteries=batteries,
                           base_power_W=float(data.get("base_power_W", 1.0)),
                           name=str(data.get("name", path.stem)), metadata=data.get("metadata", {}))
    except KeyError as exc:
        raise CaseError(f"{path}: missing field {exc.args[0]!r}") from exc
    except (TypeError, ValueError) as exc:
        if isinstance(exc, CaseError):
            raise
        raise CaseError(f"{path}: {exc}") from exc
    return case.validate()


def save_case(case: NetworkCase, path, header_lines=()) -> Path:
    """Write ``case`` as JSON plus a demand CSV next to it."""
    path = Path(path)
    demand_name = path.stem + "_demand.csv"
    payload = case.to_dict(demand_csv=demand_name)
    if header_lines:
        payload["provenance"] = list(header_lines)
    path.write_text(json.dumps(payload, indent=2) + "\n")
    write_demand_csv(path.parent / demand_name, case, header_lines)
    return path
