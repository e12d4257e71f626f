"""Battery representations for the dispatch model."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import characterization as ch
from ..electrochem import BatteryParams

KINDS = ("ideal", "envelope", "milp-triangle")

DEFAULT_ETA_CHA = 0.972
DEFAULT_ETA_DIS = 0.868

TRIANGLE_SOC_POINTS = 5
TRIANGLE_POWER_FRACTIONS = (0.0, 0.5, 1.0)
DIAGONAL = "lower-left to upper-right"


class FormulationError(ValueError):
    pass


@dataclass(frozen=True)
class IdealBattery:
    """Constant power limits (W) and efficiencies."""

    p_cha_max: float
    p_dis_max: float
    eta_cha: float = DEFAULT_ETA_CHA
    eta_dis: float = DEFAULT_ETA_DIS

    @classmethod
    def from_params(cls, params: BatteryParams, eta_cha: float = DEFAULT_ETA_CHA,
                    eta_dis: float = DEFAULT_ETA_DIS) -> "IdealBattery":
        """Limits from the c-rate caps at rated voltage."""
        i_nom = params.nominal_current
        return cls(p_cha_max=params.c_rate_cha * i_nom * params.rated_voltage,
                   p_dis_max=params.c_rate_dis * i_nom * params.rated_voltage,
                   eta_cha=eta_cha, eta_dis=eta_dis)

    def problems(self) -> list[str]:
        out = []
        for name in ("eta_cha", "eta_dis"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                out.append(f"{name} must lie in (0, 1], got {v}")
        if self.p_cha_max < 0 or self.p_dis_max < 0:
            out.append("power limits must be >= 0")
        return out


@dataclass(frozen=True)
class TriangleGrid:
    """Rectangular grid of samples split into triangles.

    ``soc`` and ``p_terminal`` and ``p_internal`` have shape (n_soc, n_power);
    the power axis is a fraction of the SOC-dependent limit, so rows are
    rectangles in (soc, fraction) index space.
    """

    mode: str
    soc: np.ndarray
    p_terminal: np.ndarray
    p_internal: np.ndarray
    triangles: np.ndarray  # (n_tri, 3) flat vertex indices
    diagonal: str = DIAGONAL

    @property
    def n_vertices(self) -> int:
        return self.soc.size

    def vertex_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.soc.ravel(), self.p_terminal.ravel(), self.p_internal.ravel()

    def triangles_of_vertex(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in range(self.n_vertices)]
        for k, tri in enumerate(self.triangles):
            for v in tri:
                out[int(v)].append(k)
        return out


def triangle_partition(n_rows: int, n_cols: int) -> np.ndarray:
    """Split an ``n_rows x n_cols`` vertex grid into triangles.

    Vertex (r, c) has flat index ``r * n_cols + c``.  Each cell is cut along
    the diagonal from its lower-left (r, c) to its upper-right (r+1, c+1)
    corner, giving ``2 (n_rows-1)(n_cols-1)`` triangles.
    """
    if n_rows < 2 or n_cols < 2:
        raise FormulationError(f"a triangle grid needs at least 2x2 vertices, got {n_rows}x{n_cols}")
    tris = []
    for r in range(n_rows - 1):
        for c in range(n_cols - 1):
            ll, lr = r * n_cols + c, r * n_cols + c + 1
            ul, ur = (r + 1) * n_cols + c, (r + 1) * n_cols + c + 1
            tris.append((ll, lr, ur))
            tris.append((ll, ur, ul))
    return np.array(tris, dtype=np.int64)


def sample_triangle_grid(mode: str, params: BatteryParams, T: float,
                         soc_points=None, fractions=TRIANGLE_POWER_FRACTIONS) -> TriangleGrid:
    """Sample the exact surface on a rectangular (soc, power fraction) grid."""
    socs = np.linspace(0.0, 1.0, TRIANGLE_SOC_POINTS) if soc_points is None else np.asarray(soc_points, float)
    fr = np.asarray(fractions, dtype=float)
    if np.any(np.diff(socs) <= 0) or np.any(np.diff(fr) <= 0):
        raise FormulationError("triangle grid axes must be strictly increasing")
    soc = np.repeat(socs[:, None], fr.size, axis=1)
    p_t = np.empty_like(soc)
    p_i = np.empty_like(soc)
    for r, s in enumerate(socs):
        limit = ch.max_power(float(s), T, mode, params)
        p_t[r] = fr * limit
        p_i[r] = ch.internal_power(float(s), p_t[r], T, mode, params)
    return TriangleGrid(mode, soc, p_t, p_i, triangle_partition(socs.size, fr.size))


@dataclass
class BatteryFormulation:
    kind: str
    ideal: IdealBattery | None = None
    discharge: ch.EnvelopeSet | None = None
    charge: ch.EnvelopeSet | None = None
    tri_discharge: TriangleGrid | None = None
    tri_charge: TriangleGrid | None = None
    metadata: dict = field(default_factory=dict)

    def problems(self) -> list[str]:
        if self.kind not in KINDS:
            return [f"unknown formulation kind {self.kind!r}; expected one of {KINDS}"]
        out = []
        if self.kind == "ideal":
            if self.ideal is None:
                out.append("ideal formulation needs constant parameters")
            else:
                out += self.ideal.problems()
        elif self.kind == "envelope":
            if self.discharge is None or self.charge is None:
                out.append("envelope formulation needs charge and discharge envelope sets")
            else:
                if self.discharge.mode != "discharge" or self.charge.mode != "charge":
                    out.append("envelope sets have the wrong modes")
                out += self.discharge.problems() + self.charge.problems()
        else:
            if self.tri_discharge is None or self.tri_charge is None:
                out.append("triangle formulation needs charge and discharge grids")
        return out

    def validate(self) -> "BatteryFormulation":
        problems = self.problems()
        if problems:
            raise FormulationError("invalid battery formulation: " + "; ".join(problems))
        return self


def make_formulation(kind: str, params: BatteryParams, T: float | None = None, *,
                     eta_cha: float = DEFAULT_ETA_CHA, eta_dis: float = DEFAULT_ETA_DIS,
                     discharge: ch.EnvelopeSet | None = None,
                     charge: ch.EnvelopeSet | None = None) -> BatteryFormulation:
    """Default formulation of ``kind`` for one battery parameter set."""
    T = params.T_ref if T is None else T
    if kind == "ideal":
        f = BatteryFormulation(kind, ideal=IdealBattery.from_params(params, eta_cha, eta_dis))
    elif kind == "envelope":
        f = BatteryFormulation(kind,
                               discharge=discharge or ch.default_envelope("discharge", params, T),
                               charge=charge or ch.default_envelope("charge", params, T))
    elif kind == "milp-triangle":
        f = BatteryFormulation(kind, tri_discharge=sample_triangle_grid("discharge", params, T),
                               tri_charge=sample_triangle_grid("charge", params, T),
                               metadata={"diagonal": DIAGONAL})
    else:
        raise FormulationError(f"unknown formulation kind {kind!r}; expected one of {KINDS}")
    f.metadata["temperature_K"] = float(T)
    return f.validate()
