"""SOC-dependent limits, efficiencies and sampled convex envelopes.

Builds on :mod:`battdispatch.electrochem`: current limits come from the
surface-SOC bounds, power limits and efficiencies from the series circuit,
and the envelope sets are samples of (soc, terminal power, internal power).
"""
from __future__ import annotations

import csv
import itertools
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from . import electrochem as ec
from .electrochem import BatteryParams, DomainError

log = logging.getLogger(__name__)

MODES = ("charge", "discharge")

# Default sampling grids.  Two discharge SOC levels and three charge SOC levels
# with six power levels each give 14 and 20 samples once the anchors are added.
DEFAULT_POWER_FRACTIONS = tuple(float(k) / 6.0 for k in range(1, 7))
DEFAULT_SOC_GRID = {
    "discharge": (0.35, 1.0),
    "charge": (0.0, 0.6, 0.92),
}
DEFAULT_EVAL_POINTS = 100


class NoRealRootError(ArithmeticError):
    """The surface-SOC quadratic has no real nonnegative root."""


class InfeasiblePowerError(ValueError):
    """A requested terminal power exceeds the power limit at that SOC."""


def _check_mode(mode: str) -> str:
    if mode not in MODES:
        raise ValueError(f"mode must be 'charge' or 'discharge', got {mode!r}")
    return mode


@dataclass(frozen=True)
class CurrentLimits:
    i_max_dis_0: float
    i_max_cha_0: float
    i_max_dis: float
    i_max_cha: float


class PowerLimit(NamedTuple):
    watts: float
    current: float
    cutoff: bool  # discharge power would be negative (voltage cut-off)


def _smallest_nonnegative_root(a: float, b: float, c: float, context: str) -> float:
    if c == 0.0:
        return 0.0
    if abs(a) <= 1e-300:
        if b == 0.0:
            raise NoRealRootError(f"degenerate quadratic with a=b=0 ({context})")
        root = -c / b
        if root < 0:
            raise NoRealRootError(f"linear root {root:.6g} is negative ({context})")
        return root
    disc = b * b - 4.0 * a * c
    if disc < 0:
        raise NoRealRootError(
            f"no real root: a={a:.6g}, b={b:.6g}, c={c:.6g}, discriminant={disc:.6g} ({context})"
        )
    sq = math.sqrt(disc)
    # numerically stable pair of roots
    q = -0.5 * (b + math.copysign(sq, b))
    roots = [q / a]
    if q != 0.0:
        roots.append(c / q)
    candidates = [r for r in roots if r >= 0.0]
    if not candidates:
        raise NoRealRootError(f"roots {roots} are all negative ({context})")
    return min(candidates)


def _quadratic_coefficients(T: float, params: BatteryParams) -> tuple[float, float]:
    r_elec = ec.diffusion_resistance(T, "electrode", params)
    a = -r_elec * params.eta_ci
    b = -r_elec * (params.eta_c0 + params.eta_cT * T)
    return a, b


def max_discharge_current(soc: float, T: float, params: BatteryParams) -> tuple[float, float]:
    """Return ``(uncapped root, capped limit)`` for discharge, in amperes."""
    ec._check_soc(soc)
    a, b = _quadratic_coefficients(T, params)
    root = _smallest_nonnegative_root(a, b, float(soc), f"discharge, soc={soc}, T={T}")
    return root, min(root, params.c_rate_dis * params.nominal_current)


def max_charge_current(soc: float, T: float, params: BatteryParams) -> tuple[float, float]:
    """Return ``(uncapped root, capped limit)`` for charge, in amperes."""
    ec._check_soc(soc)
    a, b = _quadratic_coefficients(T, params)
    # the charge current enters surface_soc with a negative sign, so in terms of
    # its magnitude the quadratic is -a I^2 - b I + (soc - 1) = 0
    root = _smallest_nonnegative_root(-a, -b, float(soc) - 1.0, f"charge, soc={soc}, T={T}")
    return root, min(root, params.c_rate_cha * params.nominal_current)


def current_limits(soc: float, T: float, params: BatteryParams) -> CurrentLimits:
    dis0, dis = max_discharge_current(soc, T, params)
    cha0, cha = max_charge_current(soc, T, params)
    return CurrentLimits(i_max_dis_0=dis0, i_max_cha_0=cha0, i_max_dis=dis, i_max_cha=cha)


def max_current(soc: float, T: float, mode: str, params: BatteryParams) -> float:
    if _check_mode(mode) == "discharge":
        return max_discharge_current(soc, T, params)[1]
    return max_charge_current(soc, T, params)[1]


def power_limit(soc: float, T: float, mode: str, params: BatteryParams) -> PowerLimit:
    i_max = max_current(soc, T, mode, params)
    v = ec.equilibrium_voltage(soc, T, params)
    r = ec.total_resistance(soc, T, params)
    if mode == "discharge":
        p = v * i_max - i_max * i_max * r
        if p < 0:
            log.debug("discharge cut-off at soc=%g: v_eq=%g V, limit power %g W", soc, v, p)
            return PowerLimit(0.0, i_max, True)
        return PowerLimit(p, i_max, False)
    return PowerLimit(v * i_max + i_max * i_max * r, i_max, False)


def max_power(soc: float, T: float, mode: str, params: BatteryParams) -> float:
    """Terminal power limit in watts (0 on a discharge cut-off)."""
    return power_limit(soc, T, mode, params).watts


def efficiency(soc: float, i: float, T: float, mode: str, params: BatteryParams) -> float:
    _check_mode(mode)
    if i < 0:
        raise DomainError(f"current magnitude must be >= 0, got {i}")
    i_max = max_current(soc, T, mode, params)
    if i > i_max * (1 + 1e-9) + 1e-12:
        raise DomainError(f"current {i:.6g} A exceeds the {mode} limit {i_max:.6g} A at soc={soc}")
    v = ec.equilibrium_voltage(soc, T, params)
    if v <= 0:
        raise DomainError(f"equilibrium voltage {v:.6g} V is not positive at soc={soc}")
    r = ec.total_resistance(soc, T, params)
    if mode == "discharge":
        return 1.0 - i * r / v
    return v / (v + i * r)


def terminal_to_internal(soc: float, p_terminal: float, T: float, mode: str,
                         params: BatteryParams) -> tuple[float, float]:
    """Current and cell-side power for a terminal power request.

    Discharge takes the low-current branch of ``p = (v - i R) i``; charge has a
    single nonnegative root of ``p = (v + i R) i``.
    """
    _check_mode(mode)
    if p_terminal < 0:
        raise InfeasiblePowerError(f"terminal power must be >= 0, got {p_terminal}")
    if p_terminal == 0:
        return 0.0, 0.0
    limit = max_power(soc, T, mode, params)
    if p_terminal > limit * (1 + 1e-9) + 1e-9:
        raise InfeasiblePowerError(
            f"{mode} power {p_terminal:.6g} W exceeds the limit {limit:.6g} W at soc={soc}"
        )
    v = ec.equilibrium_voltage(soc, T, params)
    r = ec.total_resistance(soc, T, params)
    if mode == "discharge":
        disc = max(v * v - 4.0 * r * p_terminal, 0.0)
        i = 2.0 * p_terminal / (v + math.sqrt(disc))
    else:
        i = 2.0 * p_terminal / (v + math.sqrt(v * v + 4.0 * r * p_terminal))
    return i, v * i


# --------------------------------------------------------------------------
# envelope sample sets


@dataclass(frozen=True)
class EnvelopeSample:
    soc_hat: float
    p_terminal_hat: float
    p_internal_hat: float

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.soc_hat, self.p_terminal_hat, self.p_internal_hat)


ANCHORS = (EnvelopeSample(0.0, 0.0, 0.0), EnvelopeSample(1.0, 0.0, 0.0))


@dataclass
class EnvelopeSet:
    mode: str
    samples: list[EnvelopeSample]
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        _check_mode(self.mode)
        problems = self.problems()
        if problems:
            raise ValueError("invalid envelope set: " + "; ".join(problems))

    def problems(self) -> list[str]:
        out = []
        keys = [s.as_tuple() for s in self.samples]
        for anchor in ANCHORS:
            if anchor.as_tuple() not in keys:
                out.append(f"missing anchor {anchor.as_tuple()}")
        if len(set(keys)) != len(keys):
            out.append("duplicate samples")
        for s in self.samples:
            if not 0 <= s.soc_hat <= 1:
                out.append(f"soc {s.soc_hat} outside [0, 1]")
            if s.p_terminal_hat < 0 or s.p_internal_hat < 0:
                out.append(f"negative power in sample {s.as_tuple()}")
        return out

    def as_array(self) -> np.ndarray:
        """Samples as an ``(n, 3)`` array of (soc, p_terminal, p_internal)."""
        return np.array([s.as_tuple() for s in self.samples], dtype=float).reshape(-1, 3)

    def __len__(self):
        return len(self.samples)

    def to_json(self, header_lines: Sequence[str] = ()) -> str:
        payload = {
            "metadata": {"mode": self.mode, **self.provenance},
            "samples": [
                {"soc": s.soc_hat, "p_terminal_W": s.p_terminal_hat, "p_internal_W": s.p_internal_hat}
                for s in self.samples
            ],
        }
        if header_lines:
            payload["provenance"] = list(header_lines)
        return json.dumps(payload, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "EnvelopeSet":
        payload = json.loads(text)
        meta = dict(payload["metadata"])
        mode = meta.pop("mode")
        samples = [
            EnvelopeSample(float(d["soc"]), float(d["p_terminal_W"]), float(d["p_internal_W"]))
            for d in payload["samples"]
        ]
        return cls(mode=mode, samples=samples, provenance=meta)

    def save(self, path, header_lines: Sequence[str] = ()) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json(header_lines))

    @classmethod
    def load(cls, path) -> "EnvelopeSet":
        with open(path) as fh:
            return cls.from_json(fh.read())


def sample_surface(mode: str, soc_grid: Sequence[float], power_fraction_grid: Sequence[float],
                   T: float, params: BatteryParams) -> EnvelopeSet:
    """Sample the characteristic surface at every grid intersection.

    Terminal power is ``fraction * max_power(soc)``.  The two idle anchors are
    always included; exact duplicates are dropped and the result is ordered by
    soc, then terminal power.
    """
    _check_mode(mode)
    soc_grid = [float(s) for s in soc_grid]
    fractions = [float(f) for f in power_fraction_grid]
    if not soc_grid or not fractions:
        raise ValueError("sampling grids must be nonempty")
    if any(not 0 <= s <= 1 for s in soc_grid) or any(not 0 <= f <= 1 for f in fractions):
        raise ValueError("sampling grids must lie within [0, 1]")
    seen = {a.as_tuple() for a in ANCHORS}
    samples = list(ANCHORS)
    for soc in soc_grid:
        try:
            limit = max_power(soc, T, mode, params)
            for frac in fractions:
                p_t = frac * limit
                _, p_i = terminal_to_internal(soc, min(p_t, limit), T, mode, params)
                key = (soc, p_t, p_i)
                if key not in seen:
                    seen.add(key)
                    samples.append(EnvelopeSample(*key))
        except (DomainError, NoRealRootError, InfeasiblePowerError) as exc:
            raise type(exc)(f"while sampling {mode} surface at soc={soc}: {exc}") from exc
    samples.sort(key=lambda s: (s.soc_hat, s.p_terminal_hat))
    provenance = {
        "soc_grid": soc_grid,
        "power_fraction_grid": fractions,
        "temperature_K": float(T),
        "n_samples": len(samples),
    }
    return EnvelopeSet(mode=mode, samples=samples, provenance=provenance)


def default_envelope(mode: str, params: BatteryParams, T: float | None = None) -> EnvelopeSet:
    T = params.T_ref if T is None else T
    return sample_surface(mode, DEFAULT_SOC_GRID[mode], DEFAULT_POWER_FRACTIONS, T, params)


# --------------------------------------------------------------------------
# envelope approximation error


@dataclass(frozen=True)
class ErrorReport:
    max_rel_error: float
    mean_rel_error: float
    std_rel_error: float
    n_samples: int
    evaluation_grid: str
    n_outside: int = 0

    def to_dict(self) -> dict:
        return {
            "max_rel_error": self.max_rel_error,
            "mean_rel_error": self.mean_rel_error,
            "std_rel_error": self.std_rel_error,
            "n_samples": self.n_samples,
            "n_outside": self.n_outside,
            "evaluation_grid": self.evaluation_grid,
        }


def default_eval_grid(n: int = DEFAULT_EVAL_POINTS) -> tuple[np.ndarray, np.ndarray]:
    """``n`` SOC values and ``n`` power fractions; p = 0 is excluded."""
    return np.linspace(0.0, 1.0, n), np.linspace(1.0 / n, 1.0, n)


class EnvelopeInterpolator:
    """Evaluate the active face of an envelope set.

    The face is the lower (discharge) or upper (charge) convex hull of the
    samples over the (soc, p_terminal) plane; it is the same function as the
    optimal value of the convex-combination LP used by the dispatch model.

    Methods:

    ``"hull"``
        qhull facets; the face is the pointwise max of the supporting planes
        of the lower facets (after flipping sign for charge).  Default.
    ``"triangles"``
        A basic solution of the 3-row convex-combination LP uses at most
        three samples, so the face value is the best interpolation over all
        sample triangles containing the point.  Exact, but cubic in the number
        of samples; meant for small sets and cross-checks.
    ``"lp"``
        One warm-started simplex solve per point.
    """

    def __init__(self, envelope: EnvelopeSet, method: str = "hull", chunk: int = 512):
        if method not in ("hull", "triangles", "lp"):
            raise ValueError(f"method must be 'hull', 'triangles' or 'lp', got {method!r}")
        self.envelope = envelope
        self._chunk = chunk
        pts = envelope.as_array()
        self._sign = 1.0 if envelope.mode == "discharge" else -1.0
        self._p_scale = max(float(pts[:, 1].max()), 1.0)
        self._z_scale = max(float(pts[:, 2].max()), 1.0)
        if method == "hull":
            try:
                self._setup_hull(pts)
            except Exception as exc:  # qhull rejects flat or degenerate inputs
                log.debug("qhull failed (%s); using triangle enumeration", exc)
                method = "triangles"
        if method == "triangles":
            self._setup_triangles(pts)
        elif method == "lp":
            self._setup_lp(pts)
        self.method = method

    def _setup_hull(self, pts: np.ndarray) -> None:
        from scipy.spatial import ConvexHull

        xyz = np.column_stack([pts[:, 0], pts[:, 1] / self._p_scale,
                               self._sign * pts[:, 2] / self._z_scale])
        hull3 = ConvexHull(xyz)
        eq = hull3.equations  # n . x + d <= 0 inside, unit normals
        lower = eq[eq[:, 2] < -1e-12]
        # z = -(n_x x + n_y y + d) / n_z on each lower facet
        self._planes = -lower[:, [0, 1, 3]] / lower[:, 2:3]
        hull2 = ConvexHull(xyz[:, :2])
        self._halfplanes = hull2.equations

    def _setup_triangles(self, pts: np.ndarray) -> None:
        xy = np.column_stack([pts[:, 0], pts[:, 1] / self._p_scale])
        tri = np.array(list(itertools.combinations(range(len(pts)), 3)), dtype=np.int64).reshape(-1, 3)
        e1 = xy[tri[:, 1]] - xy[tri[:, 0]]
        e2 = xy[tri[:, 2]] - xy[tri[:, 0]]
        det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        keep = np.abs(det) > 1e-12
        tri, e1, e2, det = tri[keep], e1[keep], e2[keep], det[keep]
        # rows of the inverse of [e1 e2]
        self._inv = np.stack([np.column_stack([e2[:, 1], -e2[:, 0]]) / det[:, None],
                              np.column_stack([-e1[:, 1], e1[:, 0]]) / det[:, None]], axis=1)
        self._origin = xy[tri[:, 0]]
        self._z = self._sign * pts[tri, 2]

    def _setup_lp(self, pts: np.ndarray) -> None:
        from .optim import LinearProgram

        lp = LinearProgram(name=f"envelope_{self.envelope.mode}")
        for j, (_, _, p_i) in enumerate(pts):
            lp.add_variable(f"w[{j}]", 0.0, math.inf, self._sign * p_i)
        idx = range(len(pts))
        lp.add_constraint("power", zip(idx, pts[:, 1] / self._p_scale), "=", 0.0)
        lp.add_constraint("soc", zip(idx, pts[:, 0]), "=", 0.0)
        lp.add_constraint("convexity", zip(idx, [1.0] * len(pts)), "=", 1.0)
        self._lp = lp
        self._basis = None

    def evaluate(self, soc, p_terminal) -> np.ndarray:
        """Face values at arrays of points; NaN where a point lies outside the hull."""
        soc = np.atleast_1d(np.asarray(soc, dtype=float))
        p = np.atleast_1d(np.asarray(p_terminal, dtype=float)) / self._p_scale
        soc, p = np.broadcast_arrays(soc, p)
        out = np.full(soc.shape, np.nan)
        if self.method == "lp":
            from .optim import solve_lp

            for k, (s_k, p_k) in enumerate(zip(soc, p)):
                self._lp.set_rhs(0, p_k)
                self._lp.set_rhs(1, s_k)
                sol = solve_lp(self._lp, basis=self._basis)
                if sol.status == "optimal":
                    self._basis = sol.basis
                    out[k] = self._sign * sol.objective
            return out
        eps = 1e-9
        if self.method == "hull":
            q = np.column_stack([soc, p])
            inside = np.all(q @ self._halfplanes[:, :2].T + self._halfplanes[:, 2] <= eps, axis=1)
            vals = (q @ self._planes[:, :2].T + self._planes[:, 2]).max(axis=1)
            out[inside] = self._sign * self._z_scale * vals[inside]
            return out
        if self._z.shape[0] == 0:  # flat sample set: no point with p > 0 is covered
            return out
        for start in range(0, soc.shape[0], self._chunk):
            q = np.column_stack([soc[start:start + self._chunk], p[start:start + self._chunk]])
            rel = q[:, None, :] - self._origin[None, :, :]            # (k, t, 2)
            lam = np.einsum("tij,ktj->kti", self._inv, rel)             # (k, t, 2)
            l0 = 1.0 - lam[..., 0] - lam[..., 1]
            inside = (l0 >= -eps) & (lam[..., 0] >= -eps) & (lam[..., 1] >= -eps)
            val = l0 * self._z[None, :, 0] + lam[..., 0] * self._z[None, :, 1] \
                + lam[..., 1] * self._z[None, :, 2]
            val = np.where(inside, val, np.inf)
            best = val.min(axis=1)
            found = np.isfinite(best)
            out[start:start + self._chunk][found] = self._sign * best[found]
        return out

    def __call__(self, soc: float, p_terminal: float) -> float | None:
        """Face value at one point, or None outside the hull."""
        v = float(self.evaluate(soc, p_terminal)[0])
        return None if math.isnan(v) else v


def internal_power(soc: float, p_terminal, T: float, mode: str, params: BatteryParams) -> np.ndarray:
    """Vectorized :func:`terminal_to_internal` (internal power only) at one soc."""
    _check_mode(mode)
    p = np.asarray(p_terminal, dtype=float)
    if np.any(p < 0):
        raise InfeasiblePowerError("terminal power must be >= 0")
    limit = max_power(soc, T, mode, params)
    if np.any(p > limit * (1 + 1e-9) + 1e-9):
        raise InfeasiblePowerError(
            f"{mode} power {float(p.max()):.6g} W exceeds the limit {limit:.6g} W at soc={soc}"
        )
    v = ec.equilibrium_voltage(soc, T, params)
    r = ec.total_resistance(soc, T, params)
    if mode == "discharge":
        root = np.sqrt(np.maximum(v * v - 4.0 * r * p, 0.0))
    else:
        root = np.sqrt(v * v + 4.0 * r * p)
    return v * (2.0 * p / (v + root))


def exact_internal_power(soc: float, p_terminal: float, T: float, mode: str,
                         params: BatteryParams) -> float:
    return terminal_to_internal(soc, p_terminal, T, mode, params)[1]


def envelope_error(envelope: EnvelopeSet, T: float, params: BatteryParams,
                   eval_grid: tuple[Iterable[float], Iterable[float]] | None = None,
                   points: Sequence[tuple[float, float]] | None = None) -> ErrorReport:
    """Relative error of the envelope's active face against the exact model.

    ``eval_grid`` is a pair (soc values, fractions of the power limit).  As an
    alternative, explicit ``points`` of (soc, terminal power) may be given.
    Points with zero terminal power are skipped (relative error undefined);
    points outside the envelope's hull are counted in ``n_outside``.
    """
    if points is None:
        socs, fracs = default_eval_grid() if eval_grid is None else eval_grid
        socs = [float(s) for s in socs]
        fracs = [float(f) for f in fracs]
        pts = []
        for s in socs:
            limit = max_power(s, T, envelope.mode, params)
            pts.extend((s, f * limit) for f in fracs)
        grid_desc = f"{len(socs)} soc x {len(fracs)} power-fraction grid"
    else:
        pts = [(float(s), float(p)) for s, p in points]
        grid_desc = f"{len(pts)} explicit points"

    pts = [(s, p) for s, p in pts if p > 0]
    errors = relative_errors(envelope, pts, T, params)
    inside = errors[~np.isnan(errors)]
    if inside.size:
        stats = float(inside.max()), float(inside.mean()), float(inside.std())
    else:
        stats = 0.0, 0.0, 0.0
    return ErrorReport(*stats, n_samples=int(inside.size), evaluation_grid=grid_desc,
                       n_outside=int(errors.size - inside.size))


def relative_errors(envelope: EnvelopeSet, points: Sequence[tuple[float, float]], T: float,
                    params: BatteryParams) -> np.ndarray:
    """|face - exact| / exact at each (soc, p_terminal > 0); NaN outside the hull."""
    if len(points) == 0:
        return np.zeros(0)
    arr = np.asarray(points, dtype=float).reshape(-1, 2)
    exact = np.empty(arr.shape[0])
    socs, group = np.unique(arr[:, 0], return_inverse=True)
    for k, soc in enumerate(socs):
        sel = group == k
        exact[sel] = internal_power(float(soc), arr[sel, 1], T, envelope.mode, params)
    approx = EnvelopeInterpolator(envelope).evaluate(arr[:, 0], arr[:, 1])
    return np.abs(approx - exact) / exact


# --------------------------------------------------------------------------
# dense surface dumps


def surface_table(mode: str, T: float, params: BatteryParams, n_soc: int = 51,
                  n_power: int = 21) -> list[tuple[float, float, float, float]]:
    """Rows of (soc, p_terminal, p_internal, efficiency) over the feasible region."""
    rows = []
    for soc in np.linspace(0.0, 1.0, n_soc):
        soc = float(soc)
        limit = max_power(soc, T, mode, params)
        for frac in np.linspace(0.0, 1.0, n_power):
            p_t = float(frac) * limit
            i, p_i = terminal_to_internal(soc, p_t, T, mode, params)
            if p_t == 0:
                eta = 1.0
            else:
                eta = p_t / p_i if mode == "discharge" else p_i / p_t
            rows.append((soc, p_t, p_i, eta))
    return rows


def write_surface_csv(path, rows, header_lines: Sequence[str] = ()) -> None:
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["soc", "p_terminal", "p_internal", "efficiency"])
        for row in rows:
            writer.writerow([repr(float(v)) for v in row])


def limits_table(T: float, params: BatteryParams, n_soc: int = 101):
    """Rows of (soc, i_dis/I_nom, i_cha/I_nom, p_dis_max, p_cha_max)."""
    rows = []
    for soc in np.linspace(0.0, 1.0, n_soc):
        soc = float(soc)
        lim = current_limits(soc, T, params)
        rows.append((
            soc,
            lim.i_max_dis / params.nominal_current,
            lim.i_max_cha / params.nominal_current,
            max_power(soc, T, "discharge", params),
            max_power(soc, T, "charge", params),
        ))
    return rows
