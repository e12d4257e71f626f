"""Replay a battery schedule against the nonlinear model.

Each step: clip the scheduled terminal powers to the limits at the realized
SOC, convert them to cell-side powers with the exact circuit, and advance the
realized energy.  The imbalance is the signed sum of realized minus scheduled
energy levels.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import characterization as ch
from .electrochem import BatteryParams

CLIP_RTOL = 1e-9


@dataclass
class RealizationReport:
    e_sched: np.ndarray
    e_real: np.ndarray
    p_cha_sched: np.ndarray
    p_cha_real: np.ndarray
    p_dis_sched: np.ndarray
    p_dis_real: np.ndarray
    violation_W: np.ndarray
    clipped: np.ndarray  # bool per step
    imbalance_Wh: float
    imbalance_fraction: float  # signed, divided by the sum of scheduled energy levels
    negative_energy_steps: int
    min_energy_Wh: float
    delta_h: float
    temperature_K: float
    nlp_check: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    @property
    def horizon(self) -> int:
        return int(self.e_sched.shape[0])

    @property
    def n_clipped(self) -> int:
        return int(np.count_nonzero(self.clipped))

    def to_dict(self) -> dict:
        return {
            "horizon_steps": self.horizon,
            "delta_h": self.delta_h,
            "temperature_K": self.temperature_K,
            "imbalance_Wh": self.imbalance_Wh,
            "imbalance_fraction": self.imbalance_fraction,
            "imbalance_fraction_abs": abs(self.imbalance_fraction),
            "imbalance_sign_convention": "sum_t (e_real_t - e_sched_t); negative means the battery "
                                         "holds less energy than scheduled",
            "fraction_denominator": "sum_t e_sched_t",
            "clipped_steps": self.n_clipped,
            "max_violation_W": float(self.violation_W.max(initial=0.0)),
            "total_violation_Wh": float(self.violation_W.sum() * self.delta_h),
            "negative_energy_steps": self.negative_energy_steps,
            "min_energy_Wh": self.min_energy_Wh,
            "scheduled_soc_check": self.nlp_check,
            **self.metadata,
        }

    def write_json(self, path, header_lines=()) -> None:
        payload = self.to_dict()
        if header_lines:
            payload["provenance"] = list(header_lines)
        with open(path, "w") as fh:
            json.dump(_finite(payload), fh, indent=2)
            fh.write("\n")

    def write_csv(self, path, header_lines=()) -> None:
        with open(path, "w", newline="") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "e_sched", "e_real", "p_cha_sched", "p_cha_real", "p_dis_sched",
                        "p_dis_real", "violation_W"])
            for t in range(self.horizon):
                w.writerow([t + 1, *(repr(float(a[t])) for a in (
                    self.e_sched, self.e_real, self.p_cha_sched, self.p_cha_real, self.p_dis_sched,
                    self.p_dis_real, self.violation_W))])


def _finite(obj):
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_finite(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def _clip(p: float, limit: float) -> float:
    return p if p <= limit * (1.0 + CLIP_RTOL) else limit


def _limit_soc(e: float, capacity: float) -> float:
    return min(max(e / capacity, 0.0), 1.0) if capacity > 0 else 0.0


def clip_to_limits(p_cha, p_dis, e_1: float, params: BatteryParams, T: float, delta_h: float):
    """Clipped (charge, discharge) power arrays; see :func:`realize_schedule`."""
    rep = realize_schedule(p_cha, p_dis, np.full(len(p_cha), e_1), e_1, params, T, delta_h)
    return rep.p_cha_real, rep.p_dis_real


def realize_trajectory(p_cha, p_dis, e_1: float, params: BatteryParams, T: float,
                       delta_h: float) -> np.ndarray:
    """Energy levels (Wh) reached by applying already-feasible powers in order.

    ``e[0] = e_1`` and ``e[t] = e[t-1] + (p_in[t-1] - p_out[t-1]) * delta_h``
    with cell-side powers from the exact circuit at the realized SOC.
    Energies may become negative; limits are evaluated at SOC clamped to [0, 1].
    """
    p_cha = np.asarray(p_cha, dtype=float)
    p_dis = np.asarray(p_dis, dtype=float)
    cap = params.energy_capacity_Wh
    e = np.empty(p_cha.shape[0])
    if e.size == 0:
        return e
    e[0] = e_1
    for t in range(1, e.size):
        soc = _limit_soc(e[t - 1], cap)
        p_in = ch.internal_power(soc, p_cha[t - 1], T, "charge", params) if p_cha[t - 1] > 0 else 0.0
        p_out = ch.internal_power(soc, p_dis[t - 1], T, "discharge", params) if p_dis[t - 1] > 0 else 0.0
        e[t] = e[t - 1] + (float(p_in) - float(p_out)) * delta_h
    return e


def realize_schedule(p_cha, p_dis, e_sched, e_1: float, params: BatteryParams, T: float,
                     delta_h: float) -> RealizationReport:
    """Clip, realize and measure one battery schedule.

    Limits are evaluated at the realized SOC of each step, sequentially; a
    scheduled power above the limit is replaced by the limit.  Cell-side
    powers then follow from the exact circuit and advance the realized energy.
    """
    p_cha = np.asarray(p_cha, dtype=float).copy()
    p_dis = np.asarray(p_dis, dtype=float).copy()
    e_sched = np.asarray(e_sched, dtype=float)
    n = p_cha.shape[0]
    if not (p_dis.shape[0] == n == e_sched.shape[0]):
        raise ValueError("schedule arrays must have equal lengths")
    # tiny negative solver noise is treated as zero
    p_cha = np.where(p_cha < 0, 0.0, p_cha)
    p_dis = np.where(p_dis < 0, 0.0, p_dis)
    cap = params.energy_capacity_Wh
    e_real = np.empty(n)
    cha_real = np.empty(n)
    dis_real = np.empty(n)
    viol = np.zeros(n)
    if n:
        e_real[0] = e_1
    for t in range(n):
        soc = _limit_soc(e_real[t], cap)
        lim_cha = ch.max_power(soc, T, "charge", params)
        lim_dis = ch.max_power(soc, T, "discharge", params)
        cha_real[t] = _clip(p_cha[t], lim_cha)
        dis_real[t] = _clip(p_dis[t], lim_dis)
        viol[t] = (p_cha[t] - cha_real[t]) + (p_dis[t] - dis_real[t])
        if t + 1 < n:
            p_in = ch.internal_power(soc, cha_real[t], T, "charge", params) if cha_real[t] > 0 else 0.0
            p_out = ch.internal_power(soc, dis_real[t], T, "discharge", params) if dis_real[t] > 0 else 0.0
            e_real[t + 1] = e_real[t] + (float(p_in) - float(p_out)) * delta_h
    imbalance = float(np.sum(e_real - e_sched))
    denom = float(np.sum(e_sched))
    fraction = imbalance / denom if denom > 0 else (0.0 if imbalance == 0 else math.copysign(math.inf, imbalance))
    neg = e_real < 0
    return RealizationReport(
        e_sched=e_sched.copy(), e_real=e_real, p_cha_sched=p_cha, p_cha_real=cha_real, p_dis_sched=p_dis,
        p_dis_real=dis_real, violation_W=viol, clipped=viol > 0, imbalance_Wh=imbalance,
        imbalance_fraction=fraction, negative_energy_steps=int(np.count_nonzero(neg)),
        min_energy_Wh=float(e_real.min(initial=math.inf)) if n else 0.0, delta_h=delta_h,
        temperature_K=float(T),
        nlp_check=scheduled_soc_check(p_cha, p_dis, e_sched, params, T, delta_h),
    )


def imbalance(e_sched, e_real) -> tuple[float, float]:
    """Signed sum of (e_real - e_sched) in Wh and as a fraction of sum(e_sched)."""
    e_sched = np.asarray(e_sched, dtype=float)
    e_real = np.asarray(e_real, dtype=float)
    if e_sched.shape != e_real.shape:
        raise ValueError(f"trajectory lengths differ: {e_sched.shape} vs {e_real.shape}")
    total = float(np.sum(e_real - e_sched))
    denom = float(np.sum(e_sched))
    if denom > 0:
        return total, total / denom
    return total, 0.0 if total == 0 else math.copysign(math.inf, total)


def scheduled_soc_check(p_cha, p_dis, e_sched, params: BatteryParams, T: float, delta_h: float) -> dict:
    """Evaluate the schedule in the nonlinear model at its own scheduled SOC.

    Reports the largest power-limit violation and the largest energy-balance
    residual ``e[t] - e[t-1] - (p_in - p_out) dt`` with exact efficiencies.
    """
    cap = params.energy_capacity_Wh
    e_sched = np.asarray(e_sched, dtype=float)
    n = e_sched.shape[0]
    worst_limit = 0.0
    infeasible = 0
    worst_balance = 0.0
    for t in range(n):
        soc = _limit_soc(e_sched[t], cap)
        over = max(p_cha[t] - ch.max_power(soc, T, "charge", params), 0.0) + \
            max(p_dis[t] - ch.max_power(soc, T, "discharge", params), 0.0)
        if over > CLIP_RTOL * max(1.0, p_cha[t] + p_dis[t]):
            infeasible += 1
        worst_limit = max(worst_limit, over)
        if t + 1 < n and over == 0.0:
            p_in = float(ch.internal_power(soc, p_cha[t], T, "charge", params)) if p_cha[t] > 0 else 0.0
            p_out = float(ch.internal_power(soc, p_dis[t], T, "discharge", params)) if p_dis[t] > 0 else 0.0
            worst_balance = max(worst_balance, abs(e_sched[t + 1] - e_sched[t] - (p_in - p_out) * delta_h))
    return {"steps_over_limit": infeasible, "max_limit_violation_W": worst_limit,
            "max_energy_balance_residual_Wh": worst_balance}


def realize_battery_schedule(bs, params: BatteryParams, T: float, delta_h: float,
                             e_1: float | None = None) -> RealizationReport:
    """:func:`realize_schedule` for a dispatch ``BatterySchedule``."""
    e0 = float(bs.energy[0]) if e_1 is None else e_1
    return realize_schedule(bs.p_cha, bs.p_dis, bs.energy, e0, params, T, delta_h)
