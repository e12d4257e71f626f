"""Steady-state equivalent-circuit model of a Li-ion battery.

The circuit is a voltage source (equilibrium voltage) in series with three
resistors: ohmic, charge transfer and membrane diffusion.  Electrode diffusion
does not appear as a series element; it shifts the surface state of charge
seen by the electrodes.

Every function accepts scalars or numpy arrays and returns the same shape.
Scalar inputs give Python floats back.
"""
from __future__ import annotations

import json
import math
from dataclasses import MISSING, asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

GAS_CONSTANT = 8.314462618  # J mol^-1 K^-1
FARADAY = 96485.33212  # C mol^-1

# Molar fractions are clamped to [CHI_EPS, 1 - CHI_EPS] before any log, power
# or denominator use.
CHI_EPS = 1e-6


class DomainError(ValueError):
    """An argument lies outside the domain of a model equation."""


class ParameterError(ValueError):
    """A battery parameter set fails validation.

    ``report`` holds one human-readable line per failed check.
    """

    def __init__(self, report: list[str]):
        self.report = list(report)
        super().__init__("invalid battery parameters:\n  " + "\n  ".join(self.report))


@dataclass(frozen=True)
class BatteryParams:
    U_bat0: float
    A_and: tuple[float, ...]
    A_ctd: tuple[float, ...]
    R_ohm_0: float
    R_ohm_T: float
    R_ohm_SOC: float
    E_A: float  # kJ/mol
    A_SEI: float
    k_0: float
    K_dif_mem: float
    b_dif_mem: float
    T0_dif_mem: float
    K_dif_elec: float
    b_dif_elec: float
    T0_dif_elec: float
    eta_c0: float
    eta_cT: float
    eta_ci: float
    capacity_Ah: float
    rated_voltage: float
    energy_capacity_Wh: float
    c_rate_dis: float = 5.0
    c_rate_cha: float = 1.0
    T_ref: float = 298.15
    label: str = field(default="", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "A_and", tuple(float(a) for a in self.A_and))
        object.__setattr__(self, "A_ctd", tuple(float(a) for a in self.A_ctd))

    @property
    def nominal_current(self) -> float:
        """Current of a 1C rate, in amperes."""
        return self.capacity_Ah

    def replace(self, **changes) -> "BatteryParams":
        data = asdict(self)
        data.update(changes)
        return BatteryParams(**data)

    def to_dict(self) -> dict:
        data = asdict(self)
        data["A_and"] = list(self.A_and)
        data["A_ctd"] = list(self.A_ctd)
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "BatteryParams":
        data = {k: v for k, v in data.items() if k != "provenance"}
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ParameterError([f"unknown field {name!r}" for name in unknown])
        missing = sorted(
            f.name for f in fields(cls)
            if f.name not in data and f.default is MISSING and f.default_factory is MISSING
        )
        if missing:
            raise ParameterError([f"missing field {name!r}" for name in missing])
        return cls(**data)


def validation_report(params: BatteryParams) -> list[str]:
    """Check every invariant of a parameter set; an empty list means valid."""
    problems = []
    for name in ("A_and", "A_ctd"):
        if len(getattr(params, name)) != 7:
            problems.append(f"{name}: expected 7 coefficients, got {len(getattr(params, name))}")
    for name in ("capacity_Ah", "energy_capacity_Wh", "rated_voltage", "c_rate_dis",
                 "c_rate_cha", "T_ref", "A_SEI", "k_0", "K_dif_mem", "K_dif_elec"):
        value = getattr(params, name)
        if not (math.isfinite(value) and value > 0):
            problems.append(f"{name}: must be a finite positive number, got {value!r}")
    if params.T0_dif_mem == params.T_ref:
        problems.append("T0_dif_mem: equals T_ref, membrane diffusion resistance is singular")
    if params.T0_dif_elec == params.T_ref:
        problems.append("T0_dif_elec: equals T_ref, electrode diffusion resistance is singular")
    if problems:
        return problems

    T = params.T_ref
    for soc in (0.0, 1.0):
        r = ohmic_resistance(soc, T, params)
        if not r > 0:
            problems.append(f"R_ohm_*: ohmic resistance {r:.6g} ohm <= 0 at soc={soc}")
    i_max = max(params.c_rate_dis, params.c_rate_cha) * params.nominal_current
    for i in (0.0, i_max):
        eta = coulombic_efficiency(i, T, params)
        if not 0 < eta <= 1:
            problems.append(f"eta_c*: coulombic efficiency {eta:.6g} outside (0, 1] at i={i:g} A")
    if diffusion_resistance(T, "electrode", params) <= 0:
        problems.append("K_dif_elec: electrode diffusion resistance must be positive")
    soc_grid = np.linspace(0.01, 0.99, 99)
    for T_scan in (T - 10.0, T, T + 10.0):
        if T_scan in (params.T0_dif_mem, params.T0_dif_elec):
            continue
        r_tot = total_resistance(soc_grid, T_scan, params)
        if not np.all(np.isfinite(r_tot) & (r_tot > 0)):
            problems.append(f"total resistance not strictly positive on the soc grid at T={T_scan:g} K")
    return problems


def validate_params(params: BatteryParams) -> BatteryParams:
    report = validation_report(params)
    if report:
        raise ParameterError(report)
    return params


def load_battery(path) -> BatteryParams:
    """Read and validate a battery parameter JSON file."""
    with open(path) as fh:
        data = json.load(fh)
    return validate_params(BatteryParams.from_dict(data))


def save_battery(params: BatteryParams, path, header_lines=()) -> None:
    data = params.to_dict()
    if header_lines:
        data["provenance"] = list(header_lines)
    Path(path).write_text(json.dumps(data, indent=2) + "\n")


def default_battery() -> BatteryParams:
    """The bundled synthetic parameter set (placeholder values, see its label)."""
    return load_battery(Path(__file__).parent / "data" / "default_battery.json")


# --------------------------------------------------------------------------
# helpers


def _out(value, *inputs):
    if all(np.ndim(x) == 0 for x in inputs):
        return float(value)
    return value


def _check_soc(soc):
    soc = np.asarray(soc, dtype=float)
    if np.any(~np.isfinite(soc)) or np.any(soc < 0) or np.any(soc > 1):
        raise DomainError(f"soc must lie in [0, 1], got {soc!r}")
    return soc


def _check_temperature(T):
    T = np.asarray(T, dtype=float)
    if np.any(~(T > 0)):
        raise DomainError(f"temperature must be positive kelvin, got {T!r}")
    return T


def _clamp_chi(chi):
    return np.clip(chi, CHI_EPS, 1.0 - CHI_EPS)


# --------------------------------------------------------------------------
# model equations


def molar_fractions(soc):
    """Anode and cathode molar fractions at a bulk state of charge."""
    s = _check_soc(soc)
    chi_and = 0.083 + 0.917 * s
    chi_ctd = 1.0 - 0.7 * s
    return _out(chi_and, soc), _out(chi_ctd, soc)


def redlich_kister(chi, A):
    """Non-ideal interaction voltage of one electrode, in volts.

    ``A`` holds the seven interaction coefficients in J/mol.  The k-th term is
    written with (2*chi - 1)**(k - 2) in the numerator, so nothing is divided
    and chi = 0.5 needs no special case.
    """
    x = np.asarray(chi, dtype=float)
    if np.any(~(x > 0)) or np.any(~(x < 1)):
        raise DomainError(f"molar fraction must lie in (0, 1), got {chi!r}")
    A = tuple(A)
    if len(A) != 7:
        raise DomainError(f"expected 7 Redlich-Kister coefficients, got {len(A)}")
    u = 2.0 * x - 1.0
    w = 2.0 * x * (1.0 - x)
    total = np.zeros_like(x)
    u_pow = np.ones_like(x)  # u**(k-2) for k >= 2
    for k, a in enumerate(A, start=1):
        if k == 1:
            total = total + a * u
            continue
        total = total + a * (u_pow * u * u - w * (k - 1) * u_pow)
        u_pow = u_pow * u
    return _out(total / FARADAY, chi)


def equilibrium_voltage(soc, T, params: BatteryParams):
    """Open-circuit voltage: Nernst term plus Redlich-Kister interactions."""
    s = _check_soc(soc)
    temp = _check_temperature(T)
    chi_and = _clamp_chi(0.083 + 0.917 * s)
    chi_ctd = _clamp_chi(1.0 - 0.7 * s)
    arg = (1.0 - chi_ctd) * chi_and / (chi_ctd * (1.0 - chi_and))
    if np.any(~(arg > 0)):
        raise DomainError("Nernst log argument is not positive")
    nernst = GAS_CONSTANT * temp / FARADAY * np.log(arg)
    v_int = redlich_kister(chi_ctd, params.A_ctd) - redlich_kister(chi_and, params.A_and)
    return _out(params.U_bat0 + nernst + v_int, soc, T)


def ohmic_resistance(soc, T, params: BatteryParams):
    s = _check_soc(soc)
    temp = _check_temperature(T)
    r = params.R_ohm_0 + params.R_ohm_T * temp + params.R_ohm_SOC * s
    return _out(r, soc, T)


def charge_transfer_resistance(soc, T, params: BatteryParams):
    s = _check_soc(soc)
    temp = _check_temperature(T)
    chi_and = _clamp_chi(0.083 + 0.917 * s)
    chi_ctd = _clamp_chi(1.0 - 0.7 * s)
    rt = GAS_CONSTANT * temp
    base = rt * np.exp(params.E_A * 1e3 / rt) / (FARADAY**2 * params.A_SEI * params.k_0)
    return _out(base / np.sqrt(chi_and * chi_ctd), soc, T)


def diffusion_resistance(T, which: str, params: BatteryParams):
    """Membrane or electrode diffusion resistance, K * exp(b / (T - T0))."""
    temp = _check_temperature(T)
    if which == "membrane":
        K, b, T0 = params.K_dif_mem, params.b_dif_mem, params.T0_dif_mem
    elif which == "electrode":
        K, b, T0 = params.K_dif_elec, params.b_dif_elec, params.T0_dif_elec
    else:
        raise ValueError(f"which must be 'membrane' or 'electrode', got {which!r}")
    gap = temp - T0
    if np.any(gap == 0):
        raise DomainError(f"temperature equals the {which} diffusion singularity T0={T0}")
    return _out(K * np.exp(b / gap), T)


def total_resistance(soc, T, params: BatteryParams):
    """Series resistance of the circuit: ohmic + charge transfer + membrane."""
    r = (
        np.asarray(ohmic_resistance(soc, T, params))
        + np.asarray(charge_transfer_resistance(soc, T, params))
        + np.asarray(diffusion_resistance(T, "membrane", params))
    )
    return _out(r, soc, T)


def coulombic_efficiency(i, T, params: BatteryParams):
    cur = np.asarray(i, dtype=float)
    if np.any(cur < 0):
        raise DomainError(f"current magnitude must be >= 0, got {i!r}")
    temp = _check_temperature(T)
    return _out(params.eta_c0 + params.eta_cT * temp + params.eta_ci * cur, i, T)


def surface_soc(soc, i, T, params: BatteryParams):
    """State of charge seen at the electrode surface.

    ``i`` is signed: positive discharges (surface SOC drops), negative charges.
    The result is not range-checked.
    """
    s = _check_soc(soc)
    cur = np.asarray(i, dtype=float)
    r_elec = np.asarray(diffusion_resistance(T, "electrode", params))
    eta = np.asarray(coulombic_efficiency(np.abs(cur), T, params))
    return _out(s - r_elec * cur * eta, soc, i, T)
