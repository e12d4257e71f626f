"""Synthetic 24-bus desk-scale test case.

SYNTHETIC DATA.  Branch topology and approximate reactances follow the
well-known 24-bus reliability test system; generator placements, limits and
costs, the load shape and the battery are invented for testing and do not
reproduce any published dataset.
"""
from __future__ import annotations

import math

import numpy as np

from .dispatch.network import Battery, Generator, Line, NetworkCase, Node
from .electrochem import BatteryParams, default_battery

# (from, to, reactance p.u.)
BRANCHES = (
    (1, 2, 0.0139), (1, 3, 0.2112), (1, 5, 0.0845), (2, 4, 0.1267), (2, 6, 0.1920),
    (3, 9, 0.1190), (3, 24, 0.0839), (4, 9, 0.1037), (5, 10, 0.0883), (6, 10, 0.0605),
    (7, 8, 0.0614), (8, 9, 0.1651), (8, 10, 0.1651), (9, 11, 0.0839), (9, 12, 0.0839),
    (10, 11, 0.0839), (10, 12, 0.0839), (11, 13, 0.0476), (11, 14, 0.0418), (12, 13, 0.0476),
    (12, 23, 0.0966), (13, 23, 0.0865), (14, 16, 0.0389), (15, 16, 0.0173), (15, 21, 0.0490),
    (15, 21, 0.0490), (15, 24, 0.0519), (16, 17, 0.0259), (16, 19, 0.0231), (17, 18, 0.0144),
    (17, 22, 0.1053), (18, 21, 0.0259), (18, 21, 0.0259), (19, 20, 0.0396), (19, 20, 0.0396),
    (20, 23, 0.0216), (20, 23, 0.0216), (21, 22, 0.0678),
)

# (node, p_max kW, p_min kW, cost $/kWh)
GENERATORS = (
    (1, 76.0, 15.2, 16.0), (2, 76.0, 15.2, 16.1), (7, 100.0, 25.0, 43.661),
    (13, 197.0, 69.0, 48.58), (15, 155.0, 54.3, 12.3), (16, 155.0, 54.3, 12.4),
    (18, 400.0, 100.0, 4.4), (21, 400.0, 100.0, 4.4231), (22, 50.0, 10.0, 0.001),
    (23, 350.0, 140.0, 11.85),
)

# relative share of system load per bus
LOAD_SHARE = {1: 108, 2: 97, 3: 180, 4: 74, 5: 71, 6: 136, 7: 125, 8: 171, 9: 175, 10: 195,
              13: 265, 14: 194, 15: 317, 16: 100, 18: 333, 19: 181, 20: 128}

BASE_POWER_W = 1e6
LINE_LIMIT_W = 500e3
BATTERY_NODE = 14
STRESSED_PEAKS_KW = (1200.0, 1250.0)  # morning, evening peak above base
STRESSED_VALLEY_KW = 100.0
STRESSED_INITIAL_SOC = 0.2


def load_shape(steps: int, delta_h: float, base_kW: float = 700.0, morning_kW: float = 450.0,
               evening_kW: float = 900.0, valley_kW: float = 0.0) -> np.ndarray:
    """System demand (W) with a morning and an evening peak.

    ``valley_kW`` carves off-peak dips at 06:30 and 17:30, three hours before
    each peak.
    """
    hours = (np.arange(steps) + 0.5) * delta_h
    hours = np.mod(hours, 24.0)

    def bump(center, width):
        return np.exp(-0.5 * ((hours - center) / width) ** 2)

    shape = base_kW + morning_kW * bump(9.5, 1.5) + evening_kW * bump(20.5, 1.3)
    shape -= valley_kW * (bump(6.5, 1.0) + bump(17.5, 1.0))
    return 1e3 * shape


def make_testcase(steps: int = 144, delta_h: float = 1.0 / 6.0, params: BatteryParams | None = None,
                  stressed: bool = False, initial_soc: float | None = None) -> NetworkCase:
    """The shipped synthetic 24-bus case with one battery.

    ``stressed`` raises both peaks close to the generation limit and adds
    off-peak valleys, so the battery charges cheaply and discharges at full
    power twice a day.
    It starts at 20% SOC (50% otherwise) unless ``initial_soc`` is given.
    """
    params = default_battery() if params is None else params
    if initial_soc is None:
        initial_soc = STRESSED_INITIAL_SOC if stressed else 0.5
    nodes = [Node(str(n), -math.pi / 4, math.pi / 4, reference=(n == 13)) for n in range(1, 25)]
    lines = [Line(f"L{k + 1}", str(a), str(b), x, LINE_LIMIT_W) for k, (a, b, x) in enumerate(BRANCHES)]
    gens = [Generator(f"G{k + 1}", str(n), 1e3 * pmin, 1e3 * pmax, cost / 1e3)
            for k, (n, pmax, pmin, cost) in enumerate(GENERATORS)]
    if stressed:
        total = load_shape(steps, delta_h, morning_kW=STRESSED_PEAKS_KW[0], evening_kW=STRESSED_PEAKS_KW[1],
                           valley_kW=STRESSED_VALLEY_KW)
    else:
        total = load_shape(steps, delta_h)
    share = np.zeros(24)
    for n, w in LOAD_SHARE.items():
        share[n - 1] = w
    share /= share.sum()
    demand = share[:, None] * total[None, :]
    battery = Battery("B1", str(BATTERY_NODE), params, initial_soc * params.energy_capacity_Wh, "default")
    return NetworkCase(
        nodes=nodes, lines=lines, generators=gens, demand=demand, delta_h=delta_h,
        batteries=[battery], base_power_W=BASE_POWER_W,
        name="synthetic24-stressed" if stressed else "synthetic24",
        metadata={"synthetic": True,
                  "note": "Synthetic desk-scale analog: 24-bus branch skeleton, invented load shape, "
                          "generator data and battery. Not a published dataset."},
    ).validate()
