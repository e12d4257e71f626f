import math

import numpy as np
import pytest

from battdispatch import characterization as ch
from battdispatch.dispatch import (Battery, CaseError, FormulationError, Generator, IdealBattery, Line,
                                   NetworkCase, Node, VerificationError, build_dispatch, load_case,
                                   make_formulation, read_battery_schedule, save_case,
                                   simultaneous_operation, solve_dispatch, triangle_partition,
                                   verify_schedule, write_schedule)
from battdispatch.dispatch.formulation import BatteryFormulation
from battdispatch.optim import OPTIMAL, solve_lp
from battdispatch.testcase import make_testcase

CHEAP, DEAR = 1e-3, 1e-2  # $/Wh


def single_node_case(params, demand=(5e3, 12e3, 5e3), delta_h=1.0):
    """One bus: a cheap 10 kW unit, an expensive unit and one battery."""
    return NetworkCase(
        nodes=[Node("1", reference=True)], lines=[],
        generators=[Generator("G1", "1", 0.0, 10e3, CHEAP), Generator("G2", "1", 0.0, 1e6, DEAR)],
        demand=np.array([demand]), delta_h=delta_h,
        batteries=[Battery("B1", "1", params)], name="toy").validate()


def merit_cost(net_demand, delta_h):
    cheap = np.minimum(net_demand, 10e3)
    return float(np.sum(CHEAP * cheap + DEAR * (net_demand - cheap)) * delta_h)


def grid_search_ideal(params, demand, delta_h, n=200001):
    """Brute force over the energy moved between steps 1 and 2.

    The cycle forces e_3 = e_1, so the only freedom is a signed cell-side
    energy ``q`` stored in step 1 and returned in step 2 (negative: the
    reverse); the last step must idle.
    """
    ideal = IdealBattery.from_params(params)
    cap, e1 = params.energy_capacity_Wh, 0.5 * params.energy_capacity_Wh
    q = np.linspace(-e1, cap - e1, n)  # energy level change after step 1
    p_in = np.maximum(q, 0) / delta_h
    p_out = np.maximum(-q, 0) / delta_h
    cha1, dis1 = p_in / ideal.eta_cha, p_out * ideal.eta_dis
    cha2, dis2 = p_out / ideal.eta_cha, p_in * ideal.eta_dis
    ok = (cha1 <= ideal.p_cha_max) & (dis1 <= ideal.p_dis_max) & (cha2 <= ideal.p_cha_max) \
        & (dis2 <= ideal.p_dis_max)
    d = np.asarray(demand, float)
    costs = [merit_cost(np.array([d[0] + c1 - d1, d[1] + c2 - d2, d[2]]), delta_h)
             for c1, d1, c2, d2 in zip(cha1[ok], dis1[ok], cha2[ok], dis2[ok])]
    return min(costs)


def test_single_node_arbitrage_matches_grid_search(params):
    case = single_node_case(params)
    dm = build_dispatch(case, make_formulation("ideal", params))
    sched, sol = solve_dispatch(dm)
    assert sol.status == OPTIMAL
    want = grid_search_ideal(params, case.demand[0], case.delta_h)
    # the grid steps 0.0266 Wh, worth < 3e-4 $ at the dear price
    assert sol.objective <= want + 1e-9
    assert sol.objective >= want - 3e-4
    bs = sched.batteries["B1"]
    # closed form: discharge exactly the 2 kW of dear generation in step 2
    assert bs.p_dis[1] == pytest.approx(2e3, rel=1e-9)
    assert bs.p_cha[0] == pytest.approx(2e3 / (0.972 * 0.868), rel=1e-9)


def test_no_arbitrage_without_price_spread(params):
    case = single_node_case(params, demand=(5e3, 5e3, 5e3))
    sched, sol = solve_dispatch(build_dispatch(case, make_formulation("ideal", params)))
    assert sol.objective == pytest.approx(merit_cost(case.demand[0], 1.0), rel=1e-12)
    bs = sched.batteries["B1"]
    assert np.allclose(bs.p_cha, 0, atol=1e-6) and np.allclose(bs.p_dis, 0, atol=1e-6)


@pytest.mark.parametrize("kind", ["envelope", "milp-triangle"])
def test_nonlinear_forms_cost_at_least_their_relaxation(params, kind):
    case = single_node_case(params)
    dm = build_dispatch(case, make_formulation(kind, params))
    sched, sol = solve_dispatch(dm)
    assert sol.status == OPTIMAL
    no_battery = merit_cost(case.demand[0], 1.0)
    assert sol.objective <= no_battery + 1e-9  # idling is always feasible
    if kind == "milp-triangle":
        relax = solve_lp(dm.model.relaxation())
        assert relax.objective <= sol.objective + 1e-9


def two_bus_case(params, limit=3e3):
    # cheap unit behind a congested line, battery at the load bus
    return NetworkCase(
        nodes=[Node("a", reference=True), Node("b")],
        lines=[Line("L", "a", "b", 0.1, limit)],
        generators=[Generator("cheap", "a", 0.0, 50e3, CHEAP), Generator("dear", "b", 0.0, 50e3, DEAR)],
        demand=np.array([[0.0, 0.0, 0.0, 0.0], [2e3, 8e3, 2e3, 2e3]]), delta_h=1.0,
        batteries=[Battery("B", "b", params)], base_power_W=1e4, name="two-bus").validate()


@pytest.mark.parametrize("kind", ["ideal", "envelope", "milp-triangle"])
def test_two_bus_residuals(params, kind):
    case = two_bus_case(params)
    dm = build_dispatch(case, make_formulation(kind, params))
    sched, sol = solve_dispatch(dm)
    assert sol.status == OPTIMAL
    res = sched.residuals
    assert max(res.values()) < 1e-6
    # flows follow angles and respect the limit
    assert abs(sched.flow[0]).max() <= 3e3 + 1e-6
    np.testing.assert_allclose(sched.flow[0], 1e4 / 0.1 * (sched.angle[0] - sched.angle[1]), atol=1e-6)
    # congestion makes the battery worth using
    assert sched.batteries["B"].p_dis.max() > 1.0
    assert simultaneous_operation(sched, dm)["B"] <= 1e-6


def test_verification_catches_tampering(params):
    case = two_bus_case(params)
    dm = build_dispatch(case, make_formulation("ideal", params))
    sched, _ = solve_dispatch(dm)
    sched.gen[0, 0] += 10.0
    with pytest.raises(VerificationError) as err:
        verify_schedule(dm, sched)
    assert err.value.residuals["balance"] > 1e-5


def test_load_shedding_only_when_short(params):
    case = single_node_case(params)
    case.generators = [Generator("G1", "1", 0.0, 6e3, CHEAP)]
    dm = build_dispatch(case, make_formulation("ideal", params), shed_penalty=1.0)
    sched, sol = solve_dispatch(dm)
    assert sol.status == OPTIMAL
    total_short = np.sum(np.maximum(case.demand[0] - 6e3, 0))
    assert 0 < sched.shed.sum() <= total_short + 1e-6


def test_battery_constraints_on_shipped_case(params):
    case = make_testcase(steps=12)
    dm = build_dispatch(case, make_formulation("envelope", params))
    sched, sol = solve_dispatch(dm)
    bs = sched.batteries["B1"]
    assert bs.energy[0] == pytest.approx(case.batteries[0].e_initial)
    assert bs.energy[-1] == pytest.approx(bs.energy[0], abs=1e-6)
    np.testing.assert_allclose(bs.weights_dis.sum(axis=0), 1, atol=1e-9)
    np.testing.assert_allclose(bs.weights_cha.sum(axis=0), 1, atol=1e-9)


def test_empty_horizon(params):
    case = make_testcase(steps=0)
    sched, sol = solve_dispatch(build_dispatch(case, make_formulation("ideal", params)))
    assert sol.status == OPTIMAL
    assert sched.horizon == 0


def test_write_and_read_schedule(params, tmp_path):
    case = two_bus_case(params)
    sched, _ = solve_dispatch(build_dispatch(case, make_formulation("envelope", params)))
    files = write_schedule(sched, tmp_path, header_lines=["hdr"])
    names = {f.name for f in files}
    assert {"generators.csv", "flows.csv", "angles.csv", "battery_B.csv", "summary.json",
            "weights_dis_B.csv", "weights_cha_B.csv"} <= names
    cols = read_battery_schedule(tmp_path / "battery_B.csv")
    np.testing.assert_array_equal(cols["energy"], sched.batteries["B"].energy)


def test_case_round_trip(params, tmp_path):
    case = make_testcase(steps=6)
    save_case(case, tmp_path / "case.json")
    back = load_case(tmp_path / "case.json")
    np.testing.assert_array_equal(back.demand, case.demand)
    assert back.lines == case.lines and back.generators == case.generators
    assert back.batteries[0].e_initial == case.batteries[0].e_initial


def test_case_validation(params):
    bad = NetworkCase(nodes=[Node("1"), Node("1")], lines=[Line("L", "1", "9", -1.0, 1.0)],
                      generators=[Generator("G", "1", 5.0, 1.0, 0.0)], demand=np.zeros((2, 1)), delta_h=0.0)
    with pytest.raises(CaseError) as err:
        bad.validate()
    msg = str(err.value)
    for part in ("duplicate node ids", "reference node", "unknown node 9", "reactance", "p_min_W",
                 "time step"):
        assert part in msg


def test_truncated_case():
    case = make_testcase(steps=30)
    assert case.truncated(24).horizon == 24
    with pytest.raises(CaseError):
        case.truncated(31)


def test_triangle_partition_covers_cells():
    tris = triangle_partition(3, 4)
    assert tris.shape == (12, 3)
    # every cell split along the lower-left to upper-right diagonal
    assert (0, 1, 5) == tuple(tris[0]) and (0, 5, 4) == tuple(tris[1])


def test_formulation_errors(params):
    with pytest.raises(FormulationError):
        make_formulation("quadratic", params)
    with pytest.raises(FormulationError):
        BatteryFormulation("ideal", ideal=IdealBattery(1.0, 1.0, eta_cha=1.5)).validate()
    with pytest.raises(FormulationError):
        BatteryFormulation("envelope", discharge=ch.default_envelope("charge", params),
                           charge=ch.default_envelope("charge", params)).validate()


def test_ideal_constants(params):
    ideal = IdealBattery.from_params(params)
    assert ideal.p_dis_max == pytest.approx(26.6e3)
    assert ideal.p_cha_max == pytest.approx(5.32e3)
    assert (ideal.eta_cha, ideal.eta_dis) == (0.972, 0.868)
