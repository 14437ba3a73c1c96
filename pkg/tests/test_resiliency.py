import numpy as np
import pytest

from sam3r.errors import InfeasibleError
from sam3r.geo import GeoPoint, LocalFrame
from sam3r.ipsolver import objectives_match, solve_bnb, solve_exhaustive
from sam3r.resiliency import (BackupUnit, DispatchSchedule, FailureScenario, Hub, Primary,
                              build_resiliency_model, compute_travel_times, gantt_csv, is_valid,
                              load_backups, load_scenario, schedule, summarize, travel_steps,
                              validate_schedule)

from conftest import data_path
from instances import random_scenario
from oracles import brute_force_dispatch

ORIGIN = GeoPoint(-83.0, 40.0)
FRAME = LocalFrame(ORIGIN)


def one_failure(fail=10, repair=5, horizon=20, travel=1, prob=0.95):
    scen = FailureScenario([Primary("o1", ORIGIN)], {"o1": fail}, {"o1": repair}, horizon)
    hubs = [Hub("h1", ORIGIN)]
    units = [BackupUnit("u1", "UAV", prob, 15.0)]
    return scen, hubs, units, {("u1", "h1", "o1"): travel}


def test_travel_time_examples():
    hub = Hub("h", ORIGIN)
    lon, lat, _ = FRAME.to_geo(9000.0, 0.0)
    prim = [Primary("here", ORIGIN), Primary("far", GeoPoint(float(lon), float(lat)))]
    uav = compute_travel_times([hub], prim, BackupUnit("a", "UAV", 0.9, 15.0), 600, frame=FRAME)
    car = compute_travel_times([hub], prim, BackupUnit("g", "GroundVehicle", 0.9, 15.0), 600, frame=FRAME)
    assert uav == {("h", "here"): 1, ("h", "far"): 1}
    assert car[("h", "far")] == 2
    assert travel_steps(0.0, 15.0, 600) == 1
    assert travel_steps(9001.0, 15.0, 600) == 2


def test_single_failure_example():
    scen, hubs, units, travel = one_failure()
    sched = schedule(scen, hubs, units, travel)
    assert sched.dispatches == [("u1", "h1", "o1", 10)]
    assert sched.active_steps("u1", "o1") == [11, 12, 13, 14]
    assert sched.objective == pytest.approx(1 - 0.95 * 4)
    assert sched.objective == pytest.approx(brute_force_dispatch(scen, hubs, units, travel))
    row, = summarize(sched)
    assert (row.start, row.travel, row.arrival, row.active_start, row.active_end, row.active_periods) == \
        (10, 1, 11, 11, 14, 4)
    assert gantt_csv(sched).splitlines() == ["unit,site,start,end", "u1,o1,11,14"]
    assert is_valid(validate_schedule(sched, scen, units, hubs))


def test_no_failures():
    scen = FailureScenario([Primary("o1", ORIGIN)], {}, {}, 10)
    model = build_resiliency_model(scen, [Hub("h1", ORIGIN)], [BackupUnit("u", "UAV", 1.0, 15.0)])
    assert model.ip.n_vars == 0
    sched = schedule(scen, [Hub("h1", ORIGIN)], [BackupUnit("u", "UAV", 1.0, 15.0)])
    assert sched.dispatches == [] and sched.objective == 0
    assert summarize(sched) == []


def test_pigeonhole_is_infeasible():
    scen = FailureScenario([Primary("o1", ORIGIN), Primary("o2", ORIGIN)], {"o1": 3, "o2": 3},
                           {"o1": 6, "o2": 6}, 20)
    travel = {("u1", "h1", "o1"): 1, ("u1", "h1", "o2"): 1}
    with pytest.raises(InfeasibleError):
        schedule(scen, [Hub("h1", ORIGIN)], [BackupUnit("u1", "UAV", 0.9, 15.0)], travel)
    assert brute_force_dispatch(scen, [Hub("h1", ORIGIN)], [BackupUnit("u1", "UAV", 0.9, 15.0)], travel) is None


def test_unreachable_failure_named():
    scen, hubs, units, _ = one_failure(repair=2)
    with pytest.raises(InfeasibleError) as err:
        build_resiliency_model(scen, hubs, units, {("u1", "h1", "o1"): 3})
    assert err.value.details["primaries"] == ["o1"]


def test_dispatch_regression_fixture():
    scen, hubs, units, travel = load_scenario(data_path("regression_scenario.json"))
    sched = schedule(scen, hubs, units, travel)
    row, = summarize(sched)
    assert (row.hub, row.site, row.start, row.travel) == ("Hub 3", "1827", 59, 2)
    assert (row.active_start, row.active_end, row.active_periods) == (61, 73, 13)


def test_validator_flags_each_family():
    scen, hubs, units, travel = one_failure()
    two = FailureScenario([Primary("o1", ORIGIN), Primary("o2", ORIGIN)], {"o1": 10, "o2": 10},
                          {"o1": 5, "o2": 5}, 20)
    t2 = {("u1", "h1", "o1"): 1, ("u1", "h1", "o2"): 1}
    double = DispatchSchedule([("u1", "h1", "o1", 10), ("u1", "h1", "o2", 10)],
                              {("u1", "o1", 12), ("u1", "o2", 12)}, t2)
    report = validate_schedule(double, two)
    assert report["one_site"] and report["exclusive"]
    none = DispatchSchedule([], set(), travel)
    assert validate_schedule(none, scen)["cover"] == ["no backup dispatched to o1"]
    early = DispatchSchedule([("u1", "h1", "o1", 10)], {("u1", "o1", 10)}, travel)
    assert validate_schedule(early, scen)["activation"]
    late = DispatchSchedule([("u1", "h1", "o1", 14)], set(), travel)
    assert validate_schedule(late, scen)["window"]


def test_home_hub_respected():
    scen = FailureScenario([Primary("o1", ORIGIN)], {"o1": 2}, {"o1": 8}, 12)
    hubs = [Hub("near", ORIGIN), Hub("far", ORIGIN)]
    unit = BackupUnit("u", "UAV", 0.9, 15.0, home_hub="far")
    travel = {("u", "near", "o1"): 1, ("u", "far", "o1"): 3}
    sched = schedule(scen, hubs, [unit], travel)
    assert {h for (_, h, _, _) in sched.dispatches} == {"far"}
    assert is_valid(validate_schedule(sched, scen, [unit], hubs))


def test_random_scenarios_against_oracle():
    rng = np.random.default_rng(99)
    checked = 0
    while checked < 15:
        scen, hubs, units, travel = random_scenario(rng, max_failures=2, max_backups=2, max_horizon=20,
                                                    max_hubs=3, max_repair=6)
        oracle = brute_force_dispatch(scen, hubs, units, travel)
        try:
            sched = schedule(scen, hubs, units, travel)
        except InfeasibleError:
            assert oracle is None
            continue
        checked += 1
        assert sched.objective == pytest.approx(oracle, abs=1e-9)
        assert sched.recompute_objective() == pytest.approx(sched.objective, abs=1e-9)
        assert is_valid(validate_schedule(sched, scen, units, hubs))


def test_model_small_enough_for_exhaustive_check():
    scen, hubs, units, travel = one_failure(fail=2, repair=4, horizon=8)
    ip = build_resiliency_model(scen, hubs, units, travel).ip
    assert objectives_match(solve_exhaustive(ip), solve_bnb(ip))


def test_bundled_backups_and_fixture_scenario():
    units = {u.id: u for u in load_backups()}
    assert len(units) == 7
    assert units["dronesentry_x_mk2"].platform == "GroundVehicle"
    assert units["cry2626g"].prob == 0.725
    scen, hubs, chosen, travel = load_scenario(data_path("fixture_scenario.json"))
    assert travel is None and len(chosen) == 3
    sched = schedule(scen, hubs, chosen)
    assert is_valid(validate_schedule(sched, scen, chosen, hubs))
    for b in {d[0] for d in sched.dispatches}:
        steps = [t for (bb, _, t) in sched.active if bb == b]
        assert len(steps) == len(set(steps))


def test_scenario_validation():
    with pytest.raises(ValueError):
        FailureScenario([Primary("o", ORIGIN)], {"o": 1}, {"o": 0}, 10)
    with pytest.raises(ValueError):
        FailureScenario([Primary("o", ORIGIN)], {"x": 1}, {"x": 2}, 10)
    with pytest.raises(ValueError):
        BackupUnit("u", "Boat", 0.9, 1.0)
    with pytest.raises(ValueError):
        BackupUnit("u", "UAV", 0.0, 1.0)
