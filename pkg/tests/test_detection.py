import math

import numpy as np
import pytest

from sam3r.detection import (CandidateSite, DecaySettings, DetectionTensor, NetworkReliabilityParams,
                             SensorSpec, build_tensor, component_reliability, end_to_end,
                             intrinsic_detection, load_catalog, miss_probability)
from sam3r.flights import FlightSchedule, UseCase
from sam3r.geo import GeoPoint, LocalFrame, TerrainCloud

from oracles import brute_force_los

FRAME = LocalFrame(GeoPoint(-83.0, 40.0, 0.0))


def test_component_reliability():
    assert component_reliability(0.3, 0.0) == 1.0
    assert component_reliability(0.0, 1e6) == 1.0
    assert component_reliability(1.203e-5, 100) == pytest.approx(0.99880, abs=5e-6)
    with pytest.raises(ValueError):
        component_reliability(1e-5, -1)


def test_chain_values():
    assert intrinsic_detection(0.9988, 1.0, 0.5) == pytest.approx(0.4994)
    assert intrinsic_detection(0.9, 0.0, 1.0) == 0.0
    assert end_to_end(0.4994, 0.999) == pytest.approx(0.49890, abs=5e-6)
    assert end_to_end(0.7, 1.0) == 0.7
    assert miss_probability(0.0) == 1.0
    assert miss_probability(1.0, 1e-6) == 1e-6
    assert miss_probability(0.4989) == pytest.approx(0.5011)


def test_bundled_catalog():
    cat = load_catalog()
    by_id = {s.id: s for s in cat}
    assert set(by_id) == {"radar", "optical", "remote_id", "acoustic", "rf", "adsb"}
    assert by_id["adsb"].unit_cost == 275 and by_id["adsb"].range_m == pytest.approx(160_900)
    assert by_id["radar"].failure_rate == 1.203e-5
    assert by_id["acoustic"].is_acoustic and not by_id["radar"].is_acoustic
    assert "adsb" not in {s.id for s in load_catalog(exclude=("adsb",))}


def _schedule(positions, step_seconds=600):
    """positions: list per aircraft of (lon, lat, alt) or None per step."""
    K, T = len(positions), len(positions[0])
    lon = np.full((K, T), np.nan)
    lat = np.full((K, T), np.nan)
    alt = np.full((K, T), np.nan)
    for k, row in enumerate(positions):
        for t, p in enumerate(row):
            if p is not None:
                lon[k, t], lat[k, t], alt[k, t] = p
    names = tuple(f"Cargo Craft {k + 1}" for k in range(K))
    return FlightSchedule(9 * 3600, step_seconds, names, (UseCase.CARGO,) * K, lon, lat, alt)


def test_out_of_range_everywhere():
    sites = [CandidateSite("S0", GeoPoint(-83.0, 40.0, 0.0))]
    spec = SensorSpec("x", 1.0, 1, 100.0, 0.0)
    sched = _schedule([[(-82.9, 40.0, 100.0), (-82.8, 40.0, 100.0)]])
    tensor = build_tensor(sites, [spec], sched, frame=FRAME)
    assert np.all(tensor.q == 0) and np.all(tensor.m == 1)
    assert tensor.alpha(0, 0, 0) == set()


def test_overhead_clear_sky_hits_floor():
    sites = [CandidateSite("S0", GeoPoint(-83.0, 40.0, 0.0), mast_height=10.0)]
    spec = SensorSpec("x", 1.0, 1, 1000.0, 0.0)
    sched = _schedule([[(-83.0, 40.0, 120.0)]])
    net = NetworkReliabilityParams(0.0, 0.0, 1e-6)
    tensor = build_tensor(sites, [spec], sched, network=net, frame=FRAME)
    assert tensor.q[0, 0, 0, 0] == 1.0
    assert tensor.m[0, 0, 0, 0] == 1e-6
    assert tensor.alpha(0, 0, 0) == {0}


def _oracle_element(site, spec, target_xyz, hours, cloud, decay, R, Z, net):
    sx, sy, sz = FRAME.to_local(site.position.longitude, site.position.latitude)
    sensor = (float(sx), float(sy), site.position.altitude + site.mast_height)
    d = math.dist(sensor, target_xyz)
    r, e = spec.range_m, decay.e_fraction * spec.range_m
    if d <= r - e:
        chi = 1.0
    elif d < r + e:
        chi = math.exp(-decay.a * (d - (r - e)) ** decay.b)
    else:
        chi = 0.0
    if chi == 0.0:
        return 0.0, 0.0, 1.0
    blocked, n = brute_force_los(sensor, target_xyz, cloud.xyz.tolist(), R, Z)
    ell = 1.0 if (n == 0 or sensor == tuple(target_xyz)) else 1 - blocked / n
    p = math.exp(-spec.failure_rate * hours) * chi * ell
    q = p * math.exp(-net.link_failure_rate * hours)
    return p, q, max(1 - q, net.epsilon)


def test_tensor_matches_elementwise_recomputation():
    rng = np.random.default_rng(11)
    n = 400
    ground = np.column_stack([rng.uniform(-100, 2100, n), rng.uniform(-300, 300, n), rng.uniform(0, 40, n)])
    cloud = TerrainCloud.from_local(ground, np.full(n, 2), FRAME, cell_size=25.0)
    sites = [CandidateSite(f"S{i}", GeoPoint(*FRAME.to_geo(x, 0.0)[:2], 0.0))
             for i, x in enumerate((0.0, 900.0, 1800.0))]
    specs = [SensorSpec("a", 1.0, 1, 800.0, 2e-3), SensorSpec("b", 1.0, 1, 1500.0, 5e-4)]
    positions = []
    for _ in range(2):
        row = []
        for t in range(6):
            if rng.random() < 0.8:
                lon, lat, _ = FRAME.to_geo(rng.uniform(0, 2000), rng.uniform(-100, 100))
                row.append((float(lon), float(lat), 120.0))
            else:
                row.append(None)
        positions.append(row)
    sched = _schedule(positions, step_seconds=3600)
    decay = DecaySettings(0.1, 0.01, 1.0)
    net = NetworkReliabilityParams(1e-3, 1e-4, 1e-6)
    tensor = build_tensor(sites, specs, sched, cloud, decay=decay, network=net)
    for k in range(2):
        for t in range(6):
            if positions[k][t] is None:
                assert np.all(tensor.q[:, :, k, t] == 0)
                continue
            x, y, _ = FRAME.to_local(*positions[k][t][:2])
            target = (float(x), float(y), cloud.ground_elevation(float(x), float(y)) + 120.0)
            for i, site in enumerate(sites):
                for s, spec in enumerate(specs):
                    p, q, m = _oracle_element(site, spec, target, t, cloud, decay, 5.0, 0.5, net)
                    assert tensor.p[i, s, k, t] == pytest.approx(p, abs=1e-12)
                    assert tensor.q[i, s, k, t] == pytest.approx(q, abs=1e-12)
                    assert tensor.m[i, s, k, t] == pytest.approx(m, abs=1e-12)
    assert (tensor.q > 0).sum() > 10
    assert tensor.rho_u == pytest.approx([math.exp(-1e-4 * t) for t in range(6)])


def test_tensor_save_load(tmp_path, flat_corridor):
    tensor = flat_corridor["tensor"]
    tensor.save(tmp_path / "t.npz")
    back = DetectionTensor.load(tmp_path / "t.npz")
    assert back.site_ids == tensor.site_ids and back.aircraft == tensor.aircraft
    assert np.array_equal(back.q, tensor.q) and np.array_equal(back.present, tensor.present)
    sub = tensor.select_types(["adsb", "radar"])
    assert np.array_equal(sub.q[:, 0], tensor.q[:, tensor.type_ids.index("adsb")])
