"""Detection-probability chain and the per-(site, type, aircraft, step) tensor."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .flights import FlightSchedule
from .geo import GeoPoint, LocalFrame, TerrainCloud
from .los import (AcousticParams, LosParams, RangeDecayParams, acoustic_los,
                  geometric_los, range_factor)

DEFAULT_EPSILON = 1e-6
DEFAULT_MAST_HEIGHT = 10.0
DEFAULT_SITE_CAPACITY = 6


@dataclass(frozen=True)
class SensorSpec:
    id: str
    unit_cost: float
    set_size: int
    range_m: float
    failure_rate: float
    vert: int = 1
    max_sets: int = 3
    name: str = ""
    modality: str = "electromagnetic"
    tracking_capacity: int | None = None
    fov: tuple | None = None

    def __post_init__(self):
        if self.unit_cost < 0 or self.set_size < 1 or self.range_m <= 0:
            raise ValueError(f"invalid sensor spec {self.id}")
        if self.failure_rate < 0 or self.vert < 1 or self.max_sets < 1:
            raise ValueError(f"invalid sensor spec {self.id}")

    @property
    def set_cost(self) -> float:
        return self.unit_cost * self.set_size

    @property
    def is_acoustic(self) -> bool:
        return self.modality == "acoustic"


def _spec_from_json(d: dict) -> SensorSpec:
    rng = d["range_m"] if "range_m" in d else d["range_km"] * 1000.0
    fov = tuple(d["fov"]) if d.get("fov") is not None else None
    return SensorSpec(id=d["id"], unit_cost=d["unit_cost"], set_size=int(d.get("set_size", 1)),
                      range_m=float(rng), failure_rate=float(d["failure_rate"]),
                      vert=int(d.get("vert", 1)), max_sets=int(d.get("max_sets", 3)),
                      name=d.get("name", d["id"]), modality=d.get("modality", "electromagnetic"),
                      tracking_capacity=d.get("tracking_capacity"), fov=fov)


def load_catalog(path=None, exclude=()) -> list[SensorSpec]:
    """Load a sensor catalog JSON array; the bundled one mirrors the published table."""
    if path is None:
        text = resources.files("sam3r").joinpath("data/catalog.json").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    specs = [_spec_from_json(d) for d in json.loads(text)]
    return [s for s in specs if s.id not in set(exclude)]


def catalog_to_json(catalog) -> list[dict]:
    return [{"id": s.id, "name": s.name, "modality": s.modality, "unit_cost": s.unit_cost,
             "set_size": s.set_size, "range_m": s.range_m, "failure_rate": s.failure_rate,
             "vert": s.vert, "max_sets": s.max_sets, "tracking_capacity": s.tracking_capacity,
             "fov": list(s.fov) if s.fov else None} for s in catalog]


@dataclass(frozen=True)
class NetworkReliabilityParams:
    link_failure_rate: float = 1e-4
    server_failure_rate: float = 1e-5
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        if self.link_failure_rate < 0 or self.server_failure_rate < 0:
            raise ValueError("failure rates must be non-negative")
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")


@dataclass(frozen=True)
class DecaySettings:
    """Boundary-decay shape shared by all sensor types.

    The tolerance ``e`` is ``e_fraction`` of each type's range.
    """

    e_fraction: float = 0.05
    a: float = 0.005
    b: float = 1.0

    def for_sensor(self, spec: SensorSpec) -> RangeDecayParams:
        return RangeDecayParams(spec.range_m, self.e_fraction * spec.range_m, self.a, self.b)


@dataclass(frozen=True)
class CandidateSite:
    id: str
    position: GeoPoint
    mast_height: float = DEFAULT_MAST_HEIGHT
    capacity: int = DEFAULT_SITE_CAPACITY

    def __post_init__(self):
        if self.capacity < 1 or self.mast_height < 0:
            raise ValueError(f"invalid candidate site {self.id}")


# -- scalar chain -------------------------------------------------------------

def component_reliability(rate: float, hours: float) -> float:
    if hours < 0:
        raise ValueError("time must be non-negative")
    if rate < 0:
        raise ValueError("failure rate must be non-negative")
    return math.exp(-rate * hours)


def intrinsic_detection(rho_s: float, chi: float, ell: float) -> float:
    return rho_s * chi * ell


def end_to_end(p: float, rho_link: float) -> float:
    return p * rho_link


def miss_probability(q: float, epsilon: float = DEFAULT_EPSILON) -> float:
    return max(1.0 - q, epsilon)


# -- tensor -------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DetectionTensor:
    """Detection quantities indexed ``[site, type, aircraft, step]``."""

    site_ids: tuple
    type_ids: tuple
    aircraft: tuple
    step_seconds: int
    p: np.ndarray
    q: np.ndarray
    m: np.ndarray
    rho_s: np.ndarray      # (types, steps)
    rho_link: np.ndarray   # (steps,)
    rho_u: np.ndarray      # (steps,)
    present: np.ndarray    # (aircraft, steps)
    epsilon: float = DEFAULT_EPSILON

    @property
    def shape(self) -> tuple:
        return self.q.shape

    @property
    def n_steps(self) -> int:
        return self.q.shape[3]

    def alpha(self, t: int, i: int, s: int) -> set:
        return set(np.flatnonzero(self.q[i, s, :, t] > 0).tolist())

    @property
    def detected(self) -> np.ndarray:
        return self.q > 0

    def active_steps(self) -> list[int]:
        return [int(t) for t in np.flatnonzero(self.present.any(axis=0))]

    def select_types(self, type_ids) -> "DetectionTensor":
        """Restrict to a subset of sensor types, in the given order."""
        idx = [self.type_ids.index(t) for t in type_ids]
        return DetectionTensor(self.site_ids, tuple(type_ids), self.aircraft, self.step_seconds,
                               self.p[:, idx], self.q[:, idx], self.m[:, idx], self.rho_s[idx],
                               self.rho_link, self.rho_u, self.present, self.epsilon)

    def save(self, path) -> None:
        meta = json.dumps({"site_ids": list(self.site_ids), "type_ids": list(self.type_ids),
                           "aircraft": list(self.aircraft), "step_seconds": self.step_seconds,
                           "epsilon": self.epsilon})
        with open(path, "wb") as fh:
            np.savez(fh, meta=np.array(meta), p=self.p, q=self.q, m=self.m,
                     rho_s=self.rho_s, rho_link=self.rho_link, rho_u=self.rho_u,
                     present=self.present)

    @classmethod
    def load(cls, path) -> "DetectionTensor":
        with np.load(path) as z:
            meta = json.loads(str(z["meta"]))
            return cls(tuple(meta["site_ids"]), tuple(meta["type_ids"]), tuple(meta["aircraft"]),
                       int(meta["step_seconds"]), z["p"], z["q"], z["m"], z["rho_s"],
                       z["rho_link"], z["rho_u"], z["present"], float(meta["epsilon"]))


def step_hours(step_index: int, step_seconds: float) -> float:
    """Component age at a step; the schedule start is age zero."""
    return step_index * step_seconds / 3600.0


def sensor_xyz(site: CandidateSite, frame: LocalFrame) -> np.ndarray:
    xyz = frame.point_xyz(site.position)
    xyz[2] += site.mast_height
    return xyz


def aircraft_xyz(schedule: FlightSchedule, cloud: TerrainCloud | None, frame: LocalFrame) -> np.ndarray:
    """Local positions (aircraft, steps, 3); altitudes are raised by the ground under each fix."""
    K, T = schedule.lon.shape
    out = np.full((K, T, 3), np.nan)
    for k in range(K):
        for t in np.flatnonzero(~np.isnan(schedule.lon[k])):
            x, y, _ = frame.to_local(schedule.lon[k, t], schedule.lat[k, t])
            x, y = float(x), float(y)
            ground = cloud.ground_elevation(x, y) if cloud is not None and len(cloud) else 0.0
            out[k, t] = (x, y, ground + schedule.alt[k, t])
    return out


def empty_cloud(frame: LocalFrame) -> TerrainCloud:
    return TerrainCloud.from_local(np.empty((0, 3)), np.empty(0, dtype=np.int64), frame)


def build_tensor(sites, catalog, schedule: FlightSchedule, cloud: TerrainCloud | None = None,
                 los: LosParams | None = None, decay: DecaySettings | None = None,
                 acoustic: AcousticParams | None = None,
                 network: NetworkReliabilityParams | None = None,
                 frame: LocalFrame | None = None) -> DetectionTensor:
    """Evaluate range, LOS and reliability for every site/type/aircraft/step.

    Sensors sit ``mast_height`` above their site's altitude. Acoustic types use
    the acoustic LOS factor, all others the geometric one. When ``cloud`` is
    omitted the terrain is empty and ``frame`` (or the first site) anchors the
    projection.
    """
    los = los or LosParams()
    decay = decay or DecaySettings()
    acoustic = acoustic or AcousticParams()
    network = network or NetworkReliabilityParams()
    if cloud is None:
        if frame is None:
            anchor = sites[0].position if sites else GeoPoint(0.0, 0.0)
            frame = LocalFrame(GeoPoint(anchor.longitude, anchor.latitude, 0.0))
        cloud = empty_cloud(frame)
    frame = cloud.frame

    I, S, K, T = len(sites), len(catalog), schedule.n_aircraft, schedule.n_steps
    hours = np.array([step_hours(t, schedule.step_seconds) for t in range(T)])
    rho_s = np.array([[component_reliability(spec.failure_rate, h) for h in hours] for spec in catalog]).reshape(S, T)
    rho_link = np.array([component_reliability(network.link_failure_rate, h) for h in hours])
    rho_u = np.array([component_reliability(network.server_failure_rate, h) for h in hours])

    p = np.zeros((I, S, K, T))
    q = np.zeros((I, S, K, T))
    m = np.ones((I, S, K, T))
    present = schedule.present.copy()
    if K and I and S:
        sxyz = [sensor_xyz(site, frame) for site in sites]
        axyz = aircraft_xyz(schedule, cloud, frame)
        decays = [decay.for_sensor(spec) for spec in catalog]
        for k in range(K):
            for t in np.flatnonzero(present[k]):
                target = axyz[k, t]
                for i in range(I):
                    d = math.dist(sxyz[i], target)
                    ell_cache = {}
                    for s, spec in enumerate(catalog):
                        chi = range_factor(d, decays[s])
                        if chi == 0.0:
                            continue
                        if spec.is_acoustic not in ell_cache:
                            if spec.is_acoustic:
                                ell_cache[True] = acoustic_los(sxyz[i], target, cloud, acoustic)
                            else:
                                ell_cache[False] = geometric_los(sxyz[i], target, cloud, los)
                        pv = intrinsic_detection(rho_s[s, t], chi, ell_cache[spec.is_acoustic])
                        qv = end_to_end(pv, rho_link[t])
                        p[i, s, k, t] = pv
                        q[i, s, k, t] = qv
                        m[i, s, k, t] = miss_probability(qv, network.epsilon)
    return DetectionTensor(tuple(site.id for site in sites), tuple(spec.id for spec in catalog),
                           tuple(schedule.aircraft), int(schedule.step_seconds), p, q, m,
                           rho_s, rho_link, rho_u, present, network.epsilon)


def corridor_sites(corridor, spacing: float = 500.0, cloud: TerrainCloud | None = None,
                   mast_height: float = DEFAULT_MAST_HEIGHT,
                   capacity: int = DEFAULT_SITE_CAPACITY, prefix: str = "S") -> list[CandidateSite]:
    """Candidate sites sampled every ``spacing`` meters along a corridor polyline."""
    sites = []
    for j, (lon, lat) in enumerate(corridor.sample(spacing)):
        alt = 0.0
        if cloud is not None and len(cloud):
            x, y, _ = cloud.frame.to_local(lon, lat)
            alt = cloud.ground_elevation(float(x), float(y))
        sites.append(CandidateSite(f"{prefix}{j:03d}", GeoPoint(lon, lat, alt), mast_height, capacity))
    return sites
