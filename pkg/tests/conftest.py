from importlib import resources
from pathlib import Path

import pytest

from sam3r.config import ToolkitConfig
from sam3r.detection import build_tensor, corridor_sites, load_catalog
from sam3r.flights import generate_schedule
from sam3r.geo import GeoPoint, LocalFrame


def data_path(name: str) -> Path:
    return Path(str(resources.files("sam3r").joinpath("data", name)))


@pytest.fixture(scope="session")
def fixture_config():
    return ToolkitConfig.load(data_path("fixture_config.json"))


def build_flat_corridor(cfg: ToolkitConfig) -> dict:
    """Fixture corridor with clear terrain: schedule, sites, catalog, tensor."""
    sc = cfg.data["schedule"]
    sched = generate_schedule(cfg.corridor(), cfg.demand(), window=tuple(sc["window"]),
                              speed=sc["speed"], step_seconds=sc["step_seconds"], seed=sc["seed"])
    sites = corridor_sites(cfg.corridor(), cfg.planner["site_spacing"])
    catalog = load_catalog()
    lon, lat = cfg.data["corridor"]["waypoints"][0]
    tensor = build_tensor(sites, catalog, sched, frame=LocalFrame(GeoPoint(lon, lat, 0.0)))
    return {"schedule": sched, "sites": sites, "catalog": catalog, "tensor": tensor}


@pytest.fixture(scope="session")
def flat_corridor(fixture_config):
    return build_flat_corridor(fixture_config)
