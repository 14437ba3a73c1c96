"""Toolkit configuration: one JSON document with nested parameter blocks.

Units: money in USD, distances in meters, times in seconds or steps.
Relative paths resolve against the config file's directory.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .detection import DecaySettings, NetworkReliabilityParams
from .flights import CorridorPath, DemandProfile
from .los import AcousticParams, LosParams


class ConfigError(ValueError):
    pass


DEFAULTS = {
    "paths": {"dsm": None, "catalog": None, "scenario": None},
    "corridor": {"name": "fixture", "waypoints": [[-83.0, 40.0], [-82.88, 40.0]]},
    "demand": {"air_metro": 1, "emergency": 1, "cargo": 1},
    "schedule": {"speed": 45.0, "step_seconds": 60, "window": [9, 18], "seed": None},
    "los": {"R": 5.0, "Z": 0.5},
    "decay": {"e_fraction": 0.05, "a": 0.005, "b": 1.0},
    "acoustic": {"f": 1000.0, "c": 343.0, "A": 1.0, "delta": 1.0, "F_omega": 0.99, "b_max": 20.0},
    "network": {"link_failure_rate": 1e-4, "server_failure_rate": 1e-5, "epsilon": 1e-6},
    "planner": {"H": 0.9, "sigma": 0.9, "max_vert": 6, "site_spacing": 500.0, "mast_height": 10.0,
                "site_capacity": 6, "mode": "aggregate", "exclude_types": [],
                "sweep_H": [0.8, 0.85, 0.9, 0.95, 0.99]},
    "solver": {"node_budget": 200000},
    "resiliency": {"detour": 1.4},
}


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


@dataclass
class ToolkitConfig:
    data: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))
    base_dir: Path = field(default_factory=Path.cwd)

    @classmethod
    def load(cls, path) -> "ToolkitConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        return cls.from_dict(raw, path.parent)

    @classmethod
    def from_dict(cls, raw: dict, base_dir=None) -> "ToolkitConfig":
        unknown = set(raw) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config blocks: {sorted(unknown)}")
        cfg = cls(_merge(DEFAULTS, raw), Path(base_dir) if base_dir else Path.cwd())
        cfg.check()
        return cfg

    def check(self) -> None:
        p = self.data["planner"]
        for key in ("H", "sigma"):
            if not 0 < p[key] < 1:
                raise ConfigError(f"planner.{key} must lie in (0, 1)")
        if not 0 < self.data["network"]["epsilon"] < 1:
            raise ConfigError("network.epsilon must lie in (0, 1)")
        if self.data["schedule"]["step_seconds"] <= 0:
            raise ConfigError("schedule.step_seconds must be positive")

    def path(self, key: str) -> Path | None:
        value = self.data["paths"].get(key)
        if value is None:
            return None
        p = Path(value)
        return p if p.is_absolute() else self.base_dir / p

    def require_path(self, key: str) -> Path:
        p = self.path(key)
        if p is None:
            raise ConfigError(f"paths.{key} is not set")
        if not p.exists():
            raise ConfigError(f"paths.{key}: {p} does not exist")
        return p

    def hash(self) -> str:
        """Short digest of the resolved configuration, stable across runs."""
        blob = json.dumps(self.data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]

    # -- typed views ----------------------------------------------------------

    @property
    def planner(self) -> dict:
        return self.data["planner"]

    @property
    def node_budget(self) -> int:
        return int(self.data["solver"]["node_budget"])

    def corridor(self) -> CorridorPath:
        c = self.data["corridor"]
        return CorridorPath.from_lonlat(c["name"], [tuple(w) for w in c["waypoints"]])

    def demand(self, scale: float = 1.0) -> DemandProfile:
        d = self.data["demand"]
        return DemandProfile(**{k: int(round(v * scale)) for k, v in d.items()})

    def los(self) -> LosParams:
        return LosParams(**self.data["los"])

    def decay(self) -> DecaySettings:
        return DecaySettings(**self.data["decay"])

    def acoustic(self) -> AcousticParams:
        # the acoustic path shares the geometric cylinder radius and clearance
        block = {**self.data["acoustic"], "R": self.data["los"]["R"], "Z": self.data["los"]["Z"]}
        f_omega = block.pop("F_omega", None)
        params = AcousticParams(**block)
        if isinstance(f_omega, (int, float)):
            params = AcousticParams(**{**block, "F_omega": {k: float(f_omega) for k in params.R_p}})
        return params

    def network(self) -> NetworkReliabilityParams:
        return NetworkReliabilityParams(**self.data["network"])
