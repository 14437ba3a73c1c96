"""Range feasibility, geometric line of sight and acoustic line of sight.

All positions are 3D points in the local metric frame of a ``TerrainCloud``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geo import TerrainClass, TerrainCloud, query_cylinder


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RangeDecayParams:
    r: float
    e: float
    a: float
    b: float

    def __post_init__(self):
        if not (self.r > 0 and self.e >= 0 and self.a > 0 and self.b > 0 and self.e < self.r):
            raise ConfigError(f"invalid range decay parameters {self}")


@dataclass(frozen=True)
class LosParams:
    R: float = 5.0
    Z: float = 0.5

    def __post_init__(self):
        if not (self.R > 0 and self.Z >= 0):
            raise ConfigError(f"invalid LOS parameters {self}")


# midpoints of the published ground reflection coefficient ranges
DEFAULT_REFLECTION = {
    TerrainClass.GROUND: 0.6,
    TerrainClass.LOW_VEGETATION: 0.3,
    TerrainClass.MEDIUM_VEGETATION: 0.2,
    TerrainClass.HIGH_VEGETATION: 0.125,
    TerrainClass.BUILDING: 0.95,
}
REFLECTION_RANGES = {
    TerrainClass.GROUND: (0.5, 0.7),
    TerrainClass.LOW_VEGETATION: (0.2, 0.4),
    TerrainClass.MEDIUM_VEGETATION: (0.1, 0.3),
    TerrainClass.HIGH_VEGETATION: (0.05, 0.2),
    TerrainClass.BUILDING: (0.9, 1.0),
}
BOUNDARY_LOSS_RANGE = (0.975, 0.999)


@dataclass(frozen=True)
class AcousticParams:
    """Acoustic propagation settings.

    ``R_p`` and ``F_omega`` map LAS class codes to the ground reflection
    coefficient and the boundary loss factor. ``b_max`` caps the barrier
    attenuation and ``d0`` is the geometric-divergence reference distance.
    """

    f: float = 1000.0
    c: float = 343.0
    A: float = 1.0
    delta: float = 1.0
    R: float = 5.0
    Z: float = 0.5
    R_p: dict = field(default_factory=lambda: dict(DEFAULT_REFLECTION))
    F_omega: dict = field(default_factory=lambda: {k: 0.99 for k in DEFAULT_REFLECTION})
    b_max: float = 20.0
    d0: float = 1.0
    strict_ranges: bool = True

    def __post_init__(self):
        if not (self.f > 0 and self.c > 0 and self.delta > 0 and self.R > 0 and self.Z >= 0):
            raise ConfigError("acoustic f, c, delta, R must be positive and Z non-negative")
        if self.b_max < 0 or self.d0 <= 0:
            raise ConfigError("b_max must be >= 0 and d0 > 0")
        for cls, fw in self.F_omega.items():
            if not 0.0 <= fw <= 1.0:
                raise ConfigError(f"F_omega for class {cls} outside [0, 1]")
            if self.strict_ranges and not BOUNDARY_LOSS_RANGE[0] <= fw <= BOUNDARY_LOSS_RANGE[1]:
                raise ConfigError(f"F_omega for class {cls} outside {BOUNDARY_LOSS_RANGE}")
        for cls, rp in self.R_p.items():
            if not 0.0 <= rp <= 1.0:
                raise ConfigError(f"R_p for class {cls} outside [0, 1]")
            lo_hi = REFLECTION_RANGES.get(TerrainClass(int(cls)))
            if self.strict_ranges and lo_hi and not lo_hi[0] <= rp <= lo_hi[1]:
                raise ConfigError(f"R_p for class {cls} outside {lo_hi}")

    @property
    def wavenumber(self) -> float:
        return 2 * math.pi * self.f / self.c

    def los_params(self) -> LosParams:
        return LosParams(self.R, self.Z)


def range_check(sensor, target, params: RangeDecayParams) -> float:
    """Range factor: 1 inside ``r - e``, exponential decay up to ``r + e``, else 0."""
    d = math.dist(sensor, target)
    return range_factor(d, params)


def range_factor(d: float, params: RangeDecayParams) -> float:
    inner = params.r - params.e
    if d <= inner:
        return 1.0
    if d < params.r + params.e:
        return math.exp(-params.a * (d - inner) ** params.b)
    return 0.0


def los_counts(sensor, target, cloud: TerrainCloud, R: float, Z: float,
               ids: np.ndarray | None = None) -> tuple[int, int, np.ndarray]:
    """Blocked and candidate counts of the geometric LOS test.

    Returns ``(blocked, candidates, blocked_ids)``. ``ids`` restricts the scan
    to a subset of points; by default the grid index supplies it.
    """
    sx, sy, sz = (float(v) for v in sensor)
    dx, dy, dz = (float(v) for v in target)
    vx, vy = dx - sx, dy - sy
    L = math.hypot(vx, vy)
    empty = np.empty(0, dtype=np.int64)
    if L == 0.0:
        # vertical sightline: nothing lies strictly between in plan view
        return 0, 0, empty
    if ids is None:
        ids = query_cylinder(cloud, (sx, sy), (dx, dy), R)
    if len(ids) == 0:
        return 0, 0, empty
    pts = cloud.xyz[ids]
    tx = pts[:, 0] - sx
    ty = pts[:, 1] - sy
    proj = (tx * vx + ty * vy) / L
    cross = (tx * vy - ty * vx) / L
    d_line = np.abs(cross)
    mask = (proj >= 0.0) & (proj <= L) & (d_line <= R)
    n = int(mask.sum())
    if n == 0:
        return 0, 0, empty
    tau = proj[mask] / L
    h = sz + tau * (dz - sz)
    blocked = pts[mask, 2] >= h - Z
    return int(blocked.sum()), n, ids[mask][blocked]


def geometric_los(sensor, target, cloud: TerrainCloud, params: LosParams) -> float:
    """Fraction of terrain points in the sightline cylinder that do not block it."""
    if tuple(map(float, sensor)) == tuple(map(float, target)):
        return 1.0
    blocked, n, _ = los_counts(sensor, target, cloud, params.R, params.Z)
    if n == 0:
        return 1.0
    return 1.0 - blocked / n


def reflection_factor(cls, params: AcousticParams) -> float:
    """Ground reflection factor ``Q = R_p + (1 - R_p) F``."""
    key = int(cls)
    rp = _lookup(params.R_p, key, "R_p")
    fw = _lookup(params.F_omega, key, "F_omega")
    return rp + (1.0 - rp) * fw


def _lookup(table: dict, key: int, name: str) -> float:
    for k, v in table.items():
        if int(k) == key:
            return float(v)
    raise ConfigError(f"no {name} configured for terrain class {key}")


@dataclass(frozen=True)
class AcousticResult:
    ell: float
    distance: float
    wavenumber: float
    amplitude: complex
    geometric_db: float
    barrier_db: float
    blocked_fraction: float


def acoustic_attenuation(sensor, target, cloud: TerrainCloud, params: AcousticParams) -> AcousticResult:
    """Full acoustic LOS evaluation including diagnostics.

    Geometric divergence follows ISO 9613-2 (``20 log10(r/d0) + 11`` dB); the
    barrier term scales ``b_max`` by the blocked fraction of the sightline
    cylinder and by the mean absorptivity ``1 - Q`` of the blocking points.
    """
    r = math.dist(sensor, target)
    k = params.wavenumber
    if r < params.delta:
        return AcousticResult(1.0, r, k, complex(params.A / params.delta), 0.0, 0.0, 0.0)
    phi = params.A / r * complex(math.cos(-k * r), math.sin(-k * r))
    G = 20.0 * math.log10(max(r, params.delta) / params.d0) + 11.0
    blocked, n, blocked_ids = los_counts(sensor, target, cloud, params.R, params.Z)
    frac = blocked / n if n else 0.0
    if blocked:
        qs = [reflection_factor(c, params) for c in cloud.classes[blocked_ids]]
        q_mean = float(np.mean(qs))
    else:
        q_mean = 1.0
    B = params.b_max * frac * (1.0 - q_mean)
    total = G + B
    ell = 1.0 / (1.0 + 10.0 ** (total / 20.0))
    return AcousticResult(ell, r, k, phi, G, B, frac)


def acoustic_los(sensor, target, cloud: TerrainCloud, params: AcousticParams) -> float:
    return acoustic_attenuation(sensor, target, cloud, params).ell


def acoustic_factor(total_db: float) -> float:
    """Map a total attenuation in dB to the acoustic LOS factor."""
    return 1.0 / (1.0 + 10.0 ** (total_db / 20.0))
