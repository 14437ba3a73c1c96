"""DSM point-cloud ingest, terrain reclassification and the uniform-grid index.

Altitudes arrive in feet and are stored in meters. Horizontal positions are
projected to an equirectangular local frame centred on the cloud centroid;
the local ``z`` coordinate is the altitude above sea level in meters.
"""

from __future__ import annotations

import csv
import io
import math
import struct
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

FEET_TO_METERS = 0.3048
METERS_PER_DEG_LAT = 111_320.0
DEFAULT_CELL_SIZE = 50.0
DEFAULT_GROUND_RADIUS = 30.0
DSM_HEADER = ("Longitude", "Latitude", "Altitude_ft", "Classification")

CACHE_MAGIC = b"SAM3RTC1"
CACHE_VERSION = 1


class TerrainError(ValueError):
    """Raised for malformed terrain input or impossible terrain operations."""


class DSMParseError(TerrainError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class TerrainClass(IntEnum):
    UNCLASSIFIED = 1
    GROUND = 2
    LOW_VEGETATION = 3
    MEDIUM_VEGETATION = 4
    HIGH_VEGETATION = 5
    BUILDING = 6


VALID_CLASSES = frozenset(int(c) for c in TerrainClass)


@dataclass(frozen=True)
class GeoPoint:
    longitude: float
    latitude: float
    altitude: float = 0.0

    def __post_init__(self):
        if not -180.0 <= self.longitude <= 180.0:
            raise ValueError(f"longitude out of range: {self.longitude}")
        if not -90.0 <= self.latitude <= 90.0:
            raise ValueError(f"latitude out of range: {self.latitude}")
        if not math.isfinite(self.altitude):
            raise ValueError("altitude must be finite")


@dataclass(frozen=True)
class LocalFrame:
    """Equirectangular projection about ``origin``."""

    origin: GeoPoint
    meters_per_deg_lat: float = METERS_PER_DEG_LAT

    @property
    def meters_per_deg_lon(self) -> float:
        return self.meters_per_deg_lat * math.cos(math.radians(self.origin.latitude))

    def to_local(self, lon, lat, alt=0.0):
        """Project longitude/latitude/altitude (scalars or arrays) to x, y, z meters."""
        x = (np.asarray(lon, dtype=float) - self.origin.longitude) * self.meters_per_deg_lon
        y = (np.asarray(lat, dtype=float) - self.origin.latitude) * self.meters_per_deg_lat
        z = np.asarray(alt, dtype=float)
        return x, y, z

    def to_geo(self, x, y, z=0.0):
        lon = np.asarray(x, dtype=float) / self.meters_per_deg_lon + self.origin.longitude
        lat = np.asarray(y, dtype=float) / self.meters_per_deg_lat + self.origin.latitude
        return lon, lat, np.asarray(z, dtype=float)

    def point_xyz(self, p: GeoPoint) -> np.ndarray:
        x, y, z = self.to_local(p.longitude, p.latitude, p.altitude)
        return np.array([float(x), float(y), float(z)])


def haversine(a: GeoPoint, b: GeoPoint, radius: float = 6_371_000.0) -> float:
    """Great-circle distance in meters (altitudes ignored)."""
    phi1, phi2 = math.radians(a.latitude), math.radians(b.latitude)
    dphi = phi2 - phi1
    dlmb = math.radians(b.longitude - a.longitude)
    h = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlmb / 2) ** 2
    return 2 * radius * math.asin(math.sqrt(h))


class GridIndex:
    """Uniform 2D grid of point-id buckets.

    Buckets are stored CSR-style: ``order`` holds point ids sorted by cell and
    ``starts`` delimits each occupied cell listed in ``cells``.
    """

    def __init__(self, xy: np.ndarray, cell_size: float = DEFAULT_CELL_SIZE):
        if not cell_size > 0:
            raise TerrainError("grid cell size must be positive")
        self.cell_size = float(cell_size)
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        keys = np.floor(xy / self.cell_size).astype(np.int64)
        if len(keys) == 0:
            self.cells = np.empty((0, 2), dtype=np.int64)
            self.order = np.empty(0, dtype=np.int64)
            self.starts = np.zeros(1, dtype=np.int64)
            return
        order = np.lexsort((keys[:, 1], keys[:, 0]))
        sorted_keys = keys[order]
        new_cell = np.ones(len(order), dtype=bool)
        new_cell[1:] = np.any(sorted_keys[1:] != sorted_keys[:-1], axis=1)
        first = np.flatnonzero(new_cell)
        self.cells = sorted_keys[first]
        self.order = order
        self.starts = np.append(first, len(order))

    def __len__(self) -> int:
        return len(self.cells)

    def bucket(self, cell_index: int) -> np.ndarray:
        return self.order[self.starts[cell_index]:self.starts[cell_index + 1]]

    def cells_near_segment(self, a_xy, b_xy, radius: float) -> np.ndarray:
        """Indices of occupied cells that may hold points within ``radius`` of segment ab."""
        if len(self.cells) == 0:
            return np.empty(0, dtype=np.int64)
        centers = (self.cells + 0.5) * self.cell_size
        reach = radius + self.cell_size * math.sqrt(0.5)
        dist = _point_segment_distance(centers, np.asarray(a_xy, float), np.asarray(b_xy, float))
        # slack absorbs rounding in the centre distance
        return np.flatnonzero(dist <= reach * (1 + 1e-9) + 1e-9)

    def query_segment(self, a_xy, b_xy, radius: float) -> np.ndarray:
        hit = self.cells_near_segment(a_xy, b_xy, radius)
        if len(hit) == 0:
            return np.empty(0, dtype=np.int64)
        ids = np.concatenate([self.bucket(c) for c in hit])
        ids.sort()
        return ids


def _point_segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return np.hypot(p[:, 0] - a[0], p[:, 1] - a[1])
    t = ((p[:, 0] - a[0]) * ab[0] + (p[:, 1] - a[1]) * ab[1]) / denom
    t = np.clip(t, 0.0, 1.0)
    cx = a[0] + t * ab[0]
    cy = a[1] + t * ab[1]
    return np.hypot(p[:, 0] - cx, p[:, 1] - cy)


@dataclass(frozen=True, eq=False)
class TerrainCloud:
    """Classified point cloud with metric coordinates and a grid index.

    ``lon``/``lat``/``alt`` keep the geographic fields (altitude in meters),
    ``xyz`` the parallel local coordinates, ``classes`` the LAS codes.
    """

    lon: np.ndarray
    lat: np.ndarray
    alt: np.ndarray
    classes: np.ndarray
    frame: LocalFrame
    cell_size: float = DEFAULT_CELL_SIZE
    xyz: np.ndarray = field(init=False, repr=False)
    index: GridIndex = field(init=False, repr=False)

    def __post_init__(self):
        n = len(self.lon)
        if not (len(self.lat) == len(self.alt) == len(self.classes) == n):
            raise TerrainError("point arrays must have equal length")
        bad = ~np.isin(self.classes, list(VALID_CLASSES))
        if np.any(bad):
            raise TerrainError(f"unknown classification code {int(self.classes[bad][0])}")
        x, y, z = self.frame.to_local(self.lon, self.lat, self.alt)
        xyz = np.column_stack([x, y, z]) if n else np.empty((0, 3))
        for arr in (self.lon, self.lat, self.alt, self.classes, xyz):
            arr.flags.writeable = False
        object.__setattr__(self, "xyz", xyz)
        object.__setattr__(self, "index", GridIndex(xyz[:, :2], self.cell_size))

    @classmethod
    def from_arrays(cls, lon, lat, alt_m, classes, frame: LocalFrame | None = None,
                    cell_size: float = DEFAULT_CELL_SIZE) -> "TerrainCloud":
        lon = np.array(lon, dtype=float)
        lat = np.array(lat, dtype=float)
        alt = np.array(alt_m, dtype=float)
        classes = np.array(classes, dtype=np.int64)
        if frame is None:
            if len(lon) == 0:
                raise TerrainError("cannot centre a frame on an empty cloud")
            frame = LocalFrame(GeoPoint(float(lon.mean()), float(lat.mean()), float(alt.mean())))
        return cls(lon, lat, alt, classes, frame, cell_size)

    @classmethod
    def from_local(cls, xyz, classes, frame: LocalFrame,
                   cell_size: float = DEFAULT_CELL_SIZE) -> "TerrainCloud":
        """Build a cloud from local metric coordinates (used for synthetic terrain)."""
        xyz = np.asarray(xyz, dtype=float).reshape(-1, 3)
        lon, lat, alt = frame.to_geo(xyz[:, 0], xyz[:, 1], xyz[:, 2])
        return cls(np.array(lon, ndmin=1), np.array(lat, ndmin=1), np.array(alt, ndmin=1),
                   np.array(classes, dtype=np.int64).reshape(-1), frame, cell_size)

    def __len__(self) -> int:
        return len(self.lon)

    def point(self, i: int) -> tuple[GeoPoint, TerrainClass]:
        return (GeoPoint(float(self.lon[i]), float(self.lat[i]), float(self.alt[i])),
                TerrainClass(int(self.classes[i])))

    def with_classes(self, classes) -> "TerrainCloud":
        return TerrainCloud(self.lon.copy(), self.lat.copy(), self.alt.copy(),
                            np.array(classes, dtype=np.int64), self.frame, self.cell_size)

    def ground_elevation(self, x: float, y: float, radius: float = DEFAULT_GROUND_RADIUS) -> float:
        """Ground altitude (m ASL) under a local position; 0 when the cloud has no ground."""
        ground = np.flatnonzero(self.classes == TerrainClass.GROUND)
        if len(ground) == 0:
            return 0.0
        gxy = self.xyz[ground, :2]
        d = np.hypot(gxy[:, 0] - x, gxy[:, 1] - y)
        near = d <= radius
        if np.any(near):
            return float(self.xyz[ground[near], 2].min())
        return float(self.xyz[ground[np.argmin(d)], 2])


def parse_dsm_csv(text, cell_size: float = DEFAULT_CELL_SIZE) -> TerrainCloud:
    """Parse a DSM CSV (longitude, latitude, altitude in feet, LAS class).

    Args:
        text: CSV content as a string or a text stream.
        cell_size: grid bucket size in meters.

    Raises:
        DSMParseError: on a missing header, malformed rows or unknown classes.
    """
    stream = io.StringIO(text) if isinstance(text, str) else text
    reader = csv.reader(stream)
    header = None
    lon, lat, alt, cls = [], [], [], []
    for row in reader:
        line = reader.line_num
        fields = [f.strip() for f in row]
        if not fields or all(f == "" for f in fields):
            continue
        if header is None:
            if len(fields) != 4 or not fields[0].lower().startswith("lon"):
                raise DSMParseError(line, "expected header Longitude,Latitude,Altitude_ft,Classification")
            header = fields
            continue
        if len(fields) != 4:
            raise DSMParseError(line, f"expected 4 fields, got {len(fields)}")
        try:
            x, y, z = float(fields[0]), float(fields[1]), float(fields[2])
            c = int(fields[3])
        except ValueError:
            raise DSMParseError(line, f"non-numeric field in {row!r}") from None
        if c not in VALID_CLASSES:
            raise DSMParseError(line, f"unknown classification code {c}")
        if not (-180 <= x <= 180 and -90 <= y <= 90 and math.isfinite(z)):
            raise DSMParseError(line, "coordinate out of range")
        lon.append(x)
        lat.append(y)
        alt.append(z * FEET_TO_METERS)
        cls.append(c)
    if header is None:
        raise DSMParseError(1, "empty file")
    if not lon:
        raise DSMParseError(reader.line_num, "no data rows")
    return TerrainCloud.from_arrays(lon, lat, alt, cls, cell_size=cell_size)


def serialize_dsm_csv(cloud: TerrainCloud) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(DSM_HEADER)
    for i in range(len(cloud)):
        w.writerow([f"{cloud.lon[i]:.10f}", f"{cloud.lat[i]:.10f}",
                    f"{cloud.alt[i] / FEET_TO_METERS:.6f}", int(cloud.classes[i])])
    return out.getvalue()


def load_dsm(path, cell_size: float = DEFAULT_CELL_SIZE) -> TerrainCloud:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_dsm_csv(fh, cell_size=cell_size)


def reclassify(cloud: TerrainCloud, neighborhood_radius: float = DEFAULT_GROUND_RADIUS) -> TerrainCloud:
    """Assign low/medium vegetation or building classes to unclassified points.

    Height above ground is measured against the lowest ground point within
    ``neighborhood_radius`` (horizontal), falling back to the nearest ground
    point. Boundaries: ``h < 0.5`` low vegetation, ``0.5 <= h <= 5`` medium
    vegetation, ``h > 5`` building.
    """
    ground = np.flatnonzero(cloud.classes == TerrainClass.GROUND)
    if len(ground) == 0:
        raise TerrainError("no ground reference")
    todo = np.flatnonzero(cloud.classes == TerrainClass.UNCLASSIFIED)
    classes = cloud.classes.copy()
    if len(todo) == 0:
        return cloud.with_classes(classes)

    gxy = cloud.xyz[ground, :2]
    gz = cloud.xyz[ground, 2]
    tree = cKDTree(gxy)
    pxy = cloud.xyz[todo, :2]
    ref = np.empty(len(todo))
    for j, near in enumerate(tree.query_ball_point(pxy, neighborhood_radius)):
        if near:
            ref[j] = gz[near].min()
        else:
            ref[j] = np.nan
    missing = np.isnan(ref)
    if np.any(missing):
        _, nn = tree.query(pxy[missing])
        ref[missing] = gz[nn]

    h = cloud.xyz[todo, 2] - ref
    new = np.where(h < 0.5, TerrainClass.LOW_VEGETATION,
                   np.where(h <= 5.0, TerrainClass.MEDIUM_VEGETATION, TerrainClass.BUILDING))
    classes[todo] = new
    return cloud.with_classes(classes)


def query_cylinder(cloud: TerrainCloud, a, b, radius: float) -> np.ndarray:
    """Ids of points whose horizontal projection may lie within ``radius`` of segment ab.

    The result is a superset drawn from grid buckets; callers filter exactly.
    """
    if not radius > 0:
        raise TerrainError("radius must be positive")
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return cloud.index.query_segment(a[:2], b[:2], radius)


# -- binary cache -----------------------------------------------------------

_CACHE_HEAD = struct.Struct("<8sIQdddd")


def save_cache(cloud: TerrainCloud, path) -> None:
    """Write the cloud to a versioned binary file (grid rebuilt on load)."""
    o = cloud.frame.origin
    with open(path, "wb") as fh:
        fh.write(_CACHE_HEAD.pack(CACHE_MAGIC, CACHE_VERSION, len(cloud), cloud.cell_size,
                                  o.longitude, o.latitude, o.altitude))
        for arr, dt in ((cloud.lon, "<f8"), (cloud.lat, "<f8"), (cloud.alt, "<f8"),
                        (cloud.classes, "<u1")):
            fh.write(np.ascontiguousarray(arr, dtype=dt).tobytes())


def load_cache(path) -> TerrainCloud:
    data = Path(path).read_bytes()
    if len(data) < _CACHE_HEAD.size or data[:8] != CACHE_MAGIC:
        raise TerrainError(f"{path}: not a terrain cache file")
    magic, version, n, cell, lon0, lat0, alt0 = _CACHE_HEAD.unpack_from(data)
    if version != CACHE_VERSION:
        raise TerrainError(f"{path}: unsupported cache version {version}")
    off = _CACHE_HEAD.size
    arrays = []
    for dt, size in (("<f8", 8), ("<f8", 8), ("<f8", 8), ("<u1", 1)):
        arrays.append(np.frombuffer(data, dtype=dt, count=n, offset=off).copy())
        off += n * size
    frame = LocalFrame(GeoPoint(lon0, lat0, alt0))
    return TerrainCloud(arrays[0], arrays[1], arrays[2], arrays[3].astype(np.int64), frame, cell)
