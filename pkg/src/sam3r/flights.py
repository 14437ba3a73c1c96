"""Hourly demand allocation, corridor trajectories and the schedule CSV format."""

from __future__ import annotations

import bisect
import csv
import io
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .geo import FEET_TO_METERS, GeoPoint, LocalFrame

CRUISE_ALTITUDE_FT = 400.0
CRUISE_ALTITUDE_M = 121.92
DEFAULT_SPEED = 45.0
DEFAULT_STEP_SECONDS = 600
DEFAULT_WINDOW = (9, 18)


class ScheduleError(ValueError):
    pass


class UseCase(str, Enum):
    AIR_METRO = "air_metro"
    EMERGENCY = "emergency"
    CARGO = "cargo"

    @property
    def label(self) -> str:
        return {"air_metro": "Air Metro", "emergency": "Emergency", "cargo": "Cargo"}[self.value]


USE_CASE_ORDER = (UseCase.AIR_METRO, UseCase.EMERGENCY, UseCase.CARGO)


@dataclass(frozen=True)
class DemandProfile:
    air_metro: int = 0
    emergency: int = 0
    cargo: int = 0

    def __post_init__(self):
        for v in (self.air_metro, self.emergency, self.cargo):
            if int(v) != v or v < 0:
                raise ScheduleError("daily demand counts must be non-negative integers")

    def count(self, use_case: UseCase) -> int:
        return int(getattr(self, use_case.value))


@dataclass(frozen=True)
class TemporalDistribution:
    kind: str
    mode_centers: tuple
    mode_weights: tuple
    spread: float = 1.5

    def __post_init__(self):
        expected = {"bimodal": 2, "trimodal": 3}.get(self.kind.lower())
        if expected is None:
            raise ScheduleError(f"unknown distribution kind {self.kind!r}")
        if len(self.mode_centers) != expected or len(self.mode_weights) != expected:
            raise ScheduleError(f"{self.kind} needs {expected} modes")
        if any(w < 0 for w in self.mode_weights) or abs(sum(self.mode_weights) - 1.0) > 1e-9:
            raise ScheduleError("mode weights must be non-negative and sum to 1")
        if not self.spread > 0:
            raise ScheduleError("spread must be positive")

    def density(self, hour: float) -> float:
        return sum(w * math.exp(-0.5 * ((hour - c) / self.spread) ** 2)
                   for c, w in zip(self.mode_centers, self.mode_weights))


DEFAULT_DISTRIBUTIONS = {
    UseCase.EMERGENCY: TemporalDistribution("bimodal", (10.5, 17.5), (0.5, 0.5), 1.5),
    UseCase.AIR_METRO: TemporalDistribution("trimodal", (8.5, 12.0, 17.5), (1 / 3, 1 / 3, 1 / 3), 1.5),
    UseCase.CARGO: TemporalDistribution("bimodal", (10.0, 15.0), (0.5, 0.5), 1.5),
}


def largest_remainder(total: int, weights) -> list[int]:
    """Apportion ``total`` proportionally to ``weights``; ties go to the earlier bin."""
    w = np.asarray(weights, dtype=float)
    s = w.sum()
    if not s > 0:
        raise ScheduleError("weights must have positive total")
    quotas = total * w / s
    base = np.floor(quotas).astype(int)
    rem = total - int(base.sum())
    frac = quotas - base
    order = sorted(range(len(w)), key=lambda i: (-frac[i], i))
    for i in order[:rem]:
        base[i] += 1
    return [int(v) for v in base]


def hourly_allocation(daily_count: int, dist: TemporalDistribution,
                      window=DEFAULT_WINDOW) -> list[int]:
    """Split a daily flight count over the hours ``[start, end)`` of ``window``.

    The mixture density is sampled at each hour's midpoint.
    """
    start, end = window
    if daily_count < 0:
        raise ScheduleError("daily count must be non-negative")
    if end <= start:
        raise ScheduleError("empty hour window")
    hours = range(int(start), int(end))
    weights = [dist.density(h + 0.5) for h in hours]
    if sum(weights) <= 0:
        raise ScheduleError("distribution has zero density over the window")
    if daily_count == 0:
        return [0] * len(weights)
    return largest_remainder(daily_count, weights)


@dataclass(frozen=True, eq=False)
class CorridorPath:
    name: str
    waypoints: tuple
    frame: LocalFrame = field(init=False, repr=False)
    xy: np.ndarray = field(init=False, repr=False)
    cumulative_length: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        wps = tuple(self.waypoints)
        if len(wps) < 2:
            raise ScheduleError("a corridor needs at least two waypoints")
        object.__setattr__(self, "waypoints", wps)
        lon = np.array([p.longitude for p in wps])
        lat = np.array([p.latitude for p in wps])
        frame = LocalFrame(GeoPoint(float(lon.mean()), float(lat.mean()), 0.0))
        x, y, _ = frame.to_local(lon, lat)
        xy = np.column_stack([x, y])
        seg = np.hypot(*np.diff(xy, axis=0).T)
        if np.any(seg <= 0):
            raise ScheduleError("corridor waypoints must be distinct")
        object.__setattr__(self, "frame", frame)
        object.__setattr__(self, "xy", xy)
        object.__setattr__(self, "cumulative_length", np.concatenate([[0.0], np.cumsum(seg)]))

    @classmethod
    def from_lonlat(cls, name: str, coords) -> "CorridorPath":
        return cls(name, tuple(GeoPoint(float(c[0]), float(c[1])) for c in coords))

    @property
    def length(self) -> float:
        return float(self.cumulative_length[-1])

    def point_at(self, s: float) -> tuple[float, float]:
        """Longitude/latitude at arc length ``s`` (clamped to the corridor)."""
        x, y = self.xy_at(s)
        lon, lat, _ = self.frame.to_geo(x, y)
        return float(lon), float(lat)

    def xy_at(self, s: float) -> tuple[float, float]:
        cum = self.cumulative_length
        s = min(max(s, 0.0), float(cum[-1]))
        j = min(bisect.bisect_right(cum, s) - 1, len(cum) - 2)
        t = (s - cum[j]) / (cum[j + 1] - cum[j])
        p = self.xy[j] + t * (self.xy[j + 1] - self.xy[j])
        return float(p[0]), float(p[1])

    def sample(self, spacing: float) -> list[tuple[float, float]]:
        """Points every ``spacing`` meters along the corridor, both ends included."""
        n = max(1, int(math.ceil(self.length / spacing - 1e-9)))
        return [self.point_at(self.length * j / n) for j in range(n + 1)]


@dataclass(frozen=True, eq=False)
class FlightSchedule:
    """Aircraft positions on a uniform time grid.

    ``lon``/``lat``/``alt`` have shape (aircraft, steps) with NaN where the
    aircraft is absent. Altitudes are meters above ground level.
    """

    start_seconds: int
    step_seconds: int
    aircraft: tuple
    use_cases: tuple
    lon: np.ndarray
    lat: np.ndarray
    alt: np.ndarray

    @property
    def n_aircraft(self) -> int:
        return len(self.aircraft)

    @property
    def n_steps(self) -> int:
        return self.lon.shape[1]

    @property
    def present(self) -> np.ndarray:
        return ~np.isnan(self.lon)

    @property
    def timestamps(self) -> list[int]:
        return [self.start_seconds + j * self.step_seconds for j in range(self.n_steps)]

    def position(self, k: int, t: int) -> GeoPoint | None:
        if np.isnan(self.lon[k, t]):
            return None
        return GeoPoint(float(self.lon[k, t]), float(self.lat[k, t]), float(self.alt[k, t]))

    def subset(self, aircraft_indices) -> "FlightSchedule":
        idx = list(aircraft_indices)
        return FlightSchedule(self.start_seconds, self.step_seconds,
                              tuple(self.aircraft[i] for i in idx),
                              tuple(self.use_cases[i] for i in idx),
                              self.lon[idx], self.lat[idx], self.alt[idx])


def empty_schedule(start_seconds: int = 9 * 3600, step_seconds: int = DEFAULT_STEP_SECONDS,
                   n_steps: int = 1) -> FlightSchedule:
    z = np.full((0, n_steps), np.nan)
    return FlightSchedule(start_seconds, step_seconds, (), (), z, z.copy(), z.copy())


@dataclass
class _Flight:
    use_case: UseCase
    departure: int
    forward: bool
    first_step: int = 0
    samples: list = field(default_factory=list)


def generate_trajectories(corridor: CorridorPath, hourly_counts: dict, speed: float = DEFAULT_SPEED,
                          step_seconds: int = DEFAULT_STEP_SECONDS, seed: int = 0,
                          window=DEFAULT_WINDOW) -> FlightSchedule:
    """Fly each scheduled departure along the corridor at constant ground speed.

    Args:
        corridor: the polyline flown (in alternating directions).
        hourly_counts: mapping ``UseCase -> list of counts`` aligned with
            the hours of ``window``.
        speed: ground speed in m/s.
        step_seconds: sampling interval of the output grid.
        seed: RNG seed for departure minutes and initial direction.
        window: ``(start_hour, end_hour)``; the grid starts at ``start_hour``
            and extends until the last flight has landed.

    Each flight is reported at every grid step between departure and arrival;
    a flight too short to span a step is reported once, at the first step
    after its departure, at its clamped position.
    """
    if not speed > 0 or not step_seconds > 0:
        raise ScheduleError("speed and step_seconds must be positive")
    step_seconds = int(step_seconds)
    rng = np.random.default_rng(seed)
    start_s = int(window[0]) * 3600
    flights: list[_Flight] = []
    for uc in USE_CASE_ORDER:
        counts = hourly_counts.get(uc, hourly_counts.get(uc.value, []))
        forward = bool(rng.integers(0, 2))
        for h_off, n in enumerate(counts):
            hour = int(window[0]) + h_off
            minutes = sorted(int(m) for m in rng.integers(0, 60, size=int(n)))
            for m in minutes:
                flights.append(_Flight(uc, hour * 3600 + m * 60, forward))
                forward = not forward

    duration = corridor.length / speed
    last = start_s
    for f in flights:
        first = -(-(f.departure - start_s) // step_seconds)
        f.first_step = first
        j = first
        while True:
            t = start_s + j * step_seconds
            elapsed = t - f.departure
            if j > first and elapsed > duration:
                break
            s = min(elapsed * speed, corridor.length)
            if not f.forward:
                s = corridor.length - s
            f.samples.append(corridor.point_at(s))
            j += 1
        last = max(last, start_s + (j - 1) * step_seconds)
    n_steps = (last - start_s) // step_seconds + 1

    # logical slots: a slot is reused once its previous flight has left the grid
    order = sorted(range(len(flights)), key=lambda i: (flights[i].departure, i))
    slots: dict[UseCase, list[int]] = {uc: [] for uc in USE_CASE_ORDER}
    slot_of = {}
    for i in order:
        f = flights[i]
        busy_until = slots[f.use_case]
        for s_idx, end in enumerate(busy_until):
            if end < f.first_step:
                busy_until[s_idx] = f.first_step + len(f.samples) - 1
                slot_of[i] = s_idx
                break
        else:
            busy_until.append(f.first_step + len(f.samples) - 1)
            slot_of[i] = len(busy_until) - 1

    names, ucs, offset = [], [], {}
    for uc in USE_CASE_ORDER:
        offset[uc] = len(names)
        for s_idx in range(len(slots[uc])):
            names.append(f"{uc.label} Craft {s_idx + 1}")
            ucs.append(uc)
    K = len(names)
    lon = np.full((K, n_steps), np.nan)
    lat = np.full((K, n_steps), np.nan)
    alt = np.full((K, n_steps), np.nan)
    for i, f in enumerate(flights):
        k = offset[f.use_case] + slot_of[i]
        for j, (x, y) in enumerate(f.samples):
            lon[k, f.first_step + j] = x
            lat[k, f.first_step + j] = y
            alt[k, f.first_step + j] = CRUISE_ALTITUDE_M
    return FlightSchedule(start_s, step_seconds, tuple(names), tuple(ucs), lon, lat, alt)


def generate_schedule(corridor: CorridorPath, demand: DemandProfile, distributions=None,
                      window=DEFAULT_WINDOW, **kwargs) -> FlightSchedule:
    dists = dict(DEFAULT_DISTRIBUTIONS)
    if distributions:
        dists.update(distributions)
    counts = {uc: hourly_allocation(demand.count(uc), dists[uc], window) for uc in USE_CASE_ORDER}
    return generate_trajectories(corridor, counts, window=window, **kwargs)


# -- CSV ----------------------------------------------------------------------

def _fmt_time(seconds: int) -> str:
    h, rem = divmod(int(seconds), 3600)
    m, s = divmod(rem, 60)
    return f"{h}:{m:02d}" if s == 0 else f"{h}:{m:02d}:{s:02d}"


def _parse_time(text: str, line: int) -> int:
    try:
        parts = [int(p) for p in text.strip().split(":")]
    except ValueError:
        raise ScheduleError(f"line {line}: bad time {text!r}") from None
    if len(parts) == 2:
        parts.append(0)
    if len(parts) != 3:
        raise ScheduleError(f"line {line}: bad time {text!r}")
    return parts[0] * 3600 + parts[1] * 60 + parts[2]


def _use_case_of(name: str) -> UseCase:
    for uc in USE_CASE_ORDER:
        if name.startswith(uc.label + " "):
            return uc
    raise ScheduleError(f"cannot infer use case from column {name!r}")


def schedule_to_csv(schedule: FlightSchedule, comment: str | None = None) -> str:
    """Render the schedule with one time row per step and ``lon, lat, alt_ft`` cells."""
    out = io.StringIO()
    if comment:
        out.write(f"# {comment}\n")
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["Time", *schedule.aircraft])
    for t, ts in enumerate(schedule.timestamps):
        row = [_fmt_time(ts)]
        for k in range(schedule.n_aircraft):
            if np.isnan(schedule.lon[k, t]):
                row.append("-")
            else:
                row.append(f"{schedule.lon[k, t]:.7f}, {schedule.lat[k, t]:.7f}, "
                           f"{schedule.alt[k, t] / FEET_TO_METERS:.2f}")
        w.writerow(row)
    return out.getvalue()


def schedule_from_csv(text) -> FlightSchedule:
    stream = io.StringIO(text) if isinstance(text, str) else text
    lines = [ln for ln in stream.read().splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    rows = list(csv.reader(lines))
    if not rows:
        raise ScheduleError("empty schedule")
    header = [h.strip() for h in rows[0]]
    if not header or header[0].lower() != "time":
        raise ScheduleError("line 1: expected a Time column")
    names = tuple(header[1:])
    ucs = tuple(_use_case_of(n) for n in names)
    K, T = len(names), len(rows) - 1
    lon = np.full((K, T), np.nan)
    lat = np.full((K, T), np.nan)
    alt = np.full((K, T), np.nan)
    times = []
    for t, row in enumerate(rows[1:]):
        line = t + 2
        if len(row) != len(header):
            raise ScheduleError(f"line {line}: expected {len(header)} cells, got {len(row)}")
        times.append(_parse_time(row[0], line))
        for k, cell in enumerate(row[1:]):
            cell = cell.strip()
            if cell == "-":
                continue
            try:
                x, y, z = (float(v) for v in cell.split(","))
            except ValueError:
                raise ScheduleError(f"line {line}: bad position cell {cell!r}") from None
            lon[k, t], lat[k, t], alt[k, t] = x, y, z * FEET_TO_METERS
    if T == 0:
        raise ScheduleError("schedule has no time rows")
    step = times[1] - times[0] if T > 1 else DEFAULT_STEP_SECONDS
    if step <= 0 or any(b - a != step for a, b in zip(times, times[1:])):
        raise ScheduleError("timestamps must be uniformly spaced")
    return FlightSchedule(times[0], step, names, ucs, lon, lat, alt)
