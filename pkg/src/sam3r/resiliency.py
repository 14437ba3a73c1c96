"""Backup-sensor dispatch after primary sensor failures.

Time is discrete. A primary ``o`` is down on ``[fail_o, end_o)`` where
``end_o = min(fail_o + repair_o, horizon)``. A backup dispatched from hub
``h`` at step ``t`` arrives at ``t + travel`` and may be active from then
until the primary is repaired.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import BudgetExhaustedError, InfeasibleError
from .geo import GeoPoint, LocalFrame
from .ipsolver import IntegerProgram, Status, solve_bnb

UAV = "UAV"
GROUND_VEHICLE = "GroundVehicle"
PLATFORMS = (UAV, GROUND_VEHICLE)
DEFAULT_DETOUR = 1.4


@dataclass(frozen=True)
class Hub:
    id: str
    position: GeoPoint


@dataclass(frozen=True)
class BackupUnit:
    id: str
    platform: str
    prob: float
    speed: float
    home_hub: str | None = None
    name: str = ""
    range_m: float | None = None
    tracking_capacity: int | None = None

    def __post_init__(self):
        if self.platform not in PLATFORMS:
            raise ValueError(f"unknown platform {self.platform!r}")
        if not 0 < self.prob <= 1:
            raise ValueError(f"backup {self.id}: prob must lie in (0, 1]")
        if not self.speed > 0:
            raise ValueError(f"backup {self.id}: speed must be positive")


def load_backups(path=None) -> list[BackupUnit]:
    """Backup units from JSON; the bundled file carries the published characteristics."""
    if path is None:
        text = resources.files("sam3r").joinpath("data/backups.json").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    return [_backup_from_json(d) for d in json.loads(text)]


def _backup_from_json(d: dict) -> BackupUnit:
    rng = d.get("range_m")
    if rng is None and d.get("range_km") is not None:
        rng = d["range_km"] * 1000.0
    return BackupUnit(d["id"], d.get("platform", UAV), float(d["prob"]), float(d.get("speed", 15.0)),
                      d.get("home_hub"), d.get("name", d["id"]), rng, d.get("tracking_capacity"))


@dataclass(frozen=True)
class Primary:
    id: str
    position: GeoPoint


@dataclass
class FailureScenario:
    primaries: list
    fail_times: dict
    repair_times: dict
    horizon: int
    step_seconds: int = 600

    def __post_init__(self):
        ids = [p.id for p in self.primaries]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate primary ids")
        if self.horizon < 1 or self.step_seconds <= 0:
            raise ValueError("horizon and step length must be positive")
        for o in self.fail_times:
            if o not in ids:
                raise ValueError(f"failure at unknown primary {o!r}")
            if self.repair_times.get(o, 0) < 1:
                raise ValueError(f"primary {o}: repair time must be at least one step")
            if not 0 <= self.fail_times[o] < self.horizon:
                raise ValueError(f"primary {o}: failure outside the horizon")

    @property
    def failed(self) -> list[str]:
        return [p.id for p in self.primaries if p.id in self.fail_times]

    def window(self, o: str) -> tuple[int, int]:
        start = int(self.fail_times[o])
        return start, min(start + int(self.repair_times[o]), self.horizon)

    def is_failed(self, o: str, t: int) -> bool:
        start, end = self.window(o)
        return start <= t < end

    def primary(self, o: str) -> Primary:
        return next(p for p in self.primaries if p.id == o)


def travel_steps(distance_m: float, speed: float, step_seconds: float) -> int:
    """Whole steps needed to cover a distance, never fewer than one."""
    if speed <= 0 or step_seconds <= 0:
        raise ValueError("speed and step length must be positive")
    # guard against 600.0000000001-style float noise
    return max(1, math.ceil(distance_m / speed / step_seconds - 1e-9))


def compute_travel_times(hubs, primaries, unit: BackupUnit, step_seconds: float,
                         detour: float = DEFAULT_DETOUR, frame: LocalFrame | None = None) -> dict:
    """``{(hub_id, primary_id): steps}`` for one unit.

    Distances are straight lines in a local frame; ground vehicles multiply
    them by ``detour`` to stand in for the road network.
    """
    if frame is None:
        anchor = hubs[0].position if hubs else (primaries[0].position if primaries else GeoPoint(0.0, 0.0))
        frame = LocalFrame(GeoPoint(anchor.longitude, anchor.latitude, 0.0))
    factor = detour if unit.platform == GROUND_VEHICLE else 1.0
    out = {}
    for h in hubs:
        hx, hy, _ = frame.to_local(h.position.longitude, h.position.latitude)
        for p in primaries:
            px, py, _ = frame.to_local(p.position.longitude, p.position.latitude)
            dist = math.hypot(float(px) - float(hx), float(py) - float(hy))
            out[(h.id, p.id)] = travel_steps(dist * factor, unit.speed, step_seconds)
    return out


def all_travel_times(scenario: FailureScenario, hubs, backups, detour: float = DEFAULT_DETOUR) -> dict:
    """``{(backup_id, hub_id, primary_id): steps}`` for every unit."""
    out = {}
    for unit in backups:
        for (h, o), v in compute_travel_times(hubs, scenario.primaries, unit, scenario.step_seconds,
                                              detour).items():
            out[(unit.id, h, o)] = v
    return out


def dispatch_name(b, h, o, t) -> str:
    return f"dispatch[{b},{h},{o},{t}]"


def active_name(b, o, t) -> str:
    return f"active[{b},{o},{t}]"


@dataclass
class ResiliencyModel:
    ip: IntegerProgram
    dispatch_vars: dict          # (b, h, o, t) -> name
    active_vars: dict            # (b, o, t) -> name
    travel: dict                 # (b, h, o) -> steps


def allowed_hubs(unit: BackupUnit, hubs) -> list:
    if unit.home_hub is None:
        return list(hubs)
    chosen = [h for h in hubs if h.id == unit.home_hub]
    if not chosen:
        raise ValueError(f"backup {unit.id}: home hub {unit.home_hub!r} not among the hubs")
    return chosen


def dispatch_options(scenario: FailureScenario, hubs, backups, travel: dict) -> list[tuple]:
    """Every (b, h, o, t) whose arrival precedes the end of the failure window."""
    opts = []
    for unit in backups:
        for h in allowed_hubs(unit, hubs):
            for o in scenario.failed:
                start, end = scenario.window(o)
                tt = travel[(unit.id, h.id, o)]
                for t in range(start, end):
                    if t + tt < end:
                        opts.append((unit.id, h.id, o, t))
    return opts


def build_resiliency_model(scenario: FailureScenario, hubs, backups, travel: dict | None = None,
                           detour: float = DEFAULT_DETOUR) -> ResiliencyModel:
    """Binary dispatch/activation model.

    Activation variables exist only on steps some dispatch could reach in
    time, which is how the no-window rule is enforced. A dispatch counts
    toward activation at ``t`` only once it has arrived.

    Raises:
        InfeasibleError: a failed primary that no backup can reach before its
            repair completes.
    """
    ids = [h.id for h in hubs]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate hub ids")
    if travel is None:
        travel = all_travel_times(scenario, hubs, backups, detour)
    prob = {u.id: u.prob for u in backups}
    ip = IntegerProgram("resiliency")
    dvars, avars = {}, {}
    for key in dispatch_options(scenario, hubs, backups, travel):
        dvars[key] = ip.add_binary(dispatch_name(*key))

    unreachable = [o for o in scenario.failed if not any(k[2] == o for k in dvars)]
    if unreachable:
        raise InfeasibleError("failed primary unreachable by any backup within its repair window",
                              {"primaries": unreachable})

    arrivals = {}
    for (b, h, o, t) in dvars:
        arrivals.setdefault((b, o), []).append((t + travel[(b, h, o)], (b, h, o, t)))
    for (b, o), arr in sorted(arrivals.items()):
        _, end = scenario.window(o)
        first = min(a for a, _ in arr)
        for t in range(first, end):
            avars[(b, o, t)] = ip.add_binary(active_name(b, o, t))
            row = {avars[(b, o, t)]: 1.0}
            for a, key in arr:
                if a <= t:
                    row[dvars[key]] = -1.0
            ip.add_constraint(row, 0.0, f"activate[{b},{o},{t}]")

    obj = {name: float(travel[(b, h, o)]) for (b, h, o, t), name in dvars.items()}
    obj.update({name: -prob[b] for (b, o, t), name in avars.items()})
    ip.set_objective(obj)

    by_bo = {}
    for key, name in dvars.items():
        by_bo.setdefault((key[0], key[2]), []).append((key, name))
    # no second assignment while an earlier one is still under repair
    for (b, o1), served in sorted(by_bo.items()):
        s1, e1 = scenario.window(o1)
        for o2 in scenario.failed:
            if o2 == o1 or (b, o2) not in by_bo:
                continue
            for t2 in range(s1, e1):
                others = [name for key, name in by_bo[(b, o2)] if key[3] == t2]
                if others:
                    row = {name: 1.0 for _, name in served}
                    for name in others:
                        row[name] = row.get(name, 0.0) + 1.0
                    ip.add_constraint(row, 1.0, f"exclusive[{b},{o1},{o2},{t2}]")

    steps_by_b = {}
    for (b, o, t), name in avars.items():
        steps_by_b.setdefault((b, t), []).append(name)
    for (b, t), names in sorted(steps_by_b.items()):
        if len(names) > 1:
            ip.add_constraint({n: 1.0 for n in names}, 1.0, f"one_site[{b},{t}]")

    for (b, o), served in sorted(by_bo.items()):
        ip.add_constraint({name: 1.0 for _, name in served}, 1.0, f"once[{b},{o}]")
    for o in scenario.failed:
        names = [name for key, name in dvars.items() if key[2] == o]
        ip.add_constraint({n: -1.0 for n in names}, -1.0, f"cover[{o}]")
    return ResiliencyModel(ip, dvars, avars, travel)


@dataclass
class DispatchSchedule:
    dispatches: list             # sorted (b, h, o, t)
    active: set                  # (b, o, t)
    travel: dict                 # (b, h, o) -> steps
    objective: float = 0.0
    status: str = Status.OPTIMAL.value
    prob: dict = field(default_factory=dict)

    def active_steps(self, b: str, o: str) -> list[int]:
        return sorted(t for (bb, oo, t) in self.active if bb == b and oo == o)

    def recompute_objective(self) -> float:
        return (sum(self.travel[(b, h, o)] for (b, h, o, _) in self.dispatches)
                - sum(self.prob[b] for (b, _, _) in self.active))

    def to_json(self) -> dict:
        return {"status": self.status, "objective": round(self.objective, 9),
                "dispatches": [{"unit": b, "hub": h, "site": o, "start": t,
                                "travel": self.travel[(b, h, o)]} for (b, h, o, t) in self.dispatches],
                "active": [{"unit": b, "site": o, "steps": self.active_steps(b, o)}
                           for (b, o) in sorted({(b, o) for (b, o, _) in self.active})]}


def schedule(scenario: FailureScenario, hubs, backups, travel: dict | None = None,
             detour: float = DEFAULT_DETOUR, node_budget: int = 200_000) -> DispatchSchedule:
    """Optimal dispatch plan; an empty schedule when nothing fails."""
    model = build_resiliency_model(scenario, hubs, backups, travel, detour)
    prob = {u.id: u.prob for u in backups}
    if not model.dispatch_vars:
        return DispatchSchedule([], set(), model.travel, 0.0, Status.OPTIMAL.value, prob)
    sol = solve_bnb(model.ip, node_budget)
    if sol.status is Status.INFEASIBLE:
        raise InfeasibleError("resiliency model infeasible", {"failed": scenario.failed})
    if sol.status is Status.ABORTED:
        raise BudgetExhaustedError("node budget exhausted", {"nodes": sol.nodes})
    dispatches = sorted(k for k, n in model.dispatch_vars.items() if sol.assignment[n])
    active = {k for k, n in model.active_vars.items() if sol.assignment[n]}
    return DispatchSchedule(dispatches, active, model.travel, float(sol.objective_value),
                            Status.OPTIMAL.value, prob)



def validate_schedule(sched: DispatchSchedule, scenario: FailureScenario, backups=None,
                      hubs=None) -> dict:
    """Re-check every constraint family directly from the schedule.

    Returns a dict keyed by family name (``activation``, ``window``,
    ``exclusive``, ``one_site``, ``once``, ``cover``, ``hub``) mapping to
    lists of violation descriptions; all lists empty means valid.
    """
    v = {k: [] for k in ("activation", "window", "exclusive", "one_site", "once", "cover", "hub")}
    failed = set(scenario.failed)
    for (b, h, o, t) in sched.dispatches:
        if o not in failed:
            v["window"].append(f"dispatch of {b} to non-failed {o} at {t}")
            continue
        start, end = scenario.window(o)
        tt = sched.travel[(b, h, o)]
        if not (start <= t < end and t + tt < end):
            v["window"].append(f"dispatch of {b} to {o} at {t} outside its window")
    for (b, o, t) in sorted(sched.active):
        if o not in failed or not scenario.is_failed(o, t):
            v["window"].append(f"{b} active at {o} at {t} while primary is up")
            continue
        arrived = any(bb == b and oo == o and td + sched.travel[(bb, h, oo)] <= t
                      for (bb, h, oo, td) in sched.dispatches)
        if not arrived:
            v["activation"].append(f"{b} active at {o} at {t} before any arrival")
    for (b, h1, o1, _) in sched.dispatches:
        s1, e1 = scenario.window(o1)
        for (bb, _, o2, t2) in sched.dispatches:
            if bb == b and o2 != o1 and s1 <= t2 < e1:
                v["exclusive"].append(f"{b} sent to {o2} at {t2} during repair of {o1}")
    seen = {}
    for (b, o, t) in sched.active:
        seen.setdefault((b, t), []).append(o)
    for (b, t), os_ in sorted(seen.items()):
        if len(os_) > 1:
            v["one_site"].append(f"{b} active at {sorted(os_)} at {t}")
    count = {}
    for (b, _, o, _) in sched.dispatches:
        count[(b, o)] = count.get((b, o), 0) + 1
    v["once"] = [f"{b} dispatched {c} times to {o}" for (b, o), c in sorted(count.items()) if c > 1]
    covered = {o for (_, _, o, _) in sched.dispatches}
    v["cover"] = [f"no backup dispatched to {o}" for o in scenario.failed if o not in covered]
    if backups is not None and hubs is not None:
        units = {u.id: u for u in backups}
        for (b, h, o, t) in sched.dispatches:
            if h not in {x.id for x in allowed_hubs(units[b], hubs)}:
                v["hub"].append(f"{b} dispatched from {h}, not its home hub")
    return v


def is_valid(report: dict) -> bool:
    return not any(report.values())


@dataclass(frozen=True)
class DispatchRow:
    unit: str
    hub: str
    site: str
    start: int
    travel: int
    arrival: int
    active_start: int | None
    active_end: int | None
    active_periods: int


def summarize(sched: DispatchSchedule) -> list[DispatchRow]:
    rows = []
    for (b, h, o, t) in sched.dispatches:
        tt = sched.travel[(b, h, o)]
        steps = sched.active_steps(b, o)
        rows.append(DispatchRow(b, h, o, t, tt, t + tt, steps[0] if steps else None,
                                steps[-1] if steps else None, len(steps)))
    return rows


def gantt_csv(sched: DispatchSchedule) -> str:
    """One line per contiguous active run: unit, site, start, end (inclusive)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["unit", "site", "start", "end"])
    for (b, o) in sorted({(b, o) for (b, o, _) in sched.active}):
        steps = sched.active_steps(b, o)
        run_start = prev = steps[0]
        for t in steps[1:] + [None]:
            if t is not None and t == prev + 1:
                prev = t
                continue
            w.writerow([b, o, run_start, prev])
            if t is not None:
                run_start = prev = t
    return buf.getvalue()


# -- scenario files -----------------------------------------------------------

def _point(d) -> GeoPoint:
    return GeoPoint(float(d["lon"]), float(d["lat"]), float(d.get("alt", 0.0)))


def load_scenario(path_or_dict):
    """Parse a scenario document into (scenario, hubs, backups, travel or None).

    ``backups`` may be omitted (bundled units are used) or given as a list of
    ids into the bundled set or full unit objects. An optional ``travel``
    block ``{unit: {hub: {site: steps}}}`` overrides computed travel times.
    """
    if isinstance(path_or_dict, dict):
        doc = path_or_dict
    else:
        doc = json.loads(Path(path_or_dict).read_text(encoding="utf-8"))
    hubs = [Hub(h["id"], _point(h)) for h in doc["hubs"]]
    primaries = [Primary(p["id"], _point(p)) for p in doc["primaries"]]
    fail = {f["site"]: int(f["fail"]) for f in doc.get("failures", [])}
    repair = {f["site"]: int(f["repair"]) for f in doc.get("failures", [])}
    scen = FailureScenario(primaries, fail, repair, int(doc["horizon"]), int(doc.get("step_seconds", 600)))
    bundled = {u.id: u for u in load_backups()}
    units = []
    for item in doc.get("backups", list(bundled)):
        if isinstance(item, str):
            units.append(bundled[item])
        elif "prob" in item:
            units.append(_backup_from_json(item))
        else:
            base = bundled[item["id"]]
            units.append(BackupUnit(base.id, base.platform, base.prob, base.speed, item.get("home_hub"),
                                    base.name, base.range_m, base.tracking_capacity))
    travel = None
    if "travel" in doc:
        travel = {(b, h, o): int(v) for b, hs in doc["travel"].items()
                  for h, os_ in hs.items() for o, v in os_.items()}
    return scen, hubs, units, travel
