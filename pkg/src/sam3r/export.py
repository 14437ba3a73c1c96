"""Artifact writers: plan JSON, GeoJSON layers and plot CSV series."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict
from pathlib import Path

from .detection import CandidateSite
from .geo import GeoPoint

ROLES = ("existing", "added", "backup-hub")


def dump_json(obj, path) -> None:
    """Deterministic JSON: sorted keys, fixed indentation, trailing newline."""
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_json(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _round(x, nd=9):
    return None if x is None else round(float(x), nd)


def site_records(sites) -> list[dict]:
    return [{"id": s.id, "lon": round(s.position.longitude, 7), "lat": round(s.position.latitude, 7),
             "alt": round(s.position.altitude, 3), "capacity": s.capacity, "mast_height": s.mast_height}
            for s in sites]


def sites_from_records(records) -> list[CandidateSite]:
    return [CandidateSite(r["id"], GeoPoint(r["lon"], r["lat"], r.get("alt", 0.0)),
                          r.get("mast_height", 10.0), r.get("capacity", 6)) for r in records]


def deployment_record(plan, meta: dict) -> dict:
    return {"kind": "reliability", **meta, "H": plan.H, "mode": plan.mode,
            "total_cost": _round(plan.total_cost, 6),
            "sensors": [{"site": sid, "type": tid, "count": v} for (sid, tid), v in sorted(plan.n.items())],
            "active_sites": sorted(sid for sid, b in plan.beta.items() if b),
            "achieved": [_round(a) for a in plan.achieved],
            "min_achieved": _round(plan.min_achieved),
            "sites": site_records(plan.sites)}


def counts_from_record(record: dict) -> dict:
    """``{(site, type): count}`` from a reliability or augmentation record."""
    key = "sensors" if record.get("kind") == "reliability" else "total"
    return {(e["site"], e["type"]): int(e["count"]) for e in record[key]}


def augmentation_record(plan, meta: dict) -> dict:
    def rows(d):
        return [{"site": sid, "type": tid, "count": v} for (sid, tid), v in sorted(d.items())]
    unmet = [{"aircraft": r.aircraft, "step": r.step} for r in plan.report if not r.satisfied]
    return {"kind": "robustness", **meta, "sigma": plan.sigma, "add_cost": _round(plan.add_cost, 6),
            "existing": rows(plan.n_exist), "added": rows(plan.n_add), "total": rows(plan.n_total),
            "active_sites": sorted(sid for sid, b in plan.beta.items() if b),
            "rows_checked": len(plan.report), "rows_unmet": unmet}


def schedule_record(sched, summary_rows, meta: dict, validation: dict) -> dict:
    return {"kind": "resiliency", **meta, **sched.to_json(),
            "summary": [asdict(r) for r in summary_rows],
            "violations": {k: v for k, v in sorted(validation.items())}}


def _feature(lon, lat, props) -> dict:
    return {"type": "Feature", "geometry": {"type": "Point", "coordinates": [lon, lat]},
            "properties": props}


def deployment_geojson(record: dict, hubs=()) -> dict:
    """FeatureCollection of installed sensors and backup hubs.

    Reliability plans mark every sensor ``existing``; augmentation records
    split into ``existing`` and ``added``. Hubs carry role ``backup-hub``.
    """
    where = {s["id"]: (s["lon"], s["lat"]) for s in record.get("sites", [])}
    features = []
    if record.get("kind") == "robustness":
        groups = [("existing", record["existing"]), ("added", record["added"])]
    else:
        groups = [("existing", record.get("sensors", []))]
    for role, entries in groups:
        for e in entries:
            if e["site"] not in where:
                raise KeyError(f"site {e['site']} has no recorded position")
            lon, lat = where[e["site"]]
            features.append(_feature(lon, lat, {"site_id": e["site"], "sensor_type": e["type"],
                                                "count": e["count"], "role": role}))
    for h in hubs:
        features.append(_feature(round(h.position.longitude, 7), round(h.position.latitude, 7),
                                 {"site_id": h.id, "sensor_type": None, "count": 0, "role": "backup-hub"}))
    return {"type": "FeatureCollection", "features": features}


def plot_csv(rows, meta: dict) -> str:
    """Threshold sweep series: corridor, H, sensor count, total cost."""
    buf = io.StringIO()
    buf.write(f"# config_hash={meta['config_hash']} seed={meta['seed']}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["corridor", "H", "sensor_count", "total_cost", "types"])
    for r in rows:
        w.writerow([r["corridor"], f"{r['H']:.4f}", r["sensor_count"], f"{r['total_cost']:.2f}",
                    "|".join(r["types"])])
    return buf.getvalue()
