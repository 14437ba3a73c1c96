"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 input or parse error, 3 model
infeasible (a diagnostic JSON is written next to the requested output),
4 solver budget exhausted.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import export, reliability, resiliency, robustness
from .config import ConfigError, ToolkitConfig
from .detection import DetectionTensor, build_tensor, corridor_sites, load_catalog
from .errors import BudgetExhaustedError, InfeasibleError
from .flights import ScheduleError, generate_schedule, schedule_from_csv, schedule_to_csv
from .geo import GeoPoint, LocalFrame, TerrainError, load_cache, load_dsm, reclassify, save_cache, serialize_dsm_csv

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_BUDGET = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _config(args) -> ToolkitConfig:
    return ToolkitConfig.load(args.config) if args.config else ToolkitConfig()


def _seed(args, cfg, required: bool = False):
    seed = args.seed if getattr(args, "seed", None) is not None else cfg.data["schedule"].get("seed")
    if required and seed is None:
        raise UsageError("a seed is required (--seed or schedule.seed)")
    return seed


def _meta(cfg, seed) -> dict:
    return {"config_hash": cfg.hash(), "seed": seed}


def _load_terrain(path):
    path = Path(path)
    return load_dsm(path) if path.suffix.lower() == ".csv" else load_cache(path)


def _catalog(cfg, exclude=()):
    path = cfg.path("catalog")
    return load_catalog(path, exclude=tuple(cfg.planner["exclude_types"]) + tuple(exclude))


def _sites_path(tensor_path) -> Path:
    p = Path(tensor_path)
    return p.with_name(p.stem + ".sites.json")


def _load_tensor(args):
    tensor = DetectionTensor.load(args.tensor)
    sites = export.sites_from_records(export.read_json(_sites_path(args.tensor)))
    return tensor, sites


def _diagnose(out, exc, meta) -> None:
    diag = Path(str(out) + ".diagnostic.json")
    export.dump_json({**meta, "error": str(exc), "type": type(exc).__name__,
                      "details": json.loads(json.dumps(exc.details, default=str))}, diag)
    print(f"diagnostic written to {diag}", file=sys.stderr)


# -- commands -----------------------------------------------------------------

def cmd_ingest_dsm(args):
    cloud = load_dsm(args.dsm, cell_size=args.cell_size)
    save_cache(cloud, args.out)
    print(f"{len(cloud)} points cached to {args.out}")


def cmd_reclassify(args):
    cloud = reclassify(_load_terrain(args.input), args.radius)
    if Path(args.out).suffix.lower() == ".csv":
        Path(args.out).write_text(serialize_dsm_csv(cloud), encoding="utf-8")
    else:
        save_cache(cloud, args.out)
    print(f"{len(cloud)} points reclassified")


def cmd_gen_schedule(args):
    cfg = _config(args)
    seed = _seed(args, cfg, required=True)
    sc = cfg.data["schedule"]
    sched = generate_schedule(cfg.corridor(), cfg.demand(args.demand_scale), window=tuple(sc["window"]),
                              speed=sc["speed"], step_seconds=sc["step_seconds"], seed=int(seed))
    comment = f"config_hash={cfg.hash()} seed={seed} demand_scale={args.demand_scale:g}"
    Path(args.out).write_text(schedule_to_csv(sched, comment), encoding="utf-8")
    print(f"{sched.n_aircraft} aircraft slots over {sched.n_steps} steps")


def cmd_build_tensor(args):
    cfg = _config(args)
    sched = schedule_from_csv(Path(args.schedule).read_text(encoding="utf-8"))
    terrain = args.terrain or cfg.path("dsm")
    cloud = _load_terrain(terrain) if terrain else None
    p = cfg.planner
    sites = corridor_sites(cfg.corridor(), p["site_spacing"], cloud, p["mast_height"], p["site_capacity"])
    catalog = _catalog(cfg)
    frame = None
    if cloud is None:
        lon, lat = cfg.data["corridor"]["waypoints"][0]
        frame = LocalFrame(GeoPoint(lon, lat, 0.0))
    tensor = build_tensor(sites, catalog, sched, cloud, cfg.los(), cfg.decay(), cfg.acoustic(),
                          cfg.network(), frame)
    tensor.save(args.out)
    export.dump_json(export.site_records(sites), _sites_path(args.out))
    print(f"tensor {tensor.shape} written to {args.out}")


def _reliability_plan(cfg, tensor, sites, H, mode, exclude=()):
    catalog = [s for s in _catalog(cfg, exclude) if s.id in tensor.type_ids]
    sub = tensor.select_types([s.id for s in catalog])
    return reliability.plan(sub, catalog, sites, H, mode, cfg.node_budget), sub, catalog


def cmd_plan_reliability(args):
    cfg = _config(args)
    meta = _meta(cfg, _seed(args, cfg))
    tensor, sites = _load_tensor(args)
    H = args.H if args.H is not None else cfg.planner["H"]
    mode = args.mode or cfg.planner["mode"]
    try:
        plan, _, _ = _reliability_plan(cfg, tensor, sites, H, mode, args.exclude)
    except InfeasibleError as exc:
        _diagnose(args.out, exc, meta)
        raise
    export.dump_json(export.deployment_record(plan, meta), args.out)
    print(f"cost {plan.total_cost:.2f}, types {sorted(plan.types_used)}, min achieved {plan.min_achieved}")


def cmd_plan_robustness(args):
    cfg = _config(args)
    meta = _meta(cfg, _seed(args, cfg))
    tensor, _ = _load_tensor(args)
    existing = export.read_json(args.existing)
    counts = export.counts_from_record(existing)
    sigma = args.sigma if args.sigma is not None else cfg.planner["sigma"]
    catalog = [s for s in _catalog(cfg) if s.id in tensor.type_ids]
    sub = tensor.select_types([s.id for s in catalog])
    try:
        params = robustness.RobustnessParams.from_tensor(sub, catalog, sigma, cfg.planner["max_vert"])
        aug = robustness.augment(counts, params, cfg.node_budget)
    except InfeasibleError as exc:
        _diagnose(args.out, exc, meta)
        raise
    record = export.augmentation_record(aug, meta)
    record["sites"] = existing.get("sites", [])
    export.dump_json(record, args.out)
    print(f"added {aug.added_sets} sets, cost {aug.add_cost:.2f}")


def cmd_plan_resiliency(args):
    cfg = _config(args)
    meta = _meta(cfg, _seed(args, cfg))
    scen, hubs, units, travel = resiliency.load_scenario(args.scenario)
    detour = cfg.data["resiliency"]["detour"]
    try:
        sched = resiliency.schedule(scen, hubs, units, travel, detour, cfg.node_budget)
    except InfeasibleError as exc:
        _diagnose(args.out, exc, meta)
        raise
    report = resiliency.validate_schedule(sched, scen, units, hubs)
    export.dump_json(export.schedule_record(sched, resiliency.summarize(sched), meta, report), args.out)
    if args.gantt:
        text = f"# config_hash={meta['config_hash']} seed={meta['seed']}\n" + resiliency.gantt_csv(sched)
        Path(args.gantt).write_text(text, encoding="utf-8")
    print(f"{len(sched.dispatches)} dispatches, objective {sched.objective:.4f}")


def cmd_validate(args):
    record = export.read_json(args.artifact)
    kind = record.get("kind")
    problems = []
    if kind == "resiliency":
        if not args.scenario:
            raise UsageError("--scenario is required to validate a dispatch schedule")
        scen, hubs, units, travel = resiliency.load_scenario(args.scenario)
        if travel is None:
            travel = resiliency.all_travel_times(scen, hubs, units)
        sched = resiliency.DispatchSchedule(
            [(d["unit"], d["hub"], d["site"], d["start"]) for d in record["dispatches"]],
            {(a["unit"], a["site"], t) for a in record["active"] for t in a["steps"]}, travel)
        report = resiliency.validate_schedule(sched, scen, units, hubs)
        problems = [f"{fam}: {msg}" for fam, msgs in sorted(report.items()) for msg in msgs]
    elif kind in ("reliability", "robustness"):
        if not args.tensor:
            raise UsageError("--tensor is required to validate a sensor plan")
        cfg = _config(args)
        tensor, sites = _load_tensor(args)
        catalog = [s for s in _catalog(cfg) if s.id in tensor.type_ids]
        counts = export.counts_from_record(record)
        used = {t for (_, t) in counts}
        # unused types add nothing to any row, so drop them to keep checks small
        catalog = [s for s in catalog if s.id in used] or catalog
        sub = tensor.select_types([s.id for s in catalog])
        if kind == "reliability":
            plan = reliability.DeploymentPlan(counts, {sid: 1 for sid in record["active_sites"]},
                                              record["total_cost"], record["H"], record["mode"])
            plan.beta.update({s.id: 0 for s in sites if s.id not in plan.beta})
            achieved = reliability.validate_plan(plan, sub, record["mode"])
            problems = [f"step {t}: achieved {a:.6f} < {record['H']}" for t, a in enumerate(achieved)
                        if a is not None and a < record["H"] - 1e-9]
            problems += reliability.deployment_violations(plan, catalog, sites)
        else:
            params = robustness.RobustnessParams.from_tensor(sub, catalog, record["sigma"],
                                                             cfg.planner["max_vert"])
            aug = robustness.AugmentationPlan(
                {(e["site"], e["type"]): e["count"] for e in record["existing"]},
                {(e["site"], e["type"]): e["count"] for e in record["added"]},
                {s.id: int(s.id in record["active_sites"]) for s in sites}, record["add_cost"], record["sigma"])
            problems = [f"aircraft {r.aircraft} step {r.step}" for r in robustness.validate_augmentation(aug, params)
                        if not r.satisfied]
            problems += robustness.stacking_violations(aug, params)
    else:
        raise ValueError(f"{args.artifact}: unknown artifact kind {kind!r}")
    if problems:
        for p in problems[:50]:
            print(p)
        raise InfeasibleError(f"{len(problems)} violations", {"violations": problems[:200]})
    print("ok")


def cmd_export_geojson(args):
    record = export.read_json(args.plan)
    hubs = resiliency.load_scenario(args.scenario)[1] if args.scenario else ()
    export.dump_json(export.deployment_geojson(record, hubs), args.out)


def cmd_emit_plot(args):
    cfg = _config(args)
    meta = _meta(cfg, _seed(args, cfg))
    tensor, sites = _load_tensor(args)
    thresholds = args.H or cfg.planner["sweep_H"]
    rows = []
    for H in thresholds:
        plan, _, catalog = _reliability_plan(cfg, tensor, sites, H, cfg.planner["mode"], args.exclude)
        rows.append({"corridor": cfg.data["corridor"]["name"], "H": H,
                     "sensor_count": plan.sensor_count(catalog), "total_cost": plan.total_cost,
                     "types": sorted(plan.types_used)})
    Path(args.out).write_text(export.plot_csv(rows, meta), encoding="utf-8")
    print(f"{len(rows)} sweep points written to {args.out}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sam3r", description="Sensor-network planning for low-altitude surveillance.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(func=func)
        return p

    p = add("ingest-dsm", cmd_ingest_dsm, "parse a DSM CSV into a binary terrain cache")
    p.add_argument("dsm")
    p.add_argument("--out", required=True)
    p.add_argument("--cell-size", type=float, default=50.0)

    p = add("reclassify", cmd_reclassify, "relabel vegetation by height above ground")
    p.add_argument("input", help="terrain cache or DSM CSV")
    p.add_argument("--out", required=True, help="cache path, or a .csv path")
    p.add_argument("--radius", type=float, default=30.0)

    p = add("gen-schedule", cmd_gen_schedule, "generate a flight schedule CSV")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--demand-scale", type=float, default=1.0)
    p.add_argument("--out", required=True)

    p = add("build-tensor", cmd_build_tensor, "evaluate detection probabilities")
    p.add_argument("--config")
    p.add_argument("--schedule", required=True)
    p.add_argument("--terrain")
    p.add_argument("--out", required=True)

    p = add("plan-reliability", cmd_plan_reliability, "minimum-cost baseline placement")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--tensor", required=True)
    p.add_argument("--H", type=float)
    p.add_argument("--mode", choices=(reliability.AGGREGATE, reliability.PER_AIRCRAFT))
    p.add_argument("--exclude", nargs="*", default=[])
    p.add_argument("--out", required=True)

    p = add("plan-robustness", cmd_plan_robustness, "augment an existing plan for a perturbed schedule")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--tensor", required=True)
    p.add_argument("--existing", required=True)
    p.add_argument("--sigma", type=float)
    p.add_argument("--out", required=True)

    p = add("plan-resiliency", cmd_plan_resiliency, "dispatch backups for a failure scenario")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--scenario", required=True)
    p.add_argument("--gantt")
    p.add_argument("--out", required=True)

    p = add("validate", cmd_validate, "re-check a plan or schedule artifact")
    p.add_argument("artifact")
    p.add_argument("--config")
    p.add_argument("--tensor")
    p.add_argument("--scenario")

    p = add("export-geojson", cmd_export_geojson, "GeoJSON of sensors and hubs")
    p.add_argument("plan")
    p.add_argument("--scenario")
    p.add_argument("--out", required=True)

    p = add("emit-plot", cmd_emit_plot, "threshold sweep CSV (H, sensor count, cost)")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--tensor", required=True)
    p.add_argument("--H", type=float, nargs="*")
    p.add_argument("--exclude", nargs="*", default=[])
    p.add_argument("--out", required=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except UsageError as exc:
        print(f"sam3r: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InfeasibleError as exc:
        print(f"sam3r: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except BudgetExhaustedError as exc:
        print(f"sam3r: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (ConfigError, TerrainError, ScheduleError, OSError, ValueError, KeyError) as exc:
        print(f"sam3r: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
