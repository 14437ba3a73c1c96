"""Minimum-cost baseline placement meeting a system detection reliability target."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .detection import CandidateSite, DetectionTensor, SensorSpec
from .errors import BudgetExhaustedError, InfeasibleError, TargetUnreachableError
from .ipsolver import IntegerProgram, Solution, Status, check_feasible, solve_bnb

AGGREGATE = "aggregate"
PER_AIRCRAFT = "per_aircraft"


def n_name(site_id: str, type_id: str) -> str:
    return f"n[{site_id},{type_id}]"


def beta_name(site_id: str) -> str:
    return f"beta[{site_id}]"


@dataclass
class DeploymentPlan:
    """Installed set counts per (site, type) and site activations.

    ``achieved`` holds per-step achieved reliability; steps without aircraft
    are exempt and stored as ``None``.
    """

    n: dict
    beta: dict
    total_cost: float
    H: float = 0.0
    mode: str = AGGREGATE
    achieved: list = field(default_factory=list)
    sites: list = field(default_factory=list)
    catalog: list = field(default_factory=list)

    def count(self, site_id: str, type_id: str) -> int:
        return int(self.n.get((site_id, type_id), 0))

    @property
    def min_achieved(self) -> float | None:
        vals = [a for a in self.achieved if a is not None]
        return min(vals) if vals else None

    @property
    def types_used(self) -> set:
        return {s for (_, s), v in self.n.items() if v > 0}

    def sensor_count(self, catalog) -> int:
        size = {spec.id: spec.set_size for spec in catalog}
        return int(sum(size[s] * v for (_, s), v in self.n.items()))

    @classmethod
    def empty(cls, sites, catalog, H: float = 0.0) -> "DeploymentPlan":
        return cls({}, {site.id: 0 for site in sites}, 0.0, H, sites=list(sites), catalog=list(catalog))


def _check_alignment(tensor: DetectionTensor, catalog, sites) -> None:
    if tuple(site.id for site in sites) != tuple(tensor.site_ids):
        raise ValueError("site list does not match the detection tensor")
    if tuple(spec.id for spec in catalog) != tuple(tensor.type_ids):
        raise ValueError("sensor catalog does not match the detection tensor")


def _log_miss(tensor: DetectionTensor) -> np.ndarray:
    """``ln m`` where the aircraft is detected, 0 elsewhere (aircraft outside alpha)."""
    out = np.zeros(tensor.m.shape)
    det = tensor.q > 0
    out[det] = np.log(tensor.m[det])
    return out


def build_reliability_model(tensor: DetectionTensor, catalog: list[SensorSpec],
                            sites: list[CandidateSite], H: float,
                            mode: str = AGGREGATE) -> IntegerProgram:
    """Integer program for the baseline placement.

    ``mode="aggregate"`` writes one detection row per time step pooling every
    aircraft detected at that step; ``mode="per_aircraft"`` writes one row per
    (aircraft, step). Steps with no aircraft carry no row.

    Raises:
        TargetUnreachableError: ``H`` is not below the server reliability at
            every step.
        InfeasibleError: an occupied step (or aircraft) is seen by no sensor.
    """
    _check_alignment(tensor, catalog, sites)
    if mode not in (AGGREGATE, PER_AIRCRAFT):
        raise ValueError(f"unknown mode {mode!r}")
    if not H > 0:
        raise ValueError("reliability threshold H must be positive")
    bad = [t for t in range(tensor.n_steps) if H >= tensor.rho_u[t]]
    if bad:
        raise TargetUnreachableError("reliability target unreachable given server reliability",
                                     {"H": H, "steps": bad[:20], "rho_u": float(tensor.rho_u[bad[0]])})

    ip = IntegerProgram("reliability")
    for i, site in enumerate(sites):
        for s, spec in enumerate(catalog):
            ip.add_var(n_name(site.id, spec.id), 0, spec.max_sets)
        ip.add_binary(beta_name(site.id))
    ip.set_objective({n_name(site.id, spec.id): spec.set_cost for site in sites for spec in catalog})

    logm = _log_miss(tensor)
    uncovered = []
    for t in tensor.active_steps():
        rhs = math.log(1.0 - H / tensor.rho_u[t])
        if mode == AGGREGATE:
            groups = [(None, logm[:, :, :, t].sum(axis=2))]
        else:
            groups = [(k, logm[:, :, k, t]) for k in np.flatnonzero(tensor.present[:, t])]
        for k, coef in groups:
            row = {n_name(site.id, spec.id): float(coef[i, s])
                   for i, site in enumerate(sites) for s, spec in enumerate(catalog) if coef[i, s] != 0}
            label = f"detect[t={t}]" if k is None else f"detect[k={tensor.aircraft[k]},t={t}]"
            if not row:
                uncovered.append({"step": t} if k is None else {"step": t, "aircraft": tensor.aircraft[k]})
                continue
            ip.add_constraint(row, rhs, label)
    if uncovered:
        raise InfeasibleError("model structurally infeasible: occupied step with no detecting sensor",
                              {"uncovered": uncovered[:50]})

    for site in sites:
        b = beta_name(site.id)
        ip.add_constraint({**{n_name(site.id, spec.id): spec.set_size for spec in catalog}, b: -site.capacity},
                          0.0, f"capacity[{site.id}]")
        for spec in catalog:
            ip.add_constraint({n_name(site.id, spec.id): 1.0, b: -spec.max_sets}, 0.0,
                              f"link[{site.id},{spec.id}]")
        ip.add_constraint({**{n_name(site.id, spec.id): -1.0 for spec in catalog}, b: 1.0}, 0.0,
                          f"min_deploy[{site.id}]")
    return ip


def plan_from_solution(sol: Solution, tensor, catalog, sites, H, mode) -> DeploymentPlan:
    n = {}
    for site in sites:
        for spec in catalog:
            v = sol.assignment[n_name(site.id, spec.id)]
            if v:
                n[(site.id, spec.id)] = int(v)
    beta = {site.id: int(sol.assignment[beta_name(site.id)]) for site in sites}
    cost = sum(spec.set_cost * n.get((site.id, spec.id), 0) for site in sites for spec in catalog)
    plan = DeploymentPlan(n, beta, float(cost), H, mode, sites=list(sites), catalog=list(catalog))
    plan.achieved = validate_plan(plan, tensor, mode)
    return plan


def plan(tensor: DetectionTensor, catalog, sites, H: float, mode: str = AGGREGATE,
         node_budget: int = 200_000) -> DeploymentPlan:
    """Solve the placement model to optimality and attach achieved reliability."""
    ip = build_reliability_model(tensor, catalog, sites, H, mode)
    sol = solve_bnb(ip, node_budget)
    if sol.status is Status.INFEASIBLE:
        raise InfeasibleError("reliability model infeasible", {"H": H, "nodes": sol.nodes})
    if sol.status is Status.ABORTED:
        raise BudgetExhaustedError("node budget exhausted", {"nodes": sol.nodes,
                                                              "incumbent": sol.objective_value})
    report = check_feasible(ip, sol.assignment)
    if not report.ok:
        raise InfeasibleError("solver returned an infeasible assignment", {"violations": report.violations})
    return plan_from_solution(sol, tensor, catalog, sites, H, mode)


def validate_plan(plan: DeploymentPlan, tensor: DetectionTensor, mode: str | None = None) -> list:
    """Achieved reliability ``rho_u(t) * (1 - prod m^n)`` per step.

    In per-aircraft mode the minimum over aircraft present at the step is
    reported. Steps without aircraft yield ``None``.
    """
    mode = mode or plan.mode
    site_ids, type_ids = tensor.site_ids, tensor.type_ids
    unknown = [key for key in plan.n if key[0] not in site_ids or key[1] not in type_ids]
    if unknown:
        raise ValueError(f"plan references sites/types missing from the tensor: {unknown[:5]}")
    counts = np.zeros((len(site_ids), len(type_ids)))
    for (sid, tid), v in plan.n.items():
        counts[site_ids.index(sid), type_ids.index(tid)] = v
    logm = _log_miss(tensor)
    out = []
    for t in range(tensor.n_steps):
        ks = np.flatnonzero(tensor.present[:, t])
        if len(ks) == 0:
            out.append(None)
            continue
        if mode == AGGREGATE:
            log_prod = float(np.sum(logm[:, :, :, t].sum(axis=2) * counts))
            out.append(float(tensor.rho_u[t] * (1.0 - math.exp(log_prod))))
        else:
            vals = [tensor.rho_u[t] * (1.0 - math.exp(float(np.sum(logm[:, :, k, t] * counts)))) for k in ks]
            out.append(float(min(vals)))
    return out


def deployment_violations(plan: DeploymentPlan, catalog, sites) -> list[str]:
    """Capacity, linking and minimum-deployment checks on a plan."""
    problems = []
    for site in sites:
        b = plan.beta.get(site.id, 0)
        load = sum(spec.set_size * plan.count(site.id, spec.id) for spec in catalog)
        if load > site.capacity * b:
            problems.append(f"capacity[{site.id}]: {load} > {site.capacity * b}")
        for spec in catalog:
            if plan.count(site.id, spec.id) > spec.max_sets * b:
                problems.append(f"link[{site.id},{spec.id}]")
        if sum(plan.count(site.id, spec.id) for spec in catalog) < b:
            problems.append(f"min_deploy[{site.id}]")
    return problems
