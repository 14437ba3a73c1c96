"""Augmenting an existing deployment so every aircraft meets a detection threshold.

The per-unit factor ``theta`` in the detection rows is treated as a miss
probability (the same quantity as ``m`` in the detection tensor), which keeps
``sum n log(theta) <= log(1 - sigma / R_u)`` coherent: both sides are
non-positive and more sensors push the left side down.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .detection import DetectionTensor
from .errors import BudgetExhaustedError, InfeasibleError, TargetUnreachableError
from .ipsolver import IntegerProgram, Status, check_feasible, solve_bnb
from .reliability import DeploymentPlan

DEFAULT_MAX_VERT = 6


def add_name(site_id: str, type_id: str) -> str:
    return f"add[{site_id},{type_id}]"


def beta_name(site_id: str) -> str:
    return f"beta[{site_id}]"


@dataclass
class RobustnessParams:
    sigma: float
    R_u: np.ndarray            # (steps,)
    theta: np.ndarray          # (sites, types, aircraft, steps)
    present: np.ndarray        # (aircraft, steps)
    site_ids: tuple
    type_ids: tuple
    cost: np.ndarray           # (types,)
    vert: np.ndarray           # (types,)
    max_sets: np.ndarray       # (types,)
    max_vert: int = DEFAULT_MAX_VERT
    aircraft: tuple = ()

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if np.any((self.theta < 0) | (self.theta > 1)):
            raise ValueError("theta must lie in [0, 1]")
        if not self.aircraft:
            self.aircraft = tuple(f"k{k}" for k in range(self.theta.shape[2]))

    @classmethod
    def from_tensor(cls, tensor: DetectionTensor, catalog, sigma: float,
                    max_vert: int = DEFAULT_MAX_VERT) -> "RobustnessParams":
        if tuple(spec.id for spec in catalog) != tuple(tensor.type_ids):
            raise ValueError("sensor catalog does not match the detection tensor")
        return cls(sigma, tensor.rho_u.copy(), tensor.m.copy(), tensor.present.copy(),
                   tuple(tensor.site_ids), tuple(tensor.type_ids),
                   np.array([spec.set_cost for spec in catalog], float),
                   np.array([spec.vert for spec in catalog], float),
                   np.array([spec.max_sets for spec in catalog], int), max_vert,
                   tuple(tensor.aircraft))

    def without_aircraft(self, k: int) -> "RobustnessParams":
        keep = [j for j in range(self.theta.shape[2]) if j != k]
        return RobustnessParams(self.sigma, self.R_u, self.theta[:, :, keep], self.present[keep],
                                self.site_ids, self.type_ids, self.cost, self.vert, self.max_sets,
                                self.max_vert, tuple(self.aircraft[j] for j in keep))

    def with_sigma(self, sigma: float) -> "RobustnessParams":
        return RobustnessParams(sigma, self.R_u, self.theta, self.present, self.site_ids, self.type_ids,
                                self.cost, self.vert, self.max_sets, self.max_vert, self.aircraft)


@dataclass
class AugmentationPlan:
    n_exist: dict
    n_add: dict
    beta: dict
    add_cost: float
    sigma: float = 0.0
    report: list = field(default_factory=list)

    @property
    def n_total(self) -> dict:
        keys = set(self.n_exist) | set(self.n_add)
        return {key: self.n_exist.get(key, 0) + self.n_add.get(key, 0) for key in sorted(keys)}

    @property
    def added_sets(self) -> int:
        return int(sum(self.n_add.values()))


def _existing_counts(existing, params: RobustnessParams) -> np.ndarray:
    counts = np.zeros((len(params.site_ids), len(params.type_ids)), dtype=int)
    source = existing.n if isinstance(existing, DeploymentPlan) else existing
    for (sid, tid), v in source.items():
        if sid not in params.site_ids or tid not in params.type_ids:
            raise ValueError(f"existing sensors at unknown site/type ({sid}, {tid})")
        counts[params.site_ids.index(sid), params.type_ids.index(tid)] = int(v)
    return counts


def _log_theta(theta: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        out = np.log(theta)
    if np.any(np.isneginf(out)):
        raise ValueError("theta must be positive (apply the epsilon floor)")
    return out


def build_robustness_model(existing, params: RobustnessParams) -> IntegerProgram:
    """Integer program over additional set counts ``add[i,s]`` and activations.

    Existing counts enter as constants: their detection contribution moves to
    the right-hand side and sites hosting them are held active. Rows that the
    existing network satisfies for every non-negative addition are omitted.

    Raises:
        TargetUnreachableError: ``sigma >= R_u(t)`` at some step.
        InfeasibleError: an aircraft seen by no sensor at a step, or an
            existing network that already breaks a stacking limit.
    """
    bad = [t for t in range(len(params.R_u)) if params.sigma >= params.R_u[t]]
    if bad:
        raise TargetUnreachableError("detection threshold unreachable given server reliability",
                                     {"sigma": params.sigma, "steps": bad[:20]})
    n0 = _existing_counts(existing, params)
    sites, types = params.site_ids, params.type_ids
    over = [(sites[i], types[s]) for i in range(len(sites)) for s in range(len(types))
            if n0[i, s] > params.max_sets[s]]
    over += [(sites[i], "vert") for i in range(len(sites)) if params.vert @ n0[i] > params.max_vert]
    if over:
        raise InfeasibleError("existing network violates stacking limits", {"sites": over})

    ip = IntegerProgram("robustness")
    for i, sid in enumerate(sites):
        for s, tid in enumerate(types):
            ip.add_var(add_name(sid, tid), 0, int(params.max_sets[s] - n0[i, s]))
        hosts = n0[i].sum() > 0
        ip.add_binary(beta_name(sid), lb=1 if hosts else 0)
    ip.set_objective({add_name(sid, tid): params.cost[s] * params.vert[s]
                      for sid in sites for s, tid in enumerate(types)})

    logt = _log_theta(params.theta)
    uncovered = []
    K, T = params.present.shape
    for t in range(T):
        rhs0 = math.log(1.0 - params.sigma / params.R_u[t])
        for k in np.flatnonzero(params.present[:, t]):
            coef = logt[:, :, k, t]
            rhs = rhs0 - float(np.sum(coef * n0))
            row = {add_name(sites[i], types[s]): float(coef[i, s])
                   for i in range(len(sites)) for s in range(len(types))
                   if coef[i, s] != 0 and n0[i, s] < params.max_sets[s]}
            if rhs >= 0:
                continue
            if not row:
                uncovered.append({"aircraft": params.aircraft[k], "step": t})
                continue
            ip.add_constraint(row, rhs, f"detect[k={params.aircraft[k]},t={t}]")
    if uncovered:
        raise InfeasibleError("model structurally infeasible: aircraft not detectable at a step",
                              {"uncovered": uncovered[:50]})

    for i, sid in enumerate(sites):
        b = beta_name(sid)
        ip.add_constraint({**{add_name(sid, tid): params.vert[s] for s, tid in enumerate(types)},
                           b: -params.max_vert}, -float(params.vert @ n0[i]), f"vert[{sid}]")
        for s, tid in enumerate(types):
            ip.add_constraint({add_name(sid, tid): 1.0, b: -float(params.max_sets[s])},
                              -float(n0[i, s]), f"stack[{sid},{tid}]")
        ip.add_constraint({**{add_name(sid, tid): -1.0 for tid in types}, b: 1.0},
                          float(n0[i].sum()), f"min_deploy[{sid}]")
    return ip


def augment(existing, params: RobustnessParams, node_budget: int = 200_000) -> AugmentationPlan:
    """Cheapest additions keeping every existing sensor in place."""
    ip = build_robustness_model(existing, params)
    sol = solve_bnb(ip, node_budget)
    if sol.status is Status.INFEASIBLE:
        raise InfeasibleError("robustness model infeasible", {"sigma": params.sigma})
    if sol.status is Status.ABORTED:
        raise BudgetExhaustedError("node budget exhausted", {"nodes": sol.nodes,
                                                              "incumbent": sol.objective_value})
    if not check_feasible(ip, sol.assignment).ok:
        raise InfeasibleError("solver returned an infeasible assignment")
    n0 = _existing_counts(existing, params)
    n_exist, n_add = {}, {}
    for i, sid in enumerate(params.site_ids):
        for s, tid in enumerate(params.type_ids):
            if n0[i, s]:
                n_exist[(sid, tid)] = int(n0[i, s])
            v = sol.assignment[add_name(sid, tid)]
            if v:
                n_add[(sid, tid)] = int(v)
    beta = {sid: int(sol.assignment[beta_name(sid)]) for sid in params.site_ids}
    plan = AugmentationPlan(n_exist, n_add, beta, float(sol.objective_value), params.sigma)
    plan.report = validate_augmentation(plan, params)
    return plan


@dataclass(frozen=True)
class RowCheck:
    aircraft: str
    step: int
    present: bool
    lhs: float
    rhs: float

    @property
    def satisfied(self) -> bool:
        return (not self.present) or self.lhs <= self.rhs + 1e-9


def validate_augmentation(plan: AugmentationPlan, params: RobustnessParams) -> list[RowCheck]:
    """Re-evaluate the detection row for every (aircraft, step), present or not."""
    counts = np.zeros((len(params.site_ids), len(params.type_ids)))
    for (sid, tid), v in plan.n_total.items():
        counts[params.site_ids.index(sid), params.type_ids.index(tid)] = v
    logt = _log_theta(params.theta)
    out = []
    K, T = params.present.shape
    for k in range(K):
        for t in range(T):
            rhs = math.log(1.0 - params.sigma / params.R_u[t])
            if params.present[k, t]:
                lhs = float(np.sum(logt[:, :, k, t] * counts))
                out.append(RowCheck(params.aircraft[k], t, True, lhs, rhs))
            else:
                out.append(RowCheck(params.aircraft[k], t, False, 0.0, rhs))
    return out


def stacking_violations(plan: AugmentationPlan, params: RobustnessParams) -> list[str]:
    problems = []
    total = plan.n_total
    for i, sid in enumerate(params.site_ids):
        b = plan.beta.get(sid, 0)
        n = [total.get((sid, tid), 0) for tid in params.type_ids]
        if float(params.vert @ np.array(n)) > params.max_vert * b:
            problems.append(f"vert[{sid}]")
        for s, tid in enumerate(params.type_ids):
            if n[s] > params.max_sets[s] * b:
                problems.append(f"stack[{sid},{tid}]")
        if sum(n) < b:
            problems.append(f"min_deploy[{sid}]")
        if plan.n_exist and any(plan.n_exist.get((sid, tid), 0) for tid in params.type_ids) and b != 1:
            problems.append(f"existing_site_inactive[{sid}]")
    return problems
