"""Bounded-integer linear programs: model container, exact solvers and a checker.

Every program minimizes a linear objective subject to ``<=`` rows over
integer variables with finite bounds. ``solve_bnb`` is a depth-first
branch-and-bound using LP relaxations; ``solve_exhaustive`` enumerates the
whole box and serves as its certification oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

FEAS_TOL = 1e-6
INT_TOL = 1e-6
OBJ_RTOL = 1e-9


class SolverError(RuntimeError):
    pass


class BudgetExceeded(SolverError):
    pass


class Status(str, Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    ABORTED = "Aborted"


@dataclass(frozen=True)
class Variable:
    name: str
    lb: int
    ub: int
    kind: str = "integer"


@dataclass(frozen=True)
class Constraint:
    coeffs: dict
    rhs: float
    label: str = ""


class IntegerProgram:
    """Minimize ``objective . x`` subject to ``sum(coeffs . x) <= rhs`` rows."""

    def __init__(self, name: str = "model"):
        self.name = name
        self.variables: list[Variable] = []
        self.index: dict[str, int] = {}
        self.constraints: list[Constraint] = []
        self.objective: dict[str, float] = {}
        self.objective_constant = 0.0

    def add_var(self, name: str, lb: int = 0, ub: int = 1, kind: str = "integer") -> str:
        if name in self.index:
            raise ValueError(f"duplicate variable {name}")
        lb, ub = int(lb), int(ub)
        if lb > ub:
            raise ValueError(f"variable {name}: lower bound {lb} exceeds upper bound {ub}")
        if kind not in ("integer", "binary"):
            raise ValueError(f"unknown integrality {kind!r}")
        if kind == "binary" and not (0 <= lb and ub <= 1):
            raise ValueError(f"binary variable {name} must lie in [0, 1]")
        self.index[name] = len(self.variables)
        self.variables.append(Variable(name, lb, ub, kind))
        return name

    def add_binary(self, name: str, lb: int = 0, ub: int = 1) -> str:
        return self.add_var(name, lb, ub, "binary")

    def add_constraint(self, coeffs: dict, rhs: float, label: str = "") -> int:
        clean = {}
        for var, a in coeffs.items():
            if var not in self.index:
                raise KeyError(f"constraint {label or len(self.constraints)} references unknown variable {var}")
            if a != 0:
                clean[var] = clean.get(var, 0.0) + float(a)
        self.constraints.append(Constraint(clean, float(rhs), label))
        return len(self.constraints) - 1

    def set_objective(self, coeffs: dict, constant: float = 0.0) -> None:
        for var in coeffs:
            if var not in self.index:
                raise KeyError(f"objective references unknown variable {var}")
        self.objective = {v: float(a) for v, a in coeffs.items() if a != 0}
        self.objective_constant = float(constant)

    @property
    def n_vars(self) -> int:
        return len(self.variables)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lb = np.array([v.lb for v in self.variables], dtype=float)
        ub = np.array([v.ub for v in self.variables], dtype=float)
        return lb, ub

    def cost_vector(self) -> np.ndarray:
        c = np.zeros(self.n_vars)
        for v, a in self.objective.items():
            c[self.index[v]] = a
        return c

    def row_matrix(self, dense: bool = False):
        rows, cols, vals = [], [], []
        for r, con in enumerate(self.constraints):
            for v, a in con.coeffs.items():
                rows.append(r)
                cols.append(self.index[v])
                vals.append(a)
        A = sparse.csr_matrix((vals, (rows, cols)), shape=(len(self.constraints), self.n_vars))
        b = np.array([con.rhs for con in self.constraints], dtype=float)
        return (A.toarray() if dense else A), b

    def evaluate(self, assignment: dict) -> float:
        return self.objective_constant + sum(a * assignment[v] for v, a in self.objective.items())

    def vector(self, assignment: dict) -> np.ndarray:
        missing = [v.name for v in self.variables if v.name not in assignment]
        if missing:
            raise KeyError(f"assignment is missing variables: {missing[:5]}")
        return np.array([assignment[v.name] for v in self.variables], dtype=float)

    def permuted(self, order) -> "IntegerProgram":
        """Copy with variables declared in ``order`` (a permutation of indices)."""
        out = IntegerProgram(self.name)
        for j in order:
            v = self.variables[j]
            out.add_var(v.name, v.lb, v.ub, v.kind)
        for con in self.constraints:
            out.add_constraint(con.coeffs, con.rhs, con.label)
        out.set_objective(self.objective, self.objective_constant)
        return out

    def to_lp(self) -> str:
        """Render in CPLEX LP format for cross-checking with external solvers."""
        def term(a, name, first):
            sign = "-" if a < 0 else ("" if first else "+")
            return f"{sign} {abs(a):.12g} {_lp_name(name)}".strip()

        def expr(coeffs):
            if not coeffs:
                return "0 " + _lp_name(self.variables[0].name) if self.variables else "0"
            return " ".join(term(a, v, i == 0) for i, (v, a) in enumerate(coeffs.items()))

        lines = [f"\\ {self.name}", "Minimize", f" obj: {expr(self.objective)}", "Subject To"]
        for r, con in enumerate(self.constraints):
            lines.append(f" c{r}: {expr(con.coeffs)} <= {con.rhs:.12g}")
        lines.append("Bounds")
        for v in self.variables:
            lines.append(f" {v.lb} <= {_lp_name(v.name)} <= {v.ub}")
        gens = [_lp_name(v.name) for v in self.variables if v.kind == "integer"]
        bins = [_lp_name(v.name) for v in self.variables if v.kind == "binary"]
        if gens:
            lines += ["General", " " + " ".join(gens)]
        if bins:
            lines += ["Binary", " " + " ".join(bins)]
        lines.append("End")
        return "\n".join(lines) + "\n"


def _lp_name(name: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "_." else "_" for ch in name)


@dataclass
class Solution:
    status: Status
    assignment: dict = field(default_factory=dict)
    objective_value: float | None = None
    nodes: int = 0

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


@dataclass
class FeasibilityReport:
    violations: list = field(default_factory=list)        # (row index, slack)
    bound_violations: list = field(default_factory=list)  # (variable, value)

    @property
    def ok(self) -> bool:
        return not self.violations and not self.bound_violations


def check_feasible(ip: IntegerProgram, assignment: dict, tol: float = FEAS_TOL) -> FeasibilityReport:
    """Re-evaluate every row and bound of ``ip`` at ``assignment``.

    Slack is ``rhs - lhs``; rows with slack below ``-tol`` are reported.
    """
    report = FeasibilityReport()
    missing = [v.name for v in ip.variables if v.name not in assignment]
    if missing:
        raise KeyError(f"assignment is missing variables: {missing[:5]}")
    for v in ip.variables:
        val = assignment[v.name]
        if val < v.lb or val > v.ub or val != int(val):
            report.bound_violations.append((v.name, val))
    for r, con in enumerate(ip.constraints):
        lhs = math.fsum(a * assignment[v] for v, a in con.coeffs.items())
        slack = con.rhs - lhs
        if slack < -tol:
            report.violations.append((r, slack))
    return report


def _same_objective(a: float, b: float) -> bool:
    return abs(a - b) <= OBJ_RTOL * max(1.0, abs(a), abs(b))


def objectives_match(a: Solution, b: Solution) -> bool:
    if a.status != b.status:
        return False
    if a.status is Status.INFEASIBLE:
        return True
    return _same_objective(a.objective_value, b.objective_value)


# -- exhaustive oracle ---------------------------------------------------------

def domain_size(ip: IntegerProgram) -> int:
    size = 1
    for v in ip.variables:
        size *= v.ub - v.lb + 1
    return size


def solve_exhaustive(ip: IntegerProgram, domain_budget: int = 1 << 22,
                     chunk: int = 1 << 16) -> Solution:
    """Enumerate every integer point of the bounding box.

    Ties keep the first minimizer in lexicographic order of the declared
    variables. Raises ``BudgetExceeded`` when the box is larger than
    ``domain_budget``.
    """
    total = domain_size(ip)
    if total > domain_budget:
        raise BudgetExceeded(f"domain of {total} points exceeds budget {domain_budget}")
    n = ip.n_vars
    lb = np.array([v.lb for v in ip.variables], dtype=np.int64)
    sizes = np.array([v.ub - v.lb + 1 for v in ip.variables], dtype=np.int64)
    A, b = ip.row_matrix(dense=True)
    c = ip.cost_vector()
    best_val, best_x = math.inf, None
    for start in range(0, total, chunk):
        idx = np.arange(start, min(total, start + chunk), dtype=np.int64)
        X = np.empty((len(idx), n), dtype=np.int64)
        rem = idx.copy()
        for j in range(n - 1, -1, -1):
            X[:, j] = lb[j] + rem % sizes[j]
            rem //= sizes[j]
        Xf = X.astype(float)
        ok = np.all(Xf @ A.T <= b + FEAS_TOL, axis=1) if len(b) else np.ones(len(idx), bool)
        if not ok.any():
            continue
        vals = Xf[ok] @ c
        j = int(np.argmin(vals))
        if vals[j] < best_val - OBJ_RTOL * max(1.0, abs(best_val) if math.isfinite(best_val) else 1.0):
            best_val = float(vals[j])
            best_x = X[ok][j]
    if best_x is None:
        return Solution(Status.INFEASIBLE, nodes=total)
    assignment = {v.name: int(best_x[j]) for j, v in enumerate(ip.variables)}
    return Solution(Status.OPTIMAL, assignment, ip.evaluate(assignment), total)


# -- branch and bound ----------------------------------------------------------

class _Relaxation:
    def __init__(self, ip: IntegerProgram):
        self.A, self.b = ip.row_matrix()
        self.Ad = self.A.toarray() if self.A.shape[0] * self.A.shape[1] <= 200_000 else None
        self.c = ip.cost_vector()
        self.const = ip.objective_constant
        self.integral_objective = bool(np.all(self.c == np.round(self.c))) and float(self.const).is_integer()

    def feasible(self, x: np.ndarray) -> bool:
        if self.A.shape[0] == 0:
            return True
        lhs = self.Ad @ x if self.Ad is not None else self.A @ x
        return bool(np.all(lhs <= self.b + FEAS_TOL))

    def solve(self, lb: np.ndarray, ub: np.ndarray):
        """Return ``(status, bound, x)`` with status in {'ok', 'infeasible', 'failed'}."""
        if self.A.shape[0] == 0:
            x = np.where(self.c >= 0, lb, ub)
            return "ok", float(self.c @ x), x
        res = linprog(self.c, A_ub=self.A, b_ub=self.b, bounds=np.column_stack([lb, ub]),
                      method="highs")
        if res.status == 2:
            return "infeasible", math.inf, None
        if res.status != 0 or res.x is None:
            return "failed", float(np.minimum(self.c * lb, self.c * ub).sum()), None
        return "ok", float(res.fun), np.asarray(res.x)


def solve_bnb(ip: IntegerProgram, node_budget: int = 200_000) -> Solution:
    """Depth-first branch-and-bound with LP relaxation bounds.

    Branches on the most fractional variable (lowest index on ties) and
    explores the nearer rounding first. If the relaxation cannot be solved at
    a node, the coefficient-sign bound is used and the first unfixed variable
    is split at its midpoint. Exhausting ``node_budget`` returns ``Aborted``
    with the best incumbent found so far.
    """
    relax = _Relaxation(ip)
    lb0, ub0 = ip.bounds()
    best_val, best_x = math.inf, None
    stack = [(lb0, ub0)]
    nodes = 0

    def prunable(bound: float) -> bool:
        return best_x is not None and bound >= best_val - OBJ_RTOL * max(1.0, abs(best_val))

    def offer(x: np.ndarray) -> None:
        nonlocal best_val, best_x
        if relax.feasible(x):
            val = float(relax.c @ x)
            if best_x is None or val < best_val - OBJ_RTOL * max(1.0, abs(best_val)):
                best_val, best_x = val, x

    while stack:
        if nodes >= node_budget:
            return _finish(ip, relax, best_x, Status.ABORTED, nodes)
        lb, ub = stack.pop()
        nodes += 1
        status, bound, x = relax.solve(lb, ub)
        if status == "infeasible":
            continue
        if relax.integral_objective and math.isfinite(bound):
            bound = math.ceil(bound - 1e-7)
        if prunable(bound):
            continue

        if status == "failed":
            free = np.flatnonzero(lb < ub)
            if len(free) == 0:
                offer(lb.copy())
                continue
            j = int(free[0])
            mid = math.floor((lb[j] + ub[j]) / 2)
            lo_ub, hi_lb = ub.copy(), lb.copy()
            lo_ub[j], hi_lb[j] = mid, mid + 1
            stack.append((hi_lb, ub))
            stack.append((lb, lo_ub))
            continue

        x = np.clip(x, lb, ub)
        xr = np.round(x)
        frac = np.abs(x - xr)
        fractional = np.flatnonzero(frac > INT_TOL)
        if len(fractional) == 0:
            before = best_x
            offer(xr)
            if best_x is not before or relax.feasible(xr):
                continue
            # rounding broke a row: split the first unfixed variable instead
            free = np.flatnonzero(lb < ub)
            if len(free) == 0:
                continue
            j = int(free[0])
            v = xr[j]
            parts = []
            if v > lb[j]:
                u = ub.copy(); u[j] = v - 1; parts.append((lb, u))
            if v < ub[j]:
                l2 = lb.copy(); l2[j] = v + 1; parts.append((l2, ub))
            l3, u3 = lb.copy(), ub.copy()
            l3[j] = u3[j] = v
            parts.append((l3, u3))
            stack.extend(parts)
            continue

        offer(np.clip(np.ceil(x - INT_TOL), lb, ub))
        offer(np.clip(xr, lb, ub))
        if prunable(bound):
            continue

        dist = np.abs(frac[fractional] - 0.5)
        j = int(fractional[np.argmin(dist)])
        v = x[j]
        down_ub = ub.copy()
        down_ub[j] = math.floor(v)
        up_lb = lb.copy()
        up_lb[j] = math.ceil(v)
        down, up = (lb, down_ub), (up_lb, ub)
        if v - math.floor(v) >= 0.5:
            stack.append(down)
            stack.append(up)
        else:
            stack.append(up)
            stack.append(down)

    return _finish(ip, relax, best_x, Status.OPTIMAL if best_x is not None else Status.INFEASIBLE, nodes)


def _finish(ip, relax, best_x, status, nodes) -> Solution:
    if best_x is None:
        return Solution(status, {}, None, nodes)
    assignment = {v.name: int(round(best_x[j])) for j, v in enumerate(ip.variables)}
    return Solution(status, assignment, ip.evaluate(assignment), nodes)


def solve(ip: IntegerProgram, node_budget: int = 200_000) -> Solution:
    return solve_bnb(ip, node_budget)
