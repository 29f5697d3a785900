"""Exact MILP solving: in-tree branch-and-bound over LP relaxations, or HiGHS"""

from typing import List, NamedTuple, Optional
import logging

import numpy as np
from scipy import sparse
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

from app.exceptions import ConfigurationError

logger = logging.getLogger(__name__)

INTEGRALITY_TOL = 1e-6
BACKENDS = ("branch_and_bound", "highs")


class MilpProblem:
    """minimize c @ x  s.t.  A_ub x <= b_ub,  A_eq x == b_eq,  lb <= x <= ub

    Columns flagged in `integrality` must take integer values.
    """

    def __init__(
        self,
        c,
        A_ub=None,
        b_ub=None,
        A_eq=None,
        b_eq=None,
        lb=None,
        ub=None,
        integrality=None,
    ):
        self.c = np.asarray(c, dtype=float)
        n = self.c.size
        self.A_ub = sparse.csr_matrix(A_ub) if A_ub is not None else sparse.csr_matrix((0, n))
        self.b_ub = np.asarray(b_ub if b_ub is not None else [], dtype=float)
        self.A_eq = sparse.csr_matrix(A_eq) if A_eq is not None else sparse.csr_matrix((0, n))
        self.b_eq = np.asarray(b_eq if b_eq is not None else [], dtype=float)
        self.lb = np.zeros(n) if lb is None else np.asarray(lb, dtype=float)
        self.ub = np.full(n, np.inf) if ub is None else np.asarray(ub, dtype=float)
        self.integrality = np.zeros(n, dtype=bool) if integrality is None else np.asarray(integrality, dtype=bool)

    @property
    def size(self) -> int:
        return self.c.size


class MilpResult(NamedTuple):
    status: str  # optimal | infeasible | node_limit | error
    x: Optional[np.ndarray]
    fun: float
    path: str
    nodes: int = 0


def _lp(problem: MilpProblem, lb: np.ndarray, ub: np.ndarray):
    has_ub = problem.A_ub.shape[0] > 0
    has_eq = problem.A_eq.shape[0] > 0
    return linprog(
        problem.c,
        A_ub=problem.A_ub if has_ub else None,
        b_ub=problem.b_ub if has_ub else None,
        A_eq=problem.A_eq if has_eq else None,
        b_eq=problem.b_eq if has_eq else None,
        bounds=np.column_stack([lb, ub]),
        method="highs-ds",
    )


class MilpSolver:
    """Stateless MILP front end; safe to share across threads"""

    def __init__(self, backend: str = "branch_and_bound", gap: float = 0.0, max_nodes: int = 100_000):
        if backend not in BACKENDS:
            raise ConfigurationError(f"unknown MILP backend {backend!r}, expected one of {BACKENDS}")
        self.backend = backend
        self.gap = gap
        self.max_nodes = max_nodes

    def solve_lp(self, problem: MilpProblem) -> MilpResult:
        """LP relaxation (integrality ignored)"""
        res = _lp(problem, problem.lb, problem.ub)
        if res.status == 0:
            return MilpResult("optimal", res.x, float(res.fun), "lp", 1)
        if res.status == 2:
            return MilpResult("infeasible", None, float("inf"), "lp", 1)
        logger.warning(f"LP solve ended with status {res.status}: {res.message}")
        return MilpResult("error", None, float("inf"), "lp", 1)

    def solve(self, problem: MilpProblem) -> MilpResult:
        if not problem.integrality.any():
            return self.solve_lp(problem)
        if self.backend == "highs":
            return self._highs(problem)
        return self._branch_and_bound(problem)

    def _highs(self, problem: MilpProblem) -> MilpResult:
        constraints = []
        if problem.A_ub.shape[0]:
            constraints.append(LinearConstraint(problem.A_ub, -np.inf, problem.b_ub))
        if problem.A_eq.shape[0]:
            constraints.append(LinearConstraint(problem.A_eq, problem.b_eq, problem.b_eq))
        res = milp(
            problem.c,
            constraints=constraints,
            integrality=problem.integrality.astype(int),
            bounds=Bounds(problem.lb, problem.ub),
            options={"mip_rel_gap": self.gap, "node_limit": self.max_nodes},
        )
        if res.status == 0:
            return MilpResult("optimal", res.x, float(res.fun), "highs", 0)
        if res.status == 2:
            return MilpResult("infeasible", None, float("inf"), "highs", 0)
        if res.x is not None:
            return MilpResult("node_limit", res.x, float(res.fun), "highs", 0)
        logger.warning(f"HiGHS MILP ended with status {res.status}: {res.message}")
        return MilpResult("error", None, float("inf"), "highs", 0)

    def _branch_and_bound(self, problem: MilpProblem) -> MilpResult:
        """Depth-first search, branching on the most fractional integer column"""
        int_cols = np.flatnonzero(problem.integrality)
        best_x: Optional[np.ndarray] = None
        best_fun = np.inf
        stack: List = [(problem.lb.copy(), problem.ub.copy())]
        nodes = 0

        while stack:
            if nodes >= self.max_nodes:
                logger.warning(f"Branch-and-bound node limit {self.max_nodes} reached")
                status = "node_limit" if best_x is not None else "error"
                return MilpResult(status, best_x, float(best_fun), "branch_and_bound", nodes)
            lb, ub = stack.pop()
            nodes += 1
            res = _lp(problem, lb, ub)
            if res.status != 0:
                continue
            bound = float(res.fun)
            if best_x is not None and bound >= best_fun - max(self.gap * abs(best_fun), 1e-9):
                continue

            values = res.x[int_cols]
            frac = np.abs(values - np.round(values))
            if frac.max(initial=0.0) <= INTEGRALITY_TOL:
                x = res.x.copy()
                x[int_cols] = np.round(values)
                best_x, best_fun = x, bound
                continue

            pick = int(np.argmax(frac))
            col = int_cols[pick]
            value = values[pick]
            down_ub = ub.copy()
            down_ub[col] = np.floor(value)
            up_lb = lb.copy()
            up_lb[col] = np.ceil(value)
            # the child nearer the relaxed value is explored first
            if value - np.floor(value) >= 0.5:
                stack.append((lb, down_ub))
                stack.append((up_lb, ub))
            else:
                stack.append((up_lb, ub))
                stack.append((lb, down_ub))

        if best_x is None:
            return MilpResult("infeasible", None, float("inf"), "branch_and_bound", nodes)
        return MilpResult("optimal", best_x, float(best_fun), "branch_and_bound", nodes)
