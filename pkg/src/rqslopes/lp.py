"""Dense bounded-variable revised simplex.

Problems are of the form::

    optimize  c @ x
    subject   A[i] @ x  (==, <=, >=)  rhs[i]
              lower <= x <= upper

Bounds may be infinite. The solver works on an internal column layout
``[structural | slacks | artificials]`` and keeps an explicit basis
inverse, which is cheap because the problems we care about have few rows
(the quantile-regression dual has ``p + 1`` of them).

Pricing is Dantzig's rule with lowest-index tie-breaking; after
``3 * (k + m)`` iterations in a phase the solver falls back to Bland's rule,
which guarantees termination on degenerate problems.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

# All solver tolerances live here.
FEASIBILITY_TOL = 1e-8
OPTIMALITY_TOL = 1e-9
PIVOT_TOL = 1e-11
BOUND_TOL = 1e-9
REFACTOR_EVERY = 50
PARAMETRIC_WIDTH = 1e-10

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


class LpError(ValueError):
    """Malformed problem (dimension mismatch, crossed bounds, ...)."""


class LpIterationLimit(RuntimeError):
    pass


@dataclass
class LpProblem:
    objective: np.ndarray
    constraint_matrix: np.ndarray
    rhs: np.ndarray
    lower_bounds: np.ndarray | None = None
    upper_bounds: np.ndarray | None = None
    sense: str = "minimize"
    row_types: Sequence[str] | None = None

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float).ravel()
        m = self.objective.size
        A = np.asarray(self.constraint_matrix, dtype=float)
        if A.ndim == 1:
            A = A.reshape(1, -1)
        self.constraint_matrix = A
        self.rhs = np.atleast_1d(np.asarray(self.rhs, dtype=float))
        k = self.rhs.size
        if m < 1 or k < 1:
            raise LpError("need at least one variable and one constraint")
        if A.shape != (k, m):
            raise LpError(
                f"constraint matrix has shape {A.shape}, expected ({k}, {m})"
            )
        lo = np.zeros(m) if self.lower_bounds is None else self.lower_bounds
        hi = np.full(m, np.inf) if self.upper_bounds is None else self.upper_bounds
        self.lower_bounds = np.broadcast_to(np.asarray(lo, dtype=float), (m,)).copy()
        self.upper_bounds = np.broadcast_to(np.asarray(hi, dtype=float), (m,)).copy()
        if np.any(self.lower_bounds > self.upper_bounds):
            raise LpError("lower bound exceeds upper bound")
        if np.any(np.isposinf(self.lower_bounds)) or np.any(np.isneginf(self.upper_bounds)):
            raise LpError("bounds must admit a finite value")
        if self.sense not in ("minimize", "maximize"):
            raise LpError(f"unknown sense {self.sense!r}")
        if self.row_types is None:
            self.row_types = ("==",) * k
        self.row_types = tuple(self.row_types)
        if len(self.row_types) != k or not set(self.row_types) <= {"==", "<=", ">="}:
            raise LpError("row_types must hold one of '==', '<=', '>=' per row")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(self.rhs))
                and np.all(np.isfinite(self.objective))):
            raise LpError("non-finite coefficients")

    @property
    def n_vars(self) -> int:
        return self.objective.size

    @property
    def n_rows(self) -> int:
        return self.rhs.size


@dataclass
class LpSolution:
    """Result of :func:`solve`.

    ``duals`` and ``reduced_costs`` satisfy
    ``reduced_costs = objective - duals @ constraint_matrix`` in the
    problem's own sense. ``basis`` holds internal column indices: values
    below ``n_vars`` are structural, the rest are row slacks/artificials.
    """

    status: str
    variables: np.ndarray
    objective_value: float
    basis: tuple[int, ...]
    duals: np.ndarray = field(default_factory=lambda: np.empty(0))
    reduced_costs: np.ndarray = field(default_factory=lambda: np.empty(0))
    at_upper: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=bool))
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL

    def basis_key(self) -> tuple:
        """Hashable identity of the vertex: basis plus nonbasic bound pattern."""
        return (self.basis, tuple(np.flatnonzero(self.at_upper)))


def _layout(problem: LpProblem):
    """Internal columns ``[x | slacks]`` with bounds."""
    A, m, k = problem.constraint_matrix, problem.n_vars, problem.n_rows
    slack_rows = [i for i, t in enumerate(problem.row_types) if t != "=="]
    S = np.zeros((k, len(slack_rows)))
    for j, i in enumerate(slack_rows):
        S[i, j] = 1.0 if problem.row_types[i] == "<=" else -1.0
    full = np.hstack([A, S]) if slack_rows else A
    lo = np.concatenate([problem.lower_bounds, np.zeros(len(slack_rows))])
    hi = np.concatenate([problem.upper_bounds, np.full(len(slack_rows), np.inf)])
    return full, lo, hi


def _initial_point(lo, hi, at_upper):
    x = np.where(np.isfinite(lo), lo, np.where(np.isfinite(hi), hi, 0.0))
    if at_upper is not None:
        mask = np.zeros(lo.size, dtype=bool)
        mask[: len(at_upper)] = np.asarray(at_upper, dtype=bool)
        mask &= np.isfinite(hi)
        x[mask] = hi[mask]
    return x


class _Simplex:
    """Mutable solver state shared by both phases."""

    def __init__(self, A, b, lo, hi, x, basis):
        self.A = A
        self.b = b
        self.lo = lo
        self.hi = hi
        self.x = x
        self.basis = np.array(basis, dtype=np.intp)
        self.iterations = 0
        self.refactor()

    def refactor(self):
        B = self.A[:, self.basis]
        self.Binv = np.linalg.inv(B)
        nonbasic = np.ones(self.x.size, dtype=bool)
        nonbasic[self.basis] = False
        r = self.b - self.A[:, nonbasic] @ self.x[nonbasic]
        self.x[self.basis] = self.Binv @ r
        self._since_refactor = 0

    def prices(self, cost):
        pi = cost[self.basis] @ self.Binv
        d = cost - pi @ self.A
        d[self.basis] = 0.0
        return pi, d

    def run(self, cost, enterable, max_iter):
        A, lo, hi, x = self.A, self.lo, self.hi, self.x
        k, N = A.shape
        bland_after = 3 * (k + N)
        opt_tol = OPTIMALITY_TOL * max(1.0, float(np.max(np.abs(cost), initial=0.0)))
        lo_in = lo + BOUND_TOL
        hi_in = hi - BOUND_TOL
        local_iter = 0
        pi, d = self.prices(cost)
        while True:
            if local_iter >= max_iter:
                raise LpIterationLimit(f"simplex exceeded {max_iter} iterations")
            up = (d < -opt_tol) & (x < hi_in)
            up &= enterable
            down = (d > opt_tol) & (x > lo_in)
            down &= enterable
            score = np.abs(d)
            score[~(up | down)] = -1.0
            if local_iter < bland_after:
                j = int(score.argmax())
                if score[j] < 0:
                    return OPTIMAL, pi, d
            else:
                cand = np.flatnonzero(score >= 0)
                if cand.size == 0:
                    return OPTIMAL, pi, d
                j = int(cand[0])
            direction = 1.0 if up[j] else -1.0
            basis = self.basis
            delta = self.Binv @ A[:, j]
            if direction > 0:
                delta = -delta
            xb = x[basis]
            with np.errstate(divide="ignore", invalid="ignore"):
                ratios = np.where(
                    delta < -PIVOT_TOL, (xb - lo[basis]) / -delta,
                    np.where(delta > PIVOT_TOL, (hi[basis] - xb) / delta, np.inf),
                )
            np.maximum(ratios, 0.0, out=ratios)
            t_flip = hi[j] - lo[j]
            r = int(ratios.argmin())
            t_min = ratios[r]
            local_iter += 1
            self.iterations += 1
            if t_flip <= t_min:
                if not np.isfinite(t_flip):
                    return UNBOUNDED, pi, d
                x[j] = hi[j] if direction > 0 else lo[j]
                x[basis] = xb + delta * t_flip
                continue
            ties = np.flatnonzero(ratios <= t_min + 1e-12)
            if ties.size > 1:
                if local_iter <= bland_after:
                    r = int(ties[np.abs(delta[ties]).argmax()])
                else:
                    r = int(ties[basis[ties].argmin()])
            leaving = int(basis[r])
            x[basis] = xb + delta * t_min
            x[leaving] = lo[leaving] if delta[r] < 0 else hi[leaving]
            x[j] += direction * t_min
            w_r = -delta[r] if direction > 0 else delta[r]
            basis[r] = j
            self._since_refactor += 1
            if self._since_refactor >= REFACTOR_EVERY:
                self.refactor()
            else:
                w = -delta if direction > 0 else delta
                pivot_row = self.Binv[r] / w_r
                self.Binv -= np.outer(w, pivot_row)
                self.Binv[r] = pivot_row
            pi, d = self.prices(cost)


def solve(problem: LpProblem, at_upper: Sequence[bool] | None = None,
          max_iter: int | None = None) -> LpSolution:
    """Solve ``problem`` to a basic optimal vertex.

    ``at_upper`` optionally marks structural variables that should start at
    their (finite) upper bound; it only changes the starting vertex, never
    the optimal value. By default variables start on the bound favoured by
    their cost coefficient.
    """
    A0, lo0, hi0 = _layout(problem)
    k, N0 = A0.shape
    m = problem.n_vars
    sign = -1.0 if problem.sense == "maximize" else 1.0
    cost0 = np.zeros(N0)
    cost0[:m] = sign * problem.objective
    if max_iter is None:
        max_iter = max(1000, 50 * (k + N0))

    if at_upper is None:
        # start on the cost-favourable bound where one is finite
        at_upper = cost0[:m] < 0
    x0 = _initial_point(lo0, hi0, at_upper)
    resid = problem.rhs - A0 @ x0
    art_sign = np.where(resid >= 0, 1.0, -1.0)
    A = np.hstack([A0, np.diag(art_sign)])
    lo = np.concatenate([lo0, np.zeros(k)])
    hi = np.concatenate([hi0, np.full(k, np.inf)])
    x = np.concatenate([x0, np.abs(resid)])
    artificial = np.arange(N0, N0 + k)
    state = _Simplex(A, problem.rhs.copy(), lo, hi, x, artificial)

    enterable = np.ones(N0 + k, dtype=bool)
    enterable[artificial] = False
    scale = max(1.0, float(np.max(np.abs(problem.rhs))))
    phase1_cost = np.zeros(N0 + k)
    phase1_cost[artificial] = 1.0
    if np.any(np.abs(resid) > FEASIBILITY_TOL * scale):
        state.run(phase1_cost, enterable, max_iter)
        if state.x[artificial].sum() > FEASIBILITY_TOL * scale:
            return LpSolution(INFEASIBLE, state.x[:m].copy(), np.nan,
                              tuple(sorted(state.basis.tolist())),
                              iterations=state.iterations)
    # Artificials are pinned to zero; any still basic leave on the first
    # pivot that touches their row.
    hi[artificial] = 0.0
    state.x[artificial] = 0.0
    cost = np.concatenate([cost0, np.zeros(k)])
    status, pi, d = state.run(cost, enterable, max_iter)
    if status == OPTIMAL and state._since_refactor:
        state.refactor()
        pi, d = state.prices(cost)
    xs = state.x[:m].copy()
    if status == OPTIMAL:
        # snap nonbasic structural values exactly onto their bounds
        xs = np.clip(xs, problem.lower_bounds, problem.upper_bounds)
    at_up = np.zeros(m, dtype=bool)
    nonbasic = np.ones(m, dtype=bool)
    nonbasic[state.basis[state.basis < m]] = False
    at_up[nonbasic] = np.isfinite(problem.upper_bounds[nonbasic]) & (
        xs[nonbasic] == problem.upper_bounds[nonbasic]
    ) & (problem.upper_bounds[nonbasic] > problem.lower_bounds[nonbasic])
    if status == OPTIMAL:
        value = float(problem.objective @ xs)
    else:
        value = np.inf if problem.sense == "maximize" else -np.inf
    return LpSolution(
        status=status,
        variables=xs,
        objective_value=value,
        basis=tuple(sorted(state.basis.tolist())),
        duals=sign * pi,
        reduced_costs=sign * d[:m],
        at_upper=at_up,
        iterations=state.iterations,
    )


def evaluate_basis(problem: LpProblem, template: LpSolution) -> LpSolution:
    """Re-evaluate the vertex defined by ``template``'s basis on ``problem``.

    Used to evaluate one parametric piece at another parameter value: the
    nonbasic variables stay on the same bounds and the basic ones are
    recomputed from the (possibly shifted) right-hand side.
    """
    A0, lo0, hi0 = _layout(problem)
    k, N0 = A0.shape
    m = problem.n_vars
    A = np.hstack([A0, np.eye(k)])
    x = np.concatenate([_initial_point(lo0, hi0, template.at_upper), np.zeros(k)])
    basis = np.asarray(template.basis, dtype=np.intp)
    nonbasic = np.ones(N0 + k, dtype=bool)
    nonbasic[basis] = False
    x[basis] = np.linalg.solve(A[:, basis], problem.rhs - A[:, nonbasic] @ x[nonbasic])
    xs = x[:m]
    return LpSolution(OPTIMAL, xs, float(problem.objective @ xs), template.basis,
                      at_upper=template.at_upper.copy())


@dataclass
class ParametricPiece:
    """Maximal parameter interval carrying one optimal vertex."""

    alpha_low: float
    alpha_high: float
    solution: LpSolution


def solve_parametric(family: Callable[[float], LpProblem],
                     alpha_range: tuple[float, float],
                     grid_points: int = 101,
                     width: float = PARAMETRIC_WIDTH) -> list[ParametricPiece]:
    """Sweep a one-parameter LP family and return its optimal-basis pieces.

    The family is solved on a uniform grid; wherever two neighbouring grid
    solutions have different vertices the change point is located by
    bisection down to ``width``. A basis that appears and disappears
    entirely between two grid nodes with the same vertex is not detected.
    """
    a0, a1 = map(float, alpha_range)
    if not a0 < a1:
        raise ValueError("alpha_range must be increasing")
    cache: dict[float, LpSolution] = {}

    def at(a: float) -> LpSolution:
        if a not in cache:
            sol = solve(family(a))
            if not sol.optimal:
                raise LpError(f"family is {sol.status} at alpha={a!r}")
            cache[a] = sol
        return cache[a]

    def split(lo: float, hi: float, out: list[float]):
        if at(lo).basis_key() == at(hi).basis_key():
            return
        if hi - lo <= width:
            out.append(0.5 * (lo + hi))
            return
        mid = 0.5 * (lo + hi)
        split(lo, mid, out)
        split(mid, hi, out)

    grid = np.linspace(a0, a1, grid_points)
    cuts: list[float] = []
    for lo, hi in zip(grid[:-1], grid[1:]):
        split(float(lo), float(hi), cuts)

    edges = [a0, *cuts, a1]
    pieces: list[ParametricPiece] = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        sol = at(0.5 * (lo + hi))
        if pieces and pieces[-1].solution.basis_key() == sol.basis_key():
            pieces[-1].alpha_high = hi
        else:
            pieces.append(ParametricPiece(lo, hi, sol))
    return pieces
