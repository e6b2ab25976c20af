"""Linear feasibility tests and the bisection driver built on them.

Feasibility problems have the form ``A_ub x <= b_ub, A_eq x = b_eq, x >= 0``.
Small problems are decided exactly by a phase-one simplex over
``fractions.Fraction``; larger ones go to scipy's HiGHS backend.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, List, Literal, Optional

import numpy as np
from scipy.optimize import linprog

from .exceptions import BisectionBracketError

LOGGER = logging.getLogger(__name__)

EXACT_SIZE_LIMIT = 600
Method = Literal["auto", "exact", "highs"]


@dataclass(frozen=True)
class FeasibilityResult:
    """Outcome of one feasibility test.

    Attributes:
        feasible: Whether a point satisfying all constraints exists.
        point: A feasible point, when one was found.
        method: Backend that decided the problem.
        residual: Largest constraint violation of ``point`` in float arithmetic.
    """

    feasible: bool
    point: Optional[np.ndarray]
    method: str
    residual: float = 0.0


@dataclass(frozen=True)
class BisectionResult:
    """Smallest feasible parameter found by bisection, with its bracket."""

    value: float
    lower: float
    upper: float
    point: np.ndarray
    iterations: int
    method: str


class RationalSimplex:
    """Phase-one simplex over exact rationals with Bland's pivoting rule.

    The constructor takes equality constraints ``a x = b, x >= 0``; artificial
    variables are appended for every row and their sum is minimized.
    """

    def __init__(self, a: List[List[Fraction]], b: List[Fraction]) -> None:
        self.m = len(b)
        self.n = len(a[0]) if a else 0
        rows = []
        for i in range(self.m):
            row = list(a[i])
            rhs = b[i]
            if rhs < 0:
                row = [-v for v in row]
                rhs = -rhs
            artificial = [Fraction(0)] * self.m
            artificial[i] = Fraction(1)
            rows.append(row + artificial + [rhs])
        self.tableau = rows
        self.basis = [self.n + i for i in range(self.m)]
        width = self.n + self.m
        # Reduced costs of the phase-one objective sum(artificials).
        self.cost = [Fraction(0)] * (width + 1)
        for row in rows:
            for j in range(self.n):
                self.cost[j] -= row[j]
            self.cost[width] -= row[width]
        self.iterations = 0

    def _entering(self) -> Optional[int]:
        for j in range(self.n + self.m):
            if self.cost[j] < 0:
                return j
        return None

    def _leaving(self, col: int) -> Optional[int]:
        width = self.n + self.m
        best_row = None
        best_ratio: Optional[Fraction] = None
        for i, row in enumerate(self.tableau):
            if row[col] <= 0:
                continue
            ratio = row[width] / row[col]
            if (
                best_ratio is None
                or ratio < best_ratio
                or (ratio == best_ratio and self.basis[i] < self.basis[best_row])  # type: ignore[index]
            ):
                best_ratio = ratio
                best_row = i
        return best_row

    def _pivot(self, row_index: int, col: int) -> None:
        pivot_row = self.tableau[row_index]
        pivot = pivot_row[col]
        pivot_row[:] = [v / pivot for v in pivot_row]
        for i, row in enumerate(self.tableau):
            if i != row_index and row[col] != 0:
                factor = row[col]
                row[:] = [v - factor * p for v, p in zip(row, pivot_row)]
        factor = self.cost[col]
        if factor != 0:
            self.cost = [v - factor * p for v, p in zip(self.cost, pivot_row)]
        self.basis[row_index] = col
        self.iterations += 1

    def solve(self) -> Optional[List[Fraction]]:
        """Return a feasible point of the original variables, or ``None``."""
        while True:
            col = self._entering()
            if col is None:
                break
            row = self._leaving(col)
            if row is None:
                # Phase one is bounded below by zero.
                break
            self._pivot(row, col)
        if -self.cost[self.n + self.m] != 0:
            return None
        point = [Fraction(0)] * self.n
        width = self.n + self.m
        for i, var in enumerate(self.basis):
            if var < self.n:
                point[var] = self.tableau[i][width]
        return point


def _residual(
    point: np.ndarray,
    a_ub: Optional[np.ndarray],
    b_ub: Optional[np.ndarray],
    a_eq: Optional[np.ndarray],
    b_eq: Optional[np.ndarray],
) -> float:
    worst = max(0.0, float(-point.min())) if point.size else 0.0
    if a_ub is not None and b_ub is not None and a_ub.size:
        worst = max(worst, float(np.max(a_ub @ point - b_ub)))
    if a_eq is not None and b_eq is not None and a_eq.size:
        worst = max(worst, float(np.max(np.abs(a_eq @ point - b_eq))))
    return worst


def _solve_exact(
    num_vars: int,
    a_ub: Optional[np.ndarray],
    b_ub: Optional[np.ndarray],
    a_eq: Optional[np.ndarray],
    b_eq: Optional[np.ndarray],
) -> FeasibilityResult:
    ub_rows = 0 if a_ub is None else a_ub.shape[0]
    rows: List[List[Fraction]] = []
    rhs: List[Fraction] = []
    for i in range(ub_rows):
        slack = [Fraction(0)] * ub_rows
        slack[i] = Fraction(1)
        rows.append([Fraction(float(v)) for v in a_ub[i]] + slack)  # type: ignore[index]
        rhs.append(Fraction(float(b_ub[i])))  # type: ignore[index]
    if a_eq is not None and b_eq is not None:
        for i in range(a_eq.shape[0]):
            rows.append([Fraction(float(v)) for v in a_eq[i]] + [Fraction(0)] * ub_rows)
            rhs.append(Fraction(float(b_eq[i])))
    if not rows:
        return FeasibilityResult(True, np.zeros(num_vars), "exact")
    solver = RationalSimplex(rows, rhs)
    solution = solver.solve()
    if solution is None:
        return FeasibilityResult(False, None, "exact")
    point = np.array([float(v) for v in solution[:num_vars]])
    return FeasibilityResult(True, point, "exact", _residual(point, a_ub, b_ub, a_eq, b_eq))


def _solve_highs(
    num_vars: int,
    a_ub: Optional[np.ndarray],
    b_ub: Optional[np.ndarray],
    a_eq: Optional[np.ndarray],
    b_eq: Optional[np.ndarray],
) -> FeasibilityResult:
    result = linprog(
        c=np.zeros(num_vars),
        A_ub=a_ub,
        b_ub=b_ub,
        A_eq=a_eq,
        b_eq=b_eq,
        bounds=(0, None),
        method="highs",
    )
    if result.status == 0:
        point = np.asarray(result.x, dtype=float)
        return FeasibilityResult(True, point, "highs", _residual(point, a_ub, b_ub, a_eq, b_eq))
    if result.status != 2:
        LOGGER.warning("HiGHS ended with status %s: %s", result.status, result.message)
    return FeasibilityResult(False, None, "highs")


def find_feasible_point(
    num_vars: int,
    a_ub: Optional[np.ndarray] = None,
    b_ub: Optional[np.ndarray] = None,
    a_eq: Optional[np.ndarray] = None,
    b_eq: Optional[np.ndarray] = None,
    method: Method = "auto",
    exact_limit: int = EXACT_SIZE_LIMIT,
) -> FeasibilityResult:
    """Decide feasibility of ``A_ub x <= b_ub, A_eq x = b_eq, x >= 0``.

    Args:
        num_vars: Number of variables.
        a_ub: Inequality matrix.
        b_ub: Inequality right-hand side.
        a_eq: Equality matrix.
        b_eq: Equality right-hand side.
        method: ``exact`` pivots over rationals, ``highs`` calls scipy, ``auto``
            picks exact pivoting when rows times columns is at most ``exact_limit``.
        exact_limit: Size threshold used by ``auto``.

    Returns:
        The feasibility verdict with a witness point.
    """
    rows = (0 if a_ub is None else a_ub.shape[0]) + (0 if a_eq is None else a_eq.shape[0])
    if method == "auto":
        method = "exact" if rows * (num_vars + rows) <= exact_limit else "highs"
    if method == "exact":
        return _solve_exact(num_vars, a_ub, b_ub, a_eq, b_eq)
    return _solve_highs(num_vars, a_ub, b_ub, a_eq, b_eq)


def bisect_feasibility(
    test: Callable[[float], FeasibilityResult],
    lower: float,
    upper: float,
    rel_tol: float = 1e-9,
    max_iter: int = 200,
) -> BisectionResult:
    """Smallest parameter ``c`` in ``[lower, upper]`` for which ``test(c)`` is feasible.

    Feasibility must be monotone in ``c``.

    Raises:
        BisectionBracketError: If ``upper`` is infeasible.
    """
    high = test(upper)
    if not high.feasible or high.point is None:
        raise BisectionBracketError("upper end of the bracket is infeasible", (lower, upper))
    low_result = test(lower)
    if low_result.feasible and low_result.point is not None:
        return BisectionResult(lower, lower, lower, low_result.point, 0, low_result.method)
    point = high.point
    iterations = 0
    while upper - lower > rel_tol * max(abs(upper), 1e-300) and iterations < max_iter:
        mid = 0.5 * (lower + upper)
        result = test(mid)
        if result.feasible and result.point is not None:
            upper, point = mid, result.point
        else:
            lower = mid
        iterations += 1
    LOGGER.debug("Bisection converged to [%r, %r] in %d steps", lower, upper, iterations)
    return BisectionResult(upper, lower, upper, point, iterations, high.method)
