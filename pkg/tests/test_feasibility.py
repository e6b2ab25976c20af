"""Tests for the linear feasibility backends and the bisection driver."""

from fractions import Fraction

import numpy as np
import pytest

from coverlab.exceptions import BisectionBracketError
from coverlab.feasibility import (
    FeasibilityResult,
    RationalSimplex,
    bisect_feasibility,
    find_feasible_point,
)


@pytest.mark.parametrize("method", ["exact", "highs"])
def test_feasible_simplex_point(method: str) -> None:
    result = find_feasible_point(
        2,
        a_ub=np.array([[1.0, 0.0]]),
        b_ub=np.array([0.3]),
        a_eq=np.ones((1, 2)),
        b_eq=np.ones(1),
        method=method,
    )

    assert result.feasible
    assert result.method == method
    assert result.point is not None
    assert result.point.sum() == pytest.approx(1.0)
    assert result.point[0] <= 0.3 + 1e-9
    assert result.residual <= 1e-9


@pytest.mark.parametrize("method", ["exact", "highs"])
def test_infeasible_system(method: str) -> None:
    result = find_feasible_point(
        2,
        a_ub=np.ones((1, 2)),
        b_ub=np.array([0.5]),
        a_eq=np.ones((1, 2)),
        b_eq=np.ones(1),
        method=method,
    )

    assert not result.feasible
    assert result.point is None


def test_auto_picks_exact_for_small_systems() -> None:
    small = find_feasible_point(2, a_eq=np.ones((1, 2)), b_eq=np.ones(1))
    large = find_feasible_point(2, a_eq=np.ones((1, 2)), b_eq=np.ones(1), exact_limit=1)

    assert small.method == "exact"
    assert large.method == "highs"


def test_negative_right_hand_side() -> None:
    # x0 >= 0.4 written as -x0 <= -0.4.
    result = find_feasible_point(
        2,
        a_ub=np.array([[-1.0, 0.0]]),
        b_ub=np.array([-0.4]),
        a_eq=np.ones((1, 2)),
        b_eq=np.ones(1),
        method="exact",
    )

    assert result.feasible
    assert result.point is not None
    assert result.point[0] >= 0.4 - 1e-12


def test_rational_simplex_is_exact() -> None:
    solver = RationalSimplex(
        [[Fraction(1), Fraction(1)], [Fraction(3), Fraction(0)]],
        [Fraction(1), Fraction(1)],
    )

    point = solver.solve()

    assert point == [Fraction(1, 3), Fraction(2, 3)]


def _threshold_test(threshold: float):
    def test(c: float) -> FeasibilityResult:
        if c >= threshold:
            return FeasibilityResult(True, np.array([c]), "exact")
        return FeasibilityResult(False, None, "exact")

    return test


def test_bisection_converges_to_threshold() -> None:
    result = bisect_feasibility(_threshold_test(2.0), 1.0, 4.0, rel_tol=1e-9)

    assert result.lower <= 2.0 <= result.upper
    assert result.upper - result.lower <= 1e-9 * 4.0
    assert result.value == pytest.approx(2.0, rel=1e-8)
    assert result.iterations > 0


def test_bisection_returns_feasible_lower_end() -> None:
    result = bisect_feasibility(_threshold_test(0.5), 1.0, 4.0)

    assert result.value == 1.0
    assert result.iterations == 0


def test_bisection_rejects_infeasible_bracket() -> None:
    with pytest.raises(BisectionBracketError) as excinfo:
        bisect_feasibility(_threshold_test(10.0), 1.0, 4.0)

    assert excinfo.value.bounds == (1.0, 4.0)
