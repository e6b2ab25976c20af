"""Coverage coefficients: concentrability, coverability and their generalized forms."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np

from .exceptions import MdpStructureError
from .feasibility import BisectionResult, FeasibilityResult, Method, bisect_feasibility, find_feasible_point
from .function_family import ValueFunctionFamily, layer_residuals
from .mdp import (
    LayeredMdp,
    OccupancyMeasure,
    Policy,
    enumerate_deterministic_policies,
    occupancy,
    optimal_values,
    reachability_table,
)
from .models import CoverageReport

LOGGER = logging.getLogger(__name__)

DISTRIBUTION_TOLERANCE = 1e-12
BISECTION_TOLERANCE = 1e-9

PolicySet = Union[Sequence[Policy], Literal["all"]]


@dataclass(frozen=True)
class DistributionFamily:
    """Per-layer distributions ``mu_h`` over the state-action pairs of layer ``h``."""

    layers: Tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        for h, layer in enumerate(self.layers):
            if layer.ndim != 2:
                raise MdpStructureError("distribution layers must be (X, A) tables", (h,))
            if np.any(layer < 0):
                raise MdpStructureError("distribution has negative mass", (h,))
            if abs(float(layer.sum()) - 1.0) > DISTRIBUTION_TOLERANCE:
                raise MdpStructureError(
                    f"distribution sums to {float(layer.sum())!r}, expected 1", (h,)
                )

    @classmethod
    def from_tables(cls, tables: Sequence[np.ndarray]) -> "DistributionFamily":
        layers = []
        for table in tables:
            array = np.array(table, dtype=float)
            array.setflags(write=False)
            layers.append(array)
        return cls(tuple(layers))

    @classmethod
    def from_occupancy(cls, occ: OccupancyMeasure) -> "DistributionFamily":
        return cls.from_tables(occ.layers)

    @classmethod
    def uniform(cls, mdp: LayeredMdp) -> "DistributionFamily":
        return cls.from_tables(
            [np.full((n, mdp.num_actions), 1.0 / (n * mdp.num_actions)) for n in mdp.layer_sizes]
        )

    def check_against(self, mdp: LayeredMdp) -> None:
        if len(self.layers) != mdp.horizon:
            raise MdpStructureError(
                f"distribution has {len(self.layers)} layers, MDP has {mdp.horizon}"
            )
        for h, layer in enumerate(self.layers):
            if layer.shape != (mdp.layer_sizes[h], mdp.num_actions):
                raise MdpStructureError("distribution layer shape mismatch", (h,))

    def to_lists(self) -> List[List[List[float]]]:
        return [layer.tolist() for layer in self.layers]


def policy_occupancies(mdp: LayeredMdp, policies: Sequence[Policy]) -> List[OccupancyMeasure]:
    return [occupancy(mdp, policy) for policy in policies]


def _resolve(mdp: LayeredMdp, policy_set: PolicySet) -> Optional[List[Policy]]:
    if isinstance(policy_set, str):
        if policy_set != "all":
            raise ValueError(f"unknown policy set {policy_set!r}")
        return None
    policies = list(policy_set)
    if not policies:
        raise ValueError("policy set is empty")
    return policies


def _ratio(numerator: np.ndarray, denominator: np.ndarray) -> np.ndarray:
    """Elementwise ratio with ``0/0 = 0`` and ``p/0 = inf``."""
    numerator, denominator = np.broadcast_arrays(numerator, denominator)
    out = np.zeros(numerator.shape)
    positive = numerator > 0
    covered = positive & (denominator > 0)
    out[covered] = numerator[covered] / denominator[covered]
    out[positive & ~covered] = np.inf
    return out


def peak_occupancy(
    mdp: LayeredMdp, policy_set: PolicySet
) -> Tuple[List[np.ndarray], List[np.ndarray]]:
    """Per-cell ``max_pi d_h^pi(x, a)`` and the index of a maximizing policy.

    For the set of all Markov policies the peak is the state reachability and
    the policy index is ``-1``.
    """
    policies = _resolve(mdp, policy_set)
    peaks: List[np.ndarray] = []
    argmaxes: List[np.ndarray] = []
    if policies is None:
        for h in range(mdp.horizon):
            reach = reachability_table(mdp, h)
            peaks.append(np.repeat(reach[:, None], mdp.num_actions, axis=1))
            argmaxes.append(np.full((mdp.layer_sizes[h], mdp.num_actions), -1))
        return peaks, argmaxes
    occs = policy_occupancies(mdp, policies)
    for h in range(mdp.horizon):
        stack = np.stack([occ.layers[h] for occ in occs])
        peaks.append(stack.max(axis=0))
        argmaxes.append(stack.argmax(axis=0))
    return peaks, argmaxes


def concentrability(
    mdp: LayeredMdp, policy_set: PolicySet, mu: DistributionFamily
) -> CoverageReport:
    """``max_{pi, h} ||d_h^pi / mu_h||_inf`` with the maximizing ``(pi, h, x, a)``.

    Args:
        mdp: The MDP.
        policy_set: Explicit policies or ``"all"`` for every Markov policy.
        mu: Data distribution.

    Returns:
        The exact coefficient; ``inf`` when a reachable cell has no mass.
    """
    mu.check_against(mdp)
    peaks, argmaxes = peak_occupancy(mdp, policy_set)
    best_value = -1.0
    witness: Dict[str, object] = {}
    for h in range(mdp.horizon):
        ratios = _ratio(peaks[h], mu.layers[h])
        x, a = np.unravel_index(int(np.argmax(ratios)), ratios.shape)
        if ratios[x, a] > best_value:
            best_value = float(ratios[x, a])
            policy_index = int(argmaxes[h][x, a])
            witness = {
                "policy": "all" if policy_index < 0 else policy_index,
                "layer": h,
                "state": int(x),
                "action": int(a),
                "occupancy": float(peaks[h][x, a]),
                "mu": float(mu.layers[h][x, a]),
            }
    method = "closed-form" if policy_set == "all" else "enumeration"
    return CoverageReport(
        measure="concentrability", value=best_value, method=method, witness=witness
    )


def single_policy_concentrability(mdp: LayeredMdp, mu: DistributionFamily) -> CoverageReport:
    """Concentrability restricted to the least-index optimal policy."""
    report = concentrability(mdp, [optimal_values(mdp).policy], mu)
    return report.model_copy(update={"measure": "single-policy-concentrability"})


def coverability(mdp: LayeredMdp, policy_set: PolicySet) -> CoverageReport:
    """Worst-layer cumulative reachability with its witness distribution.

    The witness ``mu*_h`` is proportional to ``max_pi d_h^pi(x, a)`` and attains
    the value as a concentrability coefficient.
    """
    peaks, _ = peak_occupancy(mdp, policy_set)
    totals = [float(peak.sum()) for peak in peaks]
    worst = int(np.argmax(totals))
    mu = [(peak / total).tolist() for peak, total in zip(peaks, totals)]
    return CoverageReport(
        measure="coverability",
        value=totals[worst],
        method="closed-form",
        witness={"layer": worst, "layer_values": totals},
        mu=mu,
    )


def coverability_v(mdp: LayeredMdp, policy_set: PolicySet) -> CoverageReport:
    """State-only coverability ``max_h sum_x max_pi d_h^pi(x)``."""
    policies = _resolve(mdp, policy_set)
    totals = []
    for h in range(mdp.horizon):
        if policies is None:
            peak = reachability_table(mdp, h)
        else:
            peak = np.max(
                np.stack([occupancy(mdp, p).state_marginal(h) for p in policies]), axis=0
            )
        totals.append(float(peak.sum()))
    worst = int(np.argmax(totals))
    return CoverageReport(
        measure="coverability-v",
        value=totals[worst],
        method="closed-form",
        witness={"layer": worst, "layer_values": totals},
    )


def witness_distribution(report: CoverageReport) -> DistributionFamily:
    """The ``mu`` stored in a coverage report as a distribution family."""
    if report.mu is None:
        raise ValueError(f"{report.measure} report carries no witness distribution")
    tables = [np.array(layer, dtype=float) for layer in report.mu]
    # Re-normalize against rounding in the JSON round trip.
    return DistributionFamily.from_tables([t / t.sum() for t in tables])


def _enumerate(mdp: LayeredMdp, policy_set: PolicySet) -> List[Policy]:
    policies = _resolve(mdp, policy_set)
    if policies is None:
        return enumerate_deterministic_policies(mdp)
    return policies


def coverability_infimum_oracle(
    mdp: LayeredMdp, policy_set: PolicySet, method: Method = "auto"
) -> CoverageReport:
    """Coverability from its inf-sup definition, by bisection on linear feasibility.

    For each layer the smallest ``C`` admitting ``mu_h`` in the simplex with
    ``d_h^pi <= C mu_h`` for every policy is found to relative width 1e-9.
    This never uses the cumulative-reachability formula.

    Raises:
        BisectionBracketError: If the uniform-distribution upper bracket fails.
    """
    policies = _enumerate(mdp, policy_set)
    occs = policy_occupancies(mdp, policies)
    values: List[float] = []
    lowers: List[float] = []
    witness_mu: List[List[List[float]]] = []
    methods = set()
    worst_residual = 0.0
    for h in range(mdp.horizon):
        cells = mdp.num_cells(h)
        demand = np.stack([occ.layers[h].reshape(-1) for occ in occs])
        # A cell only keeps its tightest constraint across policies.
        strongest = demand.max(axis=0)
        rows = np.flatnonzero(strongest > 0)
        targets = strongest[rows]
        a_eq = np.ones((1, cells))
        b_eq = np.ones(1)

        def test(c: float, rows: np.ndarray = rows, targets: np.ndarray = targets) -> FeasibilityResult:
            a_ub = np.zeros((rows.shape[0], cells))
            a_ub[np.arange(rows.shape[0]), rows] = -c
            return find_feasible_point(cells, a_ub, -targets, a_eq, b_eq, method=method)

        result: BisectionResult = bisect_feasibility(
            test, 1.0, float(cells), rel_tol=BISECTION_TOLERANCE
        )
        point = np.clip(result.point, 0.0, None)
        point = point / point.sum()
        values.append(result.value)
        lowers.append(result.lower)
        witness_mu.append(point.reshape(mdp.layer_sizes[h], mdp.num_actions).tolist())
        methods.add(result.method)
        worst_residual = max(worst_residual, result.upper - result.lower)
    worst = int(np.argmax(values))
    LOGGER.debug("Infimum oracle on %s: %s", mdp.name, values)
    return CoverageReport(
        measure="coverability",
        value=values[worst],
        method="bisection-lp",
        witness={"layer": worst, "layer_values": values, "solvers": sorted(methods)},
        mu=witness_mu,
        interval=(max(lowers), max(values)),
        tolerance=worst_residual,
    )


@dataclass(frozen=True)
class _ResidualMass:
    """Squared-residual masses of every member.

    Attributes:
        on_policy: ``a[f, pi]``, shape ``(N, P)``; ``P = 1`` for the all-policy sup.
        cells: Per-layer squared residual tables per member, shape ``(N, X_h * A)``.
    """

    on_policy: np.ndarray
    cells: List[np.ndarray]
    policy_labels: List[object]


def _residual_mass(
    mdp: LayeredMdp, family: ValueFunctionFamily, policy_set: PolicySet
) -> _ResidualMass:
    family.check_against(mdp)
    cells: List[np.ndarray] = []
    for h in range(mdp.horizon):
        residuals = layer_residuals(mdp, family, h)
        squared = (residuals.tables**2).reshape(residuals.tables.shape[0], -1)
        cells.append(squared[residuals.member_index])
    policies = _resolve(mdp, policy_set)
    if policies is None:
        sup = np.zeros((family.size, 1))
        for m in range(family.size):
            rewards = [cells[h][m].reshape(mdp.layer_sizes[h], mdp.num_actions) for h in range(mdp.horizon)]
            sup[m, 0] = optimal_values(mdp.with_rewards(rewards)).value
        return _ResidualMass(sup, cells, ["all"])
    occs = policy_occupancies(mdp, policies)
    on_policy = np.zeros((family.size, len(policies)))
    for h in range(mdp.horizon):
        dists = np.stack([occ.layers[h].reshape(-1) for occ in occs])
        on_policy += cells[h] @ dists.T
    return _ResidualMass(on_policy, cells, list(range(len(policies))))


def generalized_concentrability(
    mdp: LayeredMdp,
    family: ValueFunctionFamily,
    policy_set: PolicySet,
    mu: DistributionFamily,
) -> CoverageReport:
    """Least ``C`` with on-policy squared residual mass at most ``C`` times its mass under ``mu``.

    Residual masses are summed across layers. When every residual vanishes the
    value is reported as 1 with the flag ``all residuals zero``.
    """
    mu.check_against(mdp)
    mass = _residual_mass(mdp, family, policy_set)
    offline = sum(mass.cells[h] @ mu.layers[h].reshape(-1) for h in range(mdp.horizon))
    if not np.any(mass.on_policy > 0):
        return CoverageReport(
            measure="generalized-concentrability",
            value=1.0,
            method="enumeration",
            flags=["all residuals zero"],
        )
    ratios = _ratio(mass.on_policy, np.asarray(offline)[:, None])
    member, policy_index = np.unravel_index(int(np.argmax(ratios)), ratios.shape)
    return CoverageReport(
        measure="generalized-concentrability",
        value=float(ratios[member, policy_index]),
        method="enumeration",
        witness={
            "member": int(member),
            "policy": mass.policy_labels[policy_index],
            "on_policy_mass": float(mass.on_policy[member, policy_index]),
            "offline_mass": float(offline[member]),
        },
    )


def generalized_coverability(
    mdp: LayeredMdp,
    family: ValueFunctionFamily,
    policy_set: PolicySet,
    method: Method = "auto",
) -> CoverageReport:
    """Infimum over ``mu`` of generalized concentrability, by bisection.

    Feasibility of ``C * sum_h <b_{f,h}, mu_h> >= a_f`` over per-layer simplices
    is a linear problem in ``mu``; members with zero on-policy mass impose no
    constraint.
    """
    mass = _residual_mass(mdp, family, policy_set)
    demand = mass.on_policy.max(axis=1)
    active = np.flatnonzero(demand > 0)
    if active.size == 0:
        return CoverageReport(
            measure="generalized-coverability",
            value=1.0,
            method="bisection-lp",
            flags=["all residuals zero"],
        )
    supply = np.hstack([cells[active] for cells in mass.cells])
    demand = demand[active]
    rows, unique_index = np.unique(np.column_stack([supply, demand]), axis=0, return_index=True)
    supply, demand = rows[:, :-1], rows[:, -1]
    dead = np.flatnonzero(supply.sum(axis=1) <= 0)
    if dead.size:
        member = int(active[unique_index[dead[0]]])
        return CoverageReport(
            measure="generalized-coverability",
            value=float("inf"),
            method="bisection-lp",
            witness={"member": member},
            flags=["residual mass unreachable by any distribution"],
        )
    sizes = [mdp.num_cells(h) for h in range(mdp.horizon)]
    offsets = np.cumsum([0] + sizes)
    a_eq = np.zeros((mdp.horizon, offsets[-1]))
    for h in range(mdp.horizon):
        a_eq[h, offsets[h] : offsets[h + 1]] = 1.0
    b_eq = np.ones(mdp.horizon)
    uniform = np.concatenate([np.full(n, 1.0 / n) for n in sizes])
    upper = float(np.max(demand / (supply @ uniform))) * (1.0 + 1e-9)

    def test(c: float) -> FeasibilityResult:
        return find_feasible_point(offsets[-1], -c * supply, -demand, a_eq, b_eq, method=method)

    result = bisect_feasibility(test, 0.0, upper, rel_tol=BISECTION_TOLERANCE)
    point = np.clip(result.point, 0.0, None)
    mu = []
    for h in range(mdp.horizon):
        block = point[offsets[h] : offsets[h + 1]]
        mu.append((block / block.sum()).reshape(mdp.layer_sizes[h], mdp.num_actions).tolist())
    return CoverageReport(
        measure="generalized-coverability",
        value=result.value,
        method="bisection-lp",
        mu=mu,
        interval=(result.lower, result.upper),
        tolerance=result.upper - result.lower,
        witness={"constraints": int(supply.shape[0]), "solver": result.method},
    )


def avoiding_distribution(mdp: LayeredMdp, policy: Policy) -> DistributionFamily:
    """Per layer, the point mass on the least-index cell ``policy`` never visits.

    Falls back to the cell with the smallest visitation when every cell is visited.
    """
    occ = occupancy(mdp, policy)
    tables = []
    for layer in occ.layers:
        flat = layer.reshape(-1)
        unvisited = np.flatnonzero(flat == 0)
        cell = int(unvisited[0]) if unvisited.size else int(np.argmin(flat))
        table = np.zeros_like(flat)
        table[cell] = 1.0
        tables.append(table.reshape(layer.shape))
    return DistributionFamily.from_tables(tables)
