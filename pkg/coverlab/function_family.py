"""Finite value-function families, Bellman backups and representation checks."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field

from .exceptions import FamilyStructureError
from .mdp import LayeredMdp, Policy, optimal_values

LOGGER = logging.getLogger(__name__)

MEMBERSHIP_TOLERANCE = 1e-9
RANGE_TOLERANCE = 1e-12


@dataclass(frozen=True)
class ValueFunctionFamily:
    """Finite family of layered Q-functions.

    Each layer owns a component set ``F_h`` stored as an array of shape
    ``(K_h, |X_h|, |A|)``; a member is a row of ``members`` giving one
    component index per layer. The terminal layer ``f_{H+1}`` is zero.

    Attributes:
        components: Per-layer component arrays.
        members: Integer array of shape ``(N, H)``.
        value_bounds: Range every table must respect.
        name: Free-form family name.
    """

    components: Tuple[np.ndarray, ...]
    members: np.ndarray
    value_bounds: Tuple[float, float] = (0.0, 1.0)
    name: str = "family"

    def __post_init__(self) -> None:
        if self.members.ndim != 2 or self.members.shape[1] != len(self.components):
            raise FamilyStructureError(
                f"members must have shape (N, {len(self.components)}), "
                f"got {self.members.shape}"
            )
        if self.members.shape[0] == 0:
            raise FamilyStructureError("a family needs at least one member")
        low, high = self.value_bounds
        for h, comps in enumerate(self.components):
            if comps.ndim != 3 or comps.shape[0] == 0:
                raise FamilyStructureError(f"layer {h} components must be (K, X, A)")
            column = self.members[:, h]
            if column.min() < 0 or column.max() >= comps.shape[0]:
                raise FamilyStructureError(f"member index out of range at layer {h}")
            if comps.min() < low - RANGE_TOLERANCE or comps.max() > high + RANGE_TOLERANCE:
                raise FamilyStructureError(
                    f"layer {h} values leave the range [{low}, {high}]"
                )

    @classmethod
    def from_member_tables(
        cls,
        members: Sequence[Sequence[np.ndarray]],
        components: Optional[Sequence[Sequence[np.ndarray]]] = None,
        value_bounds: Tuple[float, float] = (0.0, 1.0),
        name: str = "family",
    ) -> "ValueFunctionFamily":
        """Build a family from explicit member tables.

        Without ``components`` each ``F_h`` is the set of distinct layer-h
        tables among the members, in order of first appearance.

        Raises:
            FamilyStructureError: If a member table is not among the supplied components.
        """
        if not members:
            raise FamilyStructureError("a family needs at least one member")
        horizon = len(members[0])
        if any(len(m) != horizon for m in members):
            raise FamilyStructureError("members have different horizons")
        layer_comps: List[List[np.ndarray]] = []
        for h in range(horizon):
            if components is not None:
                layer_comps.append([np.array(c, dtype=float) for c in components[h]])
            else:
                layer_comps.append([])
        index = np.zeros((len(members), horizon), dtype=int)
        for m, tables in enumerate(members):
            for h, table in enumerate(tables):
                table = np.array(table, dtype=float)
                found = _find_table(layer_comps[h], table)
                if found is None:
                    if components is not None:
                        raise FamilyStructureError(
                            f"member {m} layer {h} is not among the supplied components"
                        )
                    layer_comps[h].append(table)
                    found = len(layer_comps[h]) - 1
                index[m, h] = found
        return cls(
            components=tuple(_freeze(np.stack(c)) for c in layer_comps),
            members=_freeze(index),
            value_bounds=value_bounds,
            name=name,
        )

    @classmethod
    def product(
        cls,
        components: Sequence[np.ndarray],
        value_bounds: Tuple[float, float] = (0.0, 1.0),
        name: str = "family",
    ) -> "ValueFunctionFamily":
        """Full product family ``F_1 x ... x F_H`` in lexicographic order."""
        comps = tuple(_freeze(np.array(c, dtype=float)) for c in components)
        index = np.array(
            list(itertools.product(*(range(c.shape[0]) for c in comps))), dtype=int
        )
        return cls(comps, _freeze(index), value_bounds, name)

    @property
    def size(self) -> int:
        return int(self.members.shape[0])

    @property
    def horizon(self) -> int:
        return len(self.components)

    def tables(self, member: int) -> Tuple[np.ndarray, ...]:
        """Per-layer tables of one member."""
        return tuple(self.components[h][self.members[member, h]] for h in range(self.horizon))

    def check_against(self, mdp: LayeredMdp) -> None:
        """Raise unless every component table is shaped for ``mdp``."""
        if self.horizon != mdp.horizon:
            raise FamilyStructureError(
                f"family has {self.horizon} layers, MDP has {mdp.horizon}"
            )
        for h, comps in enumerate(self.components):
            expected = (mdp.layer_sizes[h], mdp.num_actions)
            if comps.shape[1:] != expected:
                raise FamilyStructureError(
                    f"layer {h} tables have shape {comps.shape[1:]}, expected {expected}"
                )


@dataclass(frozen=True)
class ResidualTable:
    """Per-layer Bellman residuals ``f_h - T_h f_{h+1}``."""

    layers: Tuple[np.ndarray, ...]

    @property
    def sup_norm(self) -> float:
        return float(max(np.max(np.abs(layer)) for layer in self.layers))


@dataclass(frozen=True)
class LayerResiduals:
    """Distinct residual tables of a family at one layer.

    Attributes:
        tables: Residual tables, shape ``(R, |X_h|, |A|)``.
        member_index: For each member, the row of ``tables`` holding its residual.
    """

    tables: np.ndarray
    member_index: np.ndarray


@dataclass(frozen=True)
class InducedPolicies:
    """Distinct greedy policies of a family, with the member-to-policy map."""

    policies: Tuple[Policy, ...]
    member_policy: np.ndarray = field(repr=False)


def _freeze(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


def _find_table(tables: Sequence[np.ndarray], table: np.ndarray) -> Optional[int]:
    for k, candidate in enumerate(tables):
        if candidate.shape == table.shape and np.array_equal(candidate, table):
            return k
    return None


def linf_distances(candidates: np.ndarray, references: np.ndarray) -> np.ndarray:
    """Matrix of L-infinity distances between two stacks of tables."""
    diff = candidates[:, None, ...] - references[None, ...]
    return np.abs(diff).reshape(diff.shape[0], diff.shape[1], -1).max(axis=2)


def bellman_backup(
    mdp: LayeredMdp, f_next: Optional[np.ndarray], h: int, reward: bool = True
) -> np.ndarray:
    """Apply ``T_h`` (or the zero-reward ``P_h``) to a next-layer table.

    Args:
        mdp: The MDP providing dynamics and rewards.
        f_next: Table of layer ``h + 1``; ``None`` stands for the terminal zero.
        h: Layer index.
        reward: Whether to add ``R_h``.

    Returns:
        The backed-up table of layer ``h``.
    """
    if f_next is None:
        next_values = np.zeros(mdp.transitions[h].shape[2])
    else:
        expected = (mdp.layer_sizes[h + 1], mdp.num_actions)
        if f_next.shape != expected:
            raise FamilyStructureError(
                f"next-layer table has shape {f_next.shape}, expected {expected}"
            )
        next_values = f_next.max(axis=1)
    backup = mdp.transitions[h] @ next_values
    if reward:
        backup = backup + mdp.rewards[h]
    return backup


def backup_components(
    mdp: LayeredMdp, family: ValueFunctionFamily, h: int, reward: bool = True
) -> np.ndarray:
    """Backups of every component of ``F_{h+1}`` at once, shape ``(K, |X_h|, |A|)``.

    At the last layer the single backup of the terminal zero is returned.
    """
    if h + 1 < family.horizon:
        next_max = family.components[h + 1].max(axis=2)
    else:
        next_max = np.zeros((1, 1))
    backups = np.einsum("xay,ky->kxa", mdp.transitions[h], next_max)
    if reward:
        backups = backups + mdp.rewards[h][None, ...]
    return backups


def greedy_policy(f: Sequence[np.ndarray]) -> Policy:
    """Deterministic greedy policy with least-index tie-breaking."""
    num_actions = f[0].shape[1]
    return Policy.deterministic([np.argmax(table, axis=1) for table in f], num_actions)


def residual_table(mdp: LayeredMdp, f: Sequence[np.ndarray], reward: bool = True) -> ResidualTable:
    """Bellman residuals of one layered function."""
    layers = []
    for h in range(mdp.horizon):
        f_next = f[h + 1] if h + 1 < mdp.horizon else None
        layers.append(f[h] - bellman_backup(mdp, f_next, h, reward))
    return ResidualTable(tuple(layers))


def layer_residuals(
    mdp: LayeredMdp, family: ValueFunctionFamily, h: int, reward: bool = True
) -> LayerResiduals:
    """Residual tables ``f_h - T_h f_{h+1}`` for all members at layer ``h``."""
    backups = backup_components(mdp, family, h, reward)
    if h + 1 < family.horizon:
        pairs = family.members[:, [h, h + 1]]
    else:
        pairs = np.column_stack([family.members[:, h], np.zeros(family.size, dtype=int)])
    unique_pairs, inverse = np.unique(pairs, axis=0, return_inverse=True)
    tables = family.components[h][unique_pairs[:, 0]] - backups[unique_pairs[:, 1]]
    return LayerResiduals(tables=tables, member_index=np.asarray(inverse).reshape(-1))


def member_residual(
    mdp: LayeredMdp, family: ValueFunctionFamily, member: int, reward: bool = True
) -> ResidualTable:
    return residual_table(mdp, family.tables(member), reward)


def induced_policies(family: ValueFunctionFamily) -> InducedPolicies:
    """Distinct greedy policies ``{pi_f : f in F}`` in order of first member."""
    num_actions = family.components[0].shape[2]
    layer_codes = []
    layer_patterns = []
    for comps in family.components:
        actions = np.argmax(comps, axis=2)
        patterns, codes = np.unique(actions, axis=0, return_inverse=True)
        layer_patterns.append(patterns)
        layer_codes.append(np.asarray(codes).reshape(-1))
    member_codes = np.column_stack(
        [layer_codes[h][family.members[:, h]] for h in range(family.horizon)]
    )
    seen: dict[Tuple[int, ...], int] = {}
    member_policy = np.zeros(family.size, dtype=int)
    policies: List[Policy] = []
    for m, row in enumerate(member_codes):
        key = tuple(int(c) for c in row)
        if key not in seen:
            seen[key] = len(policies)
            actions = [layer_patterns[h][code] for h, code in enumerate(key)]
            policies.append(Policy.deterministic(actions, num_actions))
        member_policy[m] = seen[key]
    return InducedPolicies(tuple(policies), _freeze(member_policy))


def member_distances(
    family: ValueFunctionFamily, target: Sequence[np.ndarray]
) -> np.ndarray:
    """L-infinity distance of every member to a layered target function."""
    per_layer = []
    for h, comps in enumerate(family.components):
        comp_dist = np.abs(comps - target[h][None, ...]).reshape(comps.shape[0], -1).max(axis=1)
        per_layer.append(comp_dist[family.members[:, h]])
    return np.max(np.column_stack(per_layer), axis=1)


class RealizabilityReport(BaseModel):
    realizable: bool
    distance: float
    nearest_member: int
    tolerance: float


class FamilyViolation(BaseModel):
    member: int
    layer: int
    distance: float


class CompletenessReport(BaseModel):
    """Members whose backups leave the family; empty means complete."""

    complete: bool
    tolerance: float
    violations: List[FamilyViolation] = Field(default_factory=list)


class RewardFreeCompletenessReport(BaseModel):
    holds: bool
    backup_closed: bool
    residuals_covered: bool
    tolerance: float
    backup_violations: List[FamilyViolation] = Field(default_factory=list)
    residual_violations: List[FamilyViolation] = Field(default_factory=list)


def check_realizability(
    mdp: LayeredMdp, family: ValueFunctionFamily, tol: float = MEMBERSHIP_TOLERANCE
) -> RealizabilityReport:
    """Whether some member equals ``Q*`` within ``tol``."""
    family.check_against(mdp)
    q_star = optimal_values(mdp).q_tables
    distances = member_distances(family, q_star)
    nearest = int(np.argmin(distances))
    return RealizabilityReport(
        realizable=bool(distances[nearest] <= tol),
        distance=float(distances[nearest]),
        nearest_member=nearest,
        tolerance=tol,
    )


def realizing_members(
    mdp: LayeredMdp, family: ValueFunctionFamily, tol: float = MEMBERSHIP_TOLERANCE
) -> np.ndarray:
    """Indices of members equal to ``Q*`` within ``tol``."""
    distances = member_distances(family, optimal_values(mdp).q_tables)
    return np.flatnonzero(distances <= tol)


def _backup_violations(
    mdp: LayeredMdp, family: ValueFunctionFamily, tol: float, reward: bool
) -> List[FamilyViolation]:
    violations: List[FamilyViolation] = []
    for h in range(mdp.horizon):
        backups = backup_components(mdp, family, h, reward)
        distance = linf_distances(backups, family.components[h]).min(axis=1)
        bad = np.flatnonzero(distance > tol)
        if bad.size == 0:
            continue
        if h + 1 < family.horizon:
            next_index = family.members[:, h + 1]
        else:
            next_index = np.zeros(family.size, dtype=int)
        for m in np.flatnonzero(np.isin(next_index, bad)):
            violations.append(
                FamilyViolation(member=int(m), layer=h, distance=float(distance[next_index[m]]))
            )
    return violations


def check_completeness(
    mdp: LayeredMdp, family: ValueFunctionFamily, tol: float = MEMBERSHIP_TOLERANCE
) -> CompletenessReport:
    """Test ``T_h f_{h+1} in F_h`` for every member and layer.

    Args:
        mdp: The MDP defining the backups.
        family: Family with its per-layer component sets.
        tol: L-infinity membership tolerance.

    Returns:
        A report listing every violating ``(member, layer)`` pair.
    """
    family.check_against(mdp)
    violations = _backup_violations(mdp, family, tol, reward=True)
    LOGGER.debug("Completeness of %s: %d violations", family.name, len(violations))
    return CompletenessReport(complete=not violations, tolerance=tol, violations=violations)


def check_rf_completeness(
    mdp: LayeredMdp,
    f_family: ValueFunctionFamily,
    g_family: ValueFunctionFamily,
    tol: float = MEMBERSHIP_TOLERANCE,
) -> RewardFreeCompletenessReport:
    """Check reward-free completeness of an ``(F, G)`` pair.

    Part (a) requires ``P_h G_{h+1}`` to stay in ``G_h``. Part (b) requires
    every residual of ``F`` to be a zero-reward residual of some member of ``G``.
    """
    f_family.check_against(mdp)
    g_family.check_against(mdp)
    backup_violations = _backup_violations(mdp, g_family, tol, reward=False)
    residual_violations: List[FamilyViolation] = []
    for h in range(mdp.horizon):
        f_res = layer_residuals(mdp, f_family, h, reward=True)
        g_res = layer_residuals(mdp, g_family, h, reward=False)
        distance = linf_distances(f_res.tables, g_res.tables).min(axis=1)
        for m in np.flatnonzero(distance[f_res.member_index] > tol):
            residual_violations.append(
                FamilyViolation(
                    member=int(m),
                    layer=h,
                    distance=float(distance[f_res.member_index[m]]),
                )
            )
    return RewardFreeCompletenessReport(
        holds=not backup_violations and not residual_violations,
        backup_closed=not backup_violations,
        residuals_covered=not residual_violations,
        tolerance=tol,
        backup_violations=backup_violations,
        residual_violations=residual_violations,
    )
