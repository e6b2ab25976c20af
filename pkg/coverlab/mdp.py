"""Finite layered episodic MDPs and their dynamic-programming engine.

Layers are indexed from 0 to ``H - 1`` in code. Layer ``h`` owns a
transition tensor of shape ``(|X_h|, |A|, |X_{h+1}|)``; the last layer maps
every pair onto a single zero-reward terminal sink, stored as a tensor whose
last axis has length one.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .exceptions import MdpStructureError, SearchBudgetExceededError
from .models import ValidationReport, Violation

LOGGER = logging.getLogger(__name__)

ROW_SUM_TOLERANCE = 1e-12
DP_TOLERANCE = 1e-10

RngLike = Union[int, np.random.Generator]


def _as_rng(rng: RngLike) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


@dataclass(frozen=True)
class LayeredMdp:
    """Finite layered episodic MDP with deterministic rewards.

    Attributes:
        states: Per-layer state labels.
        actions: Shared action labels.
        transitions: Per-layer tensors ``P_h[x, a, x']``.
        rewards: Per-layer reward tables ``R_h[x, a]``.
        initial_state: Index of the deterministic initial state in layer 0.
        name: Free-form instance name.
        metadata: Generator-specific extras (decoders, parameters).
    """

    states: Tuple[Tuple[str, ...], ...]
    actions: Tuple[str, ...]
    transitions: Tuple[np.ndarray, ...]
    rewards: Tuple[np.ndarray, ...]
    initial_state: int = 0
    name: str = "mdp"
    metadata: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        horizon = len(self.states)
        if horizon < 1:
            raise MdpStructureError("an MDP needs at least one layer")
        if not self.actions:
            raise MdpStructureError("an MDP needs at least one action")
        if len(self.transitions) != horizon or len(self.rewards) != horizon:
            raise MdpStructureError(
                f"expected {horizon} transition and reward layers, got "
                f"{len(self.transitions)} and {len(self.rewards)}"
            )
        num_actions = len(self.actions)
        for h in range(horizon):
            n_h = len(self.states[h])
            if n_h < 1:
                raise MdpStructureError("empty layer", (h,))
            n_next = len(self.states[h + 1]) if h + 1 < horizon else 1
            expected = (n_h, num_actions, n_next)
            if self.transitions[h].shape != expected:
                raise MdpStructureError(
                    f"transition tensor has shape {self.transitions[h].shape}, "
                    f"expected {expected}",
                    (h,),
                )
            if self.rewards[h].shape != (n_h, num_actions):
                raise MdpStructureError(
                    f"reward table has shape {self.rewards[h].shape}, "
                    f"expected {(n_h, num_actions)}",
                    (h,),
                )
        if not 0 <= self.initial_state < len(self.states[0]):
            raise MdpStructureError("initial state outside layer 0", (0, self.initial_state))

    @classmethod
    def from_arrays(
        cls,
        transitions: Sequence[np.ndarray],
        rewards: Sequence[np.ndarray],
        *,
        states: Optional[Sequence[Sequence[str]]] = None,
        actions: Optional[Sequence[str]] = None,
        initial_state: int = 0,
        name: str = "mdp",
        metadata: Optional[Mapping[str, Any]] = None,
    ) -> "LayeredMdp":
        """Build an MDP from raw arrays, generating labels when omitted.

        ``transitions`` may omit the final sink layer; it is appended.
        """
        rewards_t = tuple(np.array(r, dtype=float) for r in rewards)
        horizon = len(rewards_t)
        trans = [np.array(p, dtype=float) for p in transitions]
        if len(trans) == horizon - 1:
            n_last, num_a = rewards_t[-1].shape
            trans.append(np.ones((n_last, num_a, 1)))
        if states is None:
            states = [[f"s{h}_{i}" for i in range(r.shape[0])] for h, r in enumerate(rewards_t)]
        if actions is None:
            actions = [f"a{i}" for i in range(rewards_t[0].shape[1])]
        for array in (*trans, *rewards_t):
            array.setflags(write=False)
        return cls(
            states=tuple(tuple(layer) for layer in states),
            actions=tuple(actions),
            transitions=tuple(trans),
            rewards=rewards_t,
            initial_state=initial_state,
            name=name,
            metadata=dict(metadata or {}),
        )

    @property
    def horizon(self) -> int:
        return len(self.states)

    @property
    def num_actions(self) -> int:
        return len(self.actions)

    @property
    def layer_sizes(self) -> Tuple[int, ...]:
        return tuple(len(layer) for layer in self.states)

    def num_cells(self, h: int) -> int:
        """Number of state-action pairs in layer ``h``."""
        return len(self.states[h]) * self.num_actions

    def with_rewards(self, rewards: Sequence[np.ndarray], name: Optional[str] = None) -> "LayeredMdp":
        """Return a copy of the dynamics carrying different reward tables."""
        return LayeredMdp.from_arrays(
            self.transitions,
            rewards,
            states=self.states,
            actions=self.actions,
            initial_state=self.initial_state,
            name=name or self.name,
            metadata=self.metadata,
        )

    def without_rewards(self) -> "LayeredMdp":
        """Return the reward-free copy used by exploration."""
        return self.with_rewards([np.zeros_like(r) for r in self.rewards], f"{self.name}-rf")


class PolicyKind(str, Enum):
    """Whether a policy is one-hot or a general action distribution."""

    DETERMINISTIC = "deterministic"
    RANDOMIZED = "randomized"


@dataclass(frozen=True)
class Policy:
    """Markov policy stored as per-layer tables ``pi_h[x, a]``."""

    tables: Tuple[np.ndarray, ...]
    kind: PolicyKind = PolicyKind.RANDOMIZED

    @classmethod
    def deterministic(cls, actions: Sequence[np.ndarray], num_actions: int) -> "Policy":
        """Build a one-hot policy from per-layer chosen action indices."""
        tables = []
        for chosen in actions:
            chosen = np.asarray(chosen, dtype=int)
            table = np.zeros((chosen.shape[0], num_actions))
            table[np.arange(chosen.shape[0]), chosen] = 1.0
            table.setflags(write=False)
            tables.append(table)
        return cls(tuple(tables), PolicyKind.DETERMINISTIC)

    @classmethod
    def randomized(cls, tables: Sequence[np.ndarray]) -> "Policy":
        arrays = []
        for table in tables:
            array = np.array(table, dtype=float)
            if np.any(array < 0) or not np.allclose(array.sum(axis=1), 1.0, atol=1e-12):
                raise MdpStructureError("policy rows must be probability vectors")
            array.setflags(write=False)
            arrays.append(array)
        return cls(tuple(arrays), PolicyKind.RANDOMIZED)

    @classmethod
    def uniform(cls, mdp: LayeredMdp) -> "Policy":
        return cls.randomized(
            [np.full((n, mdp.num_actions), 1.0 / mdp.num_actions) for n in mdp.layer_sizes]
        )

    def chosen_actions(self, h: int) -> np.ndarray:
        """Action indices of a deterministic policy at layer ``h``."""
        if self.kind is not PolicyKind.DETERMINISTIC:
            raise ValueError("chosen_actions is only defined for deterministic policies")
        return np.argmax(self.tables[h], axis=1)

    def key(self) -> bytes:
        """Stable byte key used to cache per-policy computations."""
        return b"|".join(np.ascontiguousarray(t).tobytes() for t in self.tables)


@dataclass(frozen=True)
class Transition:
    """One step ``(x_h, a_h, r_h, x_{h+1})`` of an episode."""

    layer: int
    state: int
    action: int
    reward: float
    next_state: int


@dataclass(frozen=True)
class Trajectory:
    steps: Tuple[Transition, ...]

    @property
    def total_reward(self) -> float:
        return float(sum(step.reward for step in self.steps))


@dataclass(frozen=True)
class OccupancyMeasure:
    """Exact per-layer state-action visitation ``d_h(x, a)``."""

    layers: Tuple[np.ndarray, ...]

    def state_marginal(self, h: int) -> np.ndarray:
        return self.layers[h].sum(axis=1)


@dataclass(frozen=True)
class PolicyEvaluation:
    value: float
    v_tables: Tuple[np.ndarray, ...]
    q_tables: Tuple[np.ndarray, ...]


@dataclass(frozen=True)
class OptimalSolution:
    q_tables: Tuple[np.ndarray, ...]
    v_tables: Tuple[np.ndarray, ...]
    policy: Policy
    value: float


def _check_policy_shape(mdp: LayeredMdp, policy: Policy) -> None:
    if len(policy.tables) != mdp.horizon:
        raise MdpStructureError(
            f"policy has {len(policy.tables)} layers, MDP has {mdp.horizon}"
        )
    for h, table in enumerate(policy.tables):
        if table.shape != (mdp.layer_sizes[h], mdp.num_actions):
            raise MdpStructureError("policy table shape mismatch", (h,))


def _extremal_returns(mdp: LayeredMdp) -> Tuple[float, float]:
    v_max = np.zeros(1)
    v_min = np.zeros(1)
    for h in reversed(range(mdp.horizon)):
        q_max = mdp.rewards[h] + mdp.transitions[h] @ v_max
        q_min = mdp.rewards[h] + mdp.transitions[h] @ v_min
        v_max = q_max.max(axis=1)
        v_min = q_min.min(axis=1)
    return float(v_max[mdp.initial_state]), float(v_min[mdp.initial_state])


def validate_mdp(mdp: LayeredMdp) -> ValidationReport:
    """List every invariant violation of an MDP.

    Shape errors are raised by ``LayeredMdp`` itself; this function reports
    the semantic findings: row sums, reward range and return normalization.

    Args:
        mdp: The MDP to inspect.

    Returns:
        A report that is ``valid`` iff no violation was found.
    """
    violations: List[Violation] = []
    for h in range(mdp.horizon):
        trans = mdp.transitions[h]
        for x, a in zip(*np.nonzero(trans.min(axis=2) < 0)):
            violations.append(
                Violation(kind="negative-probability", layer=h, state=int(x), action=int(a))
            )
        sums = trans.sum(axis=2)
        for x, a in zip(*np.nonzero(np.abs(sums - 1.0) > ROW_SUM_TOLERANCE)):
            violations.append(
                Violation(
                    kind="row-sum",
                    layer=h,
                    state=int(x),
                    action=int(a),
                    detail=f"row sums to {sums[x, a]!r}",
                )
            )
        rewards = mdp.rewards[h]
        for x, a in zip(*np.nonzero((rewards < 0) | (rewards > 1))):
            violations.append(
                Violation(
                    kind="reward-range",
                    layer=h,
                    state=int(x),
                    action=int(a),
                    detail=f"reward {rewards[x, a]!r} outside [0, 1]",
                )
            )
    max_return, min_return = _extremal_returns(mdp)
    if max_return > 1.0 + DP_TOLERANCE:
        violations.append(
            Violation(kind="normalization", detail=f"maximal return {max_return!r} exceeds 1")
        )
    if min_return < -DP_TOLERANCE:
        violations.append(
            Violation(kind="normalization", detail=f"minimal return {min_return!r} below 0")
        )
    if violations:
        LOGGER.debug("MDP %s has %d violations", mdp.name, len(violations))
    return ValidationReport(
        name=mdp.name,
        valid=not violations,
        violations=violations,
        max_return=max_return,
        min_return=min_return,
    )


def occupancy(mdp: LayeredMdp, policy: Policy) -> OccupancyMeasure:
    """Forward recursion for the exact occupancy measure of ``policy``."""
    _check_policy_shape(mdp, policy)
    state_dist = np.zeros(mdp.layer_sizes[0])
    state_dist[mdp.initial_state] = 1.0
    layers = []
    for h in range(mdp.horizon):
        joint = state_dist[:, None] * policy.tables[h]
        joint.setflags(write=False)
        layers.append(joint)
        if h + 1 < mdp.horizon:
            state_dist = np.einsum("xa,xay->y", joint, mdp.transitions[h])
    return OccupancyMeasure(tuple(layers))


def expected_reward(mdp: LayeredMdp, occ: OccupancyMeasure) -> float:
    """``sum_h E_{d_h}[R_h]`` for a given occupancy."""
    return float(sum(np.sum(d * r) for d, r in zip(occ.layers, mdp.rewards)))


def policy_value(mdp: LayeredMdp, policy: Policy) -> PolicyEvaluation:
    """Backward recursion for ``V^pi``, ``Q^pi`` and ``J(pi)``."""
    _check_policy_shape(mdp, policy)
    v_next = np.zeros(1)
    v_tables: List[np.ndarray] = []
    q_tables: List[np.ndarray] = []
    for h in reversed(range(mdp.horizon)):
        q = mdp.rewards[h] + mdp.transitions[h] @ v_next
        v = np.sum(policy.tables[h] * q, axis=1)
        q_tables.append(q)
        v_tables.append(v)
        v_next = v
    v_tables.reverse()
    q_tables.reverse()
    return PolicyEvaluation(
        value=float(v_tables[0][mdp.initial_state]),
        v_tables=tuple(v_tables),
        q_tables=tuple(q_tables),
    )


def optimal_values(mdp: LayeredMdp) -> OptimalSolution:
    """Backward induction for ``Q*``, ``V*`` and the least-index optimal policy."""
    v_next = np.zeros(1)
    q_tables: List[np.ndarray] = []
    v_tables: List[np.ndarray] = []
    actions: List[np.ndarray] = []
    for h in reversed(range(mdp.horizon)):
        q = mdp.rewards[h] + mdp.transitions[h] @ v_next
        # np.argmax returns the first maximizer.
        chosen = np.argmax(q, axis=1)
        v = q[np.arange(q.shape[0]), chosen]
        q_tables.append(q)
        v_tables.append(v)
        actions.append(chosen)
        v_next = v
    q_tables.reverse()
    v_tables.reverse()
    actions.reverse()
    return OptimalSolution(
        q_tables=tuple(q_tables),
        v_tables=tuple(v_tables),
        policy=Policy.deterministic(actions, mdp.num_actions),
        value=float(v_tables[0][mdp.initial_state]),
    )


def reachability_table(mdp: LayeredMdp, h: int) -> np.ndarray:
    """``max_pi P^pi(x_h = x)`` for every state of layer ``h`` at once.

    Runs one backward DP per target state, vectorized over targets.
    """
    if not 0 <= h < mdp.horizon:
        raise MdpStructureError("layer outside horizon", (h,))
    values = np.eye(mdp.layer_sizes[h])
    for k in reversed(range(h)):
        # (n_k, A, n_{k+1}) @ (n_{k+1}, n_h) -> (n_k, A, n_h)
        values = np.max(mdp.transitions[k] @ values, axis=1)
    return values[mdp.initial_state]


def max_reach(mdp: LayeredMdp, h: int, x: int, a: Optional[int] = None) -> float:
    """Maximal probability over Markov policies of visiting ``(x_h, a_h)``.

    With an action argument the value equals the state reachability, since the
    maximizing policy can play ``a`` once it reaches ``x``.
    """
    if not 0 <= x < mdp.layer_sizes[h]:
        raise MdpStructureError("state outside layer", (h, x))
    if a is not None and not 0 <= a < mdp.num_actions:
        raise MdpStructureError("action outside action set", (h, x, a))
    return float(reachability_table(mdp, h)[x])


def sample_trajectory(mdp: LayeredMdp, policy: Policy, rng: RngLike) -> Trajectory:
    """Sample one episode; reproducible for a fixed integer seed."""
    generator = _as_rng(rng)
    state = mdp.initial_state
    steps = []
    for h in range(mdp.horizon):
        probs = policy.tables[h][state]
        if policy.kind is PolicyKind.DETERMINISTIC:
            action = int(np.argmax(probs))
        else:
            action = int(generator.choice(mdp.num_actions, p=probs))
        next_probs = mdp.transitions[h][state, action]
        if next_probs.shape[0] == 1:
            next_state = 0
        else:
            next_state = int(generator.choice(next_probs.shape[0], p=next_probs))
        steps.append(
            Transition(
                layer=h,
                state=state,
                action=action,
                reward=float(mdp.rewards[h][state, action]),
                next_state=next_state,
            )
        )
        state = next_state
    return Trajectory(tuple(steps))


def enumerate_deterministic_policies(mdp: LayeredMdp, limit: int = 100_000) -> List[Policy]:
    """All deterministic Markov policies.

    Raises:
        SearchBudgetExceededError: If there are more than ``limit`` of them.
    """
    total = 1
    for n in mdp.layer_sizes:
        total *= mdp.num_actions**n
        if total > limit:
            raise SearchBudgetExceededError(
                f"more than {limit} deterministic policies on {mdp.name}; pass an explicit policy set"
            )
    cells = [(h, x) for h, n in enumerate(mdp.layer_sizes) for x in range(n)]
    policies = []
    for flat in np.ndindex(*([mdp.num_actions] * len(cells))):
        actions = [np.zeros(n, dtype=int) for n in mdp.layer_sizes]
        for (h, x), a in zip(cells, flat):
            actions[h][x] = a
        policies.append(Policy.deterministic(actions, mdp.num_actions))
    return policies
