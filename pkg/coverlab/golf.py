"""Optimistic online learning with squared-Bellman-loss confidence sets."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .exceptions import EmptyConfidenceSetError, FamilyStructureError
from .function_family import (
    ValueFunctionFamily,
    induced_policies,
    realizing_members,
    residual_table,
)
from .mdp import LayeredMdp, Policy, Trajectory, occupancy, optimal_values, policy_value, sample_trajectory

LOGGER = logging.getLogger(__name__)

DEFAULT_RECOMPUTE_INTERVAL = 256


class GolfConfig(BaseModel):
    """Inputs of one run.

    Attributes:
        rounds: Number of episodes ``T``.
        beta: Confidence width.
        seed: Seed of the episode sampler.
        record_diagnostics: Record optimism and on-policy Bellman-error diagnostics.
        recompute_interval: Rounds between exact recomputations of running losses.
    """

    model_config = ConfigDict(populate_by_name=True)

    rounds: int = Field(ge=1, alias="T")
    beta: float = Field(ge=0.0)
    seed: int = 0
    record_diagnostics: bool = True
    recompute_interval: int = Field(default=DEFAULT_RECOMPUTE_INTERVAL, ge=1)


class LayerDataset:
    """Growing list of ``(x, a, r, x')`` tuples observed at one layer."""

    def __init__(self) -> None:
        self.states: List[int] = []
        self.actions: List[int] = []
        self.rewards: List[float] = []
        self.next_states: List[int] = []

    def __len__(self) -> int:
        return len(self.states)

    def append(self, state: int, action: int, reward: float, next_state: int) -> None:
        self.states.append(state)
        self.actions.append(action)
        self.rewards.append(reward)
        self.next_states.append(next_state)

    def arrays(self, limit: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Tuple columns, optionally truncated to the first ``limit`` entries."""
        end = len(self) if limit is None else limit
        return (
            np.asarray(self.states[:end], dtype=int),
            np.asarray(self.actions[:end], dtype=int),
            np.asarray(self.rewards[:end], dtype=float),
            np.asarray(self.next_states[:end], dtype=int),
        )

    @classmethod
    def from_arrays(
        cls, states: np.ndarray, actions: np.ndarray, rewards: np.ndarray, next_states: np.ndarray
    ) -> "LayerDataset":
        dataset = cls()
        dataset.states = [int(v) for v in states]
        dataset.actions = [int(v) for v in actions]
        dataset.rewards = [float(v) for v in rewards]
        dataset.next_states = [int(v) for v in next_states]
        return dataset


def _next_max(family: ValueFunctionFamily, h: int) -> np.ndarray:
    if h + 1 < family.horizon:
        return family.components[h + 1].max(axis=2)
    return np.zeros((1, 1))


def squared_bellman_loss(
    dataset: LayerDataset, f_h: np.ndarray, f_next: Optional[np.ndarray]
) -> float:
    """``sum (f_h(x, a) - r - max_a' f_next(x', a'))^2`` over one layer's data.

    ``f_next=None`` stands for the terminal zero function.
    """
    states, actions, rewards, next_states = dataset.arrays()
    if states.size == 0:
        return 0.0
    targets = rewards.copy()
    if f_next is not None:
        targets += f_next.max(axis=1)[next_states]
    return float(np.sum((f_h[states, actions] - targets) ** 2))


def layer_loss_matrix(
    family: ValueFunctionFamily, h: int, dataset: LayerDataset, limit: Optional[int] = None
) -> np.ndarray:
    """Exact ``L_h(f_h, f_{h+1})`` for every component pair, shape ``(K_h, K_{h+1})``."""
    states, actions, rewards, next_states = dataset.arrays(limit)
    current = family.components[h]
    nxt = _next_max(family, h)
    if states.size == 0:
        return np.zeros((current.shape[0], nxt.shape[0]))
    preds = current[:, states, actions]
    targets = rewards[None, :] + nxt[:, np.minimum(next_states, nxt.shape[1] - 1)]
    return np.sum((preds[:, None, :] - targets[None, :, :]) ** 2, axis=2)


class LayerLossTracker:
    """Running sums giving ``L_h`` for all component pairs in ``O(K_h K_{h+1})`` per tuple."""

    def __init__(self, family: ValueFunctionFamily, h: int) -> None:
        self.family = family
        self.h = h
        self.current = family.components[h]
        self.nxt = _next_max(family, h)
        k_h, k_next = self.current.shape[0], self.nxt.shape[0]
        self.sq_pred = np.zeros(k_h)
        self.cross = np.zeros((k_h, k_next))
        self.sq_target = np.zeros(k_next)

    def add(self, state: int, action: int, reward: float, next_state: int) -> None:
        pred = self.current[:, state, action]
        target = reward + self.nxt[:, min(next_state, self.nxt.shape[1] - 1)]
        self.sq_pred += pred**2
        self.cross += np.outer(pred, target)
        self.sq_target += target**2

    def recompute(self, dataset: LayerDataset) -> None:
        """Reset the running sums from the full dataset."""
        states, actions, rewards, next_states = dataset.arrays()
        if states.size == 0:
            return
        preds = self.current[:, states, actions]
        targets = rewards[None, :] + self.nxt[:, np.minimum(next_states, self.nxt.shape[1] - 1)]
        self.sq_pred = np.sum(preds**2, axis=1)
        self.cross = preds @ targets.T
        self.sq_target = np.sum(targets**2, axis=1)

    def losses(self) -> np.ndarray:
        raw = self.sq_pred[:, None] - 2.0 * self.cross + self.sq_target[None, :]
        return np.maximum(raw, 0.0)


def members_within(
    family: ValueFunctionFamily, losses: Sequence[np.ndarray], beta: float
) -> np.ndarray:
    """Boolean mask of members passing every per-layer excess-loss test."""
    mask = np.ones(family.size, dtype=bool)
    for h, loss in enumerate(losses):
        excess = loss - loss.min(axis=0, keepdims=True)
        if h + 1 < family.horizon:
            next_index = family.members[:, h + 1]
        else:
            next_index = np.zeros(family.size, dtype=int)
        mask &= excess[family.members[:, h], next_index] <= beta
    return mask


def confidence_set(
    family: ValueFunctionFamily, datasets: Sequence[LayerDataset], beta: float
) -> np.ndarray:
    """Indices of members whose excess squared Bellman loss stays within ``beta`` at every layer.

    Args:
        family: Candidate functions with their component sets.
        datasets: One dataset per layer.
        beta: Confidence width.

    Returns:
        Sorted member indices; an empty array signals that ``beta`` is too small.
    """
    if len(datasets) != family.horizon:
        raise FamilyStructureError("one dataset per layer is required")
    losses = [layer_loss_matrix(family, h, datasets[h]) for h in range(family.horizon)]
    members = np.flatnonzero(members_within(family, losses, beta))
    if members.size == 0:
        LOGGER.warning("Confidence set of %s is empty at beta=%s", family.name, beta)
    return members


def golf_beta(rounds: int, horizon: int, family_size: int, delta: float, constant: float = 2.0) -> float:
    """``c * log(T * H * |F| / delta)``."""
    return constant * math.log(rounds * horizon * family_size / delta)


@dataclass
class GolfState:
    """Mutable state of a run: data, running losses and the current confidence set."""

    mdp: LayeredMdp
    family: ValueFunctionFamily
    beta: float
    rng: np.random.Generator
    datasets: List[LayerDataset]
    trackers: List[LayerLossTracker]
    mask: np.ndarray
    optimistic: np.ndarray
    member_policy: np.ndarray
    policies: Tuple[Policy, ...]
    recompute_interval: int = DEFAULT_RECOMPUTE_INTERVAL
    t: int = 0

    @classmethod
    def initial(
        cls,
        mdp: LayeredMdp,
        family: ValueFunctionFamily,
        beta: float,
        seed: int,
        recompute_interval: int = DEFAULT_RECOMPUTE_INTERVAL,
    ) -> "GolfState":
        family.check_against(mdp)
        induced = induced_policies(family)
        first = family.components[0][:, mdp.initial_state, :].max(axis=1)
        return cls(
            mdp=mdp,
            family=family,
            beta=beta,
            rng=np.random.default_rng(seed),
            datasets=[LayerDataset() for _ in range(mdp.horizon)],
            trackers=[LayerLossTracker(family, h) for h in range(mdp.horizon)],
            mask=np.ones(family.size, dtype=bool),
            optimistic=first[family.members[:, 0]],
            member_policy=induced.member_policy,
            policies=induced.policies,
            recompute_interval=recompute_interval,
        )

    def losses(self) -> List[np.ndarray]:
        return [tracker.losses() for tracker in self.trackers]


@dataclass(frozen=True)
class GolfStep:
    member: int
    policy: Policy
    trajectory: Trajectory
    state: GolfState


def golf_step(state: GolfState) -> GolfStep:
    """Select the most optimistic surviving member, run its greedy policy, update the set.

    Raises:
        EmptyConfidenceSetError: If no member survives.
    """
    candidates = np.flatnonzero(state.mask)
    if candidates.size == 0:
        raise EmptyConfidenceSetError(f"confidence set empty before round {state.t + 1}")
    # argmax keeps the first maximizer, i.e. the least member index.
    member = int(candidates[int(np.argmax(state.optimistic[candidates]))])
    policy = state.policies[state.member_policy[member]]
    trajectory = sample_trajectory(state.mdp, policy, state.rng)
    for step in trajectory.steps:
        state.datasets[step.layer].append(step.state, step.action, step.reward, step.next_state)
        state.trackers[step.layer].add(step.state, step.action, step.reward, step.next_state)
    state.t += 1
    if state.t % state.recompute_interval == 0:
        for tracker, dataset in zip(state.trackers, state.datasets):
            tracker.recompute(dataset)
    state.mask = members_within(state.family, state.losses(), state.beta)
    return GolfStep(member=member, policy=policy, trajectory=trajectory, state=state)


class RoundRecord(BaseModel):
    """Per-round diagnostics of a run."""

    t: int
    member: int
    policy_index: int
    fstar_in_prev_set: Optional[bool] = None
    fstar_in_set: Optional[bool] = None
    set_size: int
    optimistic_value: float
    policy_value: float
    regret: float
    cumulative_regret: float
    on_policy_bellman_error: Optional[float] = None


@dataclass
class RunLog:
    """Everything a run produced.

    Attributes:
        records: One record per executed round.
        trajectories: Sampled episodes.
        masks: Confidence-set masks; ``masks[t]`` is ``F^(t)`` and ``masks[0]`` the full family.
        datasets: Final per-layer datasets; round ``t`` saw the first ``t`` tuples of each.
        optimal_value: ``J(pi*)``.
        beta: Width used.
        seed: Sampler seed.
        aborted: Whether the run stopped on an empty confidence set.
    """

    records: List[RoundRecord]
    trajectories: List[Trajectory]
    masks: List[np.ndarray]
    datasets: List[LayerDataset]
    optimal_value: float
    beta: float
    seed: int
    policies: Tuple[Policy, ...] = field(default_factory=tuple)
    aborted: bool = False
    abort_reason: str = ""

    @property
    def rounds(self) -> int:
        return len(self.records)

    @property
    def cumulative_regret(self) -> np.ndarray:
        return np.array([r.cumulative_regret for r in self.records])

    def to_rows(self) -> List[Dict[str, object]]:
        """CSV rows ``t, fstar_in_set, set_size, optimistic_value, J_pi_t, cum_regret``."""
        return [
            {
                "t": r.t,
                "fstar_in_set": "" if r.fstar_in_set is None else int(r.fstar_in_set),
                "set_size": r.set_size,
                "optimistic_value": repr(r.optimistic_value),
                "J_pi_t": repr(r.policy_value),
                "cum_regret": repr(r.cumulative_regret),
            }
            for r in self.records
        ]


class _PolicyCache:
    """Per-policy exact values and per-member on-policy Bellman errors."""

    def __init__(self, mdp: LayeredMdp, family: ValueFunctionFamily, policies: Sequence[Policy]) -> None:
        self.mdp = mdp
        self.family = family
        self.policies = policies
        self.values: Dict[int, float] = {}
        self.occupancies: Dict[int, object] = {}
        self.bellman: Dict[int, float] = {}

    def value(self, index: int) -> float:
        if index not in self.values:
            self.values[index] = policy_value(self.mdp, self.policies[index]).value
        return self.values[index]

    def on_policy_bellman_error(self, member: int, index: int) -> float:
        if member not in self.bellman:
            occ = occupancy(self.mdp, self.policies[index])
            residual = residual_table(self.mdp, self.family.tables(member))
            self.bellman[member] = float(
                sum(np.sum(d * r) for d, r in zip(occ.layers, residual.layers))
            )
        return self.bellman[member]


def golf_run(
    mdp: LayeredMdp,
    family: ValueFunctionFamily,
    config: GolfConfig,
    logger: Optional[logging.Logger] = None,
) -> RunLog:
    """Run ``config.rounds`` optimistic episodes and log every round.

    Args:
        mdp: Environment.
        family: Candidate Q-functions.
        config: Rounds, width, seed and diagnostics switch.
        logger: Optional logger override.

    Returns:
        The complete log.

    Raises:
        EmptyConfidenceSetError: Carrying the partial log as ``partial_log``.
    """
    log = logger or LOGGER
    state = GolfState.initial(mdp, family, config.beta, config.seed, config.recompute_interval)
    optimal_value = optimal_values(mdp).value
    cache = _PolicyCache(mdp, family, state.policies)
    realizing = realizing_members(mdp, family) if config.record_diagnostics else np.array([], dtype=int)
    run = RunLog(
        records=[],
        trajectories=[],
        masks=[state.mask.copy()],
        datasets=state.datasets,
        optimal_value=optimal_value,
        beta=config.beta,
        seed=config.seed,
        policies=state.policies,
    )
    log.info(
        "GOLF on %s: T=%d beta=%.4g |F|=%d seed=%d",
        mdp.name,
        config.rounds,
        config.beta,
        family.size,
        config.seed,
    )
    cumulative = 0.0
    for _ in range(config.rounds):
        prev_mask = state.mask
        try:
            step = golf_step(state)
        except EmptyConfidenceSetError as exc:
            run.aborted = True
            run.abort_reason = str(exc)
            log.error("Run aborted after %d rounds: %s", run.rounds, exc)
            raise EmptyConfidenceSetError(str(exc), partial_log=run) from exc
        policy_index = int(state.member_policy[step.member])
        value = cache.value(policy_index)
        regret = optimal_value - value
        cumulative += regret
        record = RoundRecord(
            t=state.t,
            member=step.member,
            policy_index=policy_index,
            set_size=int(state.mask.sum()),
            optimistic_value=float(state.optimistic[step.member]),
            policy_value=value,
            regret=regret,
            cumulative_regret=cumulative,
        )
        if config.record_diagnostics:
            record.fstar_in_prev_set = bool(prev_mask[realizing].any()) if realizing.size else False
            record.fstar_in_set = bool(state.mask[realizing].any()) if realizing.size else False
            record.on_policy_bellman_error = cache.on_policy_bellman_error(step.member, policy_index)
        run.records.append(record)
        run.trajectories.append(step.trajectory)
        run.masks.append(state.mask.copy())
    log.info("Finished: Reg(T)=%.4f, final |F^(T)|=%d", cumulative, int(state.mask.sum()))
    return run


@dataclass(frozen=True)
class BatchPolicy:
    """Uniform mixture of the per-round policies."""

    policy_indices: Tuple[int, ...]
    value: float
    suboptimality: float


def online_to_batch(run: RunLog) -> BatchPolicy:
    """Mixture ``Unif(pi^(1..T))``; its value is the average of the round values."""
    if not run.records:
        raise ValueError("online-to-batch needs at least one completed round")
    values = [r.policy_value for r in run.records]
    value = float(np.mean(values))
    return BatchPolicy(
        policy_indices=tuple(r.policy_index for r in run.records),
        value=value,
        suboptimality=run.optimal_value - value,
    )


@dataclass(frozen=True)
class RegretDecomposition:
    regret: float
    bellman_error: float
    optimism_gap: float

    @property
    def gap(self) -> float:
        return abs(self.regret - self.bellman_error - self.optimism_gap)


def regret_decomposition(run: RunLog) -> RegretDecomposition:
    """Split regret into on-policy Bellman errors plus ``sum_t (J* - f_1^(t))``."""
    if any(r.on_policy_bellman_error is None for r in run.records):
        raise ValueError("run was recorded without diagnostics")
    return RegretDecomposition(
        regret=run.records[-1].cumulative_regret if run.records else 0.0,
        bellman_error=float(sum(r.on_policy_bellman_error or 0.0 for r in run.records)),
        optimism_gap=float(sum(run.optimal_value - r.optimistic_value for r in run.records)),
    )


def audit_confidence_sets(
    run: RunLog, family: ValueFunctionFamily, stride: int = 1, tol: float = 1e-8
) -> List[int]:
    """Rounds whose recorded confidence set disagrees with exact recomputation.

    Every member in ``masks[t]`` must satisfy the defining inequality on the
    first ``t`` tuples of each layer.
    """
    bad = []
    for t in range(0, run.rounds + 1, stride):
        losses = [layer_loss_matrix(family, h, run.datasets[h], limit=t) for h in range(family.horizon)]
        exact = members_within(family, losses, run.beta + tol)
        if np.any(run.masks[t] & ~exact):
            bad.append(t)
    return bad
