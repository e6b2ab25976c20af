"""Reward-free exploration with optimistic confidence sets and offline exploitation."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field

from .exceptions import EmptyConfidenceSetError, FamilyStructureError, MdpStructureError
from .function_family import (
    ValueFunctionFamily,
    bellman_backup,
    greedy_policy,
    layer_residuals,
    linf_distances,
)
from .golf import GolfConfig, LayerDataset, RunLog, golf_run, layer_loss_matrix, members_within
from .mdp import LayeredMdp, Policy, optimal_values, policy_value, validate_mdp

LOGGER = logging.getLogger(__name__)

TELESCOPING_TOLERANCE = 1e-9
MATCH_TOLERANCE = 1e-9
LIFT_TOLERANCE = 1e-10


class RewardFreeWidths(NamedTuple):
    beta_off: float
    beta_rf: float


def reward_free_betas(
    rounds: int,
    horizon: int,
    f_size: int,
    g_size: int,
    delta: float,
    c1: float = 1.0,
    c2: float = 1.0,
) -> RewardFreeWidths:
    """``beta_off = c1 L`` and ``beta_rf = (c1 + c2) L`` with ``L = log(T H max(|F|, |G|) / delta)``."""
    log_term = math.log(rounds * horizon * max(f_size, g_size) / delta)
    return RewardFreeWidths(beta_off=c1 * log_term, beta_rf=(c1 + c2) * log_term)


def inclusion_threshold(horizon: int, f_size: int, g_size: int, delta: float, beta_off: float) -> float:
    """Smallest exploration width for which offline survivors must reappear among explorers."""
    return 6.0 * beta_off + 18.0 * math.log(horizon * max(f_size, g_size) / delta)


@dataclass(frozen=True)
class ExplorationOutput:
    """Result of reward-free exploration.

    Attributes:
        mdp: The zero-reward MDP that was explored.
        datasets: Per-layer ``(x, a, x')`` data of rounds ``1..t* - 1``; rewards are zero.
        selected_round: ``t*``, the first round minimizing ``g_1^(t)(x_1, pi^(t))``.
        g_values: ``g_1^(t)(x_1, pi^(t))`` for every round.
        telescoping_gaps: Per-round ``|sum_h E_{d_h}[delta_h] - g_1^(t)(x_1, pi^(t))|``.
        run: The full exploration log.
    """

    mdp: LayeredMdp
    datasets: Tuple[LayerDataset, ...]
    selected_round: int
    g_values: np.ndarray
    telescoping_gaps: np.ndarray
    run: RunLog

    @property
    def selected_mask(self) -> np.ndarray:
        """``G^(t* - 1)``."""
        return self.run.masks[self.selected_round - 1]


def rf_explore(
    mdp: LayeredMdp,
    g_family: ValueFunctionFamily,
    rounds: int,
    beta_rf: float,
    seed: int = 0,
    logger: Optional[logging.Logger] = None,
) -> ExplorationOutput:
    """Explore with the zero-reward copy of ``mdp``; the reward is never consulted.

    Args:
        mdp: Environment; only its dynamics are used.
        g_family: Exploration family ``G``.
        rounds: Number of episodes ``T``.
        beta_rf: Exploration width.
        seed: Sampler seed.
        logger: Optional logger override.

    Returns:
        Data up to ``t* - 1`` together with the run.

    Raises:
        EmptyConfidenceSetError: If the exploration confidence set empties.
    """
    log = logger or LOGGER
    blind = mdp.without_rewards()
    run = golf_run(blind, g_family, GolfConfig(rounds=rounds, beta=beta_rf, seed=seed), logger=log)
    g_values = np.array([r.optimistic_value for r in run.records])
    gaps = np.array(
        [abs((r.on_policy_bellman_error or 0.0) - r.optimistic_value) for r in run.records]
    )
    if gaps.size and gaps.max() > TELESCOPING_TOLERANCE:
        log.error("Telescoping identity off by %.3g", float(gaps.max()))
    # np.argmin returns the first minimizer; rounds are 1-based.
    selected = int(np.argmin(g_values)) + 1
    datasets = tuple(
        LayerDataset.from_arrays(*dataset.arrays(limit=selected - 1)) for dataset in run.datasets
    )
    log.info(
        "Reward-free exploration selected t*=%d with g_1=%.4g", selected, g_values[selected - 1]
    )
    return ExplorationOutput(
        mdp=blind,
        datasets=datasets,
        selected_round=selected,
        g_values=g_values,
        telescoping_gaps=gaps,
        run=run,
    )


def _target_mdp(exploration: ExplorationOutput, target_reward: Sequence[np.ndarray]) -> LayeredMdp:
    target = exploration.mdp.with_rewards(target_reward, name=f"{exploration.mdp.name}-target")
    report = validate_mdp(target)
    if not report.valid:
        first = report.violations[0]
        raise MdpStructureError(f"target reward breaks normalization: {first.kind} {first.detail or ''}")
    return target


def _labelled(datasets: Sequence[LayerDataset], target: LayeredMdp) -> List[LayerDataset]:
    labelled = []
    for h, dataset in enumerate(datasets):
        states, actions, _, next_states = dataset.arrays()
        rewards = target.rewards[h][states, actions] if states.size else np.zeros(0)
        labelled.append(LayerDataset.from_arrays(states, actions, rewards, next_states))
    return labelled


def offline_confidence_mask(
    f_family: ValueFunctionFamily, datasets: Sequence[LayerDataset], beta_off: float
) -> np.ndarray:
    """Members of ``F`` within ``beta_off`` excess loss on reward-labelled data."""
    losses = [layer_loss_matrix(f_family, h, datasets[h]) for h in range(f_family.horizon)]
    return members_within(f_family, losses, beta_off)


@dataclass(frozen=True)
class ExploitationResult:
    member: int
    policy: Policy
    offline_mask: np.ndarray
    optimistic_value: float


def rf_exploit(
    exploration: ExplorationOutput,
    f_family: ValueFunctionFamily,
    target_reward: Sequence[np.ndarray],
    beta_off: float,
) -> ExploitationResult:
    """Optimistic member of the offline confidence set built with the target reward.

    Raises:
        MdpStructureError: If the target reward breaks the return normalization.
        EmptyConfidenceSetError: If no member of ``F`` survives.
    """
    target = _target_mdp(exploration, target_reward)
    f_family.check_against(target)
    datasets = _labelled(exploration.datasets, target)
    mask = offline_confidence_mask(f_family, datasets, beta_off)
    survivors = np.flatnonzero(mask)
    if survivors.size == 0:
        sizes = [len(d) for d in datasets]
        raise EmptyConfidenceSetError(
            f"offline confidence set empty at beta_off={beta_off} with layer sizes {sizes}"
        )
    first = f_family.components[0][:, target.initial_state, :].max(axis=1)
    optimism = first[f_family.members[survivors, 0]]
    member = int(survivors[int(np.argmax(optimism))])
    return ExploitationResult(
        member=member,
        policy=greedy_policy(f_family.tables(member)),
        offline_mask=mask,
        optimistic_value=float(optimism.max()),
    )


def residual_lift(mdp: LayeredMdp, f: Sequence[np.ndarray]) -> Tuple[np.ndarray, ...]:
    """Backward recursion ``g_h = f_h - T_h f_{h+1} + P_h g_{h+1}`` with ``g_{H+1} = 0``."""
    if len(f) != mdp.horizon:
        raise FamilyStructureError(f"function has {len(f)} layers, MDP has {mdp.horizon}")
    lifted: List[np.ndarray] = [np.zeros(0)] * mdp.horizon
    g_next: Optional[np.ndarray] = None
    for h in reversed(range(mdp.horizon)):
        f_next = f[h + 1] if h + 1 < mdp.horizon else None
        residual = f[h] - bellman_backup(mdp, f_next, h, reward=True)
        lifted[h] = residual + bellman_backup(mdp, g_next, h, reward=False)
        g_next = lifted[h]
    return tuple(lifted)


class LiftCheck(BaseModel):
    holds: bool
    min_gap: float
    last_layer_gap: float


def check_residual_lift(
    mdp: LayeredMdp, f: Sequence[np.ndarray], tol: float = LIFT_TOLERANCE
) -> LiftCheck:
    """Check ``g_h >= f_h - Q_h^{pi_f}`` cellwise, with equality at the last layer."""
    g = residual_lift(mdp, f)
    q_pi = policy_value(mdp, greedy_policy(f)).q_tables
    gaps = [g[h] - (f[h] - q_pi[h]) for h in range(mdp.horizon)]
    min_gap = float(min(gap.min() for gap in gaps))
    last_gap = float(np.max(np.abs(gaps[-1])))
    return LiftCheck(holds=min_gap >= -tol and last_gap <= tol, min_gap=min_gap, last_layer_gap=last_gap)


class InclusionReport(BaseModel):
    """Offline survivors without a residual-matching exploration survivor."""

    holds: bool
    threshold: float
    threshold_met: bool
    offline_members: List[int] = Field(default_factory=list)
    violations: List[int] = Field(default_factory=list)


def _member_residuals(
    mdp: LayeredMdp, family: ValueFunctionFamily, reward: bool
) -> List[np.ndarray]:
    per_layer = []
    for h in range(mdp.horizon):
        residuals = layer_residuals(mdp, family, h, reward)
        tables = residuals.tables[residuals.member_index]
        per_layer.append(tables.reshape(family.size, -1))
    return per_layer


def check_rf_vspace_inclusion(
    mdp: LayeredMdp,
    f_family: ValueFunctionFamily,
    g_family: ValueFunctionFamily,
    exploration: ExplorationOutput,
    beta_off: float,
    beta_rf: float,
    delta: float = 0.05,
    tol: float = MATCH_TOLERANCE,
) -> InclusionReport:
    """Check that every offline survivor has an exploration survivor with identical residuals.

    ``mdp`` carries the target reward. A member ``g`` matches ``f`` when
    ``g_h - P_h g_{h+1} = f_h - T_h f_{h+1}`` at every layer.
    """
    threshold = inclusion_threshold(mdp.horizon, f_family.size, g_family.size, delta, beta_off)
    target = _target_mdp(exploration, mdp.rewards)
    offline = offline_confidence_mask(f_family, _labelled(exploration.datasets, target), beta_off)
    explorers = np.flatnonzero(exploration.selected_mask)
    f_res = _member_residuals(mdp, f_family, reward=True)
    g_res = _member_residuals(mdp, g_family, reward=False)
    violations = []
    for m in np.flatnonzero(offline):
        matched = np.ones(explorers.size, dtype=bool)
        for h in range(mdp.horizon):
            distance = linf_distances(f_res[h][m][None, :], g_res[h][explorers])[0]
            matched &= distance <= tol
        if not matched.any():
            violations.append(int(m))
    if violations:
        LOGGER.warning(
            "%d offline survivors lack a matching explorer (beta_rf=%.4g, threshold=%.4g)",
            len(violations),
            beta_rf,
            threshold,
        )
    return InclusionReport(
        holds=not violations,
        threshold=threshold,
        threshold_met=beta_rf >= threshold,
        offline_members=[int(m) for m in np.flatnonzero(offline)],
        violations=violations,
    )


@dataclass(frozen=True)
class RewardFreeOutcome:
    exploration: ExplorationOutput
    exploitation: ExploitationResult
    value: float
    optimal_value: float

    @property
    def suboptimality(self) -> float:
        return self.optimal_value - self.value


def run_reward_free(
    mdp: LayeredMdp,
    f_family: ValueFunctionFamily,
    g_family: ValueFunctionFamily,
    rounds: int,
    widths: RewardFreeWidths,
    seed: int = 0,
    target_reward: Optional[Sequence[np.ndarray]] = None,
    logger: Optional[logging.Logger] = None,
) -> RewardFreeOutcome:
    """Explore without rewards, then exploit the target reward (``mdp``'s by default)."""
    reward = list(target_reward) if target_reward is not None else list(mdp.rewards)
    exploration = rf_explore(mdp, g_family, rounds, widths.beta_rf, seed, logger)
    exploitation = rf_exploit(exploration, f_family, reward, widths.beta_off)
    target = mdp.with_rewards(reward)
    return RewardFreeOutcome(
        exploration=exploration,
        exploitation=exploitation,
        value=policy_value(target, exploitation.policy).value,
        optimal_value=optimal_values(target).value,
    )
