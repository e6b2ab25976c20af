"""Offline baselines: logged datasets, minimax squared Bellman optimization and FQI."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .coverage import DistributionFamily
from .function_family import ValueFunctionFamily, greedy_policy
from .golf import LayerDataset, layer_loss_matrix
from .mdp import LayeredMdp, Policy, optimal_values, policy_value

LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True)
class OfflineDataset:
    """Per-layer tuples with ``(x, a) ~ mu_h`` drawn independently across layers.

    Attributes:
        layers: One dataset per layer, each of ``samples`` tuples.
        mu: Logging distribution.
        samples: Tuples per layer ``n``.
        seed: Root seed; layer ``h`` uses child stream ``h``.
    """

    layers: Tuple[LayerDataset, ...]
    mu: DistributionFamily
    samples: int
    seed: int

    def empirical_frequencies(self, h: int, num_actions: int) -> np.ndarray:
        """Empirical ``(x, a)`` frequencies of layer ``h``."""
        states, actions, _, _ = self.layers[h].arrays()
        counts = np.zeros(self.mu.layers[h].shape)
        np.add.at(counts, (states, actions), 1.0)
        return counts / max(len(states), 1)


def sample_rows(rng: np.random.Generator, rows: np.ndarray) -> np.ndarray:
    """One categorical draw per row of a probability matrix.

    Identical rows share a single ``rng.choice`` call.
    """
    rows = np.asarray(rows, dtype=float)
    picks = np.empty(rows.shape[0], dtype=int)
    if rows.shape[0] == 0:
        return picks
    distinct, inverse = np.unique(rows, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    for index, probabilities in enumerate(distinct):
        mask = inverse == index
        picks[mask] = rng.choice(
            rows.shape[1], size=int(mask.sum()), p=probabilities / probabilities.sum()
        )
    return picks


def generate_offline(
    mdp: LayeredMdp, mu: DistributionFamily, samples: int, seed: int = 0
) -> OfflineDataset:
    """Draw ``samples`` tuples per layer from ``mu`` and the MDP dynamics.

    Rewards are read from the deterministic reward table. Each layer samples
    from its own child of ``SeedSequence(seed)``.
    """
    mu.check_against(mdp)
    streams = np.random.SeedSequence(seed).spawn(mdp.horizon)
    layers = []
    for h, stream in enumerate(streams):
        rng = np.random.default_rng(stream)
        flat = mu.layers[h].reshape(-1)
        cells = rng.choice(flat.size, size=samples, p=flat / flat.sum())
        states, actions = np.divmod(cells, mdp.num_actions)
        rewards = mdp.rewards[h][states, actions]
        next_states = sample_rows(rng, mdp.transitions[h][states, actions])
        layers.append(LayerDataset.from_arrays(states, actions, rewards, next_states))
    LOGGER.debug("Generated %d tuples per layer for %s (seed=%d)", samples, mdp.name, seed)
    return OfflineDataset(layers=tuple(layers), mu=mu, samples=samples, seed=seed)


@dataclass(frozen=True)
class OfflineEstimate:
    """Function selected by an offline method.

    Attributes:
        tables: Per-layer tables of the selected function.
        policy: Its greedy policy.
        member: Member index when the tables form a member of the family.
        components: Selected component index per layer.
        objective: Per-member objective (MSBO only).
        flags: Degenerate situations met on the way.
    """

    tables: Tuple[np.ndarray, ...]
    policy: Policy
    member: Optional[int]
    components: Tuple[int, ...]
    objective: Optional[np.ndarray] = None
    flags: List[str] = field(default_factory=list)


def msbo_objective(dataset: OfflineDataset, family: ValueFunctionFamily) -> np.ndarray:
    """``sum_h (L_h(f_h, f_{h+1}) - min_{f'_h in F_h} L_h(f'_h, f_{h+1}))`` for every member."""
    objective = np.zeros(family.size)
    for h in range(family.horizon):
        losses = layer_loss_matrix(family, h, dataset.layers[h])
        excess = losses - losses.min(axis=0, keepdims=True)
        if h + 1 < family.horizon:
            next_index = family.members[:, h + 1]
        else:
            next_index = np.zeros(family.size, dtype=int)
        objective += excess[family.members[:, h], next_index]
    return objective


def msbo(dataset: OfflineDataset, family: ValueFunctionFamily) -> OfflineEstimate:
    """Exact minimizer of the minimax squared Bellman objective, least index on ties."""
    objective = msbo_objective(dataset, family)
    member = int(np.argmin(objective))
    tables = family.tables(member)
    return OfflineEstimate(
        tables=tables,
        policy=greedy_policy(tables),
        member=member,
        components=tuple(int(k) for k in family.members[member]),
        objective=objective,
    )


def fqi(dataset: OfflineDataset, family: ValueFunctionFamily) -> OfflineEstimate:
    """Backward least-squares regression, one component per layer.

    Layer ``h`` regresses onto ``r + max_a' f_hat_{h+1}(x', a')`` using the
    component chosen for layer ``h + 1``. An empty layer selects component 0
    and is flagged.
    """
    chosen = [0] * family.horizon
    flags: List[str] = []
    next_component = 0
    for h in reversed(range(family.horizon)):
        if len(dataset.layers[h]) == 0:
            flags.append(f"empty dataset at layer {h}")
        losses = layer_loss_matrix(family, h, dataset.layers[h])
        chosen[h] = int(np.argmin(losses[:, next_component]))
        next_component = chosen[h]
    tables = tuple(family.components[h][k] for h, k in enumerate(chosen))
    matches = np.flatnonzero(np.all(family.members == np.array(chosen)[None, :], axis=1))
    return OfflineEstimate(
        tables=tables,
        policy=greedy_policy(tables),
        member=int(matches[0]) if matches.size else None,
        components=tuple(chosen),
        flags=flags,
    )


def suboptimality(mdp: LayeredMdp, policy: Policy) -> float:
    """``J(pi*) - J(pi)``."""
    return optimal_values(mdp).value - policy_value(mdp, policy).value
