"""Shared pytest fixtures."""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

PROJECT_ROOT = Path(__file__).resolve().parents[1]
if str(PROJECT_ROOT) not in sys.path:
    sys.path.insert(0, str(PROJECT_ROOT))

from coverlab.config import Settings  # noqa: E402
from coverlab.constructions import (  # noqa: E402
    Construction,
    RewardFreeConstruction,
    build_tree,
    build_two_layer,
    build_two_layer_reward_free,
)
from coverlab.function_family import ValueFunctionFamily  # noqa: E402
from coverlab.mdp import LayeredMdp, optimal_values  # noqa: E402


@pytest.fixture
def hand_mdp() -> LayeredMdp:
    """Return a two-layer MDP small enough to solve by hand.

    From ``x`` action 0 reaches ``y0`` surely and action 1 splits evenly
    between ``y0`` and ``y1``. The optimal return is 0.8.
    """
    first = np.array([[[1.0, 0.0], [0.5, 0.5]]])
    return LayeredMdp.from_arrays(
        [first],
        [np.array([[0.0, 0.1]]), np.array([[0.2, 0.5], [0.9, 0.0]])],
        states=[["x"], ["y0", "y1"]],
        actions=["left", "right"],
        name="hand",
    )


@pytest.fixture
def hand_family(hand_mdp: LayeredMdp) -> ValueFunctionFamily:
    """Return a family holding ``Q*`` of ``hand_mdp`` and two perturbed members."""
    q_star = optimal_values(hand_mdp).q_tables
    flat_first = np.full((1, 2), 0.6)
    flat_second = np.full((2, 2), 0.3)
    return ValueFunctionFamily.from_member_tables(
        [
            list(q_star),
            [flat_first, q_star[1]],
            [q_star[0], flat_second],
        ],
        name="hand-family",
    )


@pytest.fixture
def two_layer() -> Construction:
    """Return the four-action two-layer instance with the reward on action 3."""
    return build_two_layer(0.25, 3)


@pytest.fixture
def two_layer_rf() -> RewardFreeConstruction:
    """Return the four-action two-layer instance paired with its exploration family."""
    return build_two_layer_reward_free(0.25, 3)


@pytest.fixture
def small_tree() -> Construction:
    """Return a depth-3 binary tree rewarding the last (leaf, action) pair."""
    return build_tree(3, 8, 7)


@pytest.fixture
def settings(tmp_path: Path) -> Settings:
    """Provide settings writing into a temporary directory."""
    return Settings(output_dir=tmp_path / "runs", threads=1)
