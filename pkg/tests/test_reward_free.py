"""Tests for reward-free exploration and the offline exploitation step."""

import math

import numpy as np
import pytest

from coverlab.constructions import Construction, RewardFreeConstruction
from coverlab.exceptions import EmptyConfidenceSetError, MdpStructureError
from coverlab.function_family import ValueFunctionFamily
from coverlab.mdp import LayeredMdp
from coverlab.reward_free import (
    RewardFreeWidths,
    check_residual_lift,
    check_rf_vspace_inclusion,
    inclusion_threshold,
    residual_lift,
    reward_free_betas,
    rf_exploit,
    rf_explore,
    run_reward_free,
)

SMALL_WIDTHS = RewardFreeWidths(beta_off=1.0, beta_rf=2.0)


@pytest.fixture
def exploration(two_layer_rf: RewardFreeConstruction):
    """Run a short exploration phase on the two-layer pair."""
    return rf_explore(two_layer_rf.mdp, two_layer_rf.g_family, 200, SMALL_WIDTHS.beta_rf, seed=4)


def test_widths() -> None:
    widths = reward_free_betas(100, 2, 4, 3, 0.05, c1=1.0, c2=2.0)

    assert widths.beta_off == pytest.approx(math.log(16000.0))
    assert widths.beta_rf == pytest.approx(3.0 * math.log(16000.0))
    assert inclusion_threshold(2, 4, 3, 0.05, 1.0) == pytest.approx(6.0 + 18.0 * math.log(160.0))


def test_exploration_never_sees_rewards(exploration) -> None:
    assert exploration.mdp.name.endswith("-rf")
    assert exploration.g_values.shape == (200,)
    for dataset in exploration.datasets:
        assert len(dataset) == exploration.selected_round - 1
        assert not any(dataset.rewards)


def test_exploration_selects_first_minimizer(exploration) -> None:
    selected = exploration.selected_round

    assert exploration.g_values[selected - 1] == pytest.approx(exploration.g_values.min())
    assert np.all(exploration.g_values[: selected - 1] > exploration.g_values.min())
    assert exploration.telescoping_gaps.max() <= 1e-9
    assert exploration.selected_mask.tolist() == [False, False, False, True]


def test_exploitation_recovers_rewarded_action(
    exploration, two_layer_rf: RewardFreeConstruction
) -> None:
    result = rf_exploit(exploration, two_layer_rf.f_family, two_layer_rf.mdp.rewards, 1.0)

    assert result.member == 3
    assert result.offline_mask.tolist() == [False, False, False, True]
    assert result.policy.chosen_actions(1).tolist()[0] == 3


def test_exploitation_rejects_unnormalized_reward(
    exploration, two_layer_rf: RewardFreeConstruction
) -> None:
    reward = [np.zeros((1, 4)), np.full((2, 4), 2.0)]

    with pytest.raises(MdpStructureError, match="normalization"):
        rf_exploit(exploration, two_layer_rf.f_family, reward, 1.0)


def test_exploitation_with_negative_width_is_empty(
    exploration, two_layer_rf: RewardFreeConstruction
) -> None:
    with pytest.raises(EmptyConfidenceSetError):
        rf_exploit(exploration, two_layer_rf.f_family, two_layer_rf.mdp.rewards, -1.0)


def test_end_to_end_outcome(two_layer_rf: RewardFreeConstruction) -> None:
    outcome = run_reward_free(
        two_layer_rf.mdp, two_layer_rf.f_family, two_layer_rf.g_family, 200, SMALL_WIDTHS, seed=4
    )

    assert outcome.optimal_value == pytest.approx(0.25)
    assert outcome.suboptimality == pytest.approx(0.0)


def test_inclusion_of_offline_survivors(exploration, two_layer_rf: RewardFreeConstruction) -> None:
    report = check_rf_vspace_inclusion(
        two_layer_rf.mdp,
        two_layer_rf.f_family,
        two_layer_rf.g_family,
        exploration,
        beta_off=SMALL_WIDTHS.beta_off,
        beta_rf=SMALL_WIDTHS.beta_rf,
    )

    assert report.holds
    assert report.offline_members == [3]
    assert not report.threshold_met


def test_residual_lift_bounds_policy_gap(
    hand_mdp: LayeredMdp, hand_family: ValueFunctionFamily, two_layer: Construction
) -> None:
    assert two_layer.family is not None
    for m in range(hand_family.size):
        assert check_residual_lift(hand_mdp, hand_family.tables(m)).holds
    for m in range(two_layer.family.size):
        check = check_residual_lift(two_layer.mdp, two_layer.family.tables(m))
        assert check.holds
        assert check.last_layer_gap <= 1e-10


def test_residual_lift_of_optimal_function_is_zero(hand_mdp: LayeredMdp, hand_family: ValueFunctionFamily) -> None:
    lifted = residual_lift(hand_mdp, hand_family.tables(0))

    for table in lifted:
        np.testing.assert_allclose(table, 0.0, atol=1e-12)
