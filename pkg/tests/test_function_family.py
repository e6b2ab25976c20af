"""Tests for value-function families, residuals and their structural checks."""

import numpy as np
import pytest

from coverlab.constructions import RewardFreeConstruction, build_random_family, build_random_mdp
from coverlab.exceptions import FamilyStructureError
from coverlab.function_family import (
    ValueFunctionFamily,
    bellman_backup,
    check_completeness,
    check_realizability,
    check_rf_completeness,
    greedy_policy,
    induced_policies,
    layer_residuals,
    member_residual,
    realizing_members,
    residual_table,
)
from coverlab.mdp import LayeredMdp, optimal_values


def test_member_tables_share_components(hand_family: ValueFunctionFamily) -> None:
    assert hand_family.size == 3
    assert [comps.shape[0] for comps in hand_family.components] == [2, 2]
    assert hand_family.members.tolist() == [[0, 0], [1, 0], [0, 1]]


def test_product_family_is_lexicographic() -> None:
    family = ValueFunctionFamily.product([np.zeros((2, 1, 2)), np.zeros((3, 2, 2))])

    assert family.size == 6
    assert family.members[:4].tolist() == [[0, 0], [0, 1], [0, 2], [1, 0]]


def test_values_outside_bounds_are_rejected() -> None:
    with pytest.raises(FamilyStructureError, match="range"):
        ValueFunctionFamily.from_member_tables([[np.full((1, 2), 1.5)]])


def test_supplied_components_must_contain_members() -> None:
    with pytest.raises(FamilyStructureError):
        ValueFunctionFamily.from_member_tables(
            [[np.zeros((1, 2))]], components=[[np.ones((1, 2))]]
        )


def test_family_shape_checked_against_mdp(hand_mdp: LayeredMdp) -> None:
    family = ValueFunctionFamily.from_member_tables([[np.zeros((1, 3)), np.zeros((2, 3))]])

    with pytest.raises(FamilyStructureError):
        family.check_against(hand_mdp)


def test_backup_of_terminal_zero_is_reward(hand_mdp: LayeredMdp) -> None:
    np.testing.assert_allclose(bellman_backup(hand_mdp, None, 1), hand_mdp.rewards[1])
    np.testing.assert_allclose(
        bellman_backup(hand_mdp, hand_mdp.rewards[1], 0, reward=False), [[0.5, 0.7]]
    )


def test_optimal_q_has_zero_residual(hand_mdp: LayeredMdp) -> None:
    q_star = optimal_values(hand_mdp).q_tables

    assert residual_table(hand_mdp, q_star).sup_norm == pytest.approx(0.0)
    assert greedy_policy(q_star).key() == optimal_values(hand_mdp).policy.key()


def test_member_residual(hand_mdp: LayeredMdp, hand_family: ValueFunctionFamily) -> None:
    residual = member_residual(hand_mdp, hand_family, 1)

    np.testing.assert_allclose(residual.layers[0], [[0.1, -0.2]])
    assert residual.sup_norm == pytest.approx(0.2)


def test_layer_residuals_deduplicate(hand_mdp: LayeredMdp, hand_family: ValueFunctionFamily) -> None:
    residuals = layer_residuals(hand_mdp, hand_family, 1)

    assert residuals.tables.shape[0] == 2
    assert residuals.member_index[0] == residuals.member_index[1]


def test_realizability(hand_mdp: LayeredMdp, hand_family: ValueFunctionFamily) -> None:
    report = check_realizability(hand_mdp, hand_family)

    assert report.realizable
    assert report.nearest_member == 0
    assert realizing_members(hand_mdp, hand_family).tolist() == [0]


def test_completeness_lists_violations(hand_mdp: LayeredMdp, hand_family: ValueFunctionFamily) -> None:
    report = check_completeness(hand_mdp, hand_family)

    assert not report.complete
    assert [(v.member, v.layer) for v in report.violations] == [(2, 0)]
    assert report.violations[0].distance == pytest.approx(0.3)


def test_induced_policies_follow_member_order(hand_family: ValueFunctionFamily) -> None:
    induced = induced_policies(hand_family)

    assert len(induced.policies) == 3
    assert induced.member_policy.tolist() == [0, 1, 2]
    assert induced.policies[1].chosen_actions(0).tolist() == [0]


def test_random_family_contains_optimal() -> None:
    mdp = build_random_mdp(3, 3, 2, seed=4)
    family = build_random_family(mdp, 5, seed=5)

    assert family.size == 5
    assert check_realizability(mdp, family).realizable


def test_reward_free_pair_is_complete(two_layer_rf: RewardFreeConstruction) -> None:
    report = check_rf_completeness(two_layer_rf.mdp, two_layer_rf.f_family, two_layer_rf.g_family)

    assert report.holds
    assert report.backup_closed and report.residuals_covered


def test_family_is_not_its_own_exploration_class(two_layer_rf: RewardFreeConstruction) -> None:
    report = check_rf_completeness(two_layer_rf.mdp, two_layer_rf.f_family, two_layer_rf.f_family)

    assert not report.holds
    assert report.residual_violations
