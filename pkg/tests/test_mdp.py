"""Tests for the layered MDP engine."""

import numpy as np
import pytest
from hypothesis import given, settings as hypothesis_settings
from hypothesis import strategies as st

from coverlab.constructions import build_random_mdp
from coverlab.exceptions import MdpStructureError, SearchBudgetExceededError
from coverlab.mdp import (
    LayeredMdp,
    Policy,
    enumerate_deterministic_policies,
    expected_reward,
    max_reach,
    occupancy,
    optimal_values,
    policy_value,
    reachability_table,
    sample_trajectory,
    validate_mdp,
)


def test_from_arrays_appends_terminal_sink(hand_mdp: LayeredMdp) -> None:
    assert hand_mdp.horizon == 2
    assert hand_mdp.layer_sizes == (1, 2)
    assert hand_mdp.transitions[-1].shape == (2, 2, 1)
    assert hand_mdp.num_cells(1) == 4


def test_shape_mismatch_is_rejected() -> None:
    with pytest.raises(MdpStructureError) as excinfo:
        LayeredMdp.from_arrays(
            [np.ones((1, 2, 3)) / 3],
            [np.zeros((1, 2)), np.zeros((2, 2))],
        )
    assert excinfo.value.coordinates == (0,)


def test_validate_reports_each_violation() -> None:
    mdp = LayeredMdp.from_arrays(
        [np.array([[[0.7, 0.7], [1.2, -0.2]]])],
        [np.array([[0.9, 1.5]]), np.array([[0.9, 0.0], [0.0, 0.0]])],
    )

    report = validate_mdp(mdp)

    kinds = {violation.kind for violation in report.violations}
    assert not report.valid
    assert {"negative-probability", "row-sum", "reward-range", "normalization"} <= kinds
    row_sum = next(v for v in report.violations if v.kind == "row-sum")
    assert (row_sum.layer, row_sum.state, row_sum.action) == (0, 0, 0)


def test_validate_accepts_hand_instance(hand_mdp: LayeredMdp) -> None:
    report = validate_mdp(hand_mdp)

    assert report.valid
    assert report.max_return == pytest.approx(1.0)


def test_optimal_values_of_hand_instance(hand_mdp: LayeredMdp) -> None:
    solution = optimal_values(hand_mdp)

    assert solution.value == pytest.approx(0.8)
    assert solution.policy.chosen_actions(0).tolist() == [1]
    assert solution.policy.chosen_actions(1).tolist() == [1, 0]
    np.testing.assert_allclose(solution.q_tables[0], [[0.5, 0.8]])


def test_uniform_policy_value(hand_mdp: LayeredMdp) -> None:
    evaluation = policy_value(hand_mdp, Policy.uniform(hand_mdp))

    assert evaluation.value == pytest.approx(0.425)
    np.testing.assert_allclose(evaluation.v_tables[1], [0.35, 0.45])


def test_occupancy_of_optimal_policy(hand_mdp: LayeredMdp) -> None:
    occ = occupancy(hand_mdp, optimal_values(hand_mdp).policy)

    np.testing.assert_allclose(occ.layers[0], [[0.0, 1.0]])
    np.testing.assert_allclose(occ.layers[1], [[0.0, 0.5], [0.5, 0.0]])
    np.testing.assert_allclose(occ.state_marginal(1), [0.5, 0.5])


def test_reachability(hand_mdp: LayeredMdp) -> None:
    np.testing.assert_allclose(reachability_table(hand_mdp, 1), [1.0, 0.5])
    assert max_reach(hand_mdp, 1, 1, 0) == pytest.approx(0.5)
    with pytest.raises(MdpStructureError):
        max_reach(hand_mdp, 1, 2)


def test_ties_resolve_to_least_action() -> None:
    mdp = LayeredMdp.from_arrays([], [np.array([[0.5, 0.5, 0.2]])])

    assert optimal_values(mdp).policy.chosen_actions(0).tolist() == [0]


def test_deterministic_enumeration(hand_mdp: LayeredMdp) -> None:
    policies = enumerate_deterministic_policies(hand_mdp)

    assert len(policies) == 8
    assert len({policy.key() for policy in policies}) == 8
    with pytest.raises(SearchBudgetExceededError, match="more than 4"):
        enumerate_deterministic_policies(hand_mdp, limit=4)


def test_sampling_is_reproducible(hand_mdp: LayeredMdp) -> None:
    policy = Policy.uniform(hand_mdp)

    first = sample_trajectory(hand_mdp, policy, 11)
    second = sample_trajectory(hand_mdp, policy, 11)

    assert first == second
    assert [step.layer for step in first.steps] == [0, 1]
    assert first.steps[-1].next_state == 0


def test_policy_shape_is_checked(hand_mdp: LayeredMdp) -> None:
    policy = Policy.deterministic([np.zeros(1, dtype=int)], 2)

    with pytest.raises(MdpStructureError):
        occupancy(hand_mdp, policy)


def test_reward_free_copy_keeps_dynamics(hand_mdp: LayeredMdp) -> None:
    stripped = hand_mdp.without_rewards()

    assert optimal_values(stripped).value == 0.0
    np.testing.assert_array_equal(stripped.transitions[0], hand_mdp.transitions[0])


@hypothesis_settings(max_examples=25, deadline=None)
@given(seed=st.integers(min_value=0, max_value=10_000), policy_seed=st.integers(0, 10_000))
def test_occupancy_and_value_agree(seed: int, policy_seed: int) -> None:
    mdp = build_random_mdp(3, 3, 2, seed)
    rng = np.random.default_rng(policy_seed)
    policy = Policy.randomized(
        [rng.dirichlet(np.ones(mdp.num_actions), size=n) for n in mdp.layer_sizes]
    )

    occ = occupancy(mdp, policy)

    for layer in occ.layers:
        assert layer.sum() == pytest.approx(1.0)
        assert layer.min() >= 0.0
    assert expected_reward(mdp, occ) == pytest.approx(policy_value(mdp, policy).value)
    assert policy_value(mdp, policy).value <= optimal_values(mdp).value + 1e-12
