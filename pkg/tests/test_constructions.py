"""Tests for the hard-instance generators and the observation augmentations."""

import numpy as np
import pytest

from coverlab.complexity import be_dim
from coverlab.constructions import (
    augment_exogenous,
    augment_rich_obs,
    build_bandit_family,
    build_exbmdp,
    build_random_mdp,
    build_tree,
    build_two_layer,
    construction_from_params,
    disjoint_emission,
)
from coverlab.coverage import coverability
from coverlab.exceptions import ConstructionError
from coverlab.function_family import check_completeness, check_realizability
from coverlab.mdp import LayeredMdp, optimal_values, validate_mdp


def test_tree_is_complete_and_realizable(small_tree) -> None:
    assert small_tree.family is not None

    assert small_tree.mdp.layer_sizes == (1, 2, 4)
    assert optimal_values(small_tree.mdp).value == 1.0
    assert check_completeness(small_tree.mdp, small_tree.family).complete
    assert check_realizability(small_tree.mdp, small_tree.family).realizable
    assert small_tree.family.size == 2 * 4 * 8


def test_tree_depth_is_truncated() -> None:
    construction = build_tree(5, 8, 0)

    assert construction.manifest.parameters["depth"] == 3
    assert any("truncated" in note for note in construction.manifest.notes)
    assert build_tree(4, 16, 0, capacity=2).mdp.horizon == 2


def test_tree_depth_needs_a_full_layer_of_states() -> None:
    short = build_tree(2, 3, 0)
    full = build_tree(2, 4, 0)

    assert short.mdp.horizon == 1
    assert short.manifest.notes == ["depth truncated from H=2 to 1"]
    assert full.mdp.horizon == 2
    assert full.manifest.notes == []


def test_tree_rejects_bad_leaf() -> None:
    with pytest.raises(ConstructionError, match="leaf_index"):
        build_tree(2, 4, 4)


def test_bandit_instances() -> None:
    instances = build_bandit_family(0.25)

    assert len(instances) == 4
    for i, construction in enumerate(instances):
        assert construction.family is not None
        assert optimal_values(construction.mdp).value == pytest.approx(0.75)
        assert optimal_values(construction.mdp).policy.chosen_actions(0).tolist() == [i]
        assert check_realizability(construction.mdp, construction.family).realizable
    first = instances[0]
    assert first.family is not None
    report = be_dim(first.mdp, first.family, eps=0.125, variant="sq", layer=0)
    assert report.value == 3.0


def test_two_layer_instance(two_layer) -> None:
    assert two_layer.family is not None

    assert two_layer.mdp.num_actions == 4
    assert optimal_values(two_layer.mdp).value == pytest.approx(0.25)
    assert check_completeness(two_layer.mdp, two_layer.family).complete


@pytest.mark.parametrize("eps2, instance", [(0.3, 0), (0.75, 0), (0.25, 4)])
def test_two_layer_rejects_bad_parameters(eps2: float, instance: int) -> None:
    with pytest.raises(ConstructionError):
        build_two_layer(eps2, instance)


def test_rich_observations_preserve_value_and_coverability(hand_mdp: LayeredMdp) -> None:
    rng = np.random.default_rng(0)
    emission = [np.eye(1), disjoint_emission(rng, 2, 3)]

    rich = augment_rich_obs(hand_mdp, emission)

    assert rich.layer_sizes == (1, 6)
    assert validate_mdp(rich).valid
    assert optimal_values(rich).value == pytest.approx(0.8)
    assert coverability(rich, "all").value == pytest.approx(coverability(hand_mdp, "all").value)
    assert rich.metadata["decoder"][1] == [0, 0, 0, 1, 1, 1]


def test_overlapping_emissions_are_rejected(hand_mdp: LayeredMdp) -> None:
    emission = [np.eye(1), np.array([[0.5, 0.5], [0.5, 0.5]])]

    with pytest.raises(ConstructionError, match="overlap"):
        augment_rich_obs(hand_mdp, emission)


def test_initial_observation_must_be_unique(hand_mdp: LayeredMdp) -> None:
    emission = [np.array([[0.5, 0.5]]), np.eye(2)]

    with pytest.raises(ConstructionError, match="initial"):
        augment_rich_obs(hand_mdp, emission)


def test_exogenous_product(hand_mdp: LayeredMdp) -> None:
    chain = np.array([[0.9, 0.1], [0.2, 0.8]])

    product = augment_exogenous(hand_mdp, chain)

    assert product.layer_sizes == (2, 4)
    assert product.initial_state == 0
    assert validate_mdp(product).valid
    assert optimal_values(product).value == pytest.approx(0.8)
    assert coverability(product, "all").value == pytest.approx(coverability(hand_mdp, "all").value)


def test_exogenous_chain_must_be_stochastic(hand_mdp: LayeredMdp) -> None:
    with pytest.raises(ConstructionError):
        augment_exogenous(hand_mdp, np.array([[0.9, 0.2], [0.2, 0.8]]))


def test_exbmdp_coverability_ignores_exogenous_size() -> None:
    small = build_exbmdp(2, 1, 2, 3, seed=5)
    large = build_exbmdp(2, 3, 2, 3, seed=5)

    small_value = coverability(small.mdp, "all").value
    assert small_value <= 2 * 2 + 1e-9
    assert coverability(large.mdp, "all").value == pytest.approx(small_value)
    assert optimal_values(large.mdp).value == pytest.approx(optimal_values(small.mdp).value)


def test_random_mdp_is_valid() -> None:
    mdp = build_random_mdp(4, 3, 2, seed=7)

    assert mdp.layer_sizes[0] == 1
    assert validate_mdp(mdp).valid
    assert build_random_mdp(4, 3, 2, seed=7).layer_sizes == mdp.layer_sizes


def test_construction_dispatch() -> None:
    construction, g_family = construction_from_params("two-layer-rf", {"eps2": 0.25, "instance": 1})
    bandit, none = construction_from_params("bandit", {"eps1": 0.5, "instance": 1})

    assert construction.manifest.name == "two-layer-rf"
    assert g_family is not None and g_family.size == 4
    assert none is None
    assert bandit.mdp.metadata["best_arm"] == 1


def test_construction_dispatch_errors() -> None:
    with pytest.raises(ConstructionError, match="'eps2'"):
        construction_from_params("two-layer", {})
    with pytest.raises(ConstructionError, match="unknown"):
        construction_from_params("maze", {})
