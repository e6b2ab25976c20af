"""Tests for the JSON instance formats."""

import json
from pathlib import Path

import numpy as np
import pytest

from coverlab.coverage import DistributionFamily
from coverlab.exceptions import InstanceFormatError
from coverlab.function_family import ValueFunctionFamily
from coverlab.instance_io import (
    load_distribution,
    load_family,
    load_mdp,
    load_reward,
    mdp_to_document,
    save_distribution,
    save_family,
    save_mdp,
)
from coverlab.mdp import LayeredMdp, optimal_values


def test_mdp_survives_a_file_round_trip(hand_mdp: LayeredMdp, tmp_path: Path) -> None:
    path = save_mdp(hand_mdp, tmp_path / "nested" / "mdp.json")

    loaded = load_mdp(path)

    assert loaded.states == hand_mdp.states
    assert loaded.actions == hand_mdp.actions
    for original, restored in zip(hand_mdp.transitions, loaded.transitions):
        np.testing.assert_array_equal(original, restored)
    assert optimal_values(loaded).value == pytest.approx(0.8)


def test_document_uses_sparse_successors(hand_mdp: LayeredMdp) -> None:
    document = json.loads(mdp_to_document(hand_mdp).model_dump_json(by_alias=True))

    assert document["H"] == 2
    assert document["transitions"][0][0][0] == [{"state": 0, "prob": 1.0}]
    assert document["transitions"][1] == [[[], []], [[], []]]


def test_family_round_trip_keeps_components(
    hand_mdp: LayeredMdp, hand_family: ValueFunctionFamily, tmp_path: Path
) -> None:
    path = save_family(hand_family, tmp_path / "family.json")

    loaded = load_family(path, hand_mdp)

    assert loaded.size == hand_family.size
    np.testing.assert_array_equal(loaded.members, hand_family.members)
    assert loaded.name == "hand-family"


def test_distribution_round_trip(hand_mdp: LayeredMdp, tmp_path: Path) -> None:
    mu = DistributionFamily.uniform(hand_mdp)

    loaded = load_distribution(save_distribution(mu, tmp_path / "mu.json"), hand_mdp)

    np.testing.assert_allclose(loaded.layers[1], mu.layers[1])


def test_missing_file_names_the_path(tmp_path: Path) -> None:
    path = tmp_path / "absent.json"

    with pytest.raises(InstanceFormatError, match="absent.json"):
        load_mdp(path)


def test_schema_errors_name_the_location(tmp_path: Path) -> None:
    path = tmp_path / "broken.json"
    path.write_text(json.dumps({"actions": ["a"], "layers": [], "transitions": [], "rewards": []}))

    with pytest.raises(InstanceFormatError) as excinfo:
        load_mdp(path)

    assert str(excinfo.value).startswith(str(path))
    assert "H" in str(excinfo.value)


def test_last_layer_must_be_terminal(hand_mdp: LayeredMdp, tmp_path: Path) -> None:
    document = json.loads(mdp_to_document(hand_mdp).model_dump_json(by_alias=True))
    document["transitions"][1][0][0] = [{"state": 0, "prob": 1.0}]
    path = tmp_path / "mdp.json"
    path.write_text(json.dumps(document))

    with pytest.raises(InstanceFormatError, match="no successors"):
        load_mdp(path)


def test_family_shape_mismatch(hand_mdp: LayeredMdp, tmp_path: Path) -> None:
    family = ValueFunctionFamily.from_member_tables([[np.zeros((1, 3)), np.zeros((2, 3))]])
    path = save_family(family, tmp_path / "family.json")

    with pytest.raises(InstanceFormatError, match="expected"):
        load_family(path, hand_mdp)


def test_reward_shapes_are_checked(hand_mdp: LayeredMdp, tmp_path: Path) -> None:
    good = tmp_path / "reward.json"
    good.write_text(json.dumps({"rewards": [[[0.0, 0.0]], [[1.0, 0.0], [0.0, 0.0]]]}))
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"rewards": [[[0.0, 0.0]]]}))

    assert load_reward(good, hand_mdp)[1][0, 0] == 1.0
    with pytest.raises(InstanceFormatError, match="shapes"):
        load_reward(bad, hand_mdp)
