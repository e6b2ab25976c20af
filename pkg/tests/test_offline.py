"""Tests for offline data generation, MSBO and fitted Q-iteration."""

import dataclasses

import numpy as np
import pytest

from coverlab.constructions import build_bandit_family
from coverlab.coverage import DistributionFamily
from coverlab.golf import LayerDataset
from coverlab.mdp import LayeredMdp, Policy
from coverlab.offline import fqi, generate_offline, msbo, msbo_objective, sample_rows, suboptimality


@pytest.fixture
def bandit():
    """Return the four-arm bandit whose first arm is boosted."""
    return build_bandit_family(0.25)[0]


def test_sample_rows_respects_point_masses() -> None:
    rows = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])

    picks = sample_rows(np.random.default_rng(0), rows)

    assert picks.tolist() == [1, 0, 2]


def test_sample_rows_follows_each_row() -> None:
    rows = np.tile(np.array([[0.2, 0.8], [0.7, 0.3]]), (5000, 1))

    picks = sample_rows(np.random.default_rng(1), rows)

    assert picks[0::2].mean() == pytest.approx(0.8, abs=0.03)
    assert picks[1::2].mean() == pytest.approx(0.3, abs=0.03)
    assert sample_rows(np.random.default_rng(1), np.zeros((0, 2))).size == 0


def test_generation_is_seeded(hand_mdp: LayeredMdp) -> None:
    mu = DistributionFamily.uniform(hand_mdp)

    first = generate_offline(hand_mdp, mu, 50, seed=3)
    second = generate_offline(hand_mdp, mu, 50, seed=3)

    assert [len(layer) for layer in first.layers] == [50, 50]
    assert first.layers[1].arrays()[0].tolist() == second.layers[1].arrays()[0].tolist()


def test_empirical_frequencies_track_mu(hand_mdp: LayeredMdp) -> None:
    mu = DistributionFamily.from_tables([np.array([[0.3, 0.7]]), np.array([[0.1, 0.2], [0.3, 0.4]])])

    dataset = generate_offline(hand_mdp, mu, 20_000, seed=1)

    np.testing.assert_allclose(dataset.empirical_frequencies(1, 2), mu.layers[1], atol=0.02)
    rewards = dataset.layers[1].arrays()[2]
    assert set(np.round(rewards, 6)) <= {0.2, 0.5, 0.9, 0.0}


def test_msbo_and_fqi_find_boosted_arm(bandit) -> None:
    dataset = generate_offline(bandit.mdp, DistributionFamily.uniform(bandit.mdp), 4000, seed=2)

    msbo_estimate = msbo(dataset, bandit.family)
    fqi_estimate = fqi(dataset, bandit.family)

    assert msbo_estimate.member == 0
    assert msbo_estimate.objective is not None
    assert msbo_estimate.objective[0] == pytest.approx(0.0)
    assert fqi_estimate.member == 0
    assert suboptimality(bandit.mdp, msbo_estimate.policy) == pytest.approx(0.0)


def test_objective_is_nonnegative(hand_mdp: LayeredMdp, hand_family) -> None:
    dataset = generate_offline(hand_mdp, DistributionFamily.uniform(hand_mdp), 200, seed=0)

    assert np.all(msbo_objective(dataset, hand_family) >= 0.0)


def test_fqi_flags_empty_layers(bandit) -> None:
    dataset = generate_offline(bandit.mdp, DistributionFamily.uniform(bandit.mdp), 0)

    estimate = fqi(dataset, bandit.family)

    assert estimate.components == (0, 0)
    assert len(estimate.flags) == 2


def test_fqi_flags_only_the_empty_layer(bandit) -> None:
    dataset = generate_offline(bandit.mdp, DistributionFamily.uniform(bandit.mdp), 200, seed=4)
    empty = LayerDataset.from_arrays(np.array([]), np.array([]), np.array([]), np.array([]))
    dataset = dataclasses.replace(dataset, layers=(dataset.layers[0], empty))

    estimate = fqi(dataset, bandit.family)

    assert estimate.flags == ["empty dataset at layer 1"]
    assert estimate.components[1] == 0


def test_fqi_suboptimality_falls_with_samples(bandit) -> None:
    uniform = DistributionFamily.uniform(bandit.mdp)
    medians = []
    for samples in (8, 400, 4000):
        estimates = [
            fqi(generate_offline(bandit.mdp, uniform, samples, seed), bandit.family)
            for seed in range(7)
        ]
        errors = [suboptimality(bandit.mdp, estimate.policy) for estimate in estimates]
        medians.append(float(np.median(errors)))

    assert medians == sorted(medians, reverse=True)
    assert medians[-1] == pytest.approx(0.0)


def test_suboptimality_of_uniform_policy(hand_mdp: LayeredMdp) -> None:
    assert suboptimality(hand_mdp, Policy.uniform(hand_mdp)) == pytest.approx(0.375)
