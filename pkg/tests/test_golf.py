"""Tests for optimistic exploration with squared-Bellman-loss confidence sets."""

import math

import numpy as np
import pytest

from coverlab.constructions import Construction
from coverlab.exceptions import EmptyConfidenceSetError, FamilyStructureError
from coverlab.function_family import ValueFunctionFamily
from coverlab.golf import (
    GolfConfig,
    GolfState,
    LayerDataset,
    audit_confidence_sets,
    confidence_set,
    golf_beta,
    golf_run,
    golf_step,
    layer_loss_matrix,
    online_to_batch,
    regret_decomposition,
    squared_bellman_loss,
)
from coverlab.mdp import LayeredMdp


@pytest.fixture
def crossed_instance() -> tuple:
    """Return a one-action chain with a non-product family whose members rule each other out."""
    mdp = LayeredMdp.from_arrays(
        [np.ones((1, 1, 1))], [np.zeros((1, 1)), np.zeros((1, 1))], name="chain"
    )
    family = ValueFunctionFamily.from_member_tables(
        [
            [np.ones((1, 1)), np.zeros((1, 1))],
            [np.zeros((1, 1)), np.ones((1, 1))],
        ],
        name="crossed",
    )
    return mdp, family


def test_golf_beta() -> None:
    assert golf_beta(100, 2, 4, 0.05) == pytest.approx(2.0 * math.log(16000.0))
    assert golf_beta(100, 2, 4, 0.05, constant=1.0) == pytest.approx(math.log(16000.0))


def test_config_accepts_alias() -> None:
    config = GolfConfig(T=10, beta=1.0)

    assert config.rounds == 10
    with pytest.raises(ValueError):
        GolfConfig(T=0, beta=1.0)


def test_squared_loss_uses_next_layer_maximum() -> None:
    dataset = LayerDataset.from_arrays(
        np.array([0, 0]), np.array([1, 0]), np.array([0.5, 0.0]), np.array([1, 0])
    )
    f_h = np.array([[0.2, 0.7]])
    f_next = np.array([[0.0, 0.1], [0.4, 0.3]])

    # (0.7 - 0.5 - 0.4)^2 + (0.2 - 0.0 - 0.1)^2
    assert squared_bellman_loss(dataset, f_h, f_next) == pytest.approx(0.04 + 0.01)
    assert squared_bellman_loss(LayerDataset(), f_h, None) == 0.0


def test_confidence_set_needs_one_dataset_per_layer(two_layer: Construction) -> None:
    assert two_layer.family is not None

    with pytest.raises(FamilyStructureError):
        confidence_set(two_layer.family, [LayerDataset()], beta=1.0)


def test_running_losses_match_exact_losses(two_layer: Construction) -> None:
    assert two_layer.family is not None
    state = GolfState.initial(two_layer.mdp, two_layer.family, beta=100.0, seed=3, recompute_interval=1000)

    for _ in range(40):
        golf_step(state)

    for h in range(two_layer.mdp.horizon):
        np.testing.assert_allclose(
            state.trackers[h].losses(),
            layer_loss_matrix(two_layer.family, h, state.datasets[h]),
            atol=1e-9,
        )


def test_two_layer_run_eliminates_wrong_actions(two_layer: Construction) -> None:
    assert two_layer.family is not None

    run = golf_run(two_layer.mdp, two_layer.family, GolfConfig(T=200, beta=0.5, seed=1))

    assert run.rounds == 200
    assert run.optimal_value == pytest.approx(0.25)
    assert all(record.fstar_in_set for record in run.records)
    assert all(record.regret in (0.0, pytest.approx(0.25)) for record in run.records)
    assert run.records[-1].regret == 0.0
    assert run.records[-1].set_size == 1
    assert np.all(np.diff(run.cumulative_regret) >= 0.0)
    assert audit_confidence_sets(run, two_layer.family) == []


def test_runs_are_reproducible(small_tree: Construction) -> None:
    assert small_tree.family is not None
    config = GolfConfig(T=60, beta=1.0, seed=9)

    first = golf_run(small_tree.mdp, small_tree.family, config)
    second = golf_run(small_tree.mdp, small_tree.family, config)

    np.testing.assert_array_equal(first.cumulative_regret, second.cumulative_regret)
    assert [r.member for r in first.records] == [r.member for r in second.records]


def test_regret_decomposes_into_bellman_errors(small_tree: Construction) -> None:
    assert small_tree.family is not None

    run = golf_run(small_tree.mdp, small_tree.family, GolfConfig(T=50, beta=2.0, seed=0))

    assert regret_decomposition(run).gap == pytest.approx(0.0, abs=1e-9)
    batch = online_to_batch(run)
    assert batch.suboptimality == pytest.approx(run.records[-1].cumulative_regret / run.rounds)


def test_rows_carry_expected_columns(two_layer: Construction) -> None:
    assert two_layer.family is not None

    rows = golf_run(two_layer.mdp, two_layer.family, GolfConfig(T=3, beta=0.5)).to_rows()

    assert [row["t"] for row in rows] == [1, 2, 3]
    assert set(rows[0]) == {"t", "fstar_in_set", "set_size", "optimistic_value", "J_pi_t", "cum_regret"}


def test_empty_confidence_set_aborts_with_partial_log(crossed_instance: tuple) -> None:
    mdp, family = crossed_instance

    with pytest.raises(EmptyConfidenceSetError) as excinfo:
        golf_run(mdp, family, GolfConfig(T=5, beta=0.5))

    partial = excinfo.value.partial_log
    assert partial.aborted
    assert partial.rounds == 1
    assert "round 2" in partial.abort_reason


def test_online_to_batch_needs_rounds(crossed_instance: tuple) -> None:
    mdp, family = crossed_instance

    with pytest.raises(EmptyConfidenceSetError) as excinfo:
        golf_run(mdp, family, GolfConfig(T=5, beta=0.5))

    partial = excinfo.value.partial_log
    partial.records.clear()
    with pytest.raises(ValueError):
        online_to_batch(partial)
