"""Tests for the claim suites, run at reduced sizes."""

import numpy as np
import pytest

from coverlab.claims import (
    SUITES,
    ClaimVerifier,
    SuiteSizes,
    check_manifest,
    fit_loglog_exponent,
    monte_carlo_occupancy,
    verify_claims,
)
from coverlab.config import Settings
from coverlab.constructions import Construction, build_exbmdp
from coverlab.exceptions import ExperimentConfigError
from coverlab.mdp import LayeredMdp, Policy, occupancy


@pytest.fixture
def verifier(settings: Settings) -> ClaimVerifier:
    """Provide a verifier running reduced suite sizes."""
    return ClaimVerifier(settings=settings, sizes=SuiteSizes.reduced())


def _assert_all_pass(rows) -> None:
    failures = [(row.claim, row.instance, row.value, row.bound, row.detail) for row in rows if not row.passed]
    assert not failures, failures


def test_exponent_fit() -> None:
    xs = [10.0, 100.0, 1000.0]

    assert fit_loglog_exponent(xs, [np.sqrt(x) for x in xs]) == pytest.approx(0.5)
    assert fit_loglog_exponent(xs, [0.0, 0.0, 0.0]) == pytest.approx(0.0)
    with pytest.raises(ValueError):
        fit_loglog_exponent([1.0], [1.0])


def test_monte_carlo_occupancy_is_close(hand_mdp: LayeredMdp) -> None:
    policy = Policy.uniform(hand_mdp)

    frequencies, returns = monte_carlo_occupancy(hand_mdp, policy, 40_000, np.random.default_rng(0))

    exact = occupancy(hand_mdp, policy)
    for freq, layer in zip(frequencies, exact.layers):
        np.testing.assert_allclose(freq, layer, atol=0.02)
    assert returns.mean() == pytest.approx(0.425, abs=0.01)


def test_manifest_replay_passes(two_layer: Construction, small_tree: Construction) -> None:
    rows = check_manifest(two_layer) + check_manifest(small_tree)

    assert {row.claim for row in rows} >= {"complete", "realizable", "optimal_value", "be_dim_sq_lower"}
    _assert_all_pass(rows)


def test_manifest_without_family_checks_coverability() -> None:
    rows = check_manifest(build_exbmdp(2, 2, 2, 3, seed=1))

    assert [row.claim for row in rows] == ["coverability_upper"]
    _assert_all_pass(rows)


def test_unknown_suite(verifier: ClaimVerifier) -> None:
    with pytest.raises(ExperimentConfigError) as excinfo:
        verifier.verify("everything")

    assert excinfo.value.key == "suite"


@pytest.mark.parametrize(
    "suite",
    [
        "coverage-equivalence",
        "potential-lemma",
        "constructions",
        "invariance",
        "sec-ordering",
        "oracle-agreement",
    ],
)
def test_fast_suites_pass(verifier: ClaimVerifier, suite: str) -> None:
    ledger = verifier.verify(suite)

    assert ledger.suite == suite
    assert ledger.rows
    assert {row.suite for row in ledger.rows} == {suite}
    _assert_all_pass(ledger.rows)


@pytest.mark.slow
@pytest.mark.parametrize("suite", ["golf-sublinear", "optimism-frequency", "reward-free", "offline-rates"])
def test_learning_suites_pass(verifier: ClaimVerifier, suite: str) -> None:
    _assert_all_pass(verifier.verify(suite).rows)


def test_verify_claims_uses_given_sizes(settings: Settings) -> None:
    sizes = SuiteSizes.reduced().model_copy(update={"potential_sequences": 2})

    ledger = verify_claims("potential-lemma", settings=settings, sizes=sizes)

    assert len(ledger.rows) == 2
    assert ledger.passed


def test_suite_names_are_registered(verifier: ClaimVerifier) -> None:
    assert len(SUITES) == 10
    assert set(SUITES) == set(verifier._suites)


def test_offline_rates_aggregate_seeds_by_median(settings: Settings, mocker) -> None:
    sizes = SuiteSizes.reduced().model_copy(update={"offline_samples": [100, 400], "offline_seeds": 3})
    mocker.patch("coverlab.claims.generate_offline")
    mocker.patch("coverlab.claims.msbo")
    # one outlier seed per sample size; the tree rows come last
    mocker.patch(
        "coverlab.claims.suboptimality",
        side_effect=[0.4, 0.1, 0.1, 0.05, 0.9, 0.05, 1.0, 1.0, 1.0],
    )

    rows = ClaimVerifier(settings=settings, sizes=sizes).offline_rates()

    witness = rows[0]
    assert witness.detail == "medians=[0.1, 0.05]"
    assert witness.value == pytest.approx(np.log(0.5) / np.log(4.0))
    assert witness.passed
