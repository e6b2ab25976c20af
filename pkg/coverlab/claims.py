"""Claim suites: reproducible ledgers of checked statements on shipped instances."""

from __future__ import annotations

import logging
import math
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field

from .complexity import be_dim, elliptic_potential, random_dominated_sequence, verify_sec_bounds
from .config import Settings, get_settings
from .constructions import (
    Construction,
    RewardFreeConstruction,
    augment_exogenous,
    augment_rich_obs,
    build_bandit_family,
    build_exbmdp,
    build_random_family,
    build_random_mdp,
    build_tree,
    build_two_layer,
    build_two_layer_reward_free,
    disjoint_emission,
)
from .coverage import (
    DistributionFamily,
    avoiding_distribution,
    coverability,
    coverability_infimum_oracle,
    generalized_concentrability,
    witness_distribution,
)
from .exceptions import ConstructionError, ExperimentConfigError
from .function_family import (
    ValueFunctionFamily,
    bellman_backup,
    check_completeness,
    check_realizability,
    induced_policies,
)
from .golf import GolfConfig, golf_beta, golf_run
from .mdp import LayeredMdp, Policy, occupancy, optimal_values, policy_value
from .models import ClaimLedger, ClaimRow, ExpectedProperty
from .offline import generate_offline, msbo, sample_rows, suboptimality
from .reward_free import (
    check_residual_lift,
    check_rf_vspace_inclusion,
    inclusion_threshold,
    reward_free_betas,
    run_reward_free,
)

LOGGER = logging.getLogger(__name__)

SUITES = (
    "coverage-equivalence",
    "potential-lemma",
    "constructions",
    "invariance",
    "golf-sublinear",
    "optimism-frequency",
    "sec-ordering",
    "reward-free",
    "offline-rates",
    "oracle-agreement",
)

VALUE_TOLERANCE = 1e-9
RELATIVE_AGREEMENT = 1e-7
MONTE_CARLO_SIGMAS = 5.0
ZERO_FLOOR = 1e-12


class SuiteSizes(BaseModel):
    """Instance counts and sample sizes used by the suites."""

    random_instances: int = Field(default=50, ge=1)
    potential_sequences: int = Field(default=200, ge=1)
    potential_length: int = Field(default=10_000, ge=1)
    invariance_instances: int = Field(default=20, ge=1)
    tree_depths: List[int] = Field(default_factory=lambda: [2, 3, 4])
    two_layer_actions: List[int] = Field(default_factory=lambda: [4, 8])
    exogenous_sizes: List[int] = Field(default_factory=lambda: [1, 2, 4, 8])
    golf_seeds: int = Field(default=20, ge=1)
    golf_rounds: List[int] = Field(default_factory=lambda: [250, 500, 1000, 2000])
    golf_tree_depth: int = Field(default=4, ge=1)
    optimism_runs: int = Field(default=50, ge=1)
    optimism_rounds: int = Field(default=1000, ge=1)
    sec_instances: int = Field(default=50, ge=1)
    rf_seeds: int = Field(default=20, ge=1)
    rf_rounds: List[int] = Field(default_factory=lambda: [250, 2000])
    lift_samples: int = Field(default=100, ge=1)
    offline_seeds: int = Field(default=20, ge=1)
    offline_samples: List[int] = Field(default_factory=lambda: [100, 1000, 10_000])
    oracle_instances: int = Field(default=20, ge=1)
    oracle_episodes: int = Field(default=100_000, ge=1)
    oracle_samples_per_cell: int = Field(default=10_000, ge=1)

    @classmethod
    def reduced(cls) -> "SuiteSizes":
        """Small sizes that keep every suite under a few seconds."""
        return cls(
            random_instances=4,
            potential_sequences=10,
            potential_length=500,
            invariance_instances=3,
            tree_depths=[2, 3],
            two_layer_actions=[4],
            exogenous_sizes=[1, 2],
            golf_seeds=2,
            golf_rounds=[250, 2000],
            golf_tree_depth=3,
            optimism_runs=3,
            optimism_rounds=200,
            sec_instances=3,
            rf_seeds=3,
            lift_samples=10,
            offline_seeds=4,
            oracle_instances=2,
            oracle_episodes=20_000,
            oracle_samples_per_cell=2_000,
        )


def fit_loglog_exponent(
    xs: Sequence[float], ys: Sequence[float], floor: float = ZERO_FLOOR
) -> float:
    """Least-squares slope of ``log y`` against ``log x``; values below ``floor`` are floored."""
    x = np.log(np.asarray(xs, dtype=float))
    y = np.log(np.maximum(np.asarray(ys, dtype=float), floor))
    if x.size < 2:
        raise ValueError("an exponent fit needs at least two points")
    slope, _ = np.polyfit(x, y, 1)
    return float(slope)


def monte_carlo_occupancy(
    mdp: LayeredMdp, policy: Policy, episodes: int, rng: np.random.Generator
) -> Tuple[List[np.ndarray], np.ndarray]:
    """Empirical state-action frequencies and returns of ``episodes`` simulated runs."""
    states = np.full(episodes, mdp.initial_state)
    returns = np.zeros(episodes)
    frequencies = []
    for h in range(mdp.horizon):
        actions = sample_rows(rng, np.asarray(policy.tables[h])[states])
        counts = np.zeros((mdp.layer_sizes[h], mdp.num_actions))
        np.add.at(counts, (states, actions), 1.0)
        frequencies.append(counts / episodes)
        returns += mdp.rewards[h][states, actions]
        if h + 1 < mdp.horizon:
            states = sample_rows(rng, mdp.transitions[h][states, actions])
    return frequencies, returns


def _row(
    suite: str,
    claim: str,
    instance: str,
    value: float,
    bound: float,
    passed: bool,
    detail: str = "",
) -> ClaimRow:
    return ClaimRow(
        suite=suite,
        claim=claim,
        instance=instance,
        value=float(value),
        bound=float(bound),
        passed=bool(passed),
        detail=detail,
    )


def _family(construction: Construction) -> ValueFunctionFamily:
    if construction.family is None:
        raise ConstructionError(f"{construction.manifest.name} carries no family")
    return construction.family


def _check_property(
    construction: Construction, prop: ExpectedProperty, tol: float
) -> Tuple[float, float, bool]:
    mdp, family = construction.mdp, construction.family
    if prop.name == "optimal_value":
        value = optimal_values(mdp).value
        return value, float(prop.value), abs(value - float(prop.value)) <= tol
    if prop.name == "coverability_upper":
        policies = "all" if family is None else list(induced_policies(family).policies)
        value = coverability(mdp, policies).value
        return value, float(prop.value), value <= float(prop.value) + tol
    if family is None:
        raise ValueError(f"property {prop.name} needs a family")
    if prop.name == "complete":
        holds = check_completeness(mdp, family).complete
        return float(holds), float(prop.value), holds == bool(prop.value)
    if prop.name == "realizable":
        holds = check_realizability(mdp, family).realizable
        return float(holds), float(prop.value), holds == bool(prop.value)
    if prop.name == "log_family_size_upper":
        value = math.log(family.size)
        return value, float(prop.value), value <= float(prop.value) + tol
    if prop.name == "gen_concentrability_upper":
        mu = DistributionFamily.from_occupancy(occupancy(mdp, optimal_values(mdp).policy))
        value = generalized_concentrability(mdp, family, "all", mu).value
        return value, float(prop.value), value <= float(prop.value) + tol
    if prop.name == "be_dim_sq_lower":
        eps = (prop.eps_below or 1.0) / 2.0
        target = float(prop.value)
        report = be_dim(
            mdp, family, eps=eps, variant="sq", layer=prop.layer, cap=int(target) + 1
        )
        return report.value, target, report.value >= target
    raise ValueError(f"unknown property {prop.name!r}")


def check_manifest(
    construction: Construction, suite: str = "constructions", tol: float = VALUE_TOLERANCE
) -> List[ClaimRow]:
    """Replay every expected property of a construction against the analysis modules."""
    rows = []
    for prop in construction.manifest.properties:
        value, bound, passed = _check_property(construction, prop, tol)
        rows.append(_row(suite, prop.name, construction.mdp.name, value, bound, passed, prop.claim))
    return rows


class ClaimVerifier:
    """Run named claim suites and collect their ledgers.

    Args:
        settings: Widths, slack and budgets; the cached settings by default.
        sizes: Instance counts and sample sizes.
        logger: Optional logger override.
    """

    def __init__(
        self,
        settings: Optional[Settings] = None,
        sizes: Optional[SuiteSizes] = None,
        logger: Optional[logging.Logger] = None,
    ) -> None:
        self.settings = settings or get_settings()
        self.sizes = sizes or SuiteSizes()
        self.logger = logger or LOGGER
        self._suites: Dict[str, Callable[[], List[ClaimRow]]] = {
            "coverage-equivalence": self.coverage_equivalence,
            "potential-lemma": self.potential_lemma,
            "constructions": self.constructions,
            "invariance": self.invariance,
            "golf-sublinear": self.golf_sublinear,
            "optimism-frequency": self.optimism_frequency,
            "sec-ordering": self.sec_ordering,
            "reward-free": self.reward_free,
            "offline-rates": self.offline_rates,
            "oracle-agreement": self.oracle_agreement,
        }

    def verify(self, suite: str) -> ClaimLedger:
        """Run ``suite`` (or ``all``) and return its ledger.

        Raises:
            ExperimentConfigError: If the suite is not shipped.
        """
        if suite == "all":
            names = list(SUITES)
        elif suite in self._suites:
            names = [suite]
        else:
            raise ExperimentConfigError(
                f"unknown suite {suite!r}; choose from {', '.join(SUITES + ('all',))}",
                key="suite",
            )
        rows: List[ClaimRow] = []
        for name in names:
            self.logger.info("Running claim suite %s", name)
            suite_rows = self._suites[name]()
            failed = sum(not row.passed for row in suite_rows)
            self.logger.info("Suite %s: %d rows, %d failed", name, len(suite_rows), failed)
            rows.extend(suite_rows)
        return ClaimLedger(suite=suite, rows=rows)

    def _random_instance(
        self, seed: int, horizon: int, states: int, actions: int, members: int
    ) -> Tuple[LayeredMdp, ValueFunctionFamily]:
        rng = np.random.default_rng(seed)
        mdp = build_random_mdp(horizon, states, actions, seed=rng)
        family = build_random_family(mdp, members, seed=rng)
        return mdp, family

    def coverage_equivalence(self) -> List[ClaimRow]:
        """Cumulative reachability against the inf-sup feasibility oracle."""
        rows = []
        for seed in range(self.sizes.random_instances):
            rng = np.random.default_rng(seed)
            horizon = int(rng.integers(2, 5))
            mdp, family = self._random_instance(
                seed,
                horizon,
                int(rng.integers(2, 6)),
                int(rng.integers(2, 4)),
                int(rng.integers(2, 9)),
            )
            policies = list(induced_policies(family).policies)
            closed = coverability(mdp, policies).value
            oracle = coverability_infimum_oracle(mdp, policies).value
            relative = abs(closed - oracle) / max(oracle, ZERO_FLOOR)
            rows.append(
                _row(
                    "coverage-equivalence",
                    "coverability-equals-cumulative-reachability",
                    mdp.name,
                    relative,
                    RELATIVE_AGREEMENT,
                    relative <= RELATIVE_AGREEMENT,
                    f"closed={closed!r}, oracle={oracle!r}, policies={len(policies)}",
                )
            )
        return rows

    def potential_lemma(self) -> List[ClaimRow]:
        rows = []
        for seed in range(self.sizes.potential_sequences):
            rng = np.random.default_rng(seed)
            cells = int(rng.integers(2, 11))
            distributions, mu, dominance = random_dominated_sequence(
                rng, self.sizes.potential_length, cells
            )
            potential, bound = elliptic_potential(distributions, mu, dominance)
            rows.append(
                _row(
                    "potential-lemma",
                    "per-cell-potential-below-2log(T+1)",
                    f"sequence-{seed}",
                    potential,
                    bound,
                    potential <= bound,
                    f"cells={cells}, C={dominance:.4g}",
                )
            )
        return rows

    def constructions(self) -> List[ClaimRow]:
        """Replay the manifests of the tree, two-layer, bandit and Ex-BMDP instances."""
        rows: List[ClaimRow] = []
        for depth in self.sizes.tree_depths:
            rows.extend(check_manifest(build_tree(depth, 2**depth, 2**depth - 1)))
        for actions in self.sizes.two_layer_actions:
            rows.extend(check_manifest(build_two_layer(1.0 / actions, actions - 1)))
        rows.extend(check_manifest(build_bandit_family(0.25)[0]))
        reference: Optional[float] = None
        for exogenous in self.sizes.exogenous_sizes:
            construction = build_exbmdp(2, exogenous, 2, 3, seed=0)
            rows.extend(check_manifest(construction))
            value = coverability(construction.mdp, "all").value
            if reference is None:
                reference = value
            rows.append(
                _row(
                    "constructions",
                    "coverability-independent-of-exogenous-size",
                    construction.mdp.name,
                    abs(value - reference),
                    VALUE_TOLERANCE,
                    abs(value - reference) <= VALUE_TOLERANCE,
                    f"C_cov={value!r}, reference={reference!r}",
                )
            )
        return rows

    def invariance(self) -> List[ClaimRow]:
        """Rich observations and exogenous noise never increase all-policy coverability."""
        rows = []
        for seed in range(self.sizes.invariance_instances):
            rng = np.random.default_rng(seed)
            base = build_random_mdp(3, 3, 2, seed=rng)
            base_value = coverability(base, "all").value
            emission = [
                np.eye(n) if h == 0 else disjoint_emission(rng, n, 3)
                for h, n in enumerate(base.layer_sizes)
            ]
            chain = rng.dirichlet(np.ones(3), size=3)
            variants = {
                "rich-observation": augment_rich_obs(base, emission),
                "exogenous": augment_exogenous(base, chain),
            }
            variants["exogenous-rich-observation"] = augment_exogenous(
                variants["rich-observation"], chain
            )
            for label, augmented in variants.items():
                value = coverability(augmented, "all").value
                rows.append(
                    _row(
                        "invariance",
                        f"{label}-coverability-not-larger",
                        f"{base.name}/{label}",
                        value,
                        base_value + VALUE_TOLERANCE,
                        value <= base_value + VALUE_TOLERANCE,
                    )
                )
                gap = abs(optimal_values(augmented).value - optimal_values(base).value)
                rows.append(
                    _row(
                        "invariance",
                        f"{label}-optimal-value-preserved",
                        f"{base.name}/{label}",
                        gap,
                        VALUE_TOLERANCE,
                        gap <= VALUE_TOLERANCE,
                    )
                )
        return rows

    def _golf_instances(self) -> List[Tuple[str, LayeredMdp, ValueFunctionFamily]]:
        depth = self.sizes.golf_tree_depth
        tree = build_tree(depth, 2**depth, 2**depth - 1)
        two_layer = build_two_layer(0.25, 3)
        return [
            ("two-layer", two_layer.mdp, _family(two_layer)),
            ("tree", tree.mdp, _family(tree)),
        ]

    def _median_regret(
        self, mdp: LayeredMdp, family: ValueFunctionFamily, rounds: int, beta: Optional[float]
    ) -> float:
        if beta is None:
            beta = golf_beta(
                rounds, mdp.horizon, family.size, self.settings.delta, self.settings.beta_constant
            )
        regrets = []
        for seed in range(self.sizes.golf_seeds):
            config = GolfConfig(
                rounds=rounds,
                beta=beta,
                seed=seed,
                record_diagnostics=False,
                recompute_interval=self.settings.loss_recompute_interval,
            )
            run = golf_run(mdp, family, config, logger=self.logger)
            regrets.append(run.records[-1].cumulative_regret)
        return float(np.median(regrets))

    def golf_sublinear(self) -> List[ClaimRow]:
        """Average regret shrinks with ``T``; an unbounded width gives linear regret."""
        rows = []
        schedule = sorted(self.sizes.golf_rounds)
        first, last = schedule[0], schedule[-1]
        for label, mdp, family in self._golf_instances():
            medians = [self._median_regret(mdp, family, t, None) for t in schedule]
            early, late = medians[0] / first, medians[-1] / last
            rows.append(
                _row(
                    "golf-sublinear",
                    "average-regret-shrinks",
                    label,
                    late,
                    0.6 * early,
                    late < 0.6 * early,
                    f"Reg({first})/{first}={early:.4g}, Reg({last})/{last}={late:.4g}",
                )
            )
            exponent = fit_loglog_exponent(schedule, medians)
            rows.append(
                _row(
                    "golf-sublinear",
                    "regret-exponent-at-most-0.75",
                    label,
                    exponent,
                    0.75,
                    exponent <= 0.75,
                    f"medians={[round(m, 6) for m in medians]}",
                )
            )
            control = [self._median_regret(mdp, family, t, 1e18) for t in (first, last)]
            early, late = control[0] / first, control[1] / last
            rows.append(
                _row(
                    "golf-sublinear",
                    "unbounded-width-regret-linear",
                    label,
                    late,
                    0.9 * early,
                    late > 0 and late >= 0.9 * early,
                    f"Reg({first})/{first}={early:.4g}, Reg({last})/{last}={late:.4g}",
                )
            )
        return rows

    def optimism_frequency(self) -> List[ClaimRow]:
        two_layer = build_two_layer(0.25, 3)
        family = _family(two_layer)
        rounds = self.sizes.optimism_rounds
        beta = golf_beta(
            rounds,
            two_layer.mdp.horizon,
            family.size,
            self.settings.delta,
            self.settings.beta_constant,
        )
        held = 0
        for seed in range(self.sizes.optimism_runs):
            run = golf_run(
                two_layer.mdp,
                family,
                GolfConfig(rounds=rounds, beta=beta, seed=seed),
                logger=self.logger,
            )
            held += all(record.fstar_in_set for record in run.records)
        fraction = held / self.sizes.optimism_runs
        return [
            _row(
                "optimism-frequency",
                "optimal-member-always-retained",
                two_layer.mdp.name,
                fraction,
                0.9,
                fraction >= 0.9,
                f"{held}/{self.sizes.optimism_runs} runs, beta={beta:.4g}",
            )
        ]

    def sec_ordering(self) -> List[ClaimRow]:
        """SEC against the squared dimension, coverability and the average dimension."""
        rows = []
        for seed in range(self.sizes.sec_instances):
            mdp, family = self._random_instance(seed, 2, 2, 2, 3)
            checks = verify_sec_bounds(
                mdp,
                family,
                horizon=3,
                eps=0.1,
                slack=self.settings.bound_slack,
                budget=self.settings.sec_budget,
            )
            for check in checks:
                violated = check.conclusive and not check.holds
                detail = check.detail if check.conclusive else f"inconclusive; {check.detail}"
                rows.append(
                    _row("sec-ordering", check.name, mdp.name, check.lhs, check.rhs, not violated, detail)
                )
        return rows

    def reward_free(self) -> List[ClaimRow]:
        """End-to-end suboptimality, residual lifts and the explorer-inclusion property."""
        pair = build_two_layer_reward_free(0.25, 3)
        rows = []
        schedule = sorted(self.sizes.rf_rounds)
        medians = []
        worst_gap = 0.0
        for rounds in schedule:
            widths = reward_free_betas(
                rounds,
                pair.mdp.horizon,
                pair.f_family.size,
                pair.g_family.size,
                self.settings.delta,
                self.settings.rf_c1,
                self.settings.rf_c2,
            )
            subopts = []
            for seed in range(self.sizes.rf_seeds):
                outcome = run_reward_free(
                    pair.mdp, pair.f_family, pair.g_family, rounds, widths, seed, logger=self.logger
                )
                subopts.append(outcome.suboptimality)
                worst_gap = max(worst_gap, float(outcome.exploration.telescoping_gaps.max()))
            medians.append(float(np.median(subopts)))
        first, last = schedule[0], schedule[-1]
        rows.append(
            _row(
                "reward-free",
                "suboptimality-shrinks",
                pair.mdp.name,
                medians[-1],
                0.6 * medians[0],
                medians[-1] <= 0.6 * medians[0],
                f"median at T={first}: {medians[0]:.4g}, at T={last}: {medians[-1]:.4g}",
            )
        )
        rows.append(
            _row(
                "reward-free",
                "exploration-values-telescope",
                pair.mdp.name,
                worst_gap,
                VALUE_TOLERANCE,
                worst_gap <= VALUE_TOLERANCE,
            )
        )
        rows.extend(self._lift_rows())
        rows.extend(self._inclusion_rows(pair, first))
        return rows

    def _lift_rows(self) -> List[ClaimRow]:
        worst = math.inf
        failures = 0
        for seed in range(self.sizes.lift_samples):
            rng = np.random.default_rng(seed)
            mdp = build_random_mdp(3, 3, 2, seed=rng)
            f = [rng.random((n, mdp.num_actions)) for n in mdp.layer_sizes]
            check = check_residual_lift(mdp, f)
            worst = min(worst, check.min_gap)
            failures += not check.holds
        return [
            _row(
                "reward-free",
                "residual-lift-dominates-suboptimality-gap",
                f"{self.sizes.lift_samples} random lifts",
                float(failures),
                0.0,
                failures == 0,
                f"smallest gap {worst:.3g}",
            )
        ]

    def _inclusion_rows(self, pair: RewardFreeConstruction, rounds: int) -> List[ClaimRow]:
        widths = reward_free_betas(
            rounds,
            pair.mdp.horizon,
            pair.f_family.size,
            pair.g_family.size,
            self.settings.delta,
            self.settings.rf_c1,
            self.settings.rf_c2,
        )
        threshold = inclusion_threshold(
            pair.mdp.horizon, pair.f_family.size, pair.g_family.size, self.settings.delta, widths.beta_off
        )
        widths = widths._replace(beta_rf=max(widths.beta_rf, threshold))
        violations = 0
        for seed in range(self.sizes.rf_seeds):
            outcome = run_reward_free(
                pair.mdp, pair.f_family, pair.g_family, rounds, widths, seed, logger=self.logger
            )
            report = check_rf_vspace_inclusion(
                pair.mdp,
                pair.f_family,
                pair.g_family,
                outcome.exploration,
                widths.beta_off,
                widths.beta_rf,
                delta=self.settings.delta,
            )
            violations += report.threshold_met and not report.holds
        return [
            _row(
                "reward-free",
                "offline-survivors-have-matching-explorers",
                pair.mdp.name,
                float(violations),
                0.0,
                violations == 0,
                f"T={rounds}, beta_rf={widths.beta_rf:.4g}, threshold={threshold:.4g}",
            )
        ]

    def offline_rates(self) -> List[ClaimRow]:
        """Offline error falls with ``n`` under the coverability witness, not under an avoiding one."""
        bandit = build_bandit_family(0.125)[-1]
        bandit_family = _family(bandit)
        policies = list(induced_policies(bandit_family).policies)
        mu = witness_distribution(coverability(bandit.mdp, policies))
        schedule = sorted(self.sizes.offline_samples)
        medians = []
        for samples in schedule:
            errors = [
                suboptimality(bandit.mdp, msbo(generate_offline(bandit.mdp, mu, samples, seed), bandit_family).policy)
                for seed in range(self.sizes.offline_seeds)
            ]
            medians.append(float(np.median(errors)))
        rows = []
        if max(medians) <= 0.0:
            rows.append(
                _row(
                    "offline-rates",
                    "witness-suboptimality-exponent-at-most-minus-0.4",
                    bandit.mdp.name,
                    0.0,
                    -0.4,
                    True,
                    "suboptimality zero at every n",
                )
            )
        else:
            exponent = fit_loglog_exponent(schedule, medians)
            rows.append(
                _row(
                    "offline-rates",
                    "witness-suboptimality-exponent-at-most-minus-0.4",
                    bandit.mdp.name,
                    exponent,
                    -0.4,
                    exponent <= -0.4,
                    f"medians={[round(m, 6) for m in medians]}",
                )
            )
        tree = build_tree(3, 8, 7)
        tree_family = _family(tree)
        optimum = optimal_values(tree.mdp)
        avoiding = avoiding_distribution(tree.mdp, optimum.policy)
        samples = schedule[len(schedule) // 2]
        errors = [
            suboptimality(tree.mdp, msbo(generate_offline(tree.mdp, avoiding, samples, seed), tree_family).policy)
            for seed in range(self.sizes.offline_seeds)
        ]
        median = float(np.median(errors))
        rows.append(
            _row(
                "offline-rates",
                "avoiding-distribution-stays-suboptimal",
                tree.mdp.name,
                median,
                0.5 * optimum.value,
                median >= 0.5 * optimum.value,
                f"n={samples}",
            )
        )
        return rows

    def oracle_agreement(self) -> List[ClaimRow]:
        """Exact occupancy, values and backups against Monte-Carlo estimates."""
        rows = []
        episodes = self.sizes.oracle_episodes
        per_cell = self.sizes.oracle_samples_per_cell
        for seed in range(self.sizes.oracle_instances):
            rng = np.random.default_rng(seed)
            mdp = build_random_mdp(3, 3, 2, seed=rng)
            policy = Policy.randomized(
                [rng.dirichlet(np.ones(mdp.num_actions), size=n) for n in mdp.layer_sizes]
            )
            frequencies, returns = monte_carlo_occupancy(mdp, policy, episodes, rng)
            exact = occupancy(mdp, policy)
            ratio = 0.0
            for d, freq in zip(exact.layers, frequencies):
                tolerance = MONTE_CARLO_SIGMAS * np.sqrt(d * (1.0 - d) / episodes) + 1.0 / episodes
                ratio = max(ratio, float(np.max(np.abs(freq - d) / tolerance)))
            rows.append(_row("oracle-agreement", "occupancy", mdp.name, ratio, 1.0, ratio <= 1.0))

            value = policy_value(mdp, policy).value
            tolerance = MONTE_CARLO_SIGMAS * float(returns.std()) / math.sqrt(episodes) + 1e-12
            error = abs(float(returns.mean()) - value)
            rows.append(
                _row(
                    "oracle-agreement",
                    "policy-value",
                    mdp.name,
                    error / tolerance,
                    1.0,
                    error <= tolerance,
                    f"exact={value!r}, estimate={float(returns.mean())!r}",
                )
            )

            ratio = 0.0
            for h in range(mdp.horizon - 1):
                f_next = rng.random((mdp.layer_sizes[h + 1], mdp.num_actions))
                exact_backup = bellman_backup(mdp, f_next, h)
                next_values = f_next.max(axis=1)
                rows_p = mdp.transitions[h].reshape(-1, mdp.layer_sizes[h + 1])
                draws = sample_rows(rng, np.repeat(rows_p, per_cell, axis=0))
                estimate = next_values[draws].reshape(-1, per_cell).mean(axis=1)
                estimate = estimate.reshape(exact_backup.shape) + mdp.rewards[h]
                variance = mdp.transitions[h] @ next_values**2 - (mdp.transitions[h] @ next_values) ** 2
                tolerance = MONTE_CARLO_SIGMAS * np.sqrt(np.maximum(variance, 0.0) / per_cell) + 1e-12
                ratio = max(ratio, float(np.max(np.abs(estimate - exact_backup) / tolerance)))
            rows.append(_row("oracle-agreement", "bellman-backup", mdp.name, ratio, 1.0, ratio <= 1.0))
        return rows


def verify_claims(
    suite_name: str,
    settings: Optional[Settings] = None,
    sizes: Optional[SuiteSizes] = None,
    logger: Optional[logging.Logger] = None,
) -> ClaimLedger:
    """Run one shipped suite, or ``all`` of them."""
    return ClaimVerifier(settings, sizes, logger).verify(suite_name)
