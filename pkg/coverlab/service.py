"""High-level orchestration of seeded experiments and claim runs."""

from __future__ import annotations

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import ValidationError
from tqdm import tqdm

from .claims import ClaimVerifier, SuiteSizes, fit_loglog_exponent
from .config import Settings
from .constructions import construction_from_params
from .coverage import (
    DistributionFamily,
    avoiding_distribution,
    coverability,
    witness_distribution,
)
from .exceptions import EmptyConfidenceSetError, ExperimentConfigError
from .function_family import ValueFunctionFamily, induced_policies
from .golf import GolfConfig, RunLog, golf_beta, golf_run
from .instance_io import load_distribution, load_family, load_mdp, load_reward
from .mdp import LayeredMdp, occupancy, optimal_values
from .models import ClaimLedger, ExperimentConfig, ExperimentSummary, InstanceSource
from .offline import fqi, generate_offline, msbo, suboptimality
from .report_builder import ReportBuilder
from .reward_free import RewardFreeWidths, reward_free_betas, run_reward_free

LOGGER = logging.getLogger(__name__)

SUBLINEAR_EXPONENT = 0.75
DECREASE_FACTOR = 0.6
ASSERTION_KINDS = {
    "monotone-regret": {"golf"},
    "sublinear": {"golf"},
    "decreasing-suboptimality": {"reward-free", "offline"},
    "claims-pass": {"claims"},
}


def load_experiment_config(path: Path) -> ExperimentConfig:
    """Read and validate an experiment configuration.

    Raises:
        ExperimentConfigError: Naming the offending key path, or the file on I/O errors.
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ExperimentConfigError(f"{path}: cannot read file ({exc.strerror})") from exc
    try:
        return ExperimentConfig.model_validate_json(text)
    except ValidationError as exc:
        first = exc.errors()[0]
        key = ".".join(str(part) for part in first["loc"]) or None
        raise ExperimentConfigError(f"{first['msg']} (in {path})", key=key) from exc


@dataclass(frozen=True)
class ResolvedInstance:
    mdp: LayeredMdp
    family: ValueFunctionFamily
    g_family: Optional[ValueFunctionFamily] = None
    reward: Optional[List[np.ndarray]] = None
    mu: Optional[DistributionFamily] = None


def resolve_instance(source: InstanceSource) -> ResolvedInstance:
    """Build or load the MDP and families an experiment runs on."""
    if source.construction is not None:
        construction, g_family = construction_from_params(source.construction, source.params)
        if construction.family is None:
            raise ExperimentConfigError(
                f"construction {source.construction!r} defines no family", key="instance.construction"
            )
        mdp, family = construction.mdp, construction.family
    else:
        assert source.mdp_path is not None and source.family_path is not None
        mdp = load_mdp(source.mdp_path)
        family = load_family(source.family_path, mdp)
        g_family = load_family(source.gfamily_path, mdp) if source.gfamily_path else None
    reward = load_reward(source.reward_path, mdp) if source.reward_path else None
    mu = load_distribution(source.mu_path, mdp) if source.mu_path else None
    return ResolvedInstance(mdp, family, g_family, reward, mu)


@dataclass
class RunOutcome:
    """Output of one (sweep point, seed) run."""

    point: Dict[str, float]
    seed: int
    metrics: Dict[str, float]
    rows: List[Dict[str, object]]
    curve: Optional[np.ndarray] = None
    aborted: Optional[str] = None


@dataclass
class ExperimentResult:
    summary: ExperimentSummary
    artifacts: List[Path]
    passed: bool
    outcomes: List[RunOutcome] = field(default_factory=list)
    ledger: Optional[ClaimLedger] = None


def _label(point: Dict[str, float]) -> str:
    if not point:
        return "base"
    return "_".join(f"{name}{value:g}" for name, value in point.items())


class ExperimentService:
    """Dispatch sweep points to a worker pool and write the artifacts of each run."""

    def __init__(
        self,
        settings: Settings,
        report_builder: ReportBuilder,
        verifier: Optional[ClaimVerifier] = None,
        logger: Optional[logging.Logger] = None,
    ) -> None:
        self.settings = settings
        self.report_builder = report_builder
        self.verifier = verifier
        self.logger = logger or LOGGER

    def run_experiment(
        self, config: ExperimentConfig, output_dir: Optional[Path] = None
    ) -> ExperimentResult:
        """Run every sweep point for every seed and emit CSV, JSON and SVG artifacts.

        Args:
            config: Validated experiment description.
            output_dir: Overrides the configured output directory.

        Returns:
            The summary, the written artifacts and whether every declared assertion held.
        """
        for assertion in config.assertions:
            if config.kind not in ASSERTION_KINDS[assertion]:
                raise ExperimentConfigError(
                    f"assertion {assertion!r} does not apply to {config.kind} experiments",
                    key="assertions",
                )
        target = output_dir or config.output_dir or self.settings.output_dir / config.name
        if config.kind == "claims":
            return self._run_claims(config, target)
        assert config.instance is not None
        instance = resolve_instance(config.instance)
        tasks = self._tasks(config)
        self.logger.info(
            "Experiment %s: %d runs on %s with up to %d workers",
            config.name,
            len(tasks),
            instance.mdp.name,
            self.settings.threads,
        )
        outcomes = self._dispatch(config, instance, tasks)
        return self._emit(config, outcomes, target)

    def _points(self, config: ExperimentConfig) -> List[Dict[str, float]]:
        axes = [axis for axis in config.sweep if axis.name != "seed"]
        if not axes:
            return [{}]
        return [
            {axis.name: value for axis, value in zip(axes, values)}
            for values in itertools.product(*(axis.values for axis in axes))
        ]

    def _tasks(self, config: ExperimentConfig) -> List[Tuple[Dict[str, float], int]]:
        seeds: Sequence[float] = config.seeds
        for axis in config.sweep:
            if axis.name == "seed":
                seeds = axis.values
        return [(point, int(seed)) for point in self._points(config) for seed in seeds]

    def _dispatch(
        self,
        config: ExperimentConfig,
        instance: ResolvedInstance,
        tasks: List[Tuple[Dict[str, float], int]],
    ) -> List[RunOutcome]:
        results: Dict[int, RunOutcome] = {}
        workers = max(1, min(self.settings.threads, len(tasks)))
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {
                pool.submit(self._run_one, config, instance, point, seed): index
                for index, (point, seed) in enumerate(tasks)
            }
            for future in tqdm(as_completed(futures), total=len(futures), desc=config.name):
                results[futures[future]] = future.result()
        # Merge in sweep order, whatever the completion order.
        return [results[index] for index in range(len(tasks))]

    def _delta(self, config: ExperimentConfig) -> float:
        return config.algorithm.delta or self.settings.delta

    def _run_one(
        self,
        config: ExperimentConfig,
        instance: ResolvedInstance,
        point: Dict[str, float],
        seed: int,
    ) -> RunOutcome:
        if config.kind == "golf":
            return self._run_golf(config, instance, point, seed)
        if config.kind == "reward-free":
            return self._run_reward_free(config, instance, point, seed)
        return self._run_offline(config, instance, point, seed)

    def _run_golf(
        self, config: ExperimentConfig, instance: ResolvedInstance, point: Dict[str, float], seed: int
    ) -> RunOutcome:
        rounds = int(point.get("T", config.algorithm.rounds))
        if "beta" in point:
            beta = float(point["beta"])
        elif config.algorithm.beta == "auto":
            beta = golf_beta(
                rounds,
                instance.mdp.horizon,
                instance.family.size,
                self._delta(config),
                self.settings.beta_constant,
            )
        else:
            beta = float(config.algorithm.beta)
        run_config = GolfConfig(
            rounds=rounds,
            beta=beta,
            seed=seed,
            recompute_interval=self.settings.loss_recompute_interval,
        )
        try:
            run = golf_run(instance.mdp, instance.family, run_config, logger=self.logger)
        except EmptyConfidenceSetError as exc:
            partial: RunLog = exc.partial_log
            self.logger.warning("GOLF run %s seed=%d aborted: %s", _label(point), seed, exc)
            return RunOutcome(
                point=point,
                seed=seed,
                metrics={
                    "cum_regret": float(partial.cumulative_regret[-1]) if partial.records else 0.0,
                    "final_set_size": 0.0,
                },
                rows=partial.to_rows(),
                curve=partial.cumulative_regret,
                aborted=str(exc),
            )
        final = run.records[-1]
        return RunOutcome(
            point=point,
            seed=seed,
            metrics={"cum_regret": final.cumulative_regret, "final_set_size": float(final.set_size)},
            rows=run.to_rows(),
            curve=run.cumulative_regret,
        )

    def _widths(
        self, config: ExperimentConfig, instance: ResolvedInstance, rounds: int, point: Dict[str, float]
    ) -> RewardFreeWidths:
        assert instance.g_family is not None
        auto = reward_free_betas(
            rounds,
            instance.mdp.horizon,
            instance.family.size,
            instance.g_family.size,
            self._delta(config),
            self.settings.rf_c1,
            self.settings.rf_c2,
        )
        params = config.algorithm
        beta_off = auto.beta_off if params.beta_off == "auto" else float(params.beta_off)
        beta_rf = auto.beta_rf if params.beta_rf == "auto" else float(params.beta_rf)
        if "beta" in point:
            beta_rf = float(point["beta"])
        return RewardFreeWidths(beta_off=beta_off, beta_rf=beta_rf)

    def _run_reward_free(
        self, config: ExperimentConfig, instance: ResolvedInstance, point: Dict[str, float], seed: int
    ) -> RunOutcome:
        if instance.g_family is None:
            raise ExperimentConfigError(
                "reward-free experiments need an exploration family", key="instance.gfamily"
            )
        rounds = int(point.get("T", config.algorithm.rounds))
        widths = self._widths(config, instance, rounds, point)
        outcome = run_reward_free(
            instance.mdp,
            instance.family,
            instance.g_family,
            rounds,
            widths,
            seed,
            target_reward=instance.reward,
            logger=self.logger,
        )
        exploration = outcome.exploration
        rows: List[Dict[str, object]] = [
            {
                "t": record.t,
                "g_value": repr(record.optimistic_value),
                "set_size": record.set_size,
                "selected": int(record.t == exploration.selected_round),
            }
            for record in exploration.run.records
        ]
        return RunOutcome(
            point=point,
            seed=seed,
            metrics={
                "suboptimality": outcome.suboptimality,
                "selected_round": float(exploration.selected_round),
            },
            rows=rows,
        )

    def _logging_distribution(
        self, config: ExperimentConfig, instance: ResolvedInstance
    ) -> DistributionFamily:
        choice = config.algorithm.mu
        mdp = instance.mdp
        if choice == "file":
            if instance.mu is None:
                raise ExperimentConfigError("mu='file' needs an instance 'mu' path", key="instance.mu")
            return instance.mu
        if choice == "uniform":
            return DistributionFamily.uniform(mdp)
        optimal_policy = optimal_values(mdp).policy
        if choice == "optimal":
            return DistributionFamily.from_occupancy(occupancy(mdp, optimal_policy))
        if choice == "avoiding":
            return avoiding_distribution(mdp, optimal_policy)
        policies = list(induced_policies(instance.family).policies)
        return witness_distribution(coverability(mdp, policies))

    def _run_offline(
        self, config: ExperimentConfig, instance: ResolvedInstance, point: Dict[str, float], seed: int
    ) -> RunOutcome:
        samples = int(point.get("n", config.algorithm.samples))
        mu = self._logging_distribution(config, instance)
        dataset = generate_offline(instance.mdp, mu, samples, seed)
        method = msbo if config.algorithm.method == "msbo" else fqi
        estimate = method(dataset, instance.family)
        rows: List[Dict[str, object]] = [
            {"layer": h, "component": k, "samples": len(dataset.layers[h])}
            for h, k in enumerate(estimate.components)
        ]
        for flag in estimate.flags:
            self.logger.warning("Offline run n=%d seed=%d: %s", samples, seed, flag)
        return RunOutcome(
            point=point,
            seed=seed,
            metrics={"suboptimality": suboptimality(instance.mdp, estimate.policy)},
            rows=rows,
        )

    def _emit(
        self, config: ExperimentConfig, outcomes: List[RunOutcome], target: Path
    ) -> ExperimentResult:
        artifacts: List[Path] = []
        for outcome in outcomes:
            name = f"{config.kind}_{_label(outcome.point)}_seed{outcome.seed}.csv"
            artifacts.append(self.report_builder.write_csv(outcome.rows, target / "runs" / name))
        points = self._points(config)
        summaries = []
        for point in points:
            group = [o for o in outcomes if o.point == point]
            for metric in group[0].metrics:
                summaries.append(
                    self.report_builder.aggregate(point, metric, [o.metrics[metric] for o in group])
                )
        aborted = [
            f"{_label(o.point)} seed={o.seed}: {o.aborted}" for o in outcomes if o.aborted is not None
        ]
        complete = [o for o in outcomes if o.aborted is None]
        assertions = {
            name: bool(complete) and self._evaluate(name, config, complete)
            for name in config.assertions
        }
        if config.emit_svg and config.kind == "golf" and complete:
            artifacts.append(self._regret_svg(config, complete, points, target))
        summary = ExperimentSummary(
            name=config.name,
            kind=config.kind,
            points=summaries,
            assertions=assertions,
            artifacts=[str(path.relative_to(target)) for path in artifacts],
            aborted=aborted,
        )
        artifacts.append(self.report_builder.write_json(summary, target / "summary.json"))
        passed = all(assertions.values()) and not aborted
        self.logger.info("Experiment %s finished; assertions passed: %s", config.name, passed)
        return ExperimentResult(summary=summary, artifacts=artifacts, passed=passed, outcomes=outcomes)

    def _regret_svg(
        self,
        config: ExperimentConfig,
        outcomes: List[RunOutcome],
        points: List[Dict[str, float]],
        target: Path,
    ) -> Path:
        curves: Dict[str, np.ndarray] = {}
        bands: Dict[str, List[np.ndarray]] = {}
        for point in points:
            group = [o.curve for o in outcomes if o.point == point and o.curve is not None]
            if not group:
                continue
            stack = np.stack(group)
            q25, median, q75 = np.percentile(stack, [25, 50, 75], axis=0)
            curves[_label(point)] = median
            bands[_label(point)] = [q25, q75]
        return self.report_builder.write_regret_svg(
            curves, target / "regret.svg", title=f"{config.name}: cumulative regret", bands=bands
        )

    def _medians_along(
        self, outcomes: List[RunOutcome], axis: str, metric: str, default: float
    ) -> Tuple[List[float], List[float]]:
        by_value: Dict[float, List[float]] = {}
        for outcome in outcomes:
            by_value.setdefault(outcome.point.get(axis, default), []).append(outcome.metrics[metric])
        xs = sorted(by_value)
        return xs, [float(np.median(by_value[x])) for x in xs]

    def _evaluate(self, name: str, config: ExperimentConfig, outcomes: List[RunOutcome]) -> bool:
        if name == "monotone-regret":
            return all(
                outcome.curve is not None and bool(np.all(np.diff(outcome.curve) >= -1e-12))
                for outcome in outcomes
            )
        if name == "sublinear":
            xs, medians = self._medians_along(
                outcomes, "T", "cum_regret", float(config.algorithm.rounds)
            )
            if len(xs) < 2:
                # One horizon: fit on checkpoints of the median curve.
                curve = np.median(np.stack([o.curve for o in outcomes if o.curve is not None]), axis=0)
                xs = [float(t) for t in sorted({max(1, len(curve) // k) for k in (8, 4, 2, 1)})]
                medians = [float(curve[int(t) - 1]) for t in xs]
            if max(medians) <= 0.0:
                return True
            return fit_loglog_exponent(xs, medians) <= SUBLINEAR_EXPONENT
        axis = "T" if config.kind == "reward-free" else "n"
        default = config.algorithm.rounds if axis == "T" else config.algorithm.samples
        xs, medians = self._medians_along(outcomes, axis, "suboptimality", float(default))
        if len(xs) < 2:
            raise ExperimentConfigError(
                f"'decreasing-suboptimality' needs a sweep over {axis}", key="sweep"
            )
        return medians[-1] <= DECREASE_FACTOR * medians[0]

    def _run_claims(self, config: ExperimentConfig, target: Path) -> ExperimentResult:
        assert config.suite is not None
        verifier = self.verifier or ClaimVerifier(self.settings, SuiteSizes(), self.logger)
        ledger = verifier.verify(config.suite)
        rows = self.report_builder.ledger_rows(ledger)
        artifacts = [
            self.report_builder.write_csv(rows, target / "ledger.csv"),
            self.report_builder.write_json(ledger, target / "ledger.json"),
        ]
        assertions = {name: ledger.passed for name in config.assertions}
        summary = ExperimentSummary(
            name=config.name,
            kind=config.kind,
            assertions=assertions,
            artifacts=[str(path.relative_to(target)) for path in artifacts],
        )
        artifacts.append(self.report_builder.write_json(summary, target / "summary.json"))
        return ExperimentResult(
            summary=summary,
            artifacts=artifacts,
            passed=all(assertions.values()),
            ledger=ledger,
        )
