"""Command-line interface for coverlab."""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional

import typer
from pydantic import BaseModel

from . import get_version
from .claims import ClaimVerifier, SuiteSizes
from .complexity import Kind, be_dim, sec_reward_free, sec_value, verify_sec_bounds
from .config import Settings, get_settings
from .constructions import construction_from_params
from .coverage import (
    DistributionFamily,
    PolicySet,
    concentrability,
    coverability,
    coverability_infimum_oracle,
    coverability_v,
    generalized_concentrability,
    generalized_coverability,
    single_policy_concentrability,
)
from .exceptions import CoverlabError, ExperimentConfigError, ReportGenerationError
from .function_family import (
    ValueFunctionFamily,
    check_completeness,
    check_realizability,
    check_rf_completeness,
    induced_policies,
)
from .instance_io import load_distribution, load_family, load_mdp, save_family, save_mdp
from .logging_config import configure_logging
from .mdp import LayeredMdp, validate_mdp
from .models import AlgorithmParams, ExperimentConfig, InstanceSource
from .report_builder import ReportBuilder
from .service import ExperimentResult, ExperimentService, load_experiment_config

app = typer.Typer(help="Coverage, complexity and optimistic-exploration tools for layered MDPs.")
run_app = typer.Typer(help="Run one algorithm on one instance.")
app.add_typer(run_app, name="run")

MEASURES = (
    "concentrability",
    "single-policy-concentrability",
    "coverability",
    "coverability-v",
    "coverability-oracle",
    "generalized-concentrability",
    "generalized-coverability",
    "be-dim",
    "be-dim-sq",
    "sec",
    "sec-reward-free",
    "sec-bounds",
    "realizability",
    "completeness",
    "rf-completeness",
)
MEASURE_ALIASES = {
    "conc": "concentrability",
    "spc": "single-policy-concentrability",
    "cov": "coverability",
    "gen-conc": "generalized-concentrability",
    "gen-cov": "generalized-coverability",
}

VerboseOption = typer.Option(False, "--verbose", "-v", help="Enable verbose logging.")


def _fail(exc: CoverlabError) -> typer.Exit:
    typer.echo(f"error: {exc}", err=True)
    return typer.Exit(code=2)


def _parse_params(pairs: List[str]) -> Dict[str, Any]:
    params: Dict[str, Any] = {}
    for pair in pairs:
        key, sep, raw = pair.partition("=")
        if not sep or not key:
            raise ExperimentConfigError(f"expected key=value, got {pair!r}", key="param")
        try:
            params[key] = json.loads(raw)
        except json.JSONDecodeError:
            params[key] = raw
    return params


def _echo_json(document: BaseModel) -> None:
    typer.echo(document.model_dump_json(indent=2))


def _write_reports(reports: List[BaseModel], path: Path) -> Path:
    """One report is written as an object, several as an array."""
    documents = [report.model_dump(mode="json") for report in reports]
    payload = documents[0] if len(documents) == 1 else documents
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        raise ReportGenerationError(f"cannot write {path}: {exc.strerror}") from exc
    return path


def _resolve_settings(
    threads: Optional[int] = None, output_dir: Optional[Path] = None
) -> Settings:  # pragma: no cover - simple helper
    settings = get_settings()
    overrides: Dict[str, Any] = {}
    if threads:
        overrides["threads"] = threads
    if output_dir:
        overrides["output_dir"] = output_dir
    if overrides:
        return settings.model_copy(update=overrides)
    return settings


def _service(settings: Settings) -> ExperimentService:
    return ExperimentService(settings=settings, report_builder=ReportBuilder())


def _report_result(result: ExperimentResult) -> None:
    for name, held in result.summary.assertions.items():
        typer.echo(f"{name}: {'pass' if held else 'FAIL'}")
    for path in result.artifacts:
        typer.echo(f"wrote {path}")
    for run in result.summary.aborted:
        typer.echo(f"aborted {run}", err=True)
    if result.summary.aborted:
        raise typer.Exit(code=2)
    if not result.passed:
        raise typer.Exit(code=1)


@app.command()
def version() -> None:
    """Print the installed coverlab version."""
    typer.echo(get_version())


@app.command()
def validate(
    mdp_path: Path = typer.Argument(..., help="MDP JSON document."),
    family_path: Optional[Path] = typer.Option(None, "--family", "-f", help="Family to check."),
    verbose: bool = VerboseOption,
) -> None:
    """Check an MDP (and optionally a family) and print the findings."""
    configure_logging(logging.DEBUG if verbose else logging.INFO)
    try:
        mdp = load_mdp(mdp_path)
        report = validate_mdp(mdp)
        _echo_json(report)
        if family_path is not None:
            family = load_family(family_path, mdp)
            _echo_json(check_realizability(mdp, family))
            _echo_json(check_completeness(mdp, family))
    except CoverlabError as exc:
        raise _fail(exc) from exc
    if not report.valid:
        raise typer.Exit(code=1)


@app.command()
def construct(
    kind: str = typer.Argument(..., help="tree, bandit, two-layer, two-layer-rf, exbmdp or random."),
    param: List[str] = typer.Option([], "--param", "-p", help="Construction parameter key=value."),
    output: Path = typer.Option(Path("instance"), "--output", "-o", help="Output directory."),
    verbose: bool = VerboseOption,
) -> None:
    """Generate an instance and write its MDP, families and manifest."""
    configure_logging(logging.DEBUG if verbose else logging.INFO)
    try:
        construction, g_family = construction_from_params(kind, _parse_params(param))
        written = [save_mdp(construction.mdp, output / "mdp.json")]
        if construction.family is not None:
            written.append(save_family(construction.family, output / "family.json"))
        if g_family is not None:
            written.append(save_family(g_family, output / "gfamily.json"))
        manifest_path = output / "manifest.json"
        manifest_path.write_text(construction.manifest.model_dump_json(indent=2) + "\n", encoding="utf-8")
        written.append(manifest_path)
    except CoverlabError as exc:
        raise _fail(exc) from exc
    for path in written:
        typer.echo(f"wrote {path}")


def _policy_set(family: Optional[ValueFunctionFamily], name: str) -> PolicySet:
    if name == "all":
        return "all"
    if family is None:
        raise ExperimentConfigError("the induced policy set needs --family", key="policy-set")
    return list(induced_policies(family).policies)


def _measure(
    name: str,
    mdp: LayeredMdp,
    family: Optional[ValueFunctionFamily],
    g_family: Optional[ValueFunctionFamily],
    mu: Optional[DistributionFamily],
    policy_set: str,
    eps: float,
    horizon: int,
    settings: Settings,
    kind: Kind = "Q",
) -> List[BaseModel]:
    name = MEASURE_ALIASES.get(name, name)

    def need(value: Any, option: str) -> Any:
        if value is None:
            raise ExperimentConfigError(f"measure {name!r} needs {option}", key="measure")
        return value

    if name == "concentrability":
        return [concentrability(mdp, _policy_set(family, policy_set), need(mu, "--mu"))]
    if name == "single-policy-concentrability":
        return [single_policy_concentrability(mdp, need(mu, "--mu"))]
    if name == "coverability":
        return [coverability(mdp, _policy_set(family, policy_set))]
    if name == "coverability-v":
        return [coverability_v(mdp, _policy_set(family, policy_set))]
    if name == "coverability-oracle":
        return [coverability_infimum_oracle(mdp, _policy_set(family, policy_set))]
    if name == "generalized-concentrability":
        return [
            generalized_concentrability(
                mdp, need(family, "--family"), _policy_set(family, policy_set), need(mu, "--mu")
            )
        ]
    if name == "generalized-coverability":
        return [
            generalized_coverability(mdp, need(family, "--family"), _policy_set(family, policy_set))
        ]
    if name in ("be-dim", "be-dim-sq"):
        variant = "sq" if name == "be-dim-sq" else "avg"
        return [
            be_dim(mdp, need(family, "--family"), eps=eps, variant=variant, kind=kind, cap=horizon)
        ]
    if name == "sec":
        return [sec_value(mdp, need(family, "--family"), None, horizon, settings.sec_budget, kind)]
    if name == "sec-reward-free":
        return [
            sec_reward_free(mdp, need(g_family, "--gfamily"), None, horizon, settings.sec_budget, kind)
        ]
    if name == "sec-bounds":
        if kind != "Q":
            raise ExperimentConfigError("sec-bounds compares Q-type measures only", key="type")
        return list(
            verify_sec_bounds(
                mdp,
                need(family, "--family"),
                horizon=horizon,
                eps=eps,
                slack=settings.bound_slack,
                budget=settings.sec_budget,
            )
        )
    if name == "realizability":
        return [check_realizability(mdp, need(family, "--family"), settings.membership_tolerance)]
    if name == "completeness":
        return [check_completeness(mdp, need(family, "--family"), settings.membership_tolerance)]
    if name == "rf-completeness":
        return [
            check_rf_completeness(
                mdp, need(family, "--family"), need(g_family, "--gfamily"), settings.membership_tolerance
            )
        ]
    raise ExperimentConfigError(
        f"unknown measure {name!r}; choose from {', '.join(MEASURES + tuple(MEASURE_ALIASES))}",
        key="measure",
    )


@app.command()
def measure(
    name: str = typer.Argument(
        ..., help=f"One of: {', '.join(MEASURES)}; short names {', '.join(MEASURE_ALIASES)}."
    ),
    mdp_path: Path = typer.Option(..., "--mdp", help="MDP JSON document."),
    family_path: Optional[Path] = typer.Option(None, "--family", help="Family JSON document."),
    gfamily_path: Optional[Path] = typer.Option(None, "--gfamily", help="Exploration family."),
    mu_path: Optional[Path] = typer.Option(None, "--mu", help="Distribution JSON document."),
    policy_set: str = typer.Option(
        "induced", "--policies", "--policy-set", help="'induced' or 'all'."
    ),
    eps: float = typer.Option(0.1, "--eps", help="Scale of dimension measures."),
    horizon: int = typer.Option(3, "--T", help="Sequence length of SEC and dimension caps."),
    alphabet: str = typer.Option(
        "q", "--type", help="'q' for state-action, 'v' for state test functions."
    ),
    out: Optional[Path] = typer.Option(None, "--out", help="Also write the JSON report to this file."),
    verbose: bool = VerboseOption,
) -> None:
    """Compute one coverage, complexity or family measure and print it as JSON."""
    configure_logging(logging.DEBUG if verbose else logging.INFO)
    settings = _resolve_settings()
    try:
        if alphabet.lower() not in ("q", "v"):
            raise ExperimentConfigError(f"expected q or v, got {alphabet!r}", key="type")
        kind: Kind = "V" if alphabet.lower() == "v" else "Q"
        mdp = load_mdp(mdp_path)
        family = load_family(family_path, mdp) if family_path else None
        g_family = load_family(gfamily_path, mdp) if gfamily_path else None
        mu = load_distribution(mu_path, mdp) if mu_path else None
        reports = _measure(name, mdp, family, g_family, mu, policy_set, eps, horizon, settings, kind)
        if out is not None:
            _write_reports(reports, out)
    except CoverlabError as exc:
        raise _fail(exc) from exc
    for report in reports:
        _echo_json(report)


def _single_run(
    kind: str,
    construction: Optional[str],
    param: List[str],
    mdp_path: Optional[Path],
    family_path: Optional[Path],
    extra: Dict[str, Optional[Path]],
    algorithm: AlgorithmParams,
    seed: int,
    output: Optional[Path],
    out: Optional[Path] = None,
) -> None:
    settings = _resolve_settings(output_dir=output)
    try:
        source = InstanceSource.model_validate(
            {
                "construction": construction,
                "params": _parse_params(param),
                "mdp": mdp_path,
                "family": family_path,
                **{key: value for key, value in extra.items() if value is not None},
            }
        )
        config = ExperimentConfig(
            name=f"{kind}-run", kind=kind, instance=source, algorithm=algorithm, seeds=[seed]
        )
        result = _service(settings).run_experiment(config, output_dir=output)
        if out is not None and result.outcomes:
            ReportBuilder().write_csv(result.outcomes[0].rows, out)
            typer.echo(f"wrote {out}")
    except CoverlabError as exc:
        raise _fail(exc) from exc
    except ValueError as exc:
        raise _fail(ExperimentConfigError(str(exc), key="instance")) from exc
    for point in result.summary.points:
        typer.echo(f"{point.metric}: {point.median!r}")
    _report_result(result)


def _algorithm_params(**values: Any) -> AlgorithmParams:
    try:
        return AlgorithmParams.model_validate({k: v for k, v in values.items() if v is not None})
    except ValueError as exc:
        raise _fail(ExperimentConfigError(str(exc).splitlines()[0], key="algorithm")) from exc


ConstructionOption = typer.Option(None, "--construction", "-c", help="Named construction.")
ParamOption = typer.Option([], "--param", "-p", help="Construction parameter key=value.")
MdpOption = typer.Option(None, "--mdp", help="MDP JSON document.")
FamilyOption = typer.Option(None, "--family", help="Family JSON document.")
SeedOption = typer.Option(0, "--seed", help="Sampler seed.")
OutputOption = typer.Option(None, "--output", "-o", help="Output directory.")
RunCsvOption = typer.Option(None, "--out", help="Also copy the per-round log to this CSV file.")
DeltaOption = typer.Option(None, "--delta", help="Failure probability of automatic widths.")


@run_app.command("golf")
def run_golf(
    construction: Optional[str] = ConstructionOption,
    param: List[str] = ParamOption,
    mdp_path: Optional[Path] = MdpOption,
    family_path: Optional[Path] = FamilyOption,
    rounds: int = typer.Option(1000, "--T", help="Number of episodes."),
    beta: Optional[float] = typer.Option(None, "--beta", help="Confidence width; automatic if omitted."),
    delta: Optional[float] = DeltaOption,
    seed: int = SeedOption,
    output: Optional[Path] = OutputOption,
    out: Optional[Path] = RunCsvOption,
    verbose: bool = VerboseOption,
) -> None:
    """Run the optimistic online algorithm and write its per-round log.

    Exits 2 when the confidence set empties; the rounds played so far are still written.
    """
    configure_logging(logging.DEBUG if verbose else logging.INFO)
    algorithm = _algorithm_params(rounds=rounds, beta="auto" if beta is None else beta, delta=delta)
    _single_run("golf", construction, param, mdp_path, family_path, {}, algorithm, seed, output, out)


@run_app.command("reward-free")
def run_reward_free_command(
    construction: Optional[str] = ConstructionOption,
    param: List[str] = ParamOption,
    mdp_path: Optional[Path] = MdpOption,
    family_path: Optional[Path] = FamilyOption,
    gfamily_path: Optional[Path] = typer.Option(None, "--gfamily", help="Exploration family."),
    reward_path: Optional[Path] = typer.Option(None, "--reward", help="Target reward tables."),
    rounds: int = typer.Option(1000, "--T", help="Exploration episodes."),
    beta_off: Optional[float] = typer.Option(None, "--beta-off", help="Offline width."),
    beta_rf: Optional[float] = typer.Option(None, "--beta-rf", help="Exploration width."),
    delta: Optional[float] = DeltaOption,
    seed: int = SeedOption,
    output: Optional[Path] = OutputOption,
    out: Optional[Path] = RunCsvOption,
    verbose: bool = VerboseOption,
) -> None:
    """Explore without rewards, then plan for the target reward."""
    configure_logging(logging.DEBUG if verbose else logging.INFO)
    algorithm = _algorithm_params(
        rounds=rounds,
        beta_off="auto" if beta_off is None else beta_off,
        beta_rf="auto" if beta_rf is None else beta_rf,
        delta=delta,
    )
    extra = {"gfamily": gfamily_path, "reward": reward_path}
    _single_run(
        "reward-free", construction, param, mdp_path, family_path, extra, algorithm, seed, output, out
    )


@run_app.command("offline")
def run_offline(
    construction: Optional[str] = ConstructionOption,
    param: List[str] = ParamOption,
    mdp_path: Optional[Path] = MdpOption,
    family_path: Optional[Path] = FamilyOption,
    mu_path: Optional[Path] = typer.Option(None, "--mu-file", help="Logging distribution file."),
    mu: str = typer.Option("witness", "--mu", help="witness, optimal, uniform, avoiding or file."),
    samples: int = typer.Option(1000, "--n", help="Tuples per layer."),
    method: str = typer.Option("msbo", "--method", help="msbo or fqi."),
    seed: int = SeedOption,
    output: Optional[Path] = OutputOption,
    out: Optional[Path] = RunCsvOption,
    verbose: bool = VerboseOption,
) -> None:
    """Draw a logged dataset and fit a function offline."""
    configure_logging(logging.DEBUG if verbose else logging.INFO)
    algorithm = _algorithm_params(n=samples, mu=mu, method=method)
    extra = {"mu": mu_path}
    _single_run("offline", construction, param, mdp_path, family_path, extra, algorithm, seed, output, out)


@app.command()
def verify(
    suite: str = typer.Argument("all", help="Claim suite name or 'all'."),
    quick: bool = typer.Option(False, "--quick", help="Use reduced instance counts."),
    output: Optional[Path] = OutputOption,
    threads: Optional[int] = typer.Option(None, "--threads", help="Override COVERLAB_THREADS."),
    verbose: bool = VerboseOption,
) -> None:
    """Run a claim suite and write its ledger; exits 1 when any claim fails."""
    configure_logging(logging.DEBUG if verbose else logging.INFO)
    settings = _resolve_settings(threads=threads, output_dir=output)
    sizes = SuiteSizes.reduced() if quick else SuiteSizes()
    service = ExperimentService(
        settings=settings,
        report_builder=ReportBuilder(),
        verifier=ClaimVerifier(settings, sizes),
    )
    config = ExperimentConfig(
        name=f"claims-{suite}", kind="claims", suite=suite, assertions=["claims-pass"]
    )
    try:
        result = service.run_experiment(config, output_dir=output)
    except CoverlabError as exc:
        raise _fail(exc) from exc
    if result.ledger is not None:
        for row in result.ledger.failures:
            typer.echo(f"FAILED {row.suite}/{row.claim} on {row.instance}: {row.value!r} vs {row.bound!r}")
        typer.echo(f"{len(result.ledger.rows)} claims, {len(result.ledger.failures)} failed")
    _report_result(result)


@app.command()
def experiment(
    config_path: Path = typer.Argument(..., help="Experiment configuration JSON."),
    output: Optional[Path] = OutputOption,
    threads: Optional[int] = typer.Option(None, "--threads", help="Override COVERLAB_THREADS."),
    log_file: Optional[Path] = typer.Option(None, "--log-file", help="Also write log records here."),
    verbose: bool = VerboseOption,
) -> None:
    """Run a declarative experiment; exits 1 when a declared assertion fails."""
    configure_logging(logging.DEBUG if verbose else logging.INFO, log_file)
    settings = _resolve_settings(threads=threads)
    try:
        config = load_experiment_config(config_path)
        result = _service(settings).run_experiment(config, output_dir=output)
    except CoverlabError as exc:
        raise _fail(exc) from exc
    _report_result(result)


def main() -> None:  # pragma: no cover - CLI entrypoint
    app()


if __name__ == "__main__":  # pragma: no cover - CLI entrypoint
    main()
