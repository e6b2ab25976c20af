"""Pydantic models used across the coverlab application."""

from __future__ import annotations

from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator


class Violation(BaseModel):
    """Single invariant violation found while validating an MDP."""

    kind: str
    layer: Optional[int] = None
    state: Optional[int] = None
    action: Optional[int] = None
    detail: Optional[str] = None


class ValidationReport(BaseModel):
    """Outcome of ``validate_mdp``."""

    name: str
    valid: bool
    violations: List[Violation] = Field(default_factory=list)
    max_return: float
    min_return: float


class TransitionEntry(BaseModel):
    """Sparse transition entry inside an MDP document."""

    state: int = Field(ge=0)
    prob: float


class LayerDocument(BaseModel):
    states: List[str] = Field(min_length=1)


class MdpDocument(BaseModel):
    """Wire format of a layered MDP."""

    model_config = ConfigDict(populate_by_name=True)

    horizon: int = Field(alias="H", ge=1)
    actions: List[str] = Field(min_length=1)
    layers: List[LayerDocument]
    transitions: List[List[List[List[TransitionEntry]]]]
    rewards: List[List[List[float]]]
    initial_state: int = Field(default=0, ge=0)
    name: str = "mdp"

    @model_validator(mode="after")
    def _check_layer_counts(self) -> "MdpDocument":
        for key in ("layers", "transitions", "rewards"):
            if len(getattr(self, key)) != self.horizon:
                raise ValueError(f"{key} must list exactly H={self.horizon} layers")
        return self


class FamilyDocument(BaseModel):
    """Wire format of a finite value-function family.

    ``members[m][h][x][a]`` holds member tables; ``components[h][k][x][a]``
    optionally lists the per-layer sets used by the inner minimization.
    """

    model_config = ConfigDict(populate_by_name=True)

    horizon: int = Field(alias="H", ge=1)
    members: List[List[List[List[float]]]] = Field(min_length=1)
    components: Optional[List[List[List[List[float]]]]] = None
    value_bounds: Tuple[float, float] = (0.0, 1.0)
    name: str = "family"


class DistributionDocument(BaseModel):
    """Wire format of a per-layer distribution over state-action pairs."""

    layers: List[List[List[float]]] = Field(min_length=1)


class RewardDocument(BaseModel):
    """Target reward tables ``rewards[h][x][a]``."""

    rewards: List[List[List[float]]] = Field(min_length=1)


class CoverageReport(BaseModel):
    """Coverage coefficient with a machine-checkable witness."""

    model_config = ConfigDict(ser_json_inf_nan="constants")

    measure: str
    value: float
    method: Literal["closed-form", "bisection-lp", "enumeration"]
    witness: Dict[str, Any] = Field(default_factory=dict)
    mu: Optional[List[List[List[float]]]] = None
    interval: Optional[Tuple[float, float]] = None
    tolerance: float = 0.0
    flags: List[str] = Field(default_factory=list)


class WitnessStep(BaseModel):
    """One element of a dimension or SEC witness sequence."""

    model_config = ConfigDict(ser_json_inf_nan="constants")

    layer: int
    distribution: int
    test_function: int
    expectation: float
    accumulated: float
    term: float


class ComplexityReport(BaseModel):
    """Structural complexity value with its witness sequence."""

    model_config = ConfigDict(ser_json_inf_nan="constants")

    measure: str
    value: float
    exact: bool
    lower: Optional[float] = None
    upper: Optional[float] = None
    witness: List[WitnessStep] = Field(default_factory=list)
    parameters: Dict[str, Any] = Field(default_factory=dict)
    flags: List[str] = Field(default_factory=list)


class BoundCheck(BaseModel):
    """A single inequality evaluated on an instance."""

    model_config = ConfigDict(ser_json_inf_nan="constants")

    name: str
    lhs: float
    rhs: float
    holds: bool
    conclusive: bool = True
    detail: str = ""


class ExpectedProperty(BaseModel):
    """Property a generated instance is expected to satisfy."""

    name: Literal[
        "complete",
        "realizable",
        "optimal_value",
        "coverability_upper",
        "gen_concentrability_upper",
        "be_dim_sq_lower",
        "log_family_size_upper",
    ]
    value: Union[bool, float]
    claim: str
    layer: Optional[int] = None
    eps_below: Optional[float] = None


class ConstructionManifest(BaseModel):
    """Generated instance description and its expected properties."""

    name: str
    parameters: Dict[str, Any] = Field(default_factory=dict)
    properties: List[ExpectedProperty] = Field(default_factory=list)
    notes: List[str] = Field(default_factory=list)


class ClaimRow(BaseModel):
    """One checked statement in a claim ledger."""

    model_config = ConfigDict(ser_json_inf_nan="constants")

    suite: str
    claim: str
    instance: str
    value: float
    bound: float
    passed: bool
    detail: str = ""


class ClaimLedger(BaseModel):
    """All rows produced by a claim suite."""

    suite: str
    rows: List[ClaimRow] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(row.passed for row in self.rows)

    @property
    def failures(self) -> List[ClaimRow]:
        return [row for row in self.rows if not row.passed]


class InstanceSource(BaseModel):
    """Where an experiment gets its MDP and families from."""

    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    construction: Optional[
        Literal["tree", "bandit", "two-layer", "two-layer-rf", "exbmdp", "random"]
    ] = None
    params: Dict[str, Any] = Field(default_factory=dict)
    mdp_path: Optional[Path] = Field(default=None, alias="mdp")
    family_path: Optional[Path] = Field(default=None, alias="family")
    gfamily_path: Optional[Path] = Field(default=None, alias="gfamily")
    reward_path: Optional[Path] = Field(default=None, alias="reward")
    mu_path: Optional[Path] = Field(default=None, alias="mu")

    @model_validator(mode="after")
    def _one_source(self) -> "InstanceSource":
        if (self.construction is None) == (self.mdp_path is None):
            raise ValueError("give exactly one of 'construction' or 'mdp'")
        if self.mdp_path is not None and self.family_path is None:
            raise ValueError("'family' is required with 'mdp'")
        return self


class AlgorithmParams(BaseModel):
    """Algorithm knobs; ``auto`` widths follow the log-cardinality formulas."""

    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    rounds: int = Field(default=1000, ge=1, alias="T")
    beta: Union[float, Literal["auto"]] = "auto"
    beta_off: Union[float, Literal["auto"]] = "auto"
    beta_rf: Union[float, Literal["auto"]] = "auto"
    delta: Optional[float] = Field(default=None, gt=0.0, le=1.0)
    samples: int = Field(default=1000, ge=1, alias="n")
    method: Literal["msbo", "fqi"] = "msbo"
    mu: Literal["witness", "optimal", "uniform", "avoiding", "file"] = "witness"


class SweepAxis(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: Literal["T", "beta", "n", "seed"]
    values: List[float] = Field(min_length=1)


class ExperimentConfig(BaseModel):
    """Declarative description of a reproducible experiment."""

    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    name: str
    kind: Literal["golf", "reward-free", "offline", "claims"]
    instance: Optional[InstanceSource] = None
    algorithm: AlgorithmParams = Field(default_factory=AlgorithmParams)
    seeds: List[int] = Field(default_factory=lambda: [0], min_length=1)
    sweep: List[SweepAxis] = Field(default_factory=list)
    suite: Optional[str] = None
    output_dir: Optional[Path] = None
    emit_svg: bool = False
    assertions: List[
        Literal["monotone-regret", "sublinear", "decreasing-suboptimality", "claims-pass"]
    ] = Field(default_factory=list)

    @model_validator(mode="after")
    def _kind_requirements(self) -> "ExperimentConfig":
        if self.kind == "claims":
            if not self.suite:
                raise ValueError("'suite' is required for claims experiments")
        elif self.instance is None:
            raise ValueError(f"'instance' is required for {self.kind} experiments")
        return self


class SweepPointSummary(BaseModel):
    """Aggregate of one sweep point across seeds."""

    model_config = ConfigDict(ser_json_inf_nan="constants")

    point: Dict[str, float]
    metric: str
    median: float
    q25: float
    q75: float
    values: List[float]


class ExperimentSummary(BaseModel):
    """Aggregate JSON written next to the per-run CSV files."""

    name: str
    kind: str
    points: List[SweepPointSummary] = Field(default_factory=list)
    assertions: Dict[str, bool] = Field(default_factory=dict)
    artifacts: List[str] = Field(default_factory=list)
    aborted: List[str] = Field(default_factory=list)
