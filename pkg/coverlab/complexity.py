"""Bellman-Eluder dimensions and the sequential extrapolation coefficient.

Every measure here is computed per layer over a finite alphabet: a set of
distributions ``D_h`` (occupancies of the policy class) and a set of test
functions ``Psi_h`` (Bellman residuals of the family). The expectation
matrices ``M[psi, d] = E_d[psi]`` and ``S[psi, d] = E_d[psi^2]`` are all the
searches need.

In both searches the test function chosen at step ``t`` influences only that
step, while the prefix of distributions determines every later step. The
searches therefore run over multisets of distributions and pick the best test
function per step.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np

from .coverage import coverability
from .exceptions import SearchBudgetExceededError
from .function_family import ValueFunctionFamily, induced_policies, layer_residuals
from .mdp import LayeredMdp, Policy, occupancy
from .models import BoundCheck, ComplexityReport, WitnessStep

LOGGER = logging.getLogger(__name__)

DEFAULT_NODE_BUDGET = 200_000
DEFAULT_SEC_BUDGET = 10_000_000
SEC_COVERABILITY_CONSTANT = 6.0
SEC_BE_DIM_CONSTANT = 8.0
COMPARISON_TOLERANCE = 1e-12

Variant = Literal["avg", "sq"]
Kind = Literal["Q", "V"]


@dataclass(frozen=True)
class LayerAlphabet:
    """Distributions and test functions of one layer, with their moments.

    Attributes:
        layer: Layer index.
        distributions: Shape ``(D, Z)`` over the layer's cells (or states).
        test_functions: Shape ``(P, Z)``.
        expectations: ``M[psi, d]``, shape ``(P, D)``.
        second_moments: ``S[psi, d]``, shape ``(P, D)``.
    """

    layer: int
    distributions: np.ndarray
    test_functions: np.ndarray
    expectations: np.ndarray
    second_moments: np.ndarray

    @classmethod
    def build(cls, layer: int, distributions: np.ndarray, test_functions: np.ndarray) -> "LayerAlphabet":
        distributions = np.unique(distributions, axis=0)
        test_functions = np.unique(test_functions, axis=0)
        return cls(
            layer=layer,
            distributions=distributions,
            test_functions=test_functions,
            expectations=test_functions @ distributions.T,
            second_moments=(test_functions**2) @ distributions.T,
        )


def _policies(family: ValueFunctionFamily, policy_set: Optional[Sequence[Policy]]) -> List[Policy]:
    if policy_set is None:
        return list(induced_policies(family).policies)
    return list(policy_set)


def q_type_sets(
    mdp: LayeredMdp,
    family: ValueFunctionFamily,
    policy_set: Optional[Sequence[Policy]] = None,
    reward: bool = True,
) -> List[LayerAlphabet]:
    """Per-layer alphabets over state-action pairs.

    Args:
        mdp: The MDP.
        family: Family whose residuals are the test functions.
        policy_set: Policies generating the distributions; the induced greedy class by default.
        reward: Whether residuals use ``T_h`` or the zero-reward ``P_h``.
    """
    family.check_against(mdp)
    occs = [occupancy(mdp, policy) for policy in _policies(family, policy_set)]
    alphabets = []
    for h in range(mdp.horizon):
        residuals = layer_residuals(mdp, family, h, reward)
        alphabets.append(
            LayerAlphabet.build(
                h,
                np.stack([occ.layers[h].reshape(-1) for occ in occs]),
                residuals.tables.reshape(residuals.tables.shape[0], -1),
            )
        )
    return alphabets


def v_type_sets(
    mdp: LayeredMdp,
    family: ValueFunctionFamily,
    policy_set: Optional[Sequence[Policy]] = None,
    reward: bool = True,
) -> List[LayerAlphabet]:
    """Per-layer alphabets over states.

    Test functions are ``x -> (f_h - T_h f_{h+1})(x, pi_{f,h}(x))`` and
    distributions are state marginals ``d_h^pi(x)``.
    """
    family.check_against(mdp)
    occs = [occupancy(mdp, policy) for policy in _policies(family, policy_set)]
    alphabets = []
    for h in range(mdp.horizon):
        residuals = layer_residuals(mdp, family, h, reward)
        comp_actions = np.argmax(family.components[h], axis=2)
        member_actions = comp_actions[family.members[:, h]]
        member_tables = residuals.tables[residuals.member_index]
        values = np.take_along_axis(member_tables, member_actions[:, :, None], axis=2)[:, :, 0]
        alphabets.append(
            LayerAlphabet.build(
                h,
                np.stack([occ.state_marginal(h) for occ in occs]),
                values,
            )
        )
    return alphabets


def _alphabets(
    mdp: LayeredMdp,
    family: ValueFunctionFamily,
    policy_set: Optional[Sequence[Policy]],
    kind: Kind,
    reward: bool,
) -> List[LayerAlphabet]:
    if kind == "V":
        return v_type_sets(mdp, family, policy_set, reward)
    return q_type_sets(mdp, family, policy_set, reward)


class _DimensionSearch:
    """Depth-first search for the longest independent sequence at one layer."""

    def __init__(
        self, alphabet: LayerAlphabet, eps: float, variant: Variant, cap: int, node_budget: int
    ) -> None:
        self.alphabet = alphabet
        self.eps = eps
        self.cap = cap
        self.node_budget = node_budget
        self.nodes = 0
        self.exhausted = True
        if variant == "sq":
            self.increments = alphabet.second_moments
        else:
            self.increments = alphabet.expectations**2
        self.memo: Dict[bytes, List[Tuple[int, int]]] = {}

    def _candidates(self, accumulated: np.ndarray) -> List[Tuple[float, int, int]]:
        magnitude = np.abs(self.alphabet.expectations)
        threshold = np.maximum(self.eps, np.sqrt(accumulated))[:, None]
        margin = np.where(magnitude > threshold, magnitude - threshold, -np.inf)
        best_psi = np.argmax(margin, axis=0)
        best_margin = margin[best_psi, np.arange(margin.shape[1])]
        order = np.argsort(-best_margin, kind="stable")
        return [
            (float(best_margin[d]), int(d), int(best_psi[d]))
            for d in order
            if np.isfinite(best_margin[d])
        ]

    def longest(self, counts: np.ndarray, depth: int) -> List[Tuple[int, int]]:
        if depth >= self.cap:
            return []
        key = counts.tobytes()
        if key in self.memo:
            return self.memo[key]
        if self.nodes >= self.node_budget:
            self.exhausted = False
            return []
        self.nodes += 1
        accumulated = self.increments @ counts
        best: List[Tuple[int, int]] = []
        for _, d, psi in self._candidates(accumulated):
            counts[d] += 1
            tail = self.longest(counts, depth + 1)
            counts[d] -= 1
            if len(tail) + 1 > len(best):
                best = [(d, psi)] + tail
                if depth + len(best) >= self.cap:
                    break
        self.memo[key] = best
        return best


def _replay_dimension(
    alphabet: LayerAlphabet, path: List[Tuple[int, int]], eps: float, variant: Variant
) -> List[WitnessStep]:
    increments = alphabet.second_moments if variant == "sq" else alphabet.expectations**2
    steps = []
    chosen: List[int] = []
    for d, psi in path:
        accumulated = float(sum(increments[psi, i] for i in chosen))
        expectation = float(alphabet.expectations[psi, d])
        steps.append(
            WitnessStep(
                layer=alphabet.layer,
                distribution=d,
                test_function=psi,
                expectation=expectation,
                accumulated=math.sqrt(accumulated),
                term=max(eps, math.sqrt(accumulated)),
            )
        )
        chosen.append(d)
    return steps


def be_dim(
    mdp: LayeredMdp,
    family: ValueFunctionFamily,
    policy_set: Optional[Sequence[Policy]] = None,
    eps: float = 0.1,
    variant: Variant = "avg",
    kind: Kind = "Q",
    cap: int = 64,
    layer: Optional[int] = None,
    node_budget: int = DEFAULT_NODE_BUDGET,
) -> ComplexityReport:
    """Bellman-Eluder dimension (average or squared), maximized over layers.

    Each step must satisfy ``|E_{d_t}[psi_t]| > max(eps, sqrt(acc_t))`` where
    ``acc_t`` sums ``E_{d_i}[psi_t]^2`` (average variant) or ``E_{d_i}[psi_t^2]``
    (squared variant) over earlier distributions.

    Args:
        mdp: The MDP.
        family: Value-function family.
        policy_set: Policy class; the induced greedy class by default.
        eps: Scale parameter.
        variant: ``avg`` or ``sq``.
        kind: ``Q`` for state-action alphabets, ``V`` for state alphabets.
        cap: Maximal sequence length searched.
        layer: Restrict to one layer.
        node_budget: Search-node budget per layer.

    Returns:
        The longest sequence found; ``exact`` is false when the cap or budget bound the search.
    """
    alphabets = _alphabets(mdp, family, policy_set, kind, reward=True)
    layers = range(len(alphabets)) if layer is None else [layer]
    best_value = 0
    best_steps: List[WitnessStep] = []
    exact = True
    flags: List[str] = []
    for h in layers:
        search = _DimensionSearch(alphabets[h], eps, variant, cap, node_budget)
        path = search.longest(np.zeros(alphabets[h].distributions.shape[0], dtype=np.int64), 0)
        if not search.exhausted:
            exact = False
            flags.append(f"node budget reached at layer {h}")
        if len(path) >= cap:
            exact = False
            flags.append(f"cap {cap} reached at layer {h}")
        if len(path) > best_value:
            best_value = len(path)
            best_steps = _replay_dimension(alphabets[h], path, eps, variant)
    return ComplexityReport(
        measure="be-dim-sq" if variant == "sq" else "be-dim",
        value=float(best_value),
        exact=exact,
        lower=float(best_value),
        witness=best_steps,
        parameters={"eps": eps, "kind": kind, "cap": cap, "layer": layer},
        flags=flags,
    )


def verify_dimension_witness(
    alphabet: LayerAlphabet, steps: Sequence[WitnessStep], eps: float, variant: Variant
) -> bool:
    """Replay a dimension witness against independently computed expectations."""
    chosen: List[np.ndarray] = []
    for step in steps:
        psi = alphabet.test_functions[step.test_function]
        d = alphabet.distributions[step.distribution]
        if variant == "sq":
            accumulated = sum(float(np.dot(prev, psi**2)) for prev in chosen)
        else:
            accumulated = sum(float(np.dot(prev, psi)) ** 2 for prev in chosen)
        if not abs(float(np.dot(d, psi))) > max(eps, math.sqrt(accumulated)):
            return False
        chosen.append(d)
    return True


def _sec_terms(alphabet: LayerAlphabet, counts: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Best term and its test function for every next distribution."""
    accumulated = alphabet.second_moments @ counts
    ratios = alphabet.expectations**2 / np.maximum(1.0, accumulated)[:, None]
    best_psi = np.argmax(ratios, axis=0)
    return ratios[best_psi, np.arange(ratios.shape[1])], best_psi


def sec_state_count(num_distributions: int, horizon: int) -> int:
    """Number of distinct distribution multisets of size below ``horizon``."""
    return sum(math.comb(num_distributions + k - 1, k) for k in range(horizon))


class _SecSearch:
    def __init__(self, alphabet: LayerAlphabet, horizon: int) -> None:
        self.alphabet = alphabet
        self.horizon = horizon
        self.memo: Dict[bytes, Tuple[float, List[int]]] = {}

    def best(self, counts: np.ndarray, remaining: int) -> Tuple[float, List[int]]:
        if remaining == 0:
            return 0.0, []
        key = counts.tobytes()
        if key in self.memo:
            return self.memo[key]
        terms, _ = _sec_terms(self.alphabet, counts)
        best_value = -1.0
        best_path: List[int] = []
        for d in range(terms.shape[0]):
            counts[d] += 1
            tail_value, tail_path = self.best(counts, remaining - 1)
            counts[d] -= 1
            value = float(terms[d]) + tail_value
            if value > best_value:
                best_value = value
                best_path = [d] + tail_path
        self.memo[key] = (best_value, best_path)
        return best_value, best_path


def _sec_witness(alphabet: LayerAlphabet, path: Sequence[int]) -> List[WitnessStep]:
    counts = np.zeros(alphabet.distributions.shape[0], dtype=np.int64)
    steps = []
    for d in path:
        terms, best_psi = _sec_terms(alphabet, counts)
        psi = int(best_psi[d])
        steps.append(
            WitnessStep(
                layer=alphabet.layer,
                distribution=int(d),
                test_function=psi,
                expectation=float(alphabet.expectations[psi, d]),
                accumulated=float(alphabet.second_moments[psi] @ counts),
                term=float(terms[d]),
            )
        )
        counts[d] += 1
    return steps


def _sec_over_layers(
    alphabets: Sequence[LayerAlphabet], horizon: int, budget: int, measure: str, params: Dict[str, object]
) -> ComplexityReport:
    if horizon < 1:
        raise ValueError("SEC needs T >= 1")
    cost = sum(
        sec_state_count(a.distributions.shape[0], horizon)
        * a.distributions.shape[0]
        * a.test_functions.shape[0]
        for a in alphabets
    )
    if cost > budget:
        raise SearchBudgetExceededError(
            f"exhaustive SEC needs about {cost} evaluations, budget is {budget}"
        )
    best_value = -1.0
    best_witness: List[WitnessStep] = []
    per_layer = []
    for alphabet in alphabets:
        counts = np.zeros(alphabet.distributions.shape[0], dtype=np.int64)
        value, path = _SecSearch(alphabet, horizon).best(counts, horizon)
        per_layer.append(value)
        if value > best_value:
            best_value = value
            best_witness = _sec_witness(alphabet, path)
    return ComplexityReport(
        measure=measure,
        value=best_value,
        exact=True,
        lower=best_value,
        upper=best_value,
        witness=best_witness,
        parameters={**params, "T": horizon, "layer_values": per_layer},
    )


def sec_exhaustive(
    mdp: LayeredMdp,
    family: ValueFunctionFamily,
    policy_set: Optional[Sequence[Policy]] = None,
    horizon: int = 3,
    kind: Kind = "Q",
    budget: int = DEFAULT_SEC_BUDGET,
    reward: bool = True,
) -> ComplexityReport:
    """Exact SEC of length ``horizon``, maximized over layers.

    Raises:
        SearchBudgetExceededError: If the multiset search would exceed ``budget`` evaluations.
    """
    alphabets = _alphabets(mdp, family, policy_set, kind, reward)
    return _sec_over_layers(alphabets, horizon, budget, "sec", {"kind": kind, "reward": reward})


def sec_greedy(
    mdp: LayeredMdp,
    family: ValueFunctionFamily,
    policy_set: Optional[Sequence[Policy]] = None,
    horizon: int = 3,
    kind: Kind = "Q",
    reward: bool = True,
) -> ComplexityReport:
    """Certified SEC lower bound from greedily extending one sequence per layer."""
    alphabets = _alphabets(mdp, family, policy_set, kind, reward)
    best_value = -1.0
    best_witness: List[WitnessStep] = []
    per_layer = []
    for alphabet in alphabets:
        counts = np.zeros(alphabet.distributions.shape[0], dtype=np.int64)
        path = []
        total = 0.0
        for _ in range(horizon):
            terms, _ = _sec_terms(alphabet, counts)
            d = int(np.argmax(terms))
            total += float(terms[d])
            path.append(d)
            counts[d] += 1
        per_layer.append(total)
        if total > best_value:
            best_value = total
            best_witness = _sec_witness(alphabet, path)
    return ComplexityReport(
        measure="sec-greedy",
        value=best_value,
        exact=False,
        lower=best_value,
        witness=best_witness,
        parameters={"kind": kind, "reward": reward, "T": horizon, "layer_values": per_layer},
    )


def sec_reward_free(
    mdp: LayeredMdp,
    g_family: ValueFunctionFamily,
    policy_set: Optional[Sequence[Policy]] = None,
    horizon: int = 3,
    budget: int = DEFAULT_SEC_BUDGET,
    kind: Kind = "Q",
) -> ComplexityReport:
    """SEC over zero-reward residuals ``g_h - P_h g_{h+1}``."""
    report = sec_exhaustive(mdp, g_family, policy_set, horizon, kind, budget, reward=False)
    return report.model_copy(update={"measure": "sec-reward-free"})


def verify_sec_witness(alphabet: LayerAlphabet, steps: Sequence[WitnessStep]) -> float:
    """Recompute the SEC objective of a witness from raw vectors."""
    chosen: List[np.ndarray] = []
    total = 0.0
    for step in steps:
        psi = alphabet.test_functions[step.test_function]
        d = alphabet.distributions[step.distribution]
        accumulated = sum(float(np.dot(prev, psi**2)) for prev in chosen)
        total += float(np.dot(d, psi)) ** 2 / max(1.0, accumulated)
        chosen.append(d)
    return total


def sec_value(
    mdp: LayeredMdp,
    family: ValueFunctionFamily,
    policy_set: Optional[Sequence[Policy]],
    horizon: int,
    budget: int = DEFAULT_SEC_BUDGET,
    kind: Kind = "Q",
) -> ComplexityReport:
    """Exhaustive SEC when affordable, otherwise the greedy lower bound."""
    try:
        return sec_exhaustive(mdp, family, policy_set, horizon, kind, budget=budget)
    except SearchBudgetExceededError as exc:
        LOGGER.info("Falling back to greedy SEC: %s", exc)
        return sec_greedy(mdp, family, policy_set, horizon, kind)


def eps_grid(eps: float) -> List[float]:
    """Halving grid from 1 down to ``eps``, always containing both ends."""
    grid = [1.0]
    while grid[-1] / 2 > eps:
        grid.append(grid[-1] / 2)
    if eps < 1.0:
        grid.append(eps)
    return grid


def verify_sec_bounds(
    mdp: LayeredMdp,
    family: ValueFunctionFamily,
    policy_set: Optional[Sequence[Policy]] = None,
    horizon: int = 3,
    eps: float = 0.1,
    slack: float = 1.5,
    budget: int = DEFAULT_SEC_BUDGET,
) -> List[BoundCheck]:
    """Evaluate the three inequalities relating SEC to coverage and BE dimensions.

    Args:
        mdp: The MDP.
        family: Value-function family.
        policy_set: Policy class; the induced greedy class by default.
        horizon: Sequence length ``T``.
        eps: Scale for the squared-dimension comparison.
        slack: Multiplier on the extracted constants.
        budget: Exhaustive SEC budget.

    Returns:
        One check per inequality. ``conclusive`` is false when a lower-bound
        estimate makes the verdict inconclusive.
    """
    policies = _policies(family, policy_set)
    sec = sec_value(mdp, family, policies, horizon, budget)
    checks: List[BoundCheck] = []

    dim_sq = be_dim(mdp, family, policies, eps, variant="sq", cap=horizon)
    lhs = float(min(dim_sq.value, horizon))
    rhs = sec.value / eps**2
    holds = lhs <= rhs + COMPARISON_TOLERANCE
    dim_settled = dim_sq.exact or dim_sq.value >= horizon
    checks.append(
        BoundCheck(
            name="sq-be-dim-below-sec",
            lhs=lhs,
            rhs=rhs,
            holds=holds,
            conclusive=(dim_settled if holds else sec.exact),
            detail=f"eps={eps}, T={horizon}, sec={sec.measure}",
        )
    )

    c_cov = coverability(mdp, policies).value
    rhs = SEC_COVERABILITY_CONSTANT * c_cov * (1.0 + math.log(horizon + 1)) * slack
    holds = sec.value <= rhs + COMPARISON_TOLERANCE
    checks.append(
        BoundCheck(
            name="sec-below-coverability-bound",
            lhs=sec.value,
            rhs=rhs,
            holds=holds,
            conclusive=sec.exact or not holds,
            detail=f"C_cov={c_cov:.6g}, constant={SEC_COVERABILITY_CONSTANT}, slack={slack}",
        )
    )

    best_rhs = math.inf
    all_exact = True
    for scale in eps_grid(eps):
        dim = be_dim(mdp, family, policies, scale, variant="avg", cap=horizon)
        settled = dim.exact or dim.value >= horizon
        all_exact = all_exact and settled
        best_rhs = min(best_rhs, scale**2 * horizon + dim.value)
    rhs = SEC_BE_DIM_CONSTANT * best_rhs * (1.0 + math.log(horizon)) * slack
    holds = sec.value <= rhs + COMPARISON_TOLERANCE
    checks.append(
        BoundCheck(
            name="sec-below-be-dim-bound",
            lhs=sec.value,
            rhs=rhs,
            holds=holds,
            conclusive=(sec.exact if holds else all_exact),
            detail=f"constant={SEC_BE_DIM_CONSTANT}, slack={slack}",
        )
    )
    for check in checks:
        if not check.holds:
            LOGGER.warning("Bound %s violated: %.6g > %.6g", check.name, check.lhs, check.rhs)
    return checks


def elliptic_potential(
    distributions: np.ndarray, mu: np.ndarray, dominance: float
) -> Tuple[float, float]:
    """Largest per-cell potential ``sum_t d_t(z) / (sum_{i<t} d_i(z) + C mu(z))``.

    Args:
        distributions: Shape ``(T, Z)``.
        mu: Reference distribution with ``d_t <= C mu`` cellwise.
        dominance: The constant ``C``.

    Returns:
        The potential and the bound ``2 log(T + 1)``.
    """
    prefix = np.cumsum(distributions, axis=0) - distributions
    denominator = prefix + dominance * mu[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(distributions > 0, distributions / denominator, 0.0)
    potential = float(terms.sum(axis=0).max())
    return potential, 2.0 * math.log(distributions.shape[0] + 1)


def random_dominated_sequence(
    rng: np.random.Generator, length: int, cells: int
) -> Tuple[np.ndarray, np.ndarray, float]:
    """Random ``(d_1..d_T, mu, C)`` with ``C`` the tightest dominance constant."""
    mu = rng.dirichlet(np.ones(cells))
    weights = rng.random((length, cells)) ** rng.uniform(0.5, 4.0)
    distributions = mu[None, :] * weights
    distributions /= distributions.sum(axis=1, keepdims=True)
    dominance = float(np.max(distributions / mu[None, :]))
    return distributions, mu, dominance
