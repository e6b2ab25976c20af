"""Instance generators: hard families, block and exogenous augmentations, random MDPs.

Every generator returns the MDP, a value-function family when the
construction defines one, and a manifest of properties the instance is
expected to satisfy. The manifests are replayed by ``claims``.
"""

from __future__ import annotations

import logging
import math
from fractions import Fraction
from typing import List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from .exceptions import ConstructionError
from .function_family import ValueFunctionFamily
from .mdp import LayeredMdp, RngLike, _as_rng, optimal_values
from .models import ConstructionManifest, ExpectedProperty

LOGGER = logging.getLogger(__name__)

STOCHASTIC_TOLERANCE = 1e-12


class Construction(NamedTuple):
    mdp: LayeredMdp
    family: Optional[ValueFunctionFamily]
    manifest: ConstructionManifest


class RewardFreeConstruction(NamedTuple):
    mdp: LayeredMdp
    f_family: ValueFunctionFamily
    g_family: ValueFunctionFamily
    manifest: ConstructionManifest


def _reciprocal(value: float, label: str) -> int:
    """``1 / value`` as an integer, rejecting values whose reciprocal is not integral."""
    if not 0.0 < value <= 0.5:
        raise ConstructionError(f"{label} must lie in (0, 1/2], got {value!r}")
    inverse = Fraction(value).limit_denominator(10**6)
    if inverse.numerator != 1 or abs(float(inverse) - value) > 1e-12:
        raise ConstructionError(f"1/{label} must be an integer, got {label}={value!r}")
    return inverse.denominator


def _indicators(num_states: int, num_actions: int) -> np.ndarray:
    """All single-cell indicator tables of a layer, in row-major cell order."""
    return np.eye(num_states * num_actions).reshape(-1, num_states, num_actions)


def build_tree(
    horizon: int, num_states: int, leaf_index: int, capacity: Optional[int] = None
) -> Construction:
    """Deterministic binary tree with one rewarded leaf pair and the indicator family.

    The depth is ``H' = min(H, floor(log2 X), C)``, so the requested horizon is
    built as asked only when ``H <= floor(log2 X)``; ``build_tree(2, 3, 0)`` has a
    single layer. A shortened tree carries a manifest note. Layer ``h`` has
    ``2^h`` states; action 0 moves to the left child and action 1 to the right
    one. ``leaf_index`` enumerates the (leaf, action) pairs of the last layer.

    Args:
        horizon: Requested horizon ``H``.
        num_states: State budget ``X``.
        leaf_index: Rewarded pair, ``2 * leaf + action``.
        capacity: Optional extra cap ``C`` on the depth.

    Returns:
        The tree MDP, the product family of per-layer indicators and its manifest.

    Raises:
        ConstructionError: On an empty tree or an out-of-range leaf index.
    """
    if horizon < 1 or num_states < 2:
        raise ConstructionError(f"invalid tree size H={horizon}, X={num_states}")
    depth = min(horizon, int(math.floor(math.log2(num_states))))
    if capacity is not None:
        depth = min(depth, capacity)
    if depth < 1:
        raise ConstructionError(f"tree depth {depth} is empty")
    sizes = [2**h for h in range(depth)]
    pairs = 2 * sizes[-1]
    if not 0 <= leaf_index < pairs:
        raise ConstructionError(f"leaf_index must lie in [0, {pairs}), got {leaf_index}")
    transitions = []
    for h in range(depth - 1):
        table = np.zeros((sizes[h], 2, sizes[h + 1]))
        for x in range(sizes[h]):
            for a in range(2):
                table[x, a, 2 * x + a] = 1.0
        transitions.append(table)
    rewards = [np.zeros((n, 2)) for n in sizes]
    leaf, leaf_action = divmod(leaf_index, 2)
    rewards[-1][leaf, leaf_action] = 1.0
    states = [[f"n{h}_{x}" for x in range(n)] for h, n in enumerate(sizes)]
    mdp = LayeredMdp.from_arrays(
        transitions,
        rewards,
        states=states,
        actions=["left", "right"],
        name=f"tree-H{depth}-leaf{leaf_index}",
        metadata={"leaf_index": leaf_index, "depth": depth},
    )
    family = ValueFunctionFamily.product(
        [_indicators(n, 2) for n in sizes], name=f"tree-indicators-H{depth}"
    )
    notes = []
    if depth < horizon:
        notes.append(f"depth truncated from H={horizon} to {depth}")
    manifest = ConstructionManifest(
        name="tree",
        parameters={"H": horizon, "X": num_states, "leaf_index": leaf_index, "depth": depth},
        properties=[
            ExpectedProperty(name="complete", value=True, claim="indicator family is complete"),
            ExpectedProperty(name="realizable", value=True, claim="Q* is an indicator path"),
            ExpectedProperty(name="optimal_value", value=1.0, claim="optimal return is one"),
            ExpectedProperty(
                name="log_family_size_upper",
                value=depth * math.log(2 * num_states),
                claim="log|F| <= H log(2X)",
            ),
            ExpectedProperty(
                name="gen_concentrability_upper",
                value=float(depth),
                claim="optimal occupancy covers every residual within factor H",
            ),
        ],
        notes=notes,
    )
    return Construction(mdp, family, manifest)


def _bandit_family(num_actions: int, eps: float) -> ValueFunctionFamily:
    members = []
    for j in range(num_actions):
        first = np.full((1, num_actions), 0.5)
        first[0, j] += eps
        members.append([first, np.array([[1.0] * num_actions, [0.0] * num_actions])])
    return ValueFunctionFamily.from_member_tables(members, name=f"bandit-means-eps{eps}")


def build_bandit_family(eps1: float) -> List[Construction]:
    """Bernoulli bandits with one boosted arm, one instance per arm.

    The Bernoulli reward is encoded as a transition into a rewarded ``win``
    state or an unrewarded ``lose`` state, so instances have two layers.
    """
    num_actions = _reciprocal(eps1, "eps1")
    family = _bandit_family(num_actions, eps1)
    actions = [f"arm{j}" for j in range(num_actions)]
    instances = []
    for i in range(num_actions):
        win = np.full(num_actions, 0.5)
        win[i] += eps1
        first = np.stack([win, 1.0 - win], axis=1)[None, :, :]
        rewards = [np.zeros((1, num_actions)), np.array([[1.0] * num_actions, [0.0] * num_actions])]
        mdp = LayeredMdp.from_arrays(
            [first],
            rewards,
            states=[["x1"], ["win", "lose"]],
            actions=actions,
            name=f"bandit-eps{eps1}-arm{i}",
            metadata={"best_arm": i},
        )
        manifest = ConstructionManifest(
            name="bandit",
            parameters={"eps1": eps1, "instance": i, "A": num_actions},
            properties=[
                ExpectedProperty(name="complete", value=True, claim="mean-reward family is complete"),
                ExpectedProperty(name="realizable", value=True, claim="true mean is a member"),
                ExpectedProperty(
                    name="optimal_value", value=0.5 + eps1, claim="best arm pays 1/2 + eps1"
                ),
                ExpectedProperty(
                    name="be_dim_sq_lower",
                    value=float(num_actions - 1),
                    claim="diagonal sequence of the other arms",
                    layer=0,
                    eps_below=eps1,
                ),
            ],
        )
        instances.append(Construction(mdp, family, manifest))
    return instances


def _two_layer_dynamics(eps2: float, num_actions: int, best: int) -> LayeredMdp:
    first = np.zeros((1, num_actions, 2))
    first[0, :, 0] = eps2
    first[0, :, 1] = 1.0 - eps2
    second = np.zeros((2, num_actions))
    second[0, best] = 1.0
    return LayeredMdp.from_arrays(
        [first],
        [np.zeros((1, num_actions)), second],
        states=[["x1"], ["y", "z"]],
        actions=[f"a{j}" for j in range(num_actions)],
        name=f"two-layer-eps{eps2}-i{best}",
        metadata={"best_action": best},
    )


def _two_layer_family(eps2: float, num_actions: int) -> ValueFunctionFamily:
    members = []
    for j in range(num_actions):
        second = np.zeros((2, num_actions))
        second[0, j] = 1.0
        members.append([np.full((1, num_actions), eps2), second])
    return ValueFunctionFamily.from_member_tables(members, name=f"two-layer-eps{eps2}")


def _check_instance(best: int, num_actions: int) -> None:
    if not 0 <= best < num_actions:
        raise ConstructionError(f"instance must lie in [0, {num_actions}), got {best}")


def build_two_layer(eps2: float, instance: int) -> Construction:
    """Two-layer instance where a rare state ``y`` hides the single rewarded action.

    Every first action reaches ``y`` with probability ``eps2`` and ``z``
    otherwise; action ``instance`` pays 1 at ``y``.
    """
    num_actions = _reciprocal(eps2, "eps2")
    _check_instance(instance, num_actions)
    mdp = _two_layer_dynamics(eps2, num_actions, instance)
    family = _two_layer_family(eps2, num_actions)
    manifest = ConstructionManifest(
        name="two-layer",
        parameters={"eps2": eps2, "instance": instance, "A": num_actions},
        properties=[
            ExpectedProperty(name="complete", value=True, claim="family is complete"),
            ExpectedProperty(name="realizable", value=True, claim="Q* is a member"),
            ExpectedProperty(name="optimal_value", value=eps2, claim="optimal return is eps2"),
            ExpectedProperty(
                name="coverability_upper", value=2.0, claim="induced policies have C_cov <= 2"
            ),
            ExpectedProperty(
                name="be_dim_sq_lower",
                value=float(num_actions - 1),
                claim="diagonal sequence over the actions at y",
                layer=1,
                eps_below=eps2,
            ),
        ],
    )
    return Construction(mdp, family, manifest)


def build_two_layer_reward_free(eps2: float, instance: int) -> RewardFreeConstruction:
    """Two-layer instance with an exploration family matching the residuals of ``F``.

    ``G`` holds ``g_2 = e_j - e_i`` on ``y`` (zero on ``z``) for every action
    ``j`` and ``g_1 = P_1 g_2``, which makes the pair reward-free complete.
    """
    num_actions = _reciprocal(eps2, "eps2")
    _check_instance(instance, num_actions)
    mdp = _two_layer_dynamics(eps2, num_actions, instance)
    f_family = _two_layer_family(eps2, num_actions)
    members = []
    for j in range(num_actions):
        second = np.zeros((2, num_actions))
        second[0, j] += 1.0
        second[0, instance] -= 1.0
        first = np.full((1, num_actions), eps2 * second[0].max())
        members.append([first, second])
    g_family = ValueFunctionFamily.from_member_tables(
        members, value_bounds=(-1.0, 1.0), name=f"two-layer-rf-eps{eps2}"
    )
    manifest = ConstructionManifest(
        name="two-layer-rf",
        parameters={"eps2": eps2, "instance": instance, "A": num_actions},
        properties=[
            ExpectedProperty(name="complete", value=True, claim="F is complete"),
            ExpectedProperty(name="optimal_value", value=eps2, claim="optimal return is eps2"),
        ],
        notes=["G is reward-free complete for F under the instance reward"],
    )
    return RewardFreeConstruction(mdp, f_family, g_family, manifest)


def _decoder(emission: np.ndarray, h: int) -> np.ndarray:
    support = emission > 0
    owners = support.sum(axis=0)
    if np.any(owners > 1):
        raise ConstructionError(f"emission supports overlap at layer {h}")
    if np.any(owners == 0):
        raise ConstructionError(f"observation emitted by no state at layer {h}")
    return np.argmax(support, axis=0)


def augment_rich_obs(mdp: LayeredMdp, emission: Sequence[np.ndarray]) -> LayeredMdp:
    """Block MDP over observations emitted by the latent states.

    ``emission[h][s, o]`` is the probability of observing ``o`` in latent
    state ``s``. Supports must be disjoint so that the decoder is exact; the
    decoder is stored under ``metadata["decoder"]``.

    Raises:
        ConstructionError: On overlapping supports, non-stochastic rows or an
            initial latent state emitting more than one observation.
    """
    if len(emission) != mdp.horizon:
        raise ConstructionError(f"expected {mdp.horizon} emission tables, got {len(emission)}")
    tables = [np.asarray(e, dtype=float) for e in emission]
    decoders = []
    for h, table in enumerate(tables):
        if table.ndim != 2 or table.shape[0] != mdp.layer_sizes[h]:
            raise ConstructionError(f"emission table {h} must have one row per latent state")
        if np.any(table < 0) or np.any(np.abs(table.sum(axis=1) - 1.0) > STOCHASTIC_TOLERANCE):
            raise ConstructionError(f"emission rows at layer {h} must be distributions")
        decoders.append(_decoder(table, h))
    initial = np.flatnonzero(tables[0][mdp.initial_state] > 0)
    if initial.size != 1:
        raise ConstructionError("the initial latent state must emit a single observation")
    transitions = []
    rewards = []
    for h in range(mdp.horizon):
        decode = decoders[h]
        latent = mdp.transitions[h][decode]
        if h + 1 < mdp.horizon:
            transitions.append(latent @ tables[h + 1])
        else:
            transitions.append(latent)
        rewards.append(mdp.rewards[h][decode])
    states = [
        [f"{mdp.states[h][s]}/o{o}" for o, s in enumerate(decoders[h])] for h in range(mdp.horizon)
    ]
    return LayeredMdp.from_arrays(
        transitions,
        rewards,
        states=states,
        actions=mdp.actions,
        initial_state=int(initial[0]),
        name=f"{mdp.name}-rich",
        metadata={**mdp.metadata, "decoder": [d.tolist() for d in decoders]},
    )


def augment_exogenous(
    mdp: LayeredMdp,
    exo_chain: Union[np.ndarray, Sequence[np.ndarray]],
    exo_init: int = 0,
) -> LayeredMdp:
    """Product of the MDP with an action-independent exogenous Markov chain.

    Product state ``(s, xi)`` has index ``s * |Xi_h| + xi``. Rewards depend on
    ``s`` only.

    Args:
        mdp: Endogenous MDP.
        exo_chain: One row-stochastic matrix per layer transition, or a single
            square matrix shared by all of them.
        exo_init: Deterministic initial exogenous state.
    """
    if isinstance(exo_chain, np.ndarray) and exo_chain.ndim == 2:
        chains = [exo_chain] * (mdp.horizon - 1)
        sizes = [exo_chain.shape[0]] * mdp.horizon
    else:
        chains = [np.asarray(c, dtype=float) for c in exo_chain]
        if len(chains) != mdp.horizon - 1:
            raise ConstructionError(f"expected {mdp.horizon - 1} exogenous matrices")
        sizes = [chains[0].shape[0]] + [c.shape[1] for c in chains] if chains else [1]
    for h, chain in enumerate(chains):
        if chain.shape[0] != sizes[h]:
            raise ConstructionError(f"exogenous matrix {h} does not chain with its predecessor")
        if np.any(chain < 0) or np.any(np.abs(chain.sum(axis=1) - 1.0) > STOCHASTIC_TOLERANCE):
            raise ConstructionError(f"exogenous matrix {h} is not row-stochastic")
    if not 0 <= exo_init < sizes[0]:
        raise ConstructionError("exogenous initial state out of range")
    transitions = []
    rewards = []
    for h in range(mdp.horizon):
        n, num_a, _ = mdp.transitions[h].shape
        if h + 1 < mdp.horizon:
            # (s, a, s') x (xi, xi') -> ((s, xi), a, (s', xi'))
            product = np.einsum("sat,ek->seatk", mdp.transitions[h], chains[h])
            transitions.append(product.reshape(n * sizes[h], num_a, -1))
        else:
            transitions.append(np.ones((n * sizes[h], num_a, 1)))
        rewards.append(np.repeat(mdp.rewards[h], sizes[h], axis=0))
    states = [
        [f"{s}|e{e}" for s in mdp.states[h] for e in range(sizes[h])] for h in range(mdp.horizon)
    ]
    return LayeredMdp.from_arrays(
        transitions,
        rewards,
        states=states,
        actions=mdp.actions,
        initial_state=mdp.initial_state * sizes[0] + exo_init,
        name=f"{mdp.name}-exo",
        metadata={**mdp.metadata, "exogenous_sizes": sizes},
    )


def _random_transitions(
    rng: np.random.Generator, sizes: Sequence[int], num_actions: int
) -> List[np.ndarray]:
    return [
        rng.dirichlet(np.ones(sizes[h + 1]), size=(sizes[h], num_actions))
        for h in range(len(sizes) - 1)
    ]


def build_random_mdp(
    horizon: int,
    num_states: int,
    num_actions: int,
    seed: RngLike = 0,
    vary_sizes: bool = True,
) -> LayeredMdp:
    """Random layered MDP with Dirichlet transitions and rewards in ``[0, 1/H]``.

    Layer 0 holds the single initial state. With ``vary_sizes`` the other
    layers draw their size uniformly from ``1..num_states``.
    """
    if horizon < 1 or num_states < 1 or num_actions < 1:
        raise ConstructionError("random MDP sizes must be positive")
    rng = _as_rng(seed)
    sizes = [1] + [
        int(rng.integers(1, num_states + 1)) if vary_sizes else num_states
        for _ in range(horizon - 1)
    ]
    transitions = _random_transitions(rng, sizes, num_actions)
    rewards = [rng.uniform(0.0, 1.0 / horizon, size=(n, num_actions)) for n in sizes]
    label = seed if isinstance(seed, int) else "rng"
    return LayeredMdp.from_arrays(transitions, rewards, name=f"random-{label}")


def build_random_family(
    mdp: LayeredMdp, size: int, seed: RngLike = 0, include_optimal: bool = True
) -> ValueFunctionFamily:
    """Random members with tables in ``[0, 1]``; ``Q*`` first when requested."""
    if size < 1:
        raise ConstructionError("a family needs at least one member")
    rng = _as_rng(seed)
    members: List[List[np.ndarray]] = []
    if include_optimal:
        members.append([np.clip(q, 0.0, 1.0) for q in optimal_values(mdp).q_tables])
    while len(members) < size:
        members.append([rng.random((n, mdp.num_actions)) for n in mdp.layer_sizes])
    return ValueFunctionFamily.from_member_tables(members, name=f"random-family-{mdp.name}")


def disjoint_emission(
    rng: np.random.Generator, num_latent: int, multiplicity: int
) -> np.ndarray:
    emission = np.zeros((num_latent, num_latent * multiplicity))
    for s in range(num_latent):
        emission[s, s * multiplicity : (s + 1) * multiplicity] = rng.dirichlet(np.ones(multiplicity))
    return emission


def build_exbmdp(
    num_endogenous: int,
    num_exogenous: int,
    num_actions: int,
    horizon: int,
    seed: int = 0,
    multiplicity: int = 2,
) -> Construction:
    """Random exogenous block MDP.

    The endogenous chain, the exogenous chain and the emission draw from
    independent child streams of ``seed``, so the endogenous dynamics do not
    change when ``num_exogenous`` varies.

    Returns:
        The observed MDP (no family) and a manifest bounding its coverability
        by ``|S| * |A|``.
    """
    if min(num_endogenous, num_exogenous, num_actions, horizon, multiplicity) < 1:
        raise ConstructionError("Ex-BMDP sizes must be positive")
    endo_seq, exo_seq, emit_seq = np.random.SeedSequence(seed).spawn(3)
    endo_rng = np.random.default_rng(endo_seq)
    exo_rng = np.random.default_rng(exo_seq)
    emit_rng = np.random.default_rng(emit_seq)
    sizes = [num_endogenous] * horizon
    base = LayeredMdp.from_arrays(
        _random_transitions(endo_rng, sizes, num_actions),
        [endo_rng.uniform(0.0, 1.0 / horizon, size=(n, num_actions)) for n in sizes],
        name=f"exbmdp-endo-{seed}",
    )
    chains = [
        exo_rng.dirichlet(np.ones(num_exogenous), size=num_exogenous) for _ in range(horizon - 1)
    ]
    product = augment_exogenous(base, chains, exo_init=0)
    emission = []
    for h, n in enumerate(product.layer_sizes):
        # The initial observation must be deterministic.
        emission.append(np.eye(n) if h == 0 else disjoint_emission(emit_rng, n, multiplicity))
    observed = augment_rich_obs(product, emission)
    mdp = LayeredMdp.from_arrays(
        observed.transitions,
        observed.rewards,
        states=observed.states,
        actions=observed.actions,
        initial_state=observed.initial_state,
        name=f"exbmdp-S{num_endogenous}-Xi{num_exogenous}-A{num_actions}-H{horizon}-{seed}",
        metadata={
            **observed.metadata,
            "endogenous": num_endogenous,
            "exogenous": num_exogenous,
            "multiplicity": multiplicity,
        },
    )
    manifest = ConstructionManifest(
        name="exbmdp",
        parameters={
            "S": num_endogenous,
            "Xi": num_exogenous,
            "A": num_actions,
            "H": horizon,
            "seed": seed,
            "multiplicity": multiplicity,
        },
        properties=[
            ExpectedProperty(
                name="coverability_upper",
                value=float(num_endogenous * num_actions),
                claim="all-policy coverability is at most |S| |A|",
            )
        ],
    )
    LOGGER.debug("Built %s with layer sizes %s", mdp.name, mdp.layer_sizes)
    return Construction(mdp, None, manifest)


def construction_from_params(kind: str, params: dict) -> Tuple[Construction, Optional[ValueFunctionFamily]]:
    """Dispatch a named construction; the second element is ``G`` for reward-free pairs.

    ``bandit`` selects one instance through ``params["instance"]`` (default 0).
    ``random`` builds a random MDP with a random realizable family.

    Raises:
        ConstructionError: On an unknown kind or missing parameters.
    """
    try:
        if kind == "tree":
            return (
                build_tree(
                    int(params["H"]),
                    int(params["X"]),
                    int(params.get("leaf_index", 0)),
                    params.get("C"),
                ),
                None,
            )
        if kind == "bandit":
            instances = build_bandit_family(float(params["eps1"]))
            index = int(params.get("instance", 0))
            if not 0 <= index < len(instances):
                raise ConstructionError(f"bandit instance {index} out of range")
            return instances[index], None
        if kind == "two-layer":
            return build_two_layer(float(params["eps2"]), int(params.get("instance", 0))), None
        if kind == "two-layer-rf":
            pair = build_two_layer_reward_free(
                float(params["eps2"]), int(params.get("instance", 0))
            )
            return Construction(pair.mdp, pair.f_family, pair.manifest), pair.g_family
        if kind == "exbmdp":
            return (
                build_exbmdp(
                    int(params["S"]),
                    int(params["Xi"]),
                    int(params["A"]),
                    int(params["H"]),
                    int(params.get("seed", 0)),
                    int(params.get("multiplicity", 2)),
                ),
                None,
            )
        if kind == "random":
            seed = int(params.get("seed", 0))
            mdp = build_random_mdp(
                int(params.get("H", 3)), int(params.get("X", 3)), int(params.get("A", 2)), seed
            )
            family = build_random_family(mdp, int(params.get("size", 6)), seed + 1)
            return Construction(mdp, family, ConstructionManifest(name="random", parameters=params)), None
    except KeyError as exc:
        raise ConstructionError(f"construction {kind!r} needs parameter {exc.args[0]!r}") from exc
    raise ConstructionError(f"unknown construction {kind!r}")
