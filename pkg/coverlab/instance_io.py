"""JSON reading and writing of MDPs, families, distributions and reward tables."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import List, Optional, Type, TypeVar

import numpy as np
from pydantic import BaseModel, ValidationError

from .coverage import DistributionFamily
from .exceptions import CoverlabError, InstanceFormatError
from .function_family import ValueFunctionFamily
from .mdp import LayeredMdp
from .models import (
    DistributionDocument,
    FamilyDocument,
    LayerDocument,
    MdpDocument,
    RewardDocument,
    TransitionEntry,
)

LOGGER = logging.getLogger(__name__)

DocumentT = TypeVar("DocumentT", bound=BaseModel)


def _describe(exc: ValidationError) -> str:
    first = exc.errors()[0]
    location = ".".join(str(part) for part in first["loc"]) or "<root>"
    return f"{location}: {first['msg']}"


def _read(path: Path, model: Type[DocumentT]) -> DocumentT:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InstanceFormatError(f"{path}: cannot read file ({exc.strerror})") from exc
    try:
        return model.model_validate_json(text)
    except ValidationError as exc:
        raise InstanceFormatError(f"{path}: {_describe(exc)}") from exc


def _write(path: Path, document: BaseModel) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(document.model_dump_json(by_alias=True, indent=2) + "\n", encoding="utf-8")
    LOGGER.debug("Wrote %s", path)
    return path


def mdp_from_document(document: MdpDocument) -> LayeredMdp:
    """Build an MDP from its wire format; the last layer's entries must be empty."""
    sizes = [len(layer.states) for layer in document.layers]
    num_actions = len(document.actions)
    transitions: List[np.ndarray] = []
    for h in range(document.horizon):
        rows = document.transitions[h]
        if h + 1 == document.horizon:
            if any(entries for row in rows for entries in row):
                raise InstanceFormatError(f"transitions.{h}: the last layer must have no successors")
            continue
        table = np.zeros((sizes[h], num_actions, sizes[h + 1]))
        if len(rows) != sizes[h] or any(len(row) != num_actions for row in rows):
            raise InstanceFormatError(f"transitions.{h}: expected {sizes[h]} x {num_actions} rows")
        for x, row in enumerate(rows):
            for a, entries in enumerate(row):
                for entry in entries:
                    if entry.state >= sizes[h + 1]:
                        raise InstanceFormatError(
                            f"transitions.{h}.{x}.{a}: successor {entry.state} out of range"
                        )
                    table[x, a, entry.state] += entry.prob
        transitions.append(table)
    return LayeredMdp.from_arrays(
        transitions,
        [np.array(r, dtype=float) for r in document.rewards],
        states=[layer.states for layer in document.layers],
        actions=document.actions,
        initial_state=document.initial_state,
        name=document.name,
    )


def mdp_to_document(mdp: LayeredMdp) -> MdpDocument:
    transitions = []
    for h in range(mdp.horizon):
        if h + 1 == mdp.horizon:
            transitions.append([[[] for _ in mdp.actions] for _ in mdp.states[h]])
            continue
        table = mdp.transitions[h]
        transitions.append(
            [
                [
                    [TransitionEntry(state=int(y), prob=float(table[x, a, y])) for y in np.flatnonzero(table[x, a])]
                    for a in range(mdp.num_actions)
                ]
                for x in range(mdp.layer_sizes[h])
            ]
        )
    return MdpDocument(
        horizon=mdp.horizon,
        actions=list(mdp.actions),
        layers=[LayerDocument(states=list(states)) for states in mdp.states],
        transitions=transitions,
        rewards=[r.tolist() for r in mdp.rewards],
        initial_state=mdp.initial_state,
        name=mdp.name,
    )


def load_mdp(path: Path) -> LayeredMdp:
    """Read an MDP document.

    Raises:
        InstanceFormatError: On I/O, JSON, schema or shape errors, prefixed with the path.
    """
    document = _read(path, MdpDocument)
    try:
        return mdp_from_document(document)
    except (CoverlabError, ValueError) as exc:
        raise InstanceFormatError(f"{path}: {exc}") from exc


def save_mdp(mdp: LayeredMdp, path: Path) -> Path:
    return _write(path, mdp_to_document(mdp))


def family_to_document(family: ValueFunctionFamily) -> FamilyDocument:
    return FamilyDocument(
        horizon=family.horizon,
        members=[[table.tolist() for table in family.tables(m)] for m in range(family.size)],
        components=[comps.tolist() for comps in family.components],
        value_bounds=family.value_bounds,
        name=family.name,
    )


def load_family(path: Path, mdp: Optional[LayeredMdp] = None) -> ValueFunctionFamily:
    """Read a family document, optionally checking its shapes against ``mdp``."""
    document = _read(path, FamilyDocument)
    try:
        if any(len(member) != document.horizon for member in document.members):
            raise InstanceFormatError(f"members must list H={document.horizon} layers")
        family = ValueFunctionFamily.from_member_tables(
            [[np.array(t, dtype=float) for t in member] for member in document.members],
            components=document.components,
            value_bounds=document.value_bounds,
            name=document.name,
        )
        if mdp is not None:
            family.check_against(mdp)
    except (CoverlabError, ValueError) as exc:
        raise InstanceFormatError(f"{path}: {exc}") from exc
    return family


def save_family(family: ValueFunctionFamily, path: Path) -> Path:
    return _write(path, family_to_document(family))


def load_distribution(path: Path, mdp: Optional[LayeredMdp] = None) -> DistributionFamily:
    document = _read(path, DistributionDocument)
    try:
        mu = DistributionFamily.from_tables([np.array(layer, dtype=float) for layer in document.layers])
        if mdp is not None:
            mu.check_against(mdp)
    except (CoverlabError, ValueError) as exc:
        raise InstanceFormatError(f"{path}: {exc}") from exc
    return mu


def save_distribution(mu: DistributionFamily, path: Path) -> Path:
    return _write(path, DistributionDocument(layers=mu.to_lists()))


def load_reward(path: Path, mdp: LayeredMdp) -> List[np.ndarray]:
    """Read target reward tables shaped like ``mdp``'s."""
    document = _read(path, RewardDocument)
    tables = [np.array(layer, dtype=float) for layer in document.rewards]
    if len(tables) != mdp.horizon or any(
        t.shape != r.shape for t, r in zip(tables, mdp.rewards)
    ):
        raise InstanceFormatError(f"{path}: reward tables do not match the MDP's shapes")
    return tables
