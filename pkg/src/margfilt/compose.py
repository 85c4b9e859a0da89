"""System composition: projection rows from named, unit-annotated bindings.

Submodels are written against their own state vectors; composition builds the
linear projection rows that express each submodel state as a scaled selection
(or linear combination) of system states, picks a deterministic complement
basis, and bundles splits with models for the step driver. States not touched
by a step's transition binding land in the inactive block and stay static.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.linalg

from .errors import IncompatibleUnits, RankDeficientActive, UnknownState
from .gaussian import SubspaceSplit, make_split


@dataclass(frozen=True)
class StateLayout:
    """Ordered (name, unit) pairs for the system state vector."""

    entries: tuple

    def __post_init__(self):
        entries = tuple((str(n), str(u)) for n, u in self.entries)
        names = [n for n, _ in entries]
        if len(set(names)) != len(names):
            raise ValueError("state names must be unique")
        object.__setattr__(self, "entries", entries)

    @property
    def names(self) -> tuple:
        return tuple(n for n, _ in self.entries)

    @property
    def dim(self) -> int:
        return len(self.entries)

    def index(self, name: str) -> int:
        for i, (n, _) in enumerate(self.entries):
            if n == name:
                return i
        raise UnknownState(f"state {name!r} not in layout {self.names}")

    def unit(self, name: str) -> str:
        return self.entries[self.index(name)][1]


@dataclass(frozen=True)
class BindingEntry:
    """One submodel state: a named system state or a linear combination.

    `combo`, when given, is a sequence of (system name, coefficient) pairs; the
    entry's own name is then only a label. Without `combo` the entry selects
    the system state of the same name.
    """

    name: str
    unit: str
    combo: Optional[tuple] = None

    def __post_init__(self):
        if self.combo is not None:
            object.__setattr__(
                self, "combo", tuple((str(n), float(c)) for n, c in self.combo)
            )


@dataclass(frozen=True)
class SubmodelBinding:
    """Ordered binding entries describing a submodel's state vector."""

    entries: tuple

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))

    @property
    def dim(self) -> int:
        return len(self.entries)


class UnitTable:
    """Pairwise unit scale factors, closed under inversion.

    Identity conversions are implicit. The shipped defaults cover deg/rad,
    ms/s and mm/m; extend with add().
    """

    def __init__(self):
        self._scales: dict = {}

    def add(self, from_unit: str, to_unit: str, scale: float) -> "UnitTable":
        if scale <= 0:
            raise ValueError("unit scale must be positive")
        self._scales[(from_unit, to_unit)] = float(scale)
        self._scales[(to_unit, from_unit)] = 1.0 / float(scale)
        return self

    def convert(self, from_unit: str, to_unit: str) -> float:
        if from_unit == to_unit:
            return 1.0
        try:
            return self._scales[(from_unit, to_unit)]
        except KeyError:
            raise IncompatibleUnits(f"no conversion {from_unit!r} -> {to_unit!r}") from None


def default_units() -> UnitTable:
    table = UnitTable()
    table.add("rad", "deg", 180.0 / np.pi)
    table.add("s", "ms", 1000.0)
    table.add("m", "mm", 1000.0)
    return table


def build_projection(layout: StateLayout, binding: SubmodelBinding, units: UnitTable) -> np.ndarray:
    """Rows expressing the bound submodel states in terms of the system state.

    Each row selects/scales/combines system states so that row @ x equals the
    submodel state in the submodel's units.
    """
    rows = np.zeros((binding.dim, layout.dim))
    for r, entry in enumerate(binding.entries):
        if entry.combo is None:
            idx = layout.index(entry.name)
            rows[r, idx] = units.convert(layout.unit(entry.name), entry.unit)
        else:
            for sys_name, coeff in entry.combo:
                idx = layout.index(sys_name)
                rows[r, idx] += coeff * units.convert(layout.unit(sys_name), entry.unit)
    return rows


def complement_basis(active: np.ndarray) -> np.ndarray:
    """Deterministic complement rows making [active; complement] well conditioned.

    The pivoted QR factorization of the active rows selects the coordinate
    columns they cover; the complement is the identity rows of the remaining
    coordinates, in ascending index order.
    """
    active = np.atleast_2d(np.asarray(active, dtype=float))
    a, n = active.shape
    if a == 0:
        return np.eye(n)
    _, rdiag, pivots = scipy.linalg.qr(active, mode="economic", pivoting=True)
    diag = np.abs(np.diag(rdiag))
    if a > n or diag.size < a or diag[a - 1] <= 1e-12 * max(diag[0], 1e-300):
        raise RankDeficientActive(f"active rows of shape {active.shape} are rank deficient")
    covered = set(int(p) for p in pivots[:a])
    free = [i for i in range(n) if i not in covered]
    return np.eye(n)[free]


@dataclass(frozen=True)
class BoundSubmodel:
    """A named submodel with its binding, model object and assumption level."""

    name: str
    binding: SubmodelBinding
    model: object
    level: str


@dataclass(frozen=True)
class StepModels:
    """The split/model pairs the step driver consumes for one instant."""

    transition_model: object
    transition_split: SubspaceSplit
    transition_level: str
    output_model: object
    output_split: SubspaceSplit
    output_level: str


class ComposedSystem:
    """Runnable bundle of submodels projected onto a common system state."""

    def __init__(self, layout, transitions, outputs, splits, schedule):
        self.layout = layout
        self._transitions = transitions
        self._outputs = outputs
        self._splits = splits
        self._schedule = schedule

    def split_for(self, name: str) -> SubspaceSplit:
        return self._splits[name]

    def bundle_for(self, k: int) -> StepModels:
        tname, oname = self._schedule[k % len(self._schedule)]
        tsub = self._transitions[tname]
        osub = self._outputs[oname]
        return StepModels(
            transition_model=tsub.model,
            transition_split=self._splits[tsub.name],
            transition_level=tsub.level,
            output_model=osub.model,
            output_split=self._splits[osub.name],
            output_level=osub.level,
        )


def compose_system(
    layout: StateLayout,
    transitions: Sequence[BoundSubmodel],
    outputs: Sequence[BoundSubmodel],
    units: Optional[UnitTable] = None,
    schedule: Optional[Sequence] = None,
) -> ComposedSystem:
    """Assemble splits and models keyed for the step driver.

    The default schedule cycles through (transition, output) pairs in the
    given order; pass explicit (transition name, output name) pairs for other
    interleavings.
    """
    units = units if units is not None else default_units()
    problems = []
    first_exc = None
    splits = {}
    for sub in list(transitions) + list(outputs):
        try:
            active = build_projection(layout, sub.binding, units)
            splits[sub.name] = make_split(active, complement_basis(active))
        except (UnknownState, IncompatibleUnits, RankDeficientActive) as exc:
            problems.append(f"{sub.name}: {exc}")
            if first_exc is None:
                first_exc = exc
    if problems:
        raise type(first_exc)("binding errors: " + "; ".join(problems))
    tmap = {sub.name: sub for sub in transitions}
    omap = {sub.name: sub for sub in outputs}
    if schedule is None:
        tnames = [s.name for s in transitions]
        onames = [s.name for s in outputs]
        length = max(len(tnames), len(onames))
        schedule = [
            (tnames[k % len(tnames)], onames[k % len(onames)]) for k in range(length)
        ]
    return ComposedSystem(layout, tmap, omap, splits, list(schedule))
