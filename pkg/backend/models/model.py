#!/usr/bin/env python3
"""
Influence Abstraction Toolkit - Factored Model
Factored POSGs, local-state functions, opponent policies and d-set specifications
"""

import itertools
import logging
import threading
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Dict, FrozenSet, List, Mapping, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from .errors import (
    InfluenceOnObservationOrReward,
    ModelValidationError,
    UnreachableHistory,
)

logger = logging.getLogger(__name__)

# Parent slice tags
PREV = 'prev'
NEXT = 'next'
SAME = 'same'

# Parent kinds
FACTOR = 'factor'
ACTION = 'action'

# D-set retentions
FULL_HISTORY = 'FullHistory'
STAGE0_ONLY = 'Stage0Only'
LAST_VALUE = 'LastValue'
OWN_ACTION = 'OwnAction'
RETENTIONS = (FULL_HISTORY, STAGE0_ONLY, LAST_VALUE, OWN_ACTION)

# Policy kinds
EXPLICIT = 'ExplicitAOHTree'
REACTIVE = 'Reactive'

NORMALIZATION_TOLERANCE = 1e-12

State = Tuple[int, ...]
JointAction = Tuple[int, ...]
History = Tuple[int, ...]


@dataclass(frozen=True)
class Factor:
    """A finite-domain state variable"""
    id: int
    name: str
    domain_size: int


@dataclass(frozen=True)
class Agent:
    """An agent with its action and observation alphabets"""
    name: str
    actions: Tuple[str, ...]
    observations: Tuple[str, ...]

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    @property
    def n_observations(self) -> int:
        return len(self.observations)


@dataclass(frozen=True)
class NodeRef:
    """Parent reference inside a 2DBN: a factor in a slice, or an agent's stage action"""
    kind: str
    index: int
    slice: str = PREV

    @classmethod
    def factor(cls, factor_id: int, slice_tag: str = PREV) -> 'NodeRef':
        return cls(FACTOR, factor_id, slice_tag)

    @classmethod
    def action(cls, agent: int) -> 'NodeRef':
        return cls(ACTION, agent, PREV)

    @property
    def is_action(self) -> bool:
        return self.kind == ACTION


def _row_strides(sizes: Sequence[int]) -> Tuple[int, ...]:
    strides = []
    acc = 1
    for size in reversed(sizes):
        strides.append(acc)
        acc *= size
    return tuple(reversed(strides))


def _read_parents(parents: Sequence[NodeRef], prev, nxt, actions) -> Tuple[int, ...]:
    values = []
    for ref in parents:
        if ref.kind == ACTION:
            values.append(actions[ref.index])
        elif ref.slice == PREV:
            values.append(prev[ref.index])
        else:
            values.append(nxt[ref.index])
    return tuple(values)


@dataclass(frozen=True, eq=False)
class CPT:
    """
    Conditional probability table with a flat row-major table.

    The first declared parent is the most significant digit of the row index.
    """
    child: str
    child_size: int
    parents: Tuple[NodeRef, ...]
    parent_sizes: Tuple[int, ...]
    table: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'parents', tuple(self.parents))
        object.__setattr__(self, 'parent_sizes', tuple(int(s) for s in self.parent_sizes))
        object.__setattr__(self, 'table', np.asarray(self.table, dtype=float).ravel())

    @property
    def n_rows(self) -> int:
        return int(np.prod(self.parent_sizes, dtype=np.int64)) if self.parent_sizes else 1

    @property
    def well_shaped(self) -> bool:
        return self.table.size == self.n_rows * self.child_size

    @cached_property
    def strides(self) -> Tuple[int, ...]:
        return _row_strides(self.parent_sizes)

    @cached_property
    def rows(self) -> Tuple[Tuple[float, ...], ...]:
        matrix = self.table.reshape(self.n_rows, self.child_size)
        return tuple(tuple(float(p) for p in row) for row in matrix)

    def row_index(self, parent_values: Sequence[int]) -> int:
        return sum(v * s for v, s in zip(parent_values, self.strides))

    def row(self, parent_values: Sequence[int]) -> Tuple[float, ...]:
        return self.rows[self.row_index(parent_values)]

    def parent_values(self, prev, nxt, actions) -> Tuple[int, ...]:
        return _read_parents(self.parents, prev, nxt, actions)

    def distribution(self, prev, nxt, actions) -> Tuple[float, ...]:
        """Child distribution given a context of previous slice, current slice and actions"""
        return self.rows[self.row_index(_read_parents(self.parents, prev, nxt, actions))]

    def row_assignments(self):
        """Parent assignments in row order"""
        return itertools.product(*(range(s) for s in self.parent_sizes))


@dataclass(frozen=True, eq=False)
class RewardTable:
    """Deterministic reward over a parent assignment"""
    agent: int
    parents: Tuple[NodeRef, ...]
    parent_sizes: Tuple[int, ...]
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'parents', tuple(self.parents))
        object.__setattr__(self, 'parent_sizes', tuple(int(s) for s in self.parent_sizes))
        object.__setattr__(self, 'values', np.asarray(self.values, dtype=float).ravel())

    @property
    def n_rows(self) -> int:
        return int(np.prod(self.parent_sizes, dtype=np.int64)) if self.parent_sizes else 1

    @cached_property
    def strides(self) -> Tuple[int, ...]:
        return _row_strides(self.parent_sizes)

    @cached_property
    def entries(self) -> Tuple[float, ...]:
        return tuple(float(v) for v in self.values)

    def value(self, prev, nxt, actions) -> float:
        parent_values = _read_parents(self.parents, prev, nxt, actions)
        return self.entries[sum(v * s for v, s in zip(parent_values, self.strides))]


class TwoSliceDBN:
    """Two-slice DBN: one CPT per next-slice factor plus one observation CPT per agent"""

    def __init__(self, factors: Sequence[Factor], factor_cpts: Sequence[Optional[CPT]],
                 observation_cpts: Sequence[Optional[CPT]]):
        self.factors = tuple(factors)
        self.factor_cpts = tuple(factor_cpts)
        self.observation_cpts = tuple(observation_cpts)
        self._transition_cache: Dict[Tuple[State, JointAction], Dict[State, float]] = {}
        self._lock = threading.Lock()

    def intra_graph(self) -> nx.DiGraph:
        """Same-slice edges among next-slice factors"""
        graph = nx.DiGraph()
        graph.add_nodes_from(range(len(self.factors)))
        for fid, cpt in enumerate(self.factor_cpts):
            if cpt is None:
                continue
            for ref in cpt.parents:
                if ref.kind == FACTOR and ref.slice in (NEXT, SAME) and 0 <= ref.index < len(self.factors):
                    graph.add_edge(ref.index, fid)
        return graph

    @cached_property
    def next_order(self) -> Tuple[int, ...]:
        """Deterministic topological order over the next slice"""
        graph = self.intra_graph()
        if not nx.is_directed_acyclic_graph(graph):
            raise ModelValidationError(["cyclic 2DBN: intra-slice edges contain a cycle"])
        return tuple(nx.lexicographical_topological_sort(graph))

    def has_intra_stage_edges(self) -> bool:
        return self.intra_graph().number_of_edges() > 0

    def transition(self, state: State, joint_action: JointAction) -> Dict[State, float]:
        """Sparse next-state distribution, computed as a product of CPTs in topological order"""
        key = (state, joint_action)
        cached = self._transition_cache.get(key)
        if cached is not None:
            return cached

        partial: List[Tuple[List[Optional[int]], float]] = [([None] * len(self.factors), 1.0)]
        for fid in self.next_order:
            cpt = self.factor_cpts[fid]
            expanded = []
            for values, prob in partial:
                row = cpt.distribution(state, values, joint_action)
                for value, p in enumerate(row):
                    if p > 0.0:
                        branch = list(values)
                        branch[fid] = value
                        expanded.append((branch, prob * p))
            partial = expanded

        distribution: Dict[State, float] = {}
        for values, prob in partial:
            successor = tuple(values)
            distribution[successor] = distribution.get(successor, 0.0) + prob

        with self._lock:
            self._transition_cache.setdefault(key, distribution)
        return distribution

    def observation_row(self, agent: int, joint_action: JointAction, next_state) -> Tuple[float, ...]:
        return self.observation_cpts[agent].distribution(next_state, next_state, joint_action)


@dataclass(frozen=True, eq=False)
class FactoredPOSG:
    """Factored partially observable stochastic game"""
    factors: Tuple[Factor, ...]
    agents: Tuple[Agent, ...]
    dbn: TwoSliceDBN
    rewards: Tuple[RewardTable, ...]
    initial_bn: Tuple[CPT, ...]
    horizon: int
    gamma: float = 1.0
    name: str = 'model'

    def factor_id(self, name: str) -> int:
        for factor in self.factors:
            if factor.name == name:
                return factor.id
        raise KeyError(f"unknown factor {name!r}")

    def agent_id(self, name: str) -> int:
        for index, agent in enumerate(self.agents):
            if agent.name == name:
                return index
        raise KeyError(f"unknown agent {name!r}")

    @property
    def n_agents(self) -> int:
        return len(self.agents)

    @property
    def domain_sizes(self) -> Tuple[int, ...]:
        return tuple(f.domain_size for f in self.factors)

    def with_horizon(self, horizon: int) -> 'FactoredPOSG':
        return replace(self, horizon=horizon)

    def initial_order(self) -> Tuple[int, ...]:
        graph = nx.DiGraph()
        graph.add_nodes_from(range(len(self.factors)))
        for cpt in self.initial_bn:
            child = self.factor_id(cpt.child)
            for ref in cpt.parents:
                graph.add_edge(ref.index, child)
        if not nx.is_directed_acyclic_graph(graph):
            raise ModelValidationError(["cyclic initial BN"])
        return tuple(nx.lexicographical_topological_sort(graph))

    @cached_property
    def initial_cpts(self) -> Dict[int, CPT]:
        return {self.factor_id(cpt.child): cpt for cpt in self.initial_bn}

    @cached_property
    def initial_distribution(self) -> Dict[State, float]:
        """Joint stage-0 distribution obtained by sweeping the initial BN"""
        partial: List[Tuple[List[Optional[int]], float]] = [([None] * len(self.factors), 1.0)]
        for fid in self.initial_order():
            cpt = self.initial_cpts[fid]
            expanded = []
            for values, prob in partial:
                row = cpt.distribution(values, values, ())
                for value, p in enumerate(row):
                    if p > 0.0:
                        branch = list(values)
                        branch[fid] = value
                        expanded.append((branch, prob * p))
            partial = expanded
        distribution: Dict[State, float] = {}
        for values, prob in partial:
            state = tuple(values)
            distribution[state] = distribution.get(state, 0.0) + prob
        return distribution

    def transition(self, state: State, joint_action: JointAction) -> Dict[State, float]:
        return self.dbn.transition(state, joint_action)

    def observation_row(self, agent: int, joint_action: JointAction, next_state: State) -> Tuple[float, ...]:
        return self.dbn.observation_row(agent, joint_action, next_state)

    def reward(self, agent: int, state, joint_action, next_state) -> float:
        return self.rewards[agent].value(state, next_state, joint_action)


@dataclass(frozen=True, eq=False)
class LocalStateFunction:
    """S(i): the factors each agent models"""
    modeled: Mapping[int, FrozenSet[int]]

    def of(self, agent: int) -> FrozenSet[int]:
        return frozenset(self.modeled.get(agent, frozenset()))

    def with_factors(self, agent: int, extra: Sequence[int]) -> 'LocalStateFunction':
        modeled = dict(self.modeled)
        modeled[agent] = frozenset(self.of(agent)) | frozenset(extra)
        return LocalStateFunction(modeled)

    @classmethod
    def full(cls, model: FactoredPOSG) -> 'LocalStateFunction':
        everything = frozenset(f.id for f in model.factors)
        return cls({agent: everything for agent in range(model.n_agents)})


@dataclass(frozen=True, eq=False)
class Policy:
    """
    Fixed (possibly stochastic) policy of one agent.

    ExplicitAOHTree keys are full AOH tuples (a0, o1, a1, o2, ...); Reactive keys are the
    last observation index, or None for the empty history.
    """
    kind: str
    table: Mapping[object, Tuple[float, ...]]
    n_actions: int
    default: Optional[Tuple[float, ...]] = None

    def key(self, history: History):
        if self.kind == EXPLICIT:
            return tuple(history)
        return history[-1] if history else None

    def distribution(self, history: History) -> Tuple[float, ...]:
        try:
            return self.table[self.key(history)]
        except KeyError:
            if self.default is not None:
                return self.default
            raise UnreachableHistory(history, "no action distribution defined")

    @classmethod
    def uniform(cls, n_actions: int) -> 'Policy':
        return cls(REACTIVE, {}, n_actions, default=tuple([1.0 / n_actions] * n_actions))

    @classmethod
    def deterministic(cls, actions_by_history: Mapping[History, int], n_actions: int) -> 'Policy':
        table = {}
        for history, action in actions_by_history.items():
            row = [0.0] * n_actions
            row[action] = 1.0
            table[tuple(history)] = tuple(row)
        return cls(EXPLICIT, table, n_actions)

    @classmethod
    def reactive(cls, rows: Mapping[Optional[int], Sequence[float]], n_actions: int) -> 'Policy':
        return cls(REACTIVE, {k: tuple(float(p) for p in v) for k, v in rows.items()}, n_actions)


@dataclass(frozen=True)
class Tracked:
    """One d-set entry: a modeled factor (or the agent's own action) and how much of it is kept"""
    variable: Optional[int]
    retention: str

    @property
    def is_own_action(self) -> bool:
        return self.retention == OWN_ACTION


@dataclass(frozen=True)
class DSetSpec:
    """Which local variables are retained to d-separate the influence sources"""
    tracked: Tuple[Tracked, ...] = ()

    @classmethod
    def full_history(cls, factor_ids: Sequence[int], own_action: bool = False) -> 'DSetSpec':
        tracked = [Tracked(fid, FULL_HISTORY) for fid in sorted(factor_ids)]
        if own_action:
            tracked.append(Tracked(None, OWN_ACTION))
        return cls(tuple(tracked))

    @property
    def factors(self) -> Tuple[int, ...]:
        return tuple(t.variable for t in self.tracked if not t.is_own_action)

    def without(self, index: int) -> 'DSetSpec':
        return DSetSpec(self.tracked[:index] + self.tracked[index + 1:])


@dataclass
class ValidationReport:
    """Report-style result: empty violation list iff well-formed"""
    violations: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, message: str):
        self.violations.append(message)

    def extend(self, other: 'ValidationReport'):
        self.violations.extend(other.violations)

    def raise_if_invalid(self):
        if self.violations:
            raise ModelValidationError(self.violations)


@dataclass(frozen=True, eq=False)
class ModelDocument:
    """What a model file holds: the game plus policies, local-state functions and d-sets"""
    model: FactoredPOSG
    policies: Mapping[int, Policy] = field(default_factory=dict)
    lsf: Optional[LocalStateFunction] = None
    dsets: Mapping[int, DSetSpec] = field(default_factory=dict)
    protagonist: Optional[int] = None

    def others_policies(self, agent: int) -> Dict[int, Policy]:
        return {j: p for j, p in self.policies.items() if j != agent}


@dataclass(frozen=True, eq=False)
class Classification:
    """Factor taxonomy and influence-link inventory for one agent"""
    agent: int
    olaf: FrozenSet[int]
    nlaf: FrozenSet[int]
    nmf: FrozenSet[int]
    source_prev: Tuple[int, ...]
    source_actions: Tuple[int, ...]
    source_next: Tuple[int, ...]
    nlaf_sources: Mapping[int, FrozenSet[NodeRef]]
    intra_closure: Tuple[int, ...]
    indirect_prev: Tuple[int, ...]
    indirect_actions: Tuple[int, ...]
    modeled_prev_v: Tuple[int, ...]
    modeled_next_v: Tuple[int, ...]
    own_action_indirect: bool

    @property
    def modeled(self) -> FrozenSet[int]:
        return self.olaf | self.nlaf

    @property
    def has_intra_stage(self) -> bool:
        return bool(self.source_next)

    @property
    def indirect_next(self) -> Tuple[int, ...]:
        return tuple(f for f in self.intra_closure if f not in self.source_next)

    @property
    def w_prev(self) -> Tuple[int, ...]:
        return tuple(sorted(set(self.source_prev) | set(self.indirect_prev)))

    @property
    def w_actions(self) -> Tuple[int, ...]:
        return tuple(sorted(set(self.source_actions) | set(self.indirect_actions)))

    @property
    def has_influence(self) -> bool:
        return bool(self.nlaf)


# ----------------------------------------------------------------------------
# Validation
# ----------------------------------------------------------------------------

def _check_table(report: ValidationReport, label: str, cpt: CPT):
    if not cpt.well_shaped:
        report.add(f"{label}: table has {cpt.table.size} entries, expected {cpt.n_rows * cpt.child_size}")
        return
    if np.any(cpt.table < 0.0) or np.any(cpt.table > 1.0) or not np.all(np.isfinite(cpt.table)):
        report.add(f"{label}: entries outside [0,1]")
    sums = cpt.table.reshape(cpt.n_rows, cpt.child_size).sum(axis=1)
    for row, total in enumerate(sums):
        if abs(total - 1.0) > NORMALIZATION_TOLERANCE:
            report.add(f"{label}: row not normalized (row {row} sums to {total:.12g})")


def _check_refs(report: ValidationReport, label: str, parents, sizes, model: FactoredPOSG,
                allowed_slices: Tuple[str, ...]):
    if len(parents) != len(sizes):
        report.add(f"{label}: {len(parents)} parents but {len(sizes)} parent sizes")
        return
    for ref, size in zip(parents, sizes):
        if ref.kind == ACTION:
            if not 0 <= ref.index < model.n_agents:
                report.add(f"{label}: dangling reference to action of agent {ref.index}")
            elif size != model.agents[ref.index].n_actions:
                report.add(f"{label}: parent size mismatch for action of agent {ref.index}")
        elif ref.kind == FACTOR:
            if not 0 <= ref.index < len(model.factors):
                report.add(f"{label}: dangling reference to factor {ref.index}")
            elif size != model.factors[ref.index].domain_size:
                report.add(f"{label}: parent size mismatch for factor {model.factors[ref.index].name}")
            elif ref.slice not in allowed_slices:
                report.add(f"{label}: parent {model.factors[ref.index].name}@{ref.slice} not allowed")
        else:
            report.add(f"{label}: unknown parent kind {ref.kind!r}")


def validate_model(m: FactoredPOSG) -> ValidationReport:
    """
    Structural validation of a factored POSG.

    Returns:
        ValidationReport listing non-normalized rows, cycles, missing CPTs and dangling references
    """
    report = ValidationReport()
    names = [f.name for f in m.factors]
    if len(set(names)) != len(names):
        report.add("factor names are not unique")
    for index, factor in enumerate(m.factors):
        if factor.id != index:
            report.add(f"factor ids are not dense: {factor.name} has id {factor.id}")
        if factor.domain_size < 1:
            report.add(f"factor {factor.name}: domain_size must be >= 1")
    if m.horizon < 0:
        report.add("horizon must be non-negative")
    if not 0.0 <= m.gamma <= 1.0:
        report.add("gamma must lie in [0, 1]")

    if len(m.dbn.factor_cpts) != len(m.factors):
        report.add("every next-slice factor needs exactly one CPT")
    for fid, cpt in enumerate(m.dbn.factor_cpts):
        if cpt is None:
            report.add(f"missing CPT for factor {m.factors[fid].name if fid < len(m.factors) else fid}")
            continue
        label = f"cpt {cpt.child}"
        _check_refs(report, label, cpt.parents, cpt.parent_sizes, m, (PREV, NEXT, SAME))
        _check_table(report, label, cpt)

    if len(m.dbn.observation_cpts) != m.n_agents:
        report.add("every agent needs exactly one observation CPT")
    for agent, cpt in enumerate(m.dbn.observation_cpts):
        if cpt is None:
            report.add(f"missing observation CPT for agent {agent}")
            continue
        label = f"observation {cpt.child}"
        _check_refs(report, label, cpt.parents, cpt.parent_sizes, m, (NEXT, SAME))
        if agent < m.n_agents and cpt.child_size != m.agents[agent].n_observations:
            report.add(f"{label}: child size differs from the observation alphabet")
        _check_table(report, label, cpt)

    if len(m.rewards) != m.n_agents:
        report.add("every agent needs exactly one reward table")
    for reward in m.rewards:
        label = f"reward of agent {reward.agent}"
        _check_refs(report, label, reward.parents, reward.parent_sizes, m, (PREV, NEXT, SAME))
        if reward.values.size != reward.n_rows:
            report.add(f"{label}: table has {reward.values.size} entries, expected {reward.n_rows}")
        elif not np.all(np.isfinite(reward.values)):
            report.add(f"{label}: non-finite reward")

    if report.ok:
        graph = m.dbn.intra_graph()
        if not nx.is_directed_acyclic_graph(graph):
            cycle = nx.find_cycle(graph)
            path = "->".join(m.factors[u].name for u, _ in cycle) + "->" + m.factors[cycle[0][0]].name
            report.add(f"cyclic 2DBN: {path}")

    covered = []
    for cpt in m.initial_bn:
        if cpt.child not in names:
            report.add(f"initial BN: dangling child {cpt.child}")
            continue
        covered.append(cpt.child)
        label = f"initial {cpt.child}"
        _check_refs(report, label, cpt.parents, cpt.parent_sizes, m, (SAME, NEXT))
        if any(ref.kind == ACTION for ref in cpt.parents):
            report.add(f"{label}: actions cannot parent stage-0 factors")
        _check_table(report, label, cpt)
    for name in names:
        if covered.count(name) != 1:
            report.add(f"initial BN must cover factor {name} exactly once")
    if report.ok:
        try:
            m.initial_order()
        except ModelValidationError as exc:
            report.violations.extend(exc.violations)
    return report


def validate_policy(m: FactoredPOSG, agent: int, policy: Policy) -> ValidationReport:
    """Check sizes and normalization of every defined policy entry"""
    report = ValidationReport()
    n_actions = m.agents[agent].n_actions
    if policy.n_actions != n_actions:
        report.add(f"policy of {m.agents[agent].name}: {policy.n_actions} actions, expected {n_actions}")
    rows = list(policy.table.items())
    if policy.default is not None:
        rows.append(('default', policy.default))
    for key, row in rows:
        if len(row) != n_actions:
            report.add(f"policy of {m.agents[agent].name}: entry {key!r} has {len(row)} probabilities")
        elif any(p < 0.0 for p in row) or abs(sum(row) - 1.0) > NORMALIZATION_TOLERANCE:
            report.add(f"policy of {m.agents[agent].name}: entry {key!r} not normalized")
    return report


# ----------------------------------------------------------------------------
# Local form
# ----------------------------------------------------------------------------

def _foreign_parents(parents: Sequence[NodeRef], modeled: FrozenSet[int], agent: int) -> List[NodeRef]:
    return [ref for ref in parents
            if (ref.kind == ACTION and ref.index != agent)
            or (ref.kind == FACTOR and ref.index not in modeled)]


def _describe(m: FactoredPOSG, ref: NodeRef) -> str:
    if ref.kind == ACTION:
        return f"action of {m.agents[ref.index].name}"
    return f"{m.factors[ref.index].name}@{ref.slice}"


def validate_lfm(m: FactoredPOSG, lsf: LocalStateFunction, i: int) -> ValidationReport:
    """Every observation-relevant and reward-relevant factor of agent i must be modeled"""
    report = ValidationReport()
    modeled = lsf.of(i)
    for ref in m.dbn.observation_cpts[i].parents:
        if ref.kind == FACTOR and ref.index not in modeled:
            report.add(f"observation-relevant factor {m.factors[ref.index].name} not modeled")
    for ref in m.rewards[i].parents:
        if ref.kind == FACTOR and ref.index not in modeled:
            report.add(f"reward-relevant factor {m.factors[ref.index].name} not modeled")
    return report


def classify_factors(m: FactoredPOSG, lsf: LocalStateFunction, i: int) -> Classification:
    """
    Partition factors into OLAF / NLAF / NMF for agent i and collect influence links.

    Raises:
        InfluenceOnObservationOrReward: an unmodeled factor or foreign action parents o_i or R_i
    """
    modeled = lsf.of(i)
    offenders = _foreign_parents(m.dbn.observation_cpts[i].parents, modeled, i)
    offenders += _foreign_parents(m.rewards[i].parents, modeled, i)
    if offenders:
        raise InfluenceOnObservationOrReward(i, sorted({_describe(m, ref) for ref in offenders}))

    olaf, nlaf = set(), set()
    source_prev, source_actions, source_next = set(), set(), set()
    nlaf_sources = {}
    for fid in sorted(modeled):
        foreign = _foreign_parents(m.dbn.factor_cpts[fid].parents, modeled, i)
        if not foreign:
            olaf.add(fid)
            continue
        nlaf.add(fid)
        nlaf_sources[fid] = frozenset(foreign)
        for ref in foreign:
            if ref.kind == ACTION:
                source_actions.add(ref.index)
            elif ref.slice == PREV:
                source_prev.add(ref.index)
            else:
                source_next.add(ref.index)
    nmf = frozenset(f.id for f in m.factors) - frozenset(modeled)

    # intra-stage closure: next-slice sources plus their unmodeled next-slice ancestors
    closure = set(source_next)
    frontier = list(source_next)
    while frontier:
        fid = frontier.pop()
        for ref in m.dbn.factor_cpts[fid].parents:
            if ref.kind == FACTOR and ref.slice != PREV and ref.index in nmf and ref.index not in closure:
                closure.add(ref.index)
                frontier.append(ref.index)
    intra_closure = tuple(f for f in m.dbn.next_order if f in closure)

    indirect_prev, indirect_actions, modeled_prev_v, modeled_next_v = set(), set(), set(), set()
    own_action_indirect = False
    for fid in intra_closure:
        for ref in m.dbn.factor_cpts[fid].parents:
            if ref.kind == ACTION:
                if ref.index == i:
                    own_action_indirect = True
                else:
                    indirect_actions.add(ref.index)
            elif ref.slice == PREV:
                (modeled_prev_v if ref.index in modeled else indirect_prev).add(ref.index)
            elif ref.index in modeled:
                modeled_next_v.add(ref.index)

    links = Classification(
        agent=i,
        olaf=frozenset(olaf),
        nlaf=frozenset(nlaf),
        nmf=nmf,
        source_prev=tuple(sorted(source_prev)),
        source_actions=tuple(sorted(source_actions)),
        source_next=tuple(f for f in m.dbn.next_order if f in source_next),
        nlaf_sources=nlaf_sources,
        intra_closure=intra_closure,
        indirect_prev=tuple(sorted(indirect_prev)),
        indirect_actions=tuple(sorted(indirect_actions)),
        modeled_prev_v=tuple(sorted(modeled_prev_v)),
        modeled_next_v=tuple(f for f in m.dbn.next_order if f in modeled_next_v),
        own_action_indirect=own_action_indirect,
    )
    logger.debug("agent %d: OLAF=%s NLAF=%s NMF=%s", i, sorted(olaf), sorted(nlaf), sorted(nmf))
    return links


def proxy_rewrite(m: FactoredPOSG, lsf: LocalStateFunction, i: int) -> Tuple[FactoredPOSG, LocalStateFunction]:
    """
    Route foreign dependencies of agent i's observation and reward through proxy factors.

    Returns:
        (rewritten model, local-state function with the proxies modeled by agent i);
        the input pair unchanged when nothing offends
    """
    modeled = lsf.of(i)
    factors = list(m.factors)
    factor_cpts = list(m.dbn.factor_cpts)
    observation_cpts = list(m.dbn.observation_cpts)
    rewards = list(m.rewards)
    initial_bn = list(m.initial_bn)
    proxies = []

    def add_proxy(name: str, size: int, parents, parent_sizes, table) -> int:
        fid = len(factors)
        factors.append(Factor(fid, name, size))
        slices = [NodeRef(ref.kind, ref.index, NEXT if ref.slice == SAME else ref.slice) for ref in parents]
        factor_cpts.append(CPT(name, size, tuple(slices), tuple(parent_sizes), table))
        start = np.zeros(size)
        start[0] = 1.0
        initial_bn.append(CPT(name, size, (), (), start))
        proxies.append(fid)
        return fid

    obs = m.dbn.observation_cpts[i]
    if _foreign_parents(obs.parents, modeled, i):
        fid = add_proxy(f"proxy_obs_{m.agents[i].name}", obs.child_size, obs.parents, obs.parent_sizes,
                        obs.table.copy())
        observation_cpts[i] = CPT(obs.child, obs.child_size, (NodeRef.factor(fid, NEXT),),
                                  (obs.child_size,), np.eye(obs.child_size).ravel())

    reward = m.rewards[i]
    if _foreign_parents(reward.parents, modeled, i):
        levels = sorted(set(float(v) for v in reward.values))
        table = np.zeros((reward.n_rows, len(levels)))
        for row, value in enumerate(reward.values):
            table[row, levels.index(float(value))] = 1.0
        fid = add_proxy(f"proxy_reward_{m.agents[i].name}", len(levels), reward.parents,
                        reward.parent_sizes, table.ravel())
        rewards[i] = RewardTable(i, (NodeRef.factor(fid, NEXT),), (len(levels),), np.array(levels))

    if not proxies:
        return m, lsf

    logger.info("proxy_rewrite: agent %d gets proxies %s", i, [factors[f].name for f in proxies])
    dbn = TwoSliceDBN(factors, factor_cpts, observation_cpts)
    rewritten = FactoredPOSG(tuple(factors), m.agents, dbn, tuple(rewards), tuple(initial_bn),
                             m.horizon, m.gamma, m.name)
    return rewritten, lsf.with_factors(i, proxies)
