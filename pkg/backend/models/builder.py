#!/usr/bin/env python3
"""
Influence Abstraction Toolkit - Model Builder
Declarative construction of factored POSGs from named factors and parent strings
"""

import itertools
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ModelFormatError
from .model import (
    ACTION,
    NEXT,
    PREV,
    SAME,
    CPT,
    Agent,
    Factor,
    FactoredPOSG,
    NodeRef,
    RewardTable,
    TwoSliceDBN,
)

SLICES = (PREV, NEXT, SAME)


def parse_parent(text: str, factor_ids: Dict[str, int], agent_ids: Dict[str, int]) -> NodeRef:
    """
    Parse 'name@prev', 'name@next', 'name@same' or 'action:<agent>'.

    Raises:
        ModelFormatError: malformed text or unknown name
    """
    text = text.strip()
    if text.startswith('action:'):
        agent = text[len('action:'):]
        if agent not in agent_ids:
            raise ModelFormatError(f"unknown agent in parent {text!r}")
        return NodeRef.action(agent_ids[agent])
    name, sep, slice_tag = text.partition('@')
    if not sep or slice_tag not in SLICES:
        raise ModelFormatError(f"malformed parent {text!r}; expected name@prev|next|same or action:<agent>")
    if name not in factor_ids:
        raise ModelFormatError(f"unknown factor in parent {text!r}")
    return NodeRef.factor(factor_ids[name], slice_tag)


def format_parent(ref: NodeRef, model: FactoredPOSG) -> str:
    if ref.kind == ACTION:
        return f"action:{model.agents[ref.index].name}"
    return f"{model.factors[ref.index].name}@{ref.slice}"


class ModelBuilder:
    """Collects factors, agents and tables, then assembles a FactoredPOSG"""

    def __init__(self, name: str = 'model'):
        self.name = name
        self.factors: List[Factor] = []
        self.agents: List[Agent] = []
        self.factor_ids: Dict[str, int] = {}
        self.agent_ids: Dict[str, int] = {}
        self._cpts: Dict[int, CPT] = {}
        self._observations: Dict[int, CPT] = {}
        self._rewards: Dict[int, RewardTable] = {}
        self._initial: List[CPT] = []

    def factor(self, name: str, size: int) -> int:
        if name in self.factor_ids:
            raise ModelFormatError(f"duplicate factor {name!r}")
        fid = len(self.factors)
        self.factors.append(Factor(fid, name, int(size)))
        self.factor_ids[name] = fid
        return fid

    def agent(self, name: str, actions: Sequence[str], observations: Sequence[str]) -> int:
        if name in self.agent_ids:
            raise ModelFormatError(f"duplicate agent {name!r}")
        index = len(self.agents)
        self.agents.append(Agent(name, tuple(actions), tuple(observations)))
        self.agent_ids[name] = index
        return index

    def _parents(self, parents: Sequence[str]):
        refs = tuple(parse_parent(p, self.factor_ids, self.agent_ids) for p in parents)
        sizes = tuple(self.agents[r.index].n_actions if r.kind == ACTION else self.factors[r.index].domain_size
                      for r in refs)
        return refs, sizes

    def parent_sizes(self, parents: Sequence[str]) -> Tuple[int, ...]:
        return self._parents(parents)[1]

    @staticmethod
    def _tabulate(sizes, child_size: int, fn: Callable) -> np.ndarray:
        rows = []
        for values in itertools.product(*(range(s) for s in sizes)):
            row = list(fn(*values))
            if len(row) != child_size:
                raise ModelFormatError(f"row for parents {values} has {len(row)} entries, expected {child_size}")
            rows.append(row)
        return np.array(rows, dtype=float).ravel()

    def cpt(self, child: str, parents: Sequence[str], fn: Callable = None, table=None):
        """Next-slice CPT given either a row function over parent values or a flat table"""
        fid = self._child(child)
        refs, sizes = self._parents(parents)
        size = self.factors[fid].domain_size
        data = self._tabulate(sizes, size, fn) if fn is not None else np.asarray(table, dtype=float)
        self._cpts[fid] = CPT(child, size, refs, sizes, data)

    def initial(self, child: str, parents: Sequence[str] = (), fn: Callable = None, table=None):
        """Initial-BN CPT; parents refer to stage-0 factors"""
        fid = self._child(child)
        refs, sizes = self._parents(parents)
        size = self.factors[fid].domain_size
        data = self._tabulate(sizes, size, fn) if fn is not None else np.asarray(table, dtype=float)
        self._initial.append(CPT(child, size, refs, sizes, data))

    def point(self, child: str, value: int):
        """Deterministic initial value"""
        size = self.factors[self._child(child)].domain_size
        self.initial(child, table=[1.0 if v == value else 0.0 for v in range(size)])

    def observation(self, agent: str, parents: Sequence[str], fn: Callable = None, table=None):
        index = self._agent(agent)
        refs, sizes = self._parents(parents)
        size = self.agents[index].n_observations
        data = self._tabulate(sizes, size, fn) if fn is not None else np.asarray(table, dtype=float)
        self._observations[index] = CPT(f"o:{agent}", size, refs, sizes, data)

    def reward(self, agent: str, parents: Sequence[str], fn: Callable = None, table=None):
        index = self._agent(agent)
        refs, sizes = self._parents(parents)
        if fn is not None:
            data = np.array([fn(*values) for values in itertools.product(*(range(s) for s in sizes))], dtype=float)
        else:
            data = np.asarray(table, dtype=float)
        self._rewards[index] = RewardTable(index, refs, sizes, data)

    def _child(self, name: str) -> int:
        if name not in self.factor_ids:
            raise ModelFormatError(f"unknown factor {name!r}")
        return self.factor_ids[name]

    def _agent(self, name: str) -> int:
        if name not in self.agent_ids:
            raise ModelFormatError(f"unknown agent {name!r}")
        return self.agent_ids[name]

    def build(self, horizon: int, gamma: float = 1.0, name: Optional[str] = None) -> FactoredPOSG:
        """Assemble the model; missing tables surface later in validate_model"""
        factor_cpts = [self._cpts.get(f.id) for f in self.factors]
        observations = [self._observations.get(j) for j in range(len(self.agents))]
        rewards = [self._rewards[j] if j in self._rewards else RewardTable(j, (), (), np.zeros(1))
                   for j in range(len(self.agents))]
        dbn = TwoSliceDBN(self.factors, factor_cpts, observations)
        return FactoredPOSG(tuple(self.factors), tuple(self.agents), dbn, tuple(rewards), tuple(self._initial),
                            int(horizon), float(gamma), name or self.name)
