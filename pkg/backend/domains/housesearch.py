#!/usr/bin/env python3
"""
Influence Abstraction Toolkit - House Search Domain
Two robots search a house for a target; the protagonist models its own location, the target and 'found'
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import networkx as nx

from ..models.builder import ModelBuilder
from ..models.model import DSetSpec, LocalStateFunction, Policy
from .base import Instance

logger = logging.getLogger(__name__)


@dataclass
class HouseSearchParams:
    """House-search parameters; defaults are artifact choices"""
    rooms: nx.Graph = field(default_factory=lambda: nx.path_graph(3))
    move_failure: float = 0.1
    detection: float = 0.8
    move_cost: float = -0.1
    time_cost: float = -0.2
    detect_reward: float = 5.0
    mobile_target: bool = False
    target_move: float = 0.2
    target_prior: Optional[Sequence[float]] = None
    detection_radius: int = 0
    horizon: int = 3
    gamma: float = 1.0
    searcher_policy: str = 'sweep'

    def validate(self):
        for name in ('move_failure', 'detection', 'target_move'):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")
        if self.rooms.number_of_nodes() < 1 or not nx.is_connected(self.rooms):
            raise ValueError("room graph must be connected")
        if self.target_prior is not None and len(self.target_prior) != self.rooms.number_of_nodes():
            raise ValueError("target prior needs one entry per room")
        if self.searcher_policy not in ('sweep', 'uniform'):
            raise ValueError(f"unknown searcher policy {self.searcher_policy!r}")


class _House:
    """Room graph with sorted neighbour lists and detection ranges"""

    def __init__(self, params: HouseSearchParams):
        graph = nx.convert_node_labels_to_integers(params.rooms, ordering='sorted')
        self.n = graph.number_of_nodes()
        self.neighbours: Dict[int, List[int]] = {r: sorted(graph.neighbors(r)) for r in range(self.n)}
        self.n_actions = 1 + max((len(v) for v in self.neighbours.values()), default=0)
        distance = dict(nx.all_pairs_shortest_path_length(graph))
        self.in_range = {(r, t): distance[r][t] <= params.detection_radius
                         for r in range(self.n) for t in range(self.n)}
        self.params = params

    def valid_move(self, room: int, action: int) -> bool:
        return 1 <= action <= len(self.neighbours[room])

    def destination(self, room: int, action: int) -> int:
        return self.neighbours[room][action - 1] if self.valid_move(room, action) else room

    def move_row(self, room: int, action: int) -> List[float]:
        row = [0.0] * self.n
        if not self.valid_move(room, action):
            row[room] = 1.0
            return row
        row[self.destination(room, action)] += 1.0 - self.params.move_failure
        row[room] += self.params.move_failure
        return row

    def target_row(self, target: int) -> List[float]:
        row = [0.0] * self.n
        neighbours = self.neighbours[target]
        if not self.params.mobile_target or not neighbours:
            row[target] = 1.0
            return row
        row[target] = 1.0 - self.params.target_move
        for nb in neighbours:
            row[nb] += self.params.target_move / len(neighbours)
        return row

    def detect_probability(self, l1: int, l2: int, target: int) -> float:
        miss = 1.0
        for room in (l1, l2):
            if self.in_range[(room, target)]:
                miss *= 1.0 - self.params.detection
        return 1.0 - miss

    def sweep_action(self, room: int, found: int) -> int:
        """Move to the highest neighbour above the current room until the target is found"""
        if found:
            return 0
        above = [nb for nb in self.neighbours[room] if nb > room]
        if not above:
            return 0
        return 1 + self.neighbours[room].index(max(above))


def _searcher_policy(house: _House, n_observations: int) -> Policy:
    if house.params.searcher_policy == 'uniform':
        return Policy.uniform(house.n_actions)
    rows = {}
    for key in [None] + list(range(n_observations)):
        room, found = (0, 0) if key is None else divmod(key, 2)
        row = [0.0] * house.n_actions
        row[house.sweep_action(room, found)] = 1.0
        rows[key] = row
    return Policy.reactive(rows, house.n_actions)


def gen_housesearch(params: Optional[HouseSearchParams] = None, isd: bool = False) -> Instance:
    """
    Build the two-robot house search; robot2 (index 1) is the protagonist.

    Args:
        params: Domain parameters
        isd: Detection depends on same-stage co-location instead of previous-stage co-location

    Returns:
        Instance with d-set = full histories of l2, ltgt and f
    """
    params = params or HouseSearchParams()
    params.validate()
    house = _House(params)
    n = house.n

    builder = ModelBuilder('housesearch-isd' if isd else 'housesearch')
    l1 = builder.factor('l1', n)
    l2 = builder.factor('l2', n)
    ltgt = builder.factor('ltgt', n)
    found = builder.factor('f', 2)
    actions = ['stay'] + [f'move{k}' for k in range(1, house.n_actions)]
    observations = [f'room{r}-{flag}' for r in range(n) for flag in ('searching', 'found')]
    for robot in ('robot1', 'robot2'):
        builder.agent(robot, actions, observations)

    for robot, loc in (('robot1', 'l1'), ('robot2', 'l2')):
        builder.cpt(loc, [f'{loc}@prev', f'action:{robot}'], house.move_row)
    builder.cpt('ltgt', ['ltgt@prev'], house.target_row)

    def found_row(f, r1, r2, target):
        if f:
            return [0.0, 1.0]
        p = house.detect_probability(r1, r2, target)
        return [1.0 - p, p]

    stage = 'next' if isd else 'prev'
    builder.cpt('f', ['f@prev', f'l1@{stage}', f'l2@{stage}', f'ltgt@{stage}'], found_row)

    def observe(room, f):
        row = [0.0] * (2 * n)
        row[2 * room + f] = 1.0
        return row

    def reward(room, action, f, f_next):
        value = params.move_cost if house.valid_move(room, action) else 0.0
        if f_next == 0:
            value += params.time_cost
        if f == 0 and f_next == 1:
            value += params.detect_reward
        return value

    for robot, loc in (('robot1', 'l1'), ('robot2', 'l2')):
        builder.observation(robot, [f'{loc}@next', 'f@next'], observe)
        builder.reward(robot, [f'{loc}@prev', f'action:{robot}', 'f@prev', 'f@next'], reward)

    builder.point('l1', 0)
    builder.point('l2', n - 1)
    prior = list(params.target_prior) if params.target_prior is not None else [1.0 / n] * n
    builder.initial('ltgt', table=prior)
    if isd:
        builder.initial('f', ['l1@same', 'l2@same', 'ltgt@same'],
                        lambda r1, r2, target: found_row(0, r1, r2, target))
    else:
        builder.point('f', 0)

    model = builder.build(params.horizon, params.gamma)
    lsf = LocalStateFunction({0: frozenset({l1, ltgt, found}), 1: frozenset({l2, ltgt, found})})
    dset = DSetSpec.full_history([found, ltgt, l2])
    policies = {0: _searcher_policy(house, len(observations))}
    logger.debug("housesearch: %d rooms, %d actions, isd=%s", n, house.n_actions, isd)
    return Instance(model, lsf, dset, policies, agent=1)
