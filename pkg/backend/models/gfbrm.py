#!/usr/bin/env python3
"""
Influence Abstraction Toolkit - Global-Form Best-Response Model
POMDP over <state, other agents' AOHs> induced by fixed policies
"""

import itertools
import logging
import threading
from typing import Dict, List, Mapping, NamedTuple, Tuple

from .model import FactoredPOSG, Policy
from .solver import Belief, BestResponsePOMDP

logger = logging.getLogger(__name__)

EMPTY_HISTORY = 0


class HistoryTable:
    """Hash-consed AOHs; id 0 is the empty history"""

    def __init__(self):
        self._ids: Dict[Tuple[int, int, int], int] = {}
        self._records: List[Tuple[int, int, int]] = [(EMPTY_HISTORY, -1, -1)]
        self._histories: List[Tuple[int, ...]] = [()]
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._histories)

    def extend(self, parent: int, action: int, observation: int) -> int:
        """Id of parent + (action, observation), allocated on first use"""
        key = (parent, action, observation)
        found = self._ids.get(key)
        if found is not None:
            return found
        with self._lock:
            found = self._ids.get(key)
            if found is None:
                found = len(self._histories)
                self._histories.append(self._histories[parent] + (action, observation))
                self._records.append(key)
                self._ids[key] = found
            return found

    def history(self, ident: int) -> Tuple[int, ...]:
        return self._histories[ident]

    def last_action(self, ident: int) -> int:
        return self._records[ident][1]


class AugStateG(NamedTuple):
    """Full state plus one interned AOH id per agent (the protagonist's own slot stays empty)"""
    state: Tuple[int, ...]
    histories: Tuple[int, ...]


class GlobalFormModel(BestResponsePOMDP):
    """Lazily expanded global-form best-response model for one agent"""

    name = 'gfbrm'

    def __init__(self, model: FactoredPOSG, policies: Mapping[int, Policy], agent: int):
        super().__init__(model.horizon, model.gamma)
        self.model = model
        self.policies = dict(policies)
        self.agent = agent
        self.others = tuple(j for j in range(model.n_agents) if j != agent)
        self.aohs = HistoryTable()
        self._transitions: Dict[Tuple[AugStateG, int], Dict[AugStateG, float]] = {}
        self._lock = threading.Lock()

    @property
    def num_actions(self) -> int:
        return self.model.agents[self.agent].n_actions

    @property
    def num_observations(self) -> int:
        return self.model.agents[self.agent].n_observations

    def initial_belief(self) -> Belief:
        empty = tuple(EMPTY_HISTORY for _ in self.model.agents)
        return {AugStateG(s, empty): p for s, p in self.model.initial_distribution.items()}

    def history_of(self, sbar: AugStateG, agent: int) -> Tuple[int, ...]:
        return self.aohs.history(sbar.histories[agent])

    def joint_action(self, action: int, next_state: AugStateG) -> Tuple[int, ...]:
        """Joint action recovered from the AOHs stored in the successor state"""
        return tuple(action if j == self.agent else self.aohs.last_action(next_state.histories[j])
                     for j in range(self.model.n_agents))

    def others_actions(self, sbar: AugStateG):
        """[(a_{-i} as {agent: action}, probability)] under the fixed policies"""
        rows = [[(act, p) for act, p in enumerate(self.policies[j].distribution(self.history_of(sbar, j)))
                 if p > 0.0]
                for j in self.others]
        for combo in itertools.product(*rows):
            prob = 1.0
            for _, p in combo:
                prob *= p
            yield {j: act for j, (act, _) in zip(self.others, combo)}, prob

    def _assemble(self, action: int, others: Mapping[int, int]) -> Tuple[int, ...]:
        return tuple(action if j == self.agent else others[j] for j in range(self.model.n_agents))

    def transition(self, sbar: AugStateG, action: int) -> Dict[AugStateG, float]:
        """T-bar = pi_{-i} x T x O_{-i}, zero-mass branches pruned"""
        key = (sbar, action)
        cached = self._transitions.get(key)
        if cached is not None:
            return cached
        m = self.model
        out: Dict[AugStateG, float] = {}
        for others, p_others in self.others_actions(sbar):
            ja = self._assemble(action, others)
            for nxt, q in m.transition(sbar.state, ja).items():
                rows = [[(obs, r) for obs, r in enumerate(m.observation_row(j, ja, nxt)) if r > 0.0]
                        for j in self.others]
                for combo in itertools.product(*rows):
                    prob = p_others * q
                    histories = list(sbar.histories)
                    for j, (obs, r) in zip(self.others, combo):
                        prob *= r
                        histories[j] = self.aohs.extend(histories[j], ja[j], obs)
                    successor = AugStateG(nxt, tuple(histories))
                    out[successor] = out.get(successor, 0.0) + prob
        with self._lock:
            self._transitions.setdefault(key, out)
        return out

    def observation(self, action: int, next_state: AugStateG) -> Tuple[float, ...]:
        return self.model.observation_row(self.agent, self.joint_action(action, next_state), next_state.state)

    def reward(self, sbar: AugStateG, action: int, next_state: AugStateG) -> float:
        return self.model.reward(self.agent, sbar.state, self.joint_action(action, next_state), next_state.state)


def build_gfbrm(m: FactoredPOSG, policies: Mapping[int, Policy], i: int) -> GlobalFormModel:
    """Global-form best-response model for agent i against fixed policies of the others"""
    missing = [m.agents[j].name for j in range(m.n_agents) if j != i and j not in policies]
    if missing:
        raise ValueError(f"missing policies for agents: {', '.join(missing)}")
    logger.info("GFBRM built for agent %s (%d other agents)", m.agents[i].name, m.n_agents - 1)
    return GlobalFormModel(m, policies, i)


def gfbrm_expected_reward(pomdp: GlobalFormModel, belief: Belief, action: int) -> float:
    """Closed form: sum over s, AOH_{-i}, a_{-i}, s' of b * pi_{-i} * T * R"""
    m = pomdp.model
    total = 0.0
    for sbar, p in belief.items():
        for others, p_others in pomdp.others_actions(sbar):
            ja = pomdp._assemble(action, others)
            for nxt, q in m.transition(sbar.state, ja).items():
                total += p * p_others * q * m.reward(pomdp.agent, sbar.state, ja, nxt)
    return total


def gfbrm_obs_prob(pomdp: GlobalFormModel, belief: Belief, action: int) -> Tuple[float, ...]:
    """Closed form: sum over s, AOH_{-i}, a_{-i}, s' of b * pi_{-i} * T * O_i"""
    m = pomdp.model
    out = [0.0] * pomdp.num_observations
    for sbar, p in belief.items():
        for others, p_others in pomdp.others_actions(sbar):
            ja = pomdp._assemble(action, others)
            for nxt, q in m.transition(sbar.state, ja).items():
                for obs, r in enumerate(m.observation_row(pomdp.agent, ja, nxt)):
                    out[obs] += p * p_others * q * r
    return tuple(out)
