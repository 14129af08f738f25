#!/usr/bin/env python3
"""
Influence Abstraction Toolkit - Exact Solver
Finite-horizon belief-tree solver for best-response POMDPs
"""

import logging
from abc import ABC, abstractmethod
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, Hashable, List, Optional, Tuple

from .errors import CapExceeded, UnreachableHistory, ZeroProbObservation
from .model import Policy

logger = logging.getLogger(__name__)

Belief = Dict[Hashable, float]
History = Tuple[int, ...]

DEFAULT_CAP_AOHS = 10 ** 6
TIE_TOLERANCE = 1e-12


class BestResponsePOMDP(ABC):
    """
    Finite-horizon POMDP contract shared by the global-form and local-form models.

    Subclasses provide sparse transitions over hashable augmented states.
    """

    name = 'pomdp'

    def __init__(self, horizon: int, discount: float):
        self.horizon = horizon
        self.discount = discount

    @property
    @abstractmethod
    def num_actions(self) -> int:
        ...

    @property
    @abstractmethod
    def num_observations(self) -> int:
        ...

    @abstractmethod
    def initial_belief(self) -> Belief:
        ...

    @abstractmethod
    def transition(self, state, action: int) -> Dict[Hashable, float]:
        ...

    @abstractmethod
    def observation(self, action: int, next_state) -> Tuple[float, ...]:
        ...

    @abstractmethod
    def reward(self, state, action: int, next_state) -> float:
        ...


def _predict(pomdp: BestResponsePOMDP, belief: Belief, action: int) -> Dict[Hashable, Tuple[float, float]]:
    """s' -> (predicted mass, expected reward mass)"""
    predicted: Dict[Hashable, List[float]] = {}
    for state, p in belief.items():
        for nxt, q in pomdp.transition(state, action).items():
            mass = p * q
            entry = predicted.setdefault(nxt, [0.0, 0.0])
            entry[0] += mass
            entry[1] += mass * pomdp.reward(state, action, nxt)
    return {s: (v[0], v[1]) for s, v in predicted.items()}


def expected_reward(pomdp: BestResponsePOMDP, belief: Belief, action: int) -> float:
    """R(b, a) = sum_s b(s) sum_s' T(s'|s,a) R(s,a,s')"""
    return sum(r for _, r in _predict(pomdp, belief, action).values())


def observation_distribution(pomdp: BestResponsePOMDP, belief: Belief, action: int) -> Tuple[float, ...]:
    """P(o | b, a)"""
    out = [0.0] * pomdp.num_observations
    for nxt, (mass, _) in _predict(pomdp, belief, action).items():
        for obs, q in enumerate(pomdp.observation(action, nxt)):
            out[obs] += mass * q
    return tuple(out)


def _split(pomdp: BestResponsePOMDP, predicted, action: int) -> Dict[int, Tuple[float, Belief]]:
    """Per observation: (probability, posterior belief)"""
    unnormalized: Dict[int, Dict[Hashable, float]] = defaultdict(dict)
    for nxt, (mass, _) in predicted.items():
        if mass <= 0.0:
            continue
        for obs, q in enumerate(pomdp.observation(action, nxt)):
            if q > 0.0:
                unnormalized[obs][nxt] = mass * q
    out = {}
    for obs in sorted(unnormalized):
        weights = unnormalized[obs]
        total = sum(weights.values())
        if total > 0.0:
            out[obs] = (total, {s: w / total for s, w in weights.items()})
    return out


def belief_update(pomdp: BestResponsePOMDP, belief: Belief, action: int, observation: int) -> Belief:
    """
    Bayes update b'(s') proportional to O(o|a,s') sum_s b(s) T(s'|s,a).

    Raises:
        ZeroProbObservation: P(o | b, a) = 0
    """
    weights: Dict[Hashable, float] = {}
    for nxt, (mass, _) in _predict(pomdp, belief, action).items():
        q = pomdp.observation(action, nxt)[observation]
        if mass > 0.0 and q > 0.0:
            weights[nxt] = mass * q
    total = sum(weights.values())
    if total <= 0.0:
        raise ZeroProbObservation(f"observation {observation} after action {action} has probability zero")
    return {s: w / total for s, w in weights.items()}


def belief_at(pomdp: BestResponsePOMDP, history: History) -> Belief:
    """Belief after an action-observation history (a0, o1, a1, o2, ...)"""
    belief = pomdp.initial_belief()
    for k in range(0, len(history), 2):
        try:
            belief = belief_update(pomdp, belief, history[k], history[k + 1])
        except ZeroProbObservation as exc:
            raise UnreachableHistory(history, str(exc)) from exc
    return belief


def reachable_beliefs(pomdp: BestResponsePOMDP, cap: int = DEFAULT_CAP_AOHS,
                      include_final: bool = False) -> Dict[History, Belief]:
    """
    Every positive-probability AOH with its belief, in stage then lexicographic order.

    Raises:
        CapExceeded: more reachable AOHs than cap
    """
    last = pomdp.horizon if include_final else pomdp.horizon - 1
    layer = {(): pomdp.initial_belief()}
    out: Dict[History, Belief] = {}
    for t in range(last + 1):
        out.update(layer)
        if len(out) > cap:
            raise CapExceeded('aohs', len(out), cap)
        if t == last:
            break
        successor = {}
        for history in sorted(layer):
            belief = layer[history]
            for action in range(pomdp.num_actions):
                for obs, (_, posterior) in _split(pomdp, _predict(pomdp, belief, action), action).items():
                    successor[history + (action, obs)] = posterior
        layer = successor
    return out


@dataclass
class ValueNode:
    aoh: History
    stage: int
    value: float
    q_values: Tuple[float, ...]
    best_action: Optional[int]
    belief: Belief


@dataclass
class ValueTree:
    """Optimal values, Q-values and argmax actions for every reachable AOH"""
    horizon: int
    num_actions: int
    nodes: Dict[History, ValueNode] = field(default_factory=dict)

    @property
    def root(self) -> ValueNode:
        return self.nodes[()]

    @property
    def value(self) -> float:
        return self.root.value

    def stage_counts(self) -> Dict[int, int]:
        counts: Dict[int, int] = defaultdict(int)
        for node in self.nodes.values():
            counts[node.stage] += 1
        return dict(sorted(counts.items()))


def best_action(q_values: Tuple[float, ...], tie_tolerance: float = TIE_TOLERANCE) -> int:
    """Smallest action index whose Q-value is within tolerance of the maximum"""
    top = max(q_values)
    for action, q in enumerate(q_values):
        if q >= top - tie_tolerance:
            return action
    return 0


def solve(pomdp: BestResponsePOMDP, cap_aohs: int = DEFAULT_CAP_AOHS,
          tie_tolerance: float = TIE_TOLERANCE) -> ValueTree:
    """
    Exact finite-horizon solution by belief-tree recursion memoized on the AOH.

    Raises:
        CapExceeded: more reachable AOHs than cap_aohs
    """
    tree = ValueTree(pomdp.horizon, pomdp.num_actions)
    if pomdp.horizon == 0:
        tree.nodes[()] = ValueNode((), 0, 0.0, (), None, pomdp.initial_belief())
        return tree

    def visit(history: History, stage: int, belief: Belief) -> float:
        known = tree.nodes.get(history)
        if known is not None:
            return known.value
        if len(tree.nodes) >= cap_aohs:
            raise CapExceeded('aohs', len(tree.nodes) + 1, cap_aohs)
        q_values = []
        for action in range(pomdp.num_actions):
            predicted = _predict(pomdp, belief, action)
            q = sum(r for _, r in predicted.values())
            if stage < pomdp.horizon - 1:
                future = 0.0
                for obs, (p_obs, posterior) in _split(pomdp, predicted, action).items():
                    future += p_obs * visit(history + (action, obs), stage + 1, posterior)
                q += pomdp.discount * future
            q_values.append(q)
        choice = best_action(tuple(q_values), tie_tolerance)
        node = ValueNode(history, stage, q_values[choice], tuple(q_values), choice, belief)
        tree.nodes[history] = node
        return node.value

    visit((), 0, pomdp.initial_belief())
    logger.info("solved %s: V(b0)=%.12g over %d AOHs", pomdp.name, tree.value, len(tree.nodes))
    return tree


def extract_policy(tree: ValueTree) -> Policy:
    """Deterministic AOH-tree policy selecting the stored argmax"""
    actions = {history: node.best_action for history, node in tree.nodes.items() if node.best_action is not None}
    return Policy.deterministic(actions, tree.num_actions)


def evaluate_policy(pomdp: BestResponsePOMDP, policy: Policy) -> float:
    """Exact expected discounted return of an AOH policy"""

    def value(history: History, stage: int, belief: Belief) -> float:
        if stage == pomdp.horizon:
            return 0.0
        total = 0.0
        for action, p_action in enumerate(policy.distribution(history)):
            if p_action <= 0.0:
                continue
            predicted = _predict(pomdp, belief, action)
            q = sum(r for _, r in predicted.values())
            if stage < pomdp.horizon - 1:
                for obs, (p_obs, posterior) in _split(pomdp, predicted, action).items():
                    q += pomdp.discount * p_obs * value(history + (action, obs), stage + 1, posterior)
            total += p_action * q
        return total

    return value((), 0, pomdp.initial_belief())
