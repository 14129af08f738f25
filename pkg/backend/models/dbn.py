#!/usr/bin/env python3
"""
Influence Abstraction Toolkit - Unrolled DBN
Exact trajectory enumeration, forward-elimination queries and d-separation checks
"""

import itertools
import logging
from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, Iterator, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import networkx as nx

from .errors import CapExceeded, UnreachableHistory, ZeroEvidence
from .model import (
    ACTION,
    EXPLICIT,
    FULL_HISTORY,
    LAST_VALUE,
    OWN_ACTION,
    PREV,
    STAGE0_ONLY,
    DSetSpec,
    FactoredPOSG,
    Policy,
    ValidationReport,
)

logger = logging.getLogger(__name__)

DEFAULT_CAP_TRAJECTORIES = 10 ** 7
DEFAULT_TOLERANCE = 1e-9


class Node(NamedTuple):
    """A node of the unrolled network: ('x', factor, t), ('a', agent, t) or ('o', agent, t)"""
    kind: str
    index: int
    stage: int

    def label(self, model: FactoredPOSG) -> str:
        if self.kind == 'x':
            return f"x:{model.factors[self.index].name}:{self.stage}"
        return f"{self.kind}:{model.agents[self.index].name}:{self.stage}"


def x(factor: int, stage: int) -> Node:
    return Node('x', factor, stage)


def a(agent: int, stage: int) -> Node:
    return Node('a', agent, stage)


def o(agent: int, stage: int) -> Node:
    return Node('o', agent, stage)


class WeightedTrajectory(NamedTuple):
    assignment: Dict[Node, int]
    weight: float


class UnrolledNet:
    """
    The 2DBN replicated over stages 0..h with the other agents' policies attached.

    Agent i's actions are roots: uniform unless a plan (action per stage) or a policy is given.
    """

    def __init__(self, model: FactoredPOSG, policies: Mapping[int, Policy], agent: int, horizon: int,
                 plan: Optional[Sequence[int]] = None, policy_i: Optional[Policy] = None,
                 cap_trajectories: int = DEFAULT_CAP_TRAJECTORIES):
        self.model = model
        self.policies = dict(policies)
        self.agent = agent
        self.horizon = horizon
        self.plan = tuple(plan) if plan is not None else None
        self.policy_i = policy_i
        self.cap_trajectories = cap_trajectories
        self.graph = self._build_graph()

    def _build_graph(self) -> nx.DiGraph:
        m, h = self.model, self.horizon
        graph = nx.DiGraph()
        for t in range(h + 1):
            graph.add_nodes_from(x(f.id, t) for f in m.factors)
        for t in range(h):
            graph.add_nodes_from(a(j, t) for j in range(m.n_agents))
            graph.add_nodes_from(o(j, t + 1) for j in range(m.n_agents))

        for cpt in m.initial_bn:
            child = x(m.factor_id(cpt.child), 0)
            for ref in cpt.parents:
                graph.add_edge(x(ref.index, 0), child)

        for t in range(h):
            for fid, cpt in enumerate(m.dbn.factor_cpts):
                for ref in cpt.parents:
                    graph.add_edge(self._parent_node(ref, t), x(fid, t + 1))
            for j, cpt in enumerate(m.dbn.observation_cpts):
                for ref in cpt.parents:
                    graph.add_edge(self._parent_node(ref, t), o(j, t + 1))
            for j in range(m.n_agents):
                if j == self.agent and self.policy_i is None:
                    continue
                for past in range(t):
                    graph.add_edge(a(j, past), a(j, t))
                for past in range(1, t + 1):
                    graph.add_edge(o(j, past), a(j, t))
        return graph

    @staticmethod
    def _parent_node(ref, t: int) -> Node:
        if ref.kind == ACTION:
            return a(ref.index, t)
        return x(ref.index, t if ref.slice == PREV else t + 1)

    @property
    def nodes(self) -> List[Node]:
        return sorted(self.graph.nodes)

    def _action_rows(self, t: int, memories) -> List[List[Tuple[int, float]]]:
        rows = []
        for j, agent in enumerate(self.model.agents):
            if j == self.agent and self.policy_i is None:
                if self.plan is not None:
                    rows.append([(self.plan[t], 1.0)])
                else:
                    rows.append([(act, 1.0 / agent.n_actions) for act in range(agent.n_actions)])
                continue
            policy = self.policy_i if j == self.agent else self.policies[j]
            dist = policy.distribution(memories[j])
            rows.append([(act, p) for act, p in enumerate(dist) if p > 0.0])
        return rows

    def _remember(self, j: int, memory, action: int, observation: int):
        if j == self.agent and self.policy_i is None:
            return memory
        policy = self.policy_i if j == self.agent else self.policies[j]
        if policy.kind == EXPLICIT:
            return memory + (action, observation)
        return (observation,)

    def _initial_memories(self) -> Tuple[Tuple[int, ...], ...]:
        return tuple(() for _ in self.model.agents)


def unroll(m: FactoredPOSG, policies: Mapping[int, Policy], i: int, h: Optional[int] = None,
           plan: Optional[Sequence[int]] = None, policy_i: Optional[Policy] = None,
           cap_trajectories: int = DEFAULT_CAP_TRAJECTORIES) -> UnrolledNet:
    """Unroll the 2DBN and the fixed policies of every agent but i over h stages"""
    horizon = m.horizon if h is None else h
    net = UnrolledNet(m, policies, i, horizon, plan=plan, policy_i=policy_i, cap_trajectories=cap_trajectories)
    logger.debug("unrolled net: %d nodes, %d edges", net.graph.number_of_nodes(), net.graph.number_of_edges())
    return net


# ----------------------------------------------------------------------------
# Forward elimination
# ----------------------------------------------------------------------------

def _check_evidence(evidence: Mapping[Node, int], node: Node, value: int) -> bool:
    expected = evidence.get(node)
    return expected is None or expected == value


def _forward(net: UnrolledNet, targets: Sequence[Node], evidence: Mapping[Node, int]) -> Dict[tuple, float]:
    """Unnormalized joint over the target nodes, restricted to the evidence"""
    m = net.model
    wanted = set(targets) | set(evidence)
    for node in wanted:
        if node not in net.graph:
            raise KeyError(f"node {node} is not part of the unrolled net")
    last = max((node.stage for node in wanted), default=0)
    slot = {node: k for k, node in enumerate(targets)}

    def record(recorded, node, value):
        position = slot.get(node)
        if position is None:
            return recorded
        updated = list(recorded)
        updated[position] = value
        return tuple(updated)

    empty = tuple([None] * len(targets))
    frontier: Dict[tuple, float] = defaultdict(float)
    for state, p in m.initial_distribution.items():
        recorded = empty
        consistent = True
        for fid, value in enumerate(state):
            node = x(fid, 0)
            if not _check_evidence(evidence, node, value):
                consistent = False
                break
            recorded = record(recorded, node, value)
        if consistent:
            frontier[(state, net._initial_memories(), recorded)] += p

    for t in range(last):
        successor: Dict[tuple, float] = defaultdict(float)
        for (state, memories, recorded), p in frontier.items():
            rows = net._action_rows(t, memories)
            for combo in itertools.product(*rows):
                joint_action = tuple(act for act, _ in combo)
                p_action = p
                rec_a = recorded
                consistent = True
                for j, (act, q) in enumerate(combo):
                    node = a(j, t)
                    if not _check_evidence(evidence, node, act):
                        consistent = False
                        break
                    p_action *= q
                    rec_a = record(rec_a, node, act)
                if not consistent:
                    continue
                for nxt, q in m.transition(state, joint_action).items():
                    rec_x = rec_a
                    for fid, value in enumerate(nxt):
                        node = x(fid, t + 1)
                        if not _check_evidence(evidence, node, value):
                            break
                        rec_x = record(rec_x, node, value)
                    else:
                        obs_rows = []
                        for j in range(m.n_agents):
                            row = m.observation_row(j, joint_action, nxt)
                            node = o(j, t + 1)
                            obs_rows.append([(val, r) for val, r in enumerate(row)
                                             if r > 0.0 and _check_evidence(evidence, node, val)])
                        for obs in itertools.product(*obs_rows):
                            weight = p_action * q
                            rec_o = rec_x
                            new_memories = []
                            for j, (val, r) in enumerate(obs):
                                weight *= r
                                rec_o = record(rec_o, o(j, t + 1), val)
                                new_memories.append(net._remember(j, memories[j], joint_action[j], val))
                            successor[(nxt, tuple(new_memories), rec_o)] += weight
        frontier = successor
        if len(frontier) > net.cap_trajectories:
            raise CapExceeded('trajectories', len(frontier), net.cap_trajectories)
        logger.debug("forward stage %d: %d frontier entries", t + 1, len(frontier))

    joint: Dict[tuple, float] = defaultdict(float)
    for (_, _, recorded), p in frontier.items():
        joint[recorded] += p
    return dict(joint)


def query(net: UnrolledNet, targets: Sequence[Node], evidence: Optional[Mapping[Node, int]] = None
          ) -> Dict[Tuple[int, ...], float]:
    """
    Exact conditional P(targets | evidence) by forward elimination over stages.

    Args:
        net: Unrolled network
        targets: Target nodes; result keys list their values in this order
        evidence: Partial assignment node -> value

    Returns:
        Dictionary value-tuple -> probability over positive-probability assignments

    Raises:
        ZeroEvidence: P(evidence) = 0
    """
    evidence = dict(evidence or {})
    targets = list(targets)
    joint = _forward(net, targets, evidence)
    total = sum(joint.values())
    if total <= 0.0:
        raise ZeroEvidence(f"evidence {sorted(evidence.items())} has probability zero")
    return {key: p / total for key, p in joint.items() if p > 0.0}


def check_policies(net: UnrolledNet) -> ValidationReport:
    """Report reachable histories for which a fixed policy has no distribution"""
    report = ValidationReport()
    last = [o(j, net.horizon) for j in range(net.model.n_agents)] if net.horizon > 0 else []
    try:
        _forward(net, last, {})
    except UnreachableHistory as exc:
        report.add(f"policy undefined on reachable history {exc.history}")
    return report


# ----------------------------------------------------------------------------
# Enumeration
# ----------------------------------------------------------------------------

def count_trajectories(net: UnrolledNet) -> int:
    """Exact number of positive-weight trajectories"""
    m = net.model
    frontier: Dict[tuple, int] = defaultdict(int)
    for state in m.initial_distribution:
        frontier[(state, net._initial_memories())] += 1
    for t in range(net.horizon):
        successor: Dict[tuple, int] = defaultdict(int)
        for (state, memories), count in frontier.items():
            for combo in itertools.product(*net._action_rows(t, memories)):
                joint_action = tuple(act for act, _ in combo)
                for nxt in m.transition(state, joint_action):
                    obs_rows = [[val for val, r in enumerate(m.observation_row(j, joint_action, nxt)) if r > 0.0]
                                for j in range(m.n_agents)]
                    for obs in itertools.product(*obs_rows):
                        memo = tuple(net._remember(j, memories[j], joint_action[j], val)
                                     for j, val in enumerate(obs))
                        successor[(nxt, memo)] += count
        frontier = successor
    return sum(frontier.values())


def enumerate_trajectories(net: UnrolledNet) -> Iterator[WeightedTrajectory]:
    """
    Depth-first generator over every positive-weight trajectory.

    Raises:
        CapExceeded: more trajectories than the net's cap
    """
    estimate = count_trajectories(net)
    if estimate > net.cap_trajectories:
        raise CapExceeded('trajectories', estimate, net.cap_trajectories)
    m = net.model

    def expand(t: int, state, memories, assignment: Dict[Node, int], weight: float):
        if t == net.horizon:
            yield WeightedTrajectory(dict(assignment), weight)
            return
        for combo in itertools.product(*net._action_rows(t, memories)):
            joint_action = tuple(act for act, _ in combo)
            w_action = weight
            for j, (act, q) in enumerate(combo):
                assignment[a(j, t)] = act
                w_action *= q
            for nxt, q in m.transition(state, joint_action).items():
                for fid, value in enumerate(nxt):
                    assignment[x(fid, t + 1)] = value
                obs_rows = [[(val, r) for val, r in enumerate(m.observation_row(j, joint_action, nxt)) if r > 0.0]
                            for j in range(m.n_agents)]
                for obs in itertools.product(*obs_rows):
                    w = w_action * q
                    new_memories = []
                    for j, (val, r) in enumerate(obs):
                        assignment[o(j, t + 1)] = val
                        w *= r
                        new_memories.append(net._remember(j, memories[j], joint_action[j], val))
                    yield from expand(t + 1, nxt, tuple(new_memories), assignment, w)

    for state, p in m.initial_distribution.items():
        assignment = {x(fid, 0): value for fid, value in enumerate(state)}
        yield from expand(0, state, net._initial_memories(), assignment, p)


def trajectory_return(m: FactoredPOSG, trajectory: WeightedTrajectory, agent: int, horizon: int) -> float:
    """Discounted return sum_t gamma^t R_i(s^t, a^t, s^{t+1}) of one trajectory"""
    values = trajectory.assignment
    total = 0.0
    for t in range(horizon):
        state = tuple(values[x(f.id, t)] for f in m.factors)
        nxt = tuple(values[x(f.id, t + 1)] for f in m.factors)
        joint_action = tuple(values[a(j, t)] for j in range(m.n_agents))
        total += (m.gamma ** t) * m.reward(agent, state, joint_action, nxt)
    return total


# ----------------------------------------------------------------------------
# D-separation
# ----------------------------------------------------------------------------

def dset_nodes(spec: DSetSpec, agent: int, stage: int) -> List[List[Node]]:
    """
    Unrolled nodes forming D^{stage}, one list per tracked entry.

    D^{t+1} is built from the local trajectory up to stage t.
    """
    t = stage - 1
    groups = []
    for tracked in spec.tracked:
        if tracked.retention == FULL_HISTORY:
            groups.append([x(tracked.variable, k) for k in range(t + 1)])
        elif tracked.retention == STAGE0_ONLY:
            groups.append([x(tracked.variable, 0)])
        elif tracked.retention == LAST_VALUE:
            groups.append([x(tracked.variable, t)])
        elif tracked.retention == OWN_ACTION:
            groups.append([a(agent, k) for k in range(t)])
        else:
            raise ValueError(f"unknown retention {tracked.retention!r}")
    return groups


def local_history_nodes(m: FactoredPOSG, agent: int, modeled, t: int) -> List[Node]:
    """x_i^t plus AOH_i^t"""
    nodes = [x(fid, t) for fid in sorted(modeled)]
    return nodes + aoh_nodes(agent, t)


def aoh_nodes(agent: int, t: int) -> List[Node]:
    nodes = []
    for k in range(t):
        nodes.append(a(agent, k))
        nodes.append(o(agent, k + 1))
    return nodes


def _disjoint(sources: Sequence[Node], shield: Sequence[Node], rest: Sequence[Node]):
    shield = list(dict.fromkeys(shield))
    shield_set = set(shield)
    sources = [n for n in dict.fromkeys(sources) if n not in shield_set]
    taken = shield_set | set(sources)
    rest = [n for n in dict.fromkeys(rest) if n not in taken]
    return sources, shield, rest


def separation_gap(joint: Mapping[tuple, float], n_sources: int, n_shield: int) -> float:
    """
    max |P(src | shield, rest) - P(src | shield)| over positive-probability (shield, rest).

    Joint keys are (sources..., shield..., rest...) tuples.
    """
    by_shield: Dict[tuple, Dict[str, Dict[tuple, float]]] = {}
    for key, p in joint.items():
        if p <= 0.0:
            continue
        src, shield, rest = key[:n_sources], key[n_sources:n_sources + n_shield], key[n_sources + n_shield:]
        group = by_shield.setdefault(shield, {'src': defaultdict(float), 'rest': defaultdict(float),
                                              'joint': defaultdict(float)})
        group['src'][src] += p
        group['rest'][rest] += p
        group['joint'][(src, rest)] += p

    gap = 0.0
    for group in by_shield.values():
        p_shield = sum(group['src'].values())
        for rest, p_rest in group['rest'].items():
            for src, p_src in group['src'].items():
                conditional = group['joint'].get((src, rest), 0.0) / p_rest
                gap = max(gap, abs(conditional - p_src / p_shield))
    return gap


@dataclass(frozen=True)
class DSepResult:
    separated: bool
    max_violation: float


@dataclass(frozen=True)
class DSepVerdict:
    separated: bool
    max_violation: float
    graph_separated: bool
    note: str = ''


def check_dsep_numeric(net: UnrolledNet, sources: Sequence[Node], shield: Sequence[Node],
                       rest: Sequence[Node], tol: float = DEFAULT_TOLERANCE) -> DSepResult:
    """Numeric conditional-independence test of sources and rest given shield"""
    sources, shield, rest = _disjoint(sources, shield, rest)
    if not sources or not rest:
        return DSepResult(True, 0.0)
    joint = query(net, sources + shield + rest)
    gap = separation_gap(joint, len(sources), len(shield))
    return DSepResult(gap <= tol, gap)


def check_dsep_graph(net: UnrolledNet, sources: Sequence[Node], shield: Sequence[Node],
                     rest: Sequence[Node]) -> bool:
    """Graphical d-separation on the unrolled net, policy edges included"""
    sources, shield, rest = _disjoint(sources, shield, rest)
    if not sources or not rest:
        return True
    test = getattr(nx, 'is_d_separator', None) or nx.d_separated
    return bool(test(net.graph, set(sources), set(rest), set(shield)))


def dsep_verdict(net: UnrolledNet, sources: Sequence[Node], shield: Sequence[Node],
                 rest: Sequence[Node], tol: float = DEFAULT_TOLERANCE) -> DSepVerdict:
    """Both verdicts; the numeric one decides"""
    graph = check_dsep_graph(net, sources, shield, rest)
    numeric = check_dsep_numeric(net, sources, shield, rest, tol)
    note = ''
    if numeric.separated and not graph:
        note = 'graph-blocked only numerically'
    elif graph and not numeric.separated:
        logger.warning("graph d-separation holds but numeric gap is %.3e", numeric.max_violation)
    return DSepVerdict(numeric.separated, numeric.max_violation, graph, note)


def influence_source_nodes(m: FactoredPOSG, links, t: int) -> List[Node]:
    """(y_w^t, AOH_w^t) nodes for the classification of one agent"""
    nodes = [x(fid, t) for fid in links.w_prev]
    for j in links.w_actions:
        nodes.extend(aoh_nodes(j, t))
    return nodes
