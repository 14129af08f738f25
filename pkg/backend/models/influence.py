#!/usr/bin/env python3
"""
Influence Abstraction Toolkit - Influence Points
Per-stage distributions over influence sources given the d-separating set
"""

import itertools
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, NamedTuple, Optional, Sequence, Tuple

from .dbn import (
    DEFAULT_CAP_TRAJECTORIES,
    DEFAULT_TOLERANCE,
    Node,
    _disjoint,
    aoh_nodes,
    dset_nodes,
    local_history_nodes,
    query,
    separation_gap,
    unroll,
    x,
)
from .errors import DSetNotSeparating
from .model import (
    ACTION,
    FULL_HISTORY,
    LAST_VALUE,
    OWN_ACTION,
    PREV,
    STAGE0_ONLY,
    Classification,
    DSetSpec,
    FactoredPOSG,
    LocalStateFunction,
    Policy,
    classify_factors,
)

logger = logging.getLogger(__name__)

EXACT_TOLERANCE = 1e-12


class DSetValue(NamedTuple):
    """Recorded d-set values, one tuple per tracked entry, for the stage they separate"""
    stage: int
    values: Tuple[Tuple[int, ...], ...]


class InfluenceKey(NamedTuple):
    """Row key: d-set value plus the local context intra-stage sources depend on"""
    dval: DSetValue
    x_prev: Tuple[int, ...] = ()
    own_action: Optional[int] = None
    x_next: Tuple[int, ...] = ()


def initial_dval(spec: DSetSpec, x0: Mapping[int, int]) -> DSetValue:
    """D^1 from the stage-0 local state"""
    values = []
    for tracked in spec.tracked:
        if tracked.retention == OWN_ACTION:
            values.append(())
        else:
            values.append((x0[tracked.variable],))
    return DSetValue(1, tuple(values))


def d_update(x_now: Mapping[int, int], action: int, x_next: Mapping[int, int], dval: DSetValue,
             spec: DSetSpec) -> DSetValue:
    """
    Advance D^{t+1} to D^{t+2} after acting and observing the next local state.

    Args:
        x_now: Local state at stage t (factor id -> value)
        action: Agent i's action at stage t
        x_next: Local state at stage t+1
        dval: D-set value for stage t+1
        spec: D-set specification

    Returns:
        D-set value for stage t+2
    """
    values = []
    for tracked, recorded in zip(spec.tracked, dval.values):
        if tracked.retention == FULL_HISTORY:
            values.append(recorded + (x_next[tracked.variable],))
        elif tracked.retention == LAST_VALUE:
            values.append((x_next[tracked.variable],))
        elif tracked.retention == STAGE0_ONLY:
            values.append(recorded)
        elif tracked.retention == OWN_ACTION:
            values.append(recorded + (action,))
        else:
            raise ValueError(f"unknown retention {tracked.retention!r}")
    return DSetValue(dval.stage + 1, tuple(values))


@dataclass
class InfluencePoint:
    """Influence tables for stages 1..h plus the recorded separation gaps"""
    agent: int
    dset: DSetSpec
    links: Classification
    horizon: int
    source_sizes: Tuple[int, ...]
    tables: Dict[int, Dict[InfluenceKey, Dict[tuple, float]]] = field(default_factory=dict)
    exerted: Dict[int, Dict[DSetValue, Dict[tuple, float]]] = field(default_factory=dict)
    gaps: Dict[int, float] = field(default_factory=dict)
    forced: bool = False

    @property
    def isd(self) -> bool:
        return self.links.has_intra_stage

    @property
    def max_gap(self) -> float:
        return max(self.gaps.values(), default=0.0)

    def source_values(self) -> List[tuple]:
        return list(itertools.product(*(range(size) for size in self.source_sizes)))

    def uniform_row(self) -> Dict[tuple, float]:
        values = self.source_values()
        return {u: 1.0 / len(values) for u in values}

    def row(self, stage: int, key: InfluenceKey) -> Tuple[Dict[tuple, float], bool]:
        """(distribution over u, reachable flag); missing rows are uniform and flagged"""
        table = self.tables.get(stage, {})
        found = table.get(key)
        if found is None:
            return self.uniform_row(), False
        return found, True

    def key_for(self, dval: DSetValue, x_prev: Mapping[int, int], own_action: int,
                x_next: Mapping[int, int]) -> InfluenceKey:
        if not self.isd:
            return InfluenceKey(dval)
        return InfluenceKey(
            dval,
            tuple(x_prev[k] for k in self.links.modeled_prev_v),
            own_action if self.links.own_action_indirect else None,
            tuple(x_next[k] for k in self.links.modeled_next_v),
        )


def source_sizes(m: FactoredPOSG, links: Classification) -> Tuple[int, ...]:
    return (tuple(m.factors[k].domain_size for k in links.source_prev)
            + tuple(m.agents[j].n_actions for j in links.source_actions)
            + tuple(m.factors[k].domain_size for k in links.source_next))


def _contexts(m: FactoredPOSG, links: Classification, agent: int) -> List[Tuple[tuple, Optional[int], tuple]]:
    if not links.has_intra_stage:
        return [((), None, ())]
    prev = [range(m.factors[k].domain_size) for k in links.modeled_prev_v]
    own = range(m.agents[agent].n_actions) if links.own_action_indirect else [None]
    nxt = [range(m.factors[k].domain_size) for k in links.modeled_next_v]
    return [(tuple(p), act, tuple(n))
            for p in itertools.product(*prev) for act in own for n in itertools.product(*nxt)]


class _Experience:
    """Maps exerted values (y_w^t, a_w^t) and a local context to a distribution over u"""

    def __init__(self, m: FactoredPOSG, links: Classification):
        self.m = m
        self.links = links
        self.w_prev = links.w_prev
        self.w_actions = links.w_actions
        self._cache: Dict[tuple, Dict[tuple, float]] = {}

    def __call__(self, y_w: tuple, a_w: tuple, context) -> Dict[tuple, float]:
        key = (y_w, a_w, context)
        cached = self._cache.get(key)
        if cached is not None:
            return cached
        links = self.links
        prev_values = dict(zip(self.w_prev, y_w))
        prev_values.update(zip(links.modeled_prev_v, context[0]))
        action_values = dict(zip(self.w_actions, a_w))
        if context[1] is not None:
            action_values[links.agent] = context[1]
        next_values = dict(zip(links.modeled_next_v, context[2]))

        head = tuple(prev_values[k] for k in links.source_prev) + tuple(action_values[j] for j in links.source_actions)
        partial: List[Tuple[Dict[int, int], float]] = [(next_values, 1.0)]
        for fid in links.intra_closure:
            cpt = self.m.dbn.factor_cpts[fid]
            expanded = []
            for assigned, prob in partial:
                parents = []
                for ref in cpt.parents:
                    if ref.kind == ACTION:
                        parents.append(action_values[ref.index])
                    elif ref.slice == PREV:
                        parents.append(prev_values[ref.index])
                    else:
                        parents.append(assigned[ref.index])
                for value, p in enumerate(cpt.row(parents)):
                    if p > 0.0:
                        branch = dict(assigned)
                        branch[fid] = value
                        expanded.append((branch, prob * p))
            partial = expanded

        distribution: Dict[tuple, float] = defaultdict(float)
        for assigned, prob in partial:
            distribution[head + tuple(assigned[k] for k in links.source_next)] += prob
        result = dict(distribution)
        self._cache[key] = result
        return result


def _policy_rows(policies: Mapping[int, Policy], agents: Sequence[int], histories: Sequence[tuple]):
    rows = []
    for j, history in zip(agents, histories):
        rows.append([(act, p) for act, p in enumerate(policies[j].distribution(history)) if p > 0.0])
    return itertools.product(*rows)


def _split_sources(src: tuple, n_prev: int, agents: Sequence[int], t: int) -> Tuple[tuple, List[tuple]]:
    y_w = src[:n_prev]
    histories = []
    offset = n_prev
    for _ in agents:
        histories.append(tuple(src[offset:offset + 2 * t]))
        offset += 2 * t
    return y_w, histories


def _dval_reader(spec: DSetSpec, agent: int, stage: int, shield: Sequence[Node]):
    groups = dset_nodes(spec, agent, stage)
    position = {node: k for k, node in enumerate(shield)}

    def read(shield_values: tuple) -> DSetValue:
        return DSetValue(stage, tuple(tuple(shield_values[position[n]] for n in group) for group in groups))

    return read


class _StageResult(NamedTuple):
    gap: float
    conditionals: Dict[DSetValue, Dict[tuple, float]]
    sources: List[Node]


def _stage_conditionals(m: FactoredPOSG, lsf: LocalStateFunction, links: Classification,
                        policies: Mapping[int, Policy], dset: DSetSpec, t: int, net) -> _StageResult:
    """P(y_w^t, AOH_w^t | D^{t+1}) and the separation gap, from one joint query"""
    i = links.agent
    src = [x(k, t) for k in links.w_prev]
    for j in links.w_actions:
        src.extend(aoh_nodes(j, t))
    shield = [n for group in dset_nodes(dset, i, t + 1) for n in group]
    rest = local_history_nodes(m, i, lsf.of(i), t)
    sources, shield, rest = _disjoint(src, shield, rest)
    if len(sources) != len(src):
        raise ValueError("influence sources overlap the d-set")

    joint = query(net, sources + shield + rest)
    gap = separation_gap(joint, len(sources), len(shield)) if sources and rest else 0.0

    read = _dval_reader(dset, i, t + 1, shield)
    n_src, n_shield = len(sources), len(shield)
    grouped: Dict[DSetValue, Dict[tuple, float]] = defaultdict(lambda: defaultdict(float))
    for key, p in joint.items():
        grouped[read(key[n_src:n_src + n_shield])][key[:n_src]] += p
    conditionals = {}
    for dval, rows in grouped.items():
        total = sum(rows.values())
        if total > 0.0:
            conditionals[dval] = {s: p / total for s, p in rows.items()}
    return _StageResult(gap, conditionals, sources)


def separation_gaps(m: FactoredPOSG, lsf: LocalStateFunction, i: int, policies: Mapping[int, Policy],
                    dset: DSetSpec, stages: Optional[Sequence[int]] = None,
                    cap_trajectories: int = DEFAULT_CAP_TRAJECTORIES) -> Dict[int, float]:
    """Numeric d-separation gap of the d-set per stage t+1 (all stages 1..h by default)"""
    links = classify_factors(m, lsf, i)
    net = unroll(m, policies, i, m.horizon, cap_trajectories=cap_trajectories)
    wanted = range(1, m.horizon + 1) if stages is None else stages
    return {stage: _stage_conditionals(m, lsf, links, policies, dset, stage - 1, net).gap for stage in wanted}


def _compute(m: FactoredPOSG, lsf: LocalStateFunction, i: int, policies: Mapping[int, Policy],
             dset: DSetSpec, tol: float, force: bool, cap_trajectories: int) -> InfluencePoint:
    links = classify_factors(m, lsf, i)
    point = InfluencePoint(i, dset, links, m.horizon, source_sizes(m, links), forced=force)
    net = unroll(m, policies, i, m.horizon, cap_trajectories=cap_trajectories)
    experience = _Experience(m, links)
    contexts = _contexts(m, links, i)

    for t in range(m.horizon):
        stage = t + 1
        result = _stage_conditionals(m, lsf, links, policies, dset, t, net)
        point.gaps[stage] = result.gap
        if result.gap > tol:
            if not force:
                raise DSetNotSeparating(stage, result.gap)
            logger.warning("stage %d: d-set not separating (gap %.3e), continuing lossy", stage, result.gap)

        table: Dict[InfluenceKey, Dict[tuple, float]] = {}
        exerted: Dict[DSetValue, Dict[tuple, float]] = {}
        for dval in sorted(result.conditionals):
            rows: Dict[tuple, Dict[tuple, float]] = {c: defaultdict(float) for c in contexts}
            exerted_row: Dict[tuple, float] = defaultdict(float)
            for src, p in sorted(result.conditionals[dval].items()):
                y_w, histories = _split_sources(src, len(links.w_prev), links.w_actions, t)
                for combo in _policy_rows(policies, links.w_actions, histories):
                    a_w = tuple(act for act, _ in combo)
                    weight = p
                    for _, q in combo:
                        weight *= q
                    exerted_row[(y_w, a_w)] += weight
                    for context in contexts:
                        for u, r in experience(y_w, a_w, context).items():
                            rows[context][u] += weight * r
            exerted[dval] = dict(exerted_row)
            for context, row in rows.items():
                table[InfluenceKey(dval, *context)] = dict(row)
        point.tables[stage] = table
        point.exerted[stage] = exerted
        logger.debug("stage %d: %d influence rows, gap %.3e", stage, len(table), result.gap)

    logger.info("influence for agent %d computed over %d stages (max gap %.3e)", i, m.horizon, point.max_gap)
    return point


def compute_influence(m: FactoredPOSG, lsf: LocalStateFunction, i: int, policies: Mapping[int, Policy],
                      dset: DSetSpec, tol: float = DEFAULT_TOLERANCE, force: bool = False,
                      cap_trajectories: int = DEFAULT_CAP_TRAJECTORIES) -> InfluencePoint:
    """
    Across-stage influence I^{t+1}(y_u^t, a_u^t | D^{t+1}) for every stage.

    Raises:
        ValueError: the model has intra-stage influence sources
        DSetNotSeparating: the d-set fails the numeric check and force is off
    """
    links = classify_factors(m, lsf, i)
    if links.has_intra_stage:
        raise ValueError("model has intra-stage influence sources; use compute_influence_isd")
    return _compute(m, lsf, i, policies, dset, tol, force, cap_trajectories)


def compute_influence_isd(m: FactoredPOSG, lsf: LocalStateFunction, i: int, policies: Mapping[int, Policy],
                          dset: DSetSpec, tol: float = DEFAULT_TOLERANCE, force: bool = False,
                          cap_trajectories: int = DEFAULT_CAP_TRAJECTORIES) -> InfluencePoint:
    """Influence over direct sources, conditioned on the local ancestors of intra-stage sources"""
    return _compute(m, lsf, i, policies, dset, tol, force, cap_trajectories)


def influence_for(m: FactoredPOSG, lsf: LocalStateFunction, i: int, policies: Mapping[int, Policy],
                  dset: DSetSpec, **kwargs) -> InfluencePoint:
    """Pick the across-stage or intra-stage computation from the model structure"""
    if classify_factors(m, lsf, i).has_intra_stage:
        return compute_influence_isd(m, lsf, i, policies, dset, **kwargs)
    return compute_influence(m, lsf, i, policies, dset, **kwargs)


def exerted_influence(m: FactoredPOSG, lsf: LocalStateFunction, i: int, policies: Mapping[int, Policy],
                      dset: DSetSpec, t: int, tol: float = DEFAULT_TOLERANCE, force: bool = False,
                      cap_trajectories: int = DEFAULT_CAP_TRAJECTORIES) -> Dict[DSetValue, Dict[tuple, float]]:
    """
    Exerted influence at stage t: P(y_w^t, a_w^t | D^{t+1}).

    Returns:
        d-set value -> {(y_w, a_w): probability}
    """
    links = classify_factors(m, lsf, i)
    net = unroll(m, policies, i, m.horizon, cap_trajectories=cap_trajectories)
    result = _stage_conditionals(m, lsf, links, policies, dset, t, net)
    if result.gap > tol and not force:
        raise DSetNotSeparating(t + 1, result.gap)
    table = {}
    for dval, rows in result.conditionals.items():
        merged: Dict[tuple, float] = defaultdict(float)
        for src, p in rows.items():
            y_w, histories = _split_sources(src, len(links.w_prev), links.w_actions, t)
            for combo in _policy_rows(policies, links.w_actions, histories):
                weight = p
                for _, q in combo:
                    weight *= q
                merged[(y_w, tuple(act for act, _ in combo))] += weight
        table[dval] = dict(merged)
    return table


def experienced_from_exerted(m: FactoredPOSG, links: Classification, exerted_row: Mapping[tuple, float],
                             context: Tuple[tuple, Optional[int], tuple] = ((), None, ())) -> Dict[tuple, float]:
    """Push an exerted-influence row through the intra-stage CPT product"""
    experience = _Experience(m, links)
    row: Dict[tuple, float] = defaultdict(float)
    for (y_w, a_w), p in sorted(exerted_row.items()):
        for u, r in experience(y_w, a_w, context).items():
            row[u] += p * r
    return dict(row)


# ----------------------------------------------------------------------------
# Local use of an influence point
# ----------------------------------------------------------------------------

def _nlaf_parent_values(cpt, links: Classification, x_prev: Mapping[int, int], x_next: Mapping[int, int],
                        own_action: int, u: tuple) -> List[int]:
    n_prev, n_act = len(links.source_prev), len(links.source_actions)
    source_prev = dict(zip(links.source_prev, u[:n_prev]))
    source_actions = dict(zip(links.source_actions, u[n_prev:n_prev + n_act]))
    source_next = dict(zip(links.source_next, u[n_prev + n_act:]))
    values = []
    for ref in cpt.parents:
        if ref.kind == ACTION:
            values.append(own_action if ref.index == links.agent else source_actions[ref.index])
        elif ref.slice == PREV:
            values.append(x_prev[ref.index] if ref.index in x_prev else source_prev[ref.index])
        else:
            values.append(x_next[ref.index] if ref.index in x_next else source_next[ref.index])
    return values


def nlaf_joint(m: FactoredPOSG, ip: InfluencePoint, stage: int, x_prev: Mapping[int, int], dval: DSetValue,
               x_local_next: Mapping[int, int], own_action: int) -> Tuple[Dict[tuple, float], bool]:
    """
    Joint distribution over all NLAFs at stage `stage`.

    Args:
        x_prev: Modeled factor values at stage-1
        x_local_next: OLAF values at stage (NLAF entries are enumerated)

    Returns:
        ({NLAF values in sorted id order: probability}, whether every influence row used was reachable)
    """
    links = ip.links
    nlafs = sorted(links.nlaf)
    if not nlafs:
        return {(): 1.0}, True
    reachable = True
    joint: Dict[tuple, float] = {}
    for values in itertools.product(*(range(m.factors[k].domain_size) for k in nlafs)):
        x_next = dict(x_local_next)
        x_next.update(zip(nlafs, values))
        row, found = ip.row(stage, ip.key_for(dval, x_prev, own_action, x_next))
        reachable = reachable and found
        total = 0.0
        for u, p in row.items():
            prob = p
            for k, value in zip(nlafs, values):
                cpt = m.dbn.factor_cpts[k]
                prob *= cpt.row(_nlaf_parent_values(cpt, links, x_prev, x_next, own_action, u))[value]
                if prob == 0.0:
                    break
            total += prob
        if total > 0.0:
            joint[values] = total
    return joint, reachable


def induced_cpt(m: FactoredPOSG, lsf: LocalStateFunction, i: int, ip: InfluencePoint, k: int
                ) -> Dict[Tuple[int, InfluenceKey, tuple], Tuple[float, ...]]:
    """
    Influence-marginalized CPT of one NLAF over its local parents.

    Returns:
        (stage, influence key, local parent values in CPT order) -> distribution over the NLAF
    """
    links = ip.links
    if k not in links.nlaf:
        raise ValueError(f"factor {m.factors[k].name} is not an NLAF of agent {i}")
    cpt = m.dbn.factor_cpts[k]
    sources = links.nlaf_sources[k]
    local = [(pos, ref, size) for pos, (ref, size) in enumerate(zip(cpt.parents, cpt.parent_sizes))
             if ref not in sources]
    n_prev, n_act = len(links.source_prev), len(links.source_actions)
    u_index = {}
    for pos, ref in enumerate(cpt.parents):
        if ref not in sources:
            continue
        if ref.kind == ACTION:
            u_index[pos] = n_prev + links.source_actions.index(ref.index)
        elif ref.slice == PREV:
            u_index[pos] = links.source_prev.index(ref.index)
        else:
            u_index[pos] = n_prev + n_act + links.source_next.index(ref.index)

    induced = {}
    for stage, table in sorted(ip.tables.items()):
        for key, row in table.items():
            for local_values in itertools.product(*(range(size) for _, _, size in local)):
                parents = [0] * len(cpt.parents)
                for (pos, _, _), value in zip(local, local_values):
                    parents[pos] = value
                out = [0.0] * cpt.child_size
                for u, p in row.items():
                    for pos, idx in u_index.items():
                        parents[pos] = u[idx]
                    for value, q in enumerate(cpt.row(parents)):
                        out[value] += p * q
                induced[(stage, key, tuple(local_values))] = tuple(out)
    return induced


def factorization_check(ip: InfluencePoint, links: Optional[Classification] = None,
                        tol: float = EXACT_TOLERANCE) -> bool:
    """True iff NLAF source sets are disjoint and every influence row is a product over their blocks"""
    links = links or ip.links
    nlafs = sorted(links.nlaf)
    seen = set()
    for k in nlafs:
        if seen & links.nlaf_sources[k]:
            return False
        seen |= links.nlaf_sources[k]

    n_prev, n_act = len(links.source_prev), len(links.source_actions)

    def position(ref) -> int:
        if ref.kind == ACTION:
            return n_prev + links.source_actions.index(ref.index)
        if ref.slice == PREV:
            return links.source_prev.index(ref.index)
        return n_prev + n_act + links.source_next.index(ref.index)

    blocks = [sorted(position(ref) for ref in links.nlaf_sources[k]) for k in nlafs]
    values = ip.source_values()
    for table in ip.tables.values():
        for row in table.values():
            marginals = []
            for block in blocks:
                marginal: Dict[tuple, float] = defaultdict(float)
                for u, p in row.items():
                    marginal[tuple(u[b] for b in block)] += p
                marginals.append(marginal)
            for u in values:
                product = 1.0
                for block, marginal in zip(blocks, marginals):
                    product *= marginal.get(tuple(u[b] for b in block), 0.0)
                if abs(row.get(u, 0.0) - product) > tol:
                    return False
    return True
