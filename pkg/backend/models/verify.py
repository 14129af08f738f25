#!/usr/bin/env python3
"""
Influence Abstraction Toolkit - Equivalence Verification
Per-history lemma checks and the value equivalence of GFBRM and IALM
"""

import logging
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Hashable, List, Mapping, Optional, Tuple

from .dbn import DEFAULT_CAP_TRAJECTORIES, DEFAULT_TOLERANCE
from .gfbrm import AugStateG, GlobalFormModel, build_gfbrm, gfbrm_expected_reward, gfbrm_obs_prob
from .ialm import AugStateL, LocalFormModel, build_ialm, ialm_expected_reward, ialm_obs_prob
from .influence import InfluencePoint, d_update, influence_for, initial_dval
from .model import DSetSpec, FactoredPOSG, LocalStateFunction, Policy
from .solver import (
    DEFAULT_CAP_AOHS,
    Belief,
    BestResponsePOMDP,
    belief_at,
    reachable_beliefs,
    solve,
)

logger = logging.getLogger(__name__)

History = Tuple[int, ...]
LEMMAS = ('lemma1', 'lemma2', 'lemma3', 'lemma4')


def _max_gap(left: Mapping[Hashable, float], right: Mapping[Hashable, float]) -> float:
    keys = set(left) | set(right)
    return max((abs(left.get(k, 0.0) - right.get(k, 0.0)) for k in keys), default=0.0)


class _GlobalWithDSet(BestResponsePOMDP):
    """Global-form model whose states also carry agent i's d-set value"""

    name = 'gfbrm+dset'

    def __init__(self, gfbrm: GlobalFormModel, modeled: Tuple[int, ...], dset: DSetSpec):
        super().__init__(gfbrm.horizon, gfbrm.discount)
        self.gfbrm = gfbrm
        self.modeled = modeled
        self.dset = dset

    @property
    def num_actions(self) -> int:
        return self.gfbrm.num_actions

    @property
    def num_observations(self) -> int:
        return self.gfbrm.num_observations

    def _local(self, sbar: AugStateG) -> Dict[int, int]:
        return {k: sbar.state[k] for k in self.modeled}

    def initial_belief(self) -> Belief:
        return {(sbar, initial_dval(self.dset, self._local(sbar))): p
                for sbar, p in self.gfbrm.initial_belief().items()}

    def transition(self, state, action: int):
        sbar, dval = state
        out = {}
        for nxt, p in self.gfbrm.transition(sbar, action).items():
            key = (nxt, d_update(self._local(sbar), action, self._local(nxt), dval, self.dset))
            out[key] = out.get(key, 0.0) + p
        return out

    def observation(self, action: int, next_state):
        return self.gfbrm.observation(action, next_state[0])

    def reward(self, state, action: int, next_state) -> float:
        return self.gfbrm.reward(state[0], action, next_state[0])


class LemmaChecker:
    """Compares the global-form and local-form models on one reachable history at a time"""

    def __init__(self, gfbrm: GlobalFormModel, ialm: LocalFormModel):
        self.gfbrm = gfbrm
        self.ialm = ialm
        self.modeled = ialm.modeled

    def beliefs(self, aoh: History) -> Tuple[Belief, Belief]:
        return belief_at(self.gfbrm, aoh), belief_at(self.ialm, aoh)

    def _project(self, sbar: AugStateG) -> Tuple[int, ...]:
        return tuple(sbar.state[k] for k in self.modeled)

    def pairwise_global(self, bg: Belief, action: int) -> Dict[tuple, float]:
        out: Dict[tuple, float] = defaultdict(float)
        for sbar, p in bg.items():
            here = self._project(sbar)
            for nxt, q in self.gfbrm.transition(sbar, action).items():
                out[(here, self._project(nxt))] += p * q
        return out

    def pairwise_local(self, bl: Belief, action: int) -> Dict[tuple, float]:
        out: Dict[tuple, float] = defaultdict(float)
        for sbar, p in bl.items():
            for local, q in self.ialm.local_next(sbar, action).items():
                out[(sbar.local, local)] += p * q
        return out

    def lemma1(self, bg: Belief, bl: Belief, action: int) -> float:
        """Pairwise (x^t, x^{t+1}) marginals"""
        return _max_gap(self.pairwise_global(bg, action), self.pairwise_local(bl, action))

    def lemma2(self, bg: Belief, bl: Belief, action: int) -> float:
        """Next local state marginals"""
        left: Dict[tuple, float] = defaultdict(float)
        for (_, nxt), p in self.pairwise_global(bg, action).items():
            left[nxt] += p
        right: Dict[tuple, float] = defaultdict(float)
        for (_, nxt), p in self.pairwise_local(bl, action).items():
            right[nxt] += p
        return _max_gap(left, right)

    def lemma3(self, bg: Belief, bl: Belief, action: int) -> float:
        """Expected immediate reward"""
        return abs(gfbrm_expected_reward(self.gfbrm, bg, action) - ialm_expected_reward(self.ialm, bl, action))

    def lemma4(self, bg: Belief, bl: Belief, action: int) -> float:
        """Observation probabilities"""
        left = gfbrm_obs_prob(self.gfbrm, bg, action)
        right = ialm_obs_prob(self.ialm, bl, action)
        return max((abs(p - q) for p, q in zip(left, right)), default=0.0)

    def belief_factorization(self, extended: Belief, bg: Belief, bl: Belief) -> float:
        """
        Rebuild b^g(s, theta) = sum_D b^l(x, D) b(s, theta | x, D) and compare with b^g.

        Args:
            extended: Global belief over (AugStateG, DSetValue) at the same history
        """
        marginal: Dict[tuple, float] = defaultdict(float)
        for (sbar, dval), p in extended.items():
            marginal[(self._project(sbar), dval)] += p
        rebuilt: Dict[AugStateG, float] = defaultdict(float)
        for (sbar, dval), p in extended.items():
            key = (self._project(sbar), dval)
            local = bl.get(AugStateL(*key), 0.0)
            rebuilt[sbar] += local * p / marginal[key]
        return _max_gap(rebuilt, bg)


def _checker(m: FactoredPOSG, lsf: LocalStateFunction, i: int, policies: Mapping[int, Policy],
             ip: InfluencePoint) -> LemmaChecker:
    return LemmaChecker(build_gfbrm(m, policies, i), build_ialm(m, lsf, i, ip, ip.dset))


def check_lemma1(m: FactoredPOSG, lsf: LocalStateFunction, i: int, policies: Mapping[int, Policy],
                 ip: InfluencePoint, aoh: History, action: int) -> float:
    """
    Max difference of Pr(x^t, x^{t+1}) between global and local beliefs.

    Raises:
        UnreachableHistory: aoh has probability zero in either model
    """
    checker = _checker(m, lsf, i, policies, ip)
    return checker.lemma1(*checker.beliefs(aoh), action)


def check_lemma2(m: FactoredPOSG, lsf: LocalStateFunction, i: int, policies: Mapping[int, Policy],
                 ip: InfluencePoint, aoh: History, action: int) -> float:
    checker = _checker(m, lsf, i, policies, ip)
    return checker.lemma2(*checker.beliefs(aoh), action)


def check_lemma3(m: FactoredPOSG, lsf: LocalStateFunction, i: int, policies: Mapping[int, Policy],
                 ip: InfluencePoint, aoh: History, action: int) -> float:
    checker = _checker(m, lsf, i, policies, ip)
    return checker.lemma3(*checker.beliefs(aoh), action)


def check_lemma4(m: FactoredPOSG, lsf: LocalStateFunction, i: int, policies: Mapping[int, Policy],
                 ip: InfluencePoint, aoh: History, action: int) -> float:
    checker = _checker(m, lsf, i, policies, ip)
    return checker.lemma4(*checker.beliefs(aoh), action)


def check_belief_factorization(m: FactoredPOSG, lsf: LocalStateFunction, i: int,
                               policies: Mapping[int, Policy], ip: InfluencePoint, aoh: History) -> float:
    """Reconstruction gap of the global belief from the local belief at one history"""
    checker = _checker(m, lsf, i, policies, ip)
    extended = belief_at(_GlobalWithDSet(checker.gfbrm, checker.modeled, ip.dset), aoh)
    return checker.belief_factorization(extended, *checker.beliefs(aoh))


@dataclass
class HistoryRecord:
    aoh: History
    stage: int
    lemma1: float
    lemma2: float
    lemma3: float
    lemma4: float
    q_delta: float
    belief_gap: float

    @property
    def worst(self) -> float:
        return max(self.lemma1, self.lemma2, self.lemma3, self.lemma4, self.q_delta, self.belief_gap)


@dataclass
class StageSummary:
    stage: int
    histories: int
    lemma1: float
    lemma2: float
    lemma3: float
    lemma4: float
    q_delta: float
    belief_gap: float


@dataclass
class StageStatistics:
    """Per-stage sizes of both models' reachable belief trees"""
    stage: int
    gfbrm_histories: int
    ialm_histories: int
    gfbrm_support: int
    ialm_support: int
    gfbrm_states: int
    ialm_states: int


@dataclass
class EquivalenceReport:
    agent: int
    horizon: int
    tolerance: float
    value_global: float
    value_local: float
    records: List[HistoryRecord] = field(default_factory=list)
    stages: List[StageSummary] = field(default_factory=list)
    unmatched_histories: List[History] = field(default_factory=list)
    unreachable_lookups: int = 0
    separation_gaps: Dict[int, float] = field(default_factory=dict)
    statistics: List[StageStatistics] = field(default_factory=list)

    @property
    def value_delta(self) -> float:
        return abs(self.value_global - self.value_local)

    def max_delta(self, name: str) -> float:
        return max((getattr(r, name) for r in self.records), default=0.0)

    @property
    def passed(self) -> bool:
        worst = max([self.value_delta] + [r.worst for r in self.records])
        return worst <= self.tolerance and self.unreachable_lookups == 0 and not self.unmatched_histories

    def first_failing_stage(self) -> Optional[int]:
        for summary in self.stages:
            if max(summary.lemma1, summary.lemma2, summary.lemma3, summary.lemma4,
                   summary.q_delta, summary.belief_gap) > self.tolerance:
                return summary.stage
        return None


def stage_summary(records: List[HistoryRecord]) -> List[StageSummary]:
    grouped: Dict[int, List[HistoryRecord]] = defaultdict(list)
    for record in records:
        grouped[record.stage].append(record)
    summaries = []
    for stage in sorted(grouped):
        rows = grouped[stage]
        summaries.append(StageSummary(
            stage=stage,
            histories=len(rows),
            lemma1=max(r.lemma1 for r in rows),
            lemma2=max(r.lemma2 for r in rows),
            lemma3=max(r.lemma3 for r in rows),
            lemma4=max(r.lemma4 for r in rows),
            q_delta=max(r.q_delta for r in rows),
            belief_gap=max(r.belief_gap for r in rows),
        ))
    return summaries


def model_statistics(gfbrm: BestResponsePOMDP, ialm: BestResponsePOMDP,
                     cap_aohs: int = DEFAULT_CAP_AOHS) -> List[StageStatistics]:
    """Reachable histories, summed belief support and distinct states per stage for both models"""

    def per_stage(pomdp):
        counts: Dict[int, List] = defaultdict(lambda: [0, 0, set()])
        for history, belief in reachable_beliefs(pomdp, cap_aohs).items():
            entry = counts[len(history) // 2]
            entry[0] += 1
            entry[1] += len(belief)
            entry[2].update(belief)
        return counts

    glob, loc = per_stage(gfbrm), per_stage(ialm)
    rows = []
    for stage in sorted(set(glob) | set(loc)):
        rows.append(StageStatistics(stage, glob[stage][0], loc[stage][0], glob[stage][1], loc[stage][1],
                                    len(glob[stage][2]), len(loc[stage][2])))
    return rows


def check_theorem(m: FactoredPOSG, lsf: LocalStateFunction, i: int, policies: Mapping[int, Policy],
                  dset: DSetSpec, tol: float = DEFAULT_TOLERANCE, force: bool = False, jobs: int = 1,
                  cap_aohs: int = DEFAULT_CAP_AOHS,
                  cap_trajectories: int = DEFAULT_CAP_TRAJECTORIES) -> EquivalenceReport:
    """
    Solve both best-response models and run every lemma check at every common reachable history.

    Raises:
        DSetNotSeparating: the d-set fails the numeric check and force is off
        CapExceeded: a resource cap is exceeded
    """
    ip = influence_for(m, lsf, i, policies, dset, tol=tol, force=force, cap_trajectories=cap_trajectories)
    gfbrm = build_gfbrm(m, policies, i)
    ialm = build_ialm(m, lsf, i, ip, dset, tol=tol)
    tree_g = solve(gfbrm, cap_aohs)
    tree_l = solve(ialm, cap_aohs)

    checker = LemmaChecker(gfbrm, ialm)
    extended = reachable_beliefs(_GlobalWithDSet(gfbrm, ialm.modeled, dset), cap_aohs)
    common = sorted(set(tree_g.nodes) & set(tree_l.nodes), key=lambda h: (len(h), h))
    unmatched = sorted(set(tree_g.nodes) ^ set(tree_l.nodes), key=lambda h: (len(h), h))

    def check(aoh: History) -> HistoryRecord:
        node_g, node_l = tree_g.nodes[aoh], tree_l.nodes[aoh]
        bg, bl = node_g.belief, node_l.belief
        deltas = {name: 0.0 for name in LEMMAS}
        for action in range(gfbrm.num_actions):
            deltas['lemma1'] = max(deltas['lemma1'], checker.lemma1(bg, bl, action))
            deltas['lemma2'] = max(deltas['lemma2'], checker.lemma2(bg, bl, action))
            deltas['lemma3'] = max(deltas['lemma3'], checker.lemma3(bg, bl, action))
            deltas['lemma4'] = max(deltas['lemma4'], checker.lemma4(bg, bl, action))
        q_delta = max((abs(p - q) for p, q in zip(node_g.q_values, node_l.q_values)), default=0.0)
        belief_gap = checker.belief_factorization(extended[aoh], bg, bl) if aoh in extended else 0.0
        return HistoryRecord(aoh, len(aoh) // 2, q_delta=q_delta, belief_gap=belief_gap, **deltas)

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        records = list(pool.map(check, common))

    report = EquivalenceReport(
        agent=i,
        horizon=m.horizon,
        tolerance=tol,
        value_global=tree_g.value,
        value_local=tree_l.value,
        records=records,
        stages=stage_summary(records),
        unmatched_histories=unmatched,
        unreachable_lookups=ialm.unreachable_lookups,
        separation_gaps=dict(ip.gaps),
        statistics=model_statistics(gfbrm, ialm, cap_aohs),
    )
    logger.info("verification for agent %d: %s (|dV|=%.3e, first failing stage %s)", i,
                'PASS' if report.passed else 'FAIL', report.value_delta, report.first_failing_stage())
    return report
