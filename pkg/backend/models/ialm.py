#!/usr/bin/env python3
"""
Influence Abstraction Toolkit - Influence-Augmented Local Model
POMDP over <local state, d-set value> driven by an influence point
"""

import itertools
import logging
import threading
from typing import Dict, List, NamedTuple, Tuple

from .errors import DSetNotSeparating
from .influence import DSetValue, InfluencePoint, d_update, initial_dval, nlaf_joint
from .model import DSetSpec, FactoredPOSG, LocalStateFunction
from .solver import Belief, BestResponsePOMDP

logger = logging.getLogger(__name__)


class AugStateL(NamedTuple):
    """Modeled factor values (sorted by factor id) plus the d-set value for the next stage"""
    local: Tuple[int, ...]
    dval: DSetValue


def initial_local_belief(m: FactoredPOSG, lsf: LocalStateFunction, i: int, dset: DSetSpec) -> Belief:
    """Marginal of the initial distribution over modeled factors, paired with D^1"""
    modeled = sorted(lsf.of(i))
    belief: Dict[AugStateL, float] = {}
    for state, p in m.initial_distribution.items():
        local = tuple(state[k] for k in modeled)
        sbar = AugStateL(local, initial_dval(dset, dict(zip(modeled, local))))
        belief[sbar] = belief.get(sbar, 0.0) + p
    return belief


class LocalFormModel(BestResponsePOMDP):
    """Lazily expanded influence-augmented local model"""

    name = 'ialm'

    def __init__(self, model: FactoredPOSG, lsf: LocalStateFunction, agent: int, ip: InfluencePoint,
                 dset: DSetSpec):
        super().__init__(model.horizon, model.gamma)
        self.model = model
        self.lsf = lsf
        self.agent = agent
        self.ip = ip
        self.dset = dset
        self.modeled = tuple(sorted(lsf.of(agent)))
        self.olaf = tuple(k for k in model.dbn.next_order if k in ip.links.olaf)
        self.nlaf = tuple(sorted(ip.links.nlaf))
        self.unreachable_lookups = 0
        self._transitions: Dict[Tuple[AugStateL, int], Dict[AugStateL, float]] = {}
        self._lock = threading.Lock()

    @property
    def num_actions(self) -> int:
        return self.model.agents[self.agent].n_actions

    @property
    def num_observations(self) -> int:
        return self.model.agents[self.agent].n_observations

    def initial_belief(self) -> Belief:
        return initial_local_belief(self.model, self.lsf, self.agent, self.dset)

    def _full(self, local: Tuple[int, ...]) -> List:
        values: List = [None] * len(self.model.factors)
        for k, value in zip(self.modeled, local):
            values[k] = value
        return values

    def _actions(self, action: int) -> List:
        actions: List = [None] * self.model.n_agents
        actions[self.agent] = action
        return actions

    def local_next(self, sbar: AugStateL, action: int) -> Dict[Tuple[int, ...], float]:
        """P(x_i^{t+1} | x_i^t, D^{t+1}, a_i): OLAF CPT product times the NLAF joint"""
        m = self.model
        stage = sbar.dval.stage
        prev = self._full(sbar.local)
        x_prev = dict(zip(self.modeled, sbar.local))
        actions = self._actions(action)
        out: Dict[Tuple[int, ...], float] = {}
        domains = [range(m.factors[k].domain_size) for k in self.olaf]
        for olaf_values in itertools.product(*domains):
            x_olaf = dict(zip(self.olaf, olaf_values))
            joint, reachable = nlaf_joint(m, self.ip, stage, x_prev, sbar.dval, x_olaf, action)
            if not reachable:
                with self._lock:
                    self.unreachable_lookups += 1
                logger.warning("unreachable influence row used at stage %d for %s", stage, sbar.dval)
            for nlaf_values, p_nlaf in joint.items():
                nxt = list(prev)
                for k, value in x_olaf.items():
                    nxt[k] = value
                for k, value in zip(self.nlaf, nlaf_values):
                    nxt[k] = value
                prob = p_nlaf
                for k in self.olaf:
                    prob *= m.dbn.factor_cpts[k].distribution(prev, nxt, actions)[nxt[k]]
                    if prob == 0.0:
                        break
                if prob > 0.0:
                    local = tuple(nxt[k] for k in self.modeled)
                    out[local] = out.get(local, 0.0) + prob
        return out

    def transition(self, sbar: AugStateL, action: int) -> Dict[AugStateL, float]:
        key = (sbar, action)
        cached = self._transitions.get(key)
        if cached is not None:
            return cached
        x_now = dict(zip(self.modeled, sbar.local))
        out: Dict[AugStateL, float] = {}
        for local, p in self.local_next(sbar, action).items():
            dval = d_update(x_now, action, dict(zip(self.modeled, local)), sbar.dval, self.dset)
            successor = AugStateL(local, dval)
            out[successor] = out.get(successor, 0.0) + p
        with self._lock:
            self._transitions.setdefault(key, out)
        return out

    def observation(self, action: int, next_state: AugStateL) -> Tuple[float, ...]:
        full = self._full(next_state.local)
        return self.model.dbn.observation_cpts[self.agent].distribution(full, full, self._actions(action))

    def reward(self, sbar: AugStateL, action: int, next_state: AugStateL) -> float:
        return self.model.rewards[self.agent].value(self._full(sbar.local), self._full(next_state.local),
                                                    self._actions(action))


def build_ialm(m: FactoredPOSG, lsf: LocalStateFunction, i: int, ip: InfluencePoint, dset: DSetSpec,
               tol: float = 1e-9) -> LocalFormModel:
    """
    Influence-augmented local model for agent i.

    Raises:
        DSetNotSeparating: the influence point records a failing stage and was not forced
        ValueError: the d-set tracks a factor agent i does not model
    """
    modeled = lsf.of(i)
    foreign = [m.factors[k].name for k in dset.factors if k not in modeled]
    if foreign:
        raise ValueError(f"d-set tracks unmodeled factors: {', '.join(foreign)}")
    if not ip.forced:
        for stage, gap in sorted(ip.gaps.items()):
            if gap > tol:
                raise DSetNotSeparating(stage, gap)
    elif ip.max_gap > tol:
        logger.warning("building a lossy IALM: d-set gap %.3e exceeds %.1e", ip.max_gap, tol)
    logger.info("IALM built for agent %s: %d modeled factors, %d NLAFs", m.agents[i].name,
                len(modeled), len(ip.links.nlaf))
    return LocalFormModel(m, lsf, i, ip, dset)


def ialm_expected_reward(pomdp: LocalFormModel, belief: Belief, action: int) -> float:
    """Closed form: sum over x, D, x' of b * P(x'|x,D,a) * R(x,a,x')"""
    reward = pomdp.model.rewards[pomdp.agent]
    actions = pomdp._actions(action)
    total = 0.0
    for sbar, p in belief.items():
        prev = pomdp._full(sbar.local)
        for local, q in pomdp.local_next(sbar, action).items():
            total += p * q * reward.value(prev, pomdp._full(local), actions)
    return total


def ialm_obs_prob(pomdp: LocalFormModel, belief: Belief, action: int) -> Tuple[float, ...]:
    """Closed form: sum over x, D, x' of b * P(x'|x,D,a) * O(o|a,x')"""
    cpt = pomdp.model.dbn.observation_cpts[pomdp.agent]
    actions = pomdp._actions(action)
    out = [0.0] * pomdp.num_observations
    for sbar, p in belief.items():
        for local, q in pomdp.local_next(sbar, action).items():
            full = pomdp._full(local)
            for obs, r in enumerate(cpt.distribution(full, full, actions)):
                out[obs] += p * q * r
    return tuple(out)
