#!/usr/bin/env python3
"""
Influence Abstraction Toolkit - Random Instances
Seeded two-agent factored POSGs for property tests and benchmarks
"""

import logging
from dataclasses import dataclass
from typing import List, Mapping, Optional, Sequence

import numpy as np

from ..models.builder import ModelBuilder
from ..models.influence import separation_gaps
from ..models.model import DSetSpec, FactoredPOSG, LocalStateFunction, Policy
from .base import Instance

logger = logging.getLogger(__name__)


@dataclass
class RandomParams:
    """Shape of the generated model; every probability table is Dirichlet-sampled"""
    n_factors: int = 4
    max_domain: int = 3
    n_actions: int = 2
    n_observations: int = 2
    self_loop: float = 0.8
    edge_density: float = 0.35
    isd_density: float = 0.0
    action_density: float = 0.5
    extra_modeled: float = 0.3
    max_parents: int = 3
    alpha: float = 1.0
    horizon: int = 3
    gamma: float = 1.0
    protagonist: int = 0
    shrink: bool = True
    shrink_tol: float = 1e-9

    def validate(self):
        if self.n_factors < 1:
            raise ValueError("need at least one factor")
        if self.max_domain < 2 or self.n_actions < 1 or self.n_observations < 1:
            raise ValueError("domains, actions and observations must be non-empty")
        for name in ('self_loop', 'edge_density', 'isd_density', 'action_density', 'extra_modeled'):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")
        if self.protagonist not in (0, 1):
            raise ValueError("protagonist must be agent 0 or 1")
        if self.alpha <= 0.0:
            raise ValueError("alpha must be positive")


def _limit(rng: np.random.Generator, parents: List[str], cap: int) -> List[str]:
    if len(parents) <= cap:
        return parents
    keep = sorted(rng.choice(len(parents), size=cap, replace=False))
    return [parents[k] for k in keep]


def _dirichlet(rng: np.random.Generator, sizes: Sequence[int], child_size: int, alpha: float) -> np.ndarray:
    n_rows = int(np.prod(sizes)) if len(sizes) else 1
    return rng.dirichlet(np.full(child_size, alpha), size=n_rows).ravel()


def shrink_dset(m: FactoredPOSG, lsf: LocalStateFunction, i: int, policies: Mapping[int, Policy],
                dset: DSetSpec, tol: float = 1e-9) -> DSetSpec:
    """Drop tracked entries one at a time while every stage stays separated within tol"""
    current = dset
    index = 0
    while index < len(current.tracked):
        candidate = current.without(index)
        gaps = separation_gaps(m, lsf, i, policies, candidate)
        if max(gaps.values(), default=0.0) <= tol:
            current = candidate
        else:
            index += 1
    logger.debug("d-set shrunk from %d to %d entries", len(dset.tracked), len(current.tracked))
    return current


def gen_random(params: Optional[RandomParams] = None, seed: int = 0) -> Instance:
    """
    Generate a random two-agent instance.

    Returns:
        Instance whose d-set starts as the full history of every modeled factor plus the own
        actions and is then greedily shrunk (when params.shrink is set)
    """
    params = params or RandomParams()
    params.validate()
    rng = np.random.default_rng(seed)
    me = params.protagonist
    other = 1 - me
    n = params.n_factors

    builder = ModelBuilder(f'random-{seed}')
    sizes = [int(rng.integers(2, params.max_domain + 1)) for _ in range(n)]
    for fid, size in enumerate(sizes):
        builder.factor(f'x{fid}', size)
    names = ['agent0', 'agent1']
    for name in names:
        builder.agent(name, [f'a{k}' for k in range(params.n_actions)],
                      [f'o{k}' for k in range(params.n_observations)])

    for fid in range(n):
        parents = []
        for j in range(n):
            density = params.self_loop if j == fid else params.edge_density
            if rng.random() < density:
                parents.append(f'x{j}@prev')
        # next-slice parents only from lower indices keeps the 2DBN acyclic
        parents += [f'x{j}@next' for j in range(fid) if rng.random() < params.isd_density]
        parents += [f'action:{name}' for name in names if rng.random() < params.action_density]
        parents = _limit(rng, parents, params.max_parents)
        parent_sizes = builder.parent_sizes(parents)
        builder.cpt(f'x{fid}', parents, table=_dirichlet(rng, parent_sizes, sizes[fid], params.alpha))

    observed = sorted(int(j) for j in rng.choice(n, size=min(n, int(rng.integers(1, 3))), replace=False))
    obs_parents = [f'x{j}@next' for j in observed]
    obs_sizes = builder.parent_sizes(obs_parents)
    builder.observation(names[me], obs_parents,
                        table=_dirichlet(rng, obs_sizes, params.n_observations, params.alpha))

    before, after = int(rng.integers(n)), int(rng.integers(n))
    reward_parents = [f'x{before}@prev', f'action:{names[me]}', f'x{after}@next']
    reward_sizes = builder.parent_sizes(reward_parents)
    builder.reward(names[me], reward_parents, table=rng.uniform(-1.0, 1.0, size=int(np.prod(reward_sizes))))

    other_obs = [f'x{j}@next' for j in range(n) if rng.random() < 0.5][:2] or [f'x{int(rng.integers(n))}@next']
    other_sizes = builder.parent_sizes(other_obs)
    builder.observation(names[other], other_obs,
                        table=_dirichlet(rng, other_sizes, params.n_observations, params.alpha))
    other_reward = [f'x{int(rng.integers(n))}@next', f'action:{names[other]}']
    other_reward_sizes = builder.parent_sizes(other_reward)
    builder.reward(names[other], other_reward,
                   table=rng.uniform(-1.0, 1.0, size=int(np.prod(other_reward_sizes))))

    for fid in range(n):
        parents = [f'x{j}@same' for j in range(fid) if rng.random() < params.edge_density][:2]
        parent_sizes = builder.parent_sizes(parents)
        builder.initial(f'x{fid}', parents, table=_dirichlet(rng, parent_sizes, sizes[fid], params.alpha))

    model = builder.build(params.horizon, params.gamma)

    modeled = set(observed) | {before, after}
    modeled |= {fid for fid in range(n) if rng.random() < params.extra_modeled}
    everything = frozenset(range(n))
    lsf = LocalStateFunction({me: frozenset(modeled), other: everything})

    rows = {key: tuple(rng.dirichlet(np.full(params.n_actions, params.alpha)))
            for key in [None] + list(range(params.n_observations))}
    policies = {other: Policy.reactive(rows, params.n_actions)}

    dset = DSetSpec.full_history(sorted(modeled), own_action=True)
    if params.shrink:
        dset = shrink_dset(model, lsf, me, policies, dset, params.shrink_tol)
    logger.debug("random instance seed=%d: sizes=%s modeled=%s", seed, sizes, sorted(modeled))
    return Instance(model, lsf, dset, policies, agent=me)
