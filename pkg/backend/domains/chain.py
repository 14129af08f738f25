#!/usr/bin/env python3
"""
Influence Abstraction Toolkit - Chain Fixtures
A hidden chain A -> B observed through B, optionally with a persistent C correlated at stage 0
"""

from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

from ..models.builder import ModelBuilder
from ..models.model import STAGE0_ONLY, DSetSpec, LocalStateFunction, Tracked
from .base import Instance

VARIANTS = ('plain', 'correlated')


@dataclass
class ChainParams:
    """CPT entries of the chain; every probability is P(child = 1 | parents)"""
    a_persist: float = 0.9
    b_next: Dict[Tuple[int, int], float] = field(default_factory=lambda: {
        (0, 0): 0.2, (0, 1): 0.7, (1, 0): 0.4, (1, 1): 0.9})
    a0: float = 0.5
    b0_given_a0: Tuple[float, float] = (0.3, 0.8)
    c0: float = 0.5
    a0_given_c0: Tuple[float, float] = (0.2, 0.8)
    accuracy: float = 0.85
    horizon: int = 3
    gamma: float = 1.0


def _bernoulli(p: float):
    return [1.0 - p, p]


def gen_chain(variant: str = 'plain', params: Optional[ChainParams] = None) -> Instance:
    """
    Single-agent chain; the agent guesses B^{t+1} and observes B (and C in the correlated variant) noisily.

    Returns:
        Instance with d-set = full history of B (plus C at stage 0 in the correlated variant)
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown chain variant {variant!r}")
    params = params or ChainParams()
    with_c = variant == 'correlated'

    builder = ModelBuilder(f'chain-{variant}')
    a = builder.factor('A', 2)
    b = builder.factor('B', 2)
    c = builder.factor('C', 2) if with_c else None
    n_obs = 4 if with_c else 2
    builder.agent('guesser', ['guess0', 'guess1'], [f'obs{k}' for k in range(n_obs)])

    builder.cpt('A', ['A@prev'], lambda av: _bernoulli(params.a_persist if av else 1.0 - params.a_persist))
    builder.cpt('B', ['B@prev', 'A@prev'], lambda bv, av: _bernoulli(params.b_next[(bv, av)]))
    acc = params.accuracy
    if with_c:
        builder.cpt('C', ['C@prev'], lambda cv: _bernoulli(float(cv)))

        def observe(bv, cv):
            row = []
            for ob in (0, 1):
                for oc in (0, 1):
                    row.append((acc if ob == bv else 1.0 - acc) * (acc if oc == cv else 1.0 - acc))
            return row

        builder.observation('guesser', ['B@next', 'C@next'], observe)
    else:
        builder.observation('guesser', ['B@next'], lambda bv: [acc, 1.0 - acc] if bv == 0 else [1.0 - acc, acc])

    builder.reward('guesser', ['action:guesser', 'B@next'], lambda act, bv: 1.0 if act == bv else 0.0)

    if with_c:
        builder.initial('C', fn=lambda: _bernoulli(params.c0))
        builder.initial('A', ['C@same'], lambda cv: _bernoulli(params.a0_given_c0[cv]))
    else:
        builder.initial('A', fn=lambda: _bernoulli(params.a0))
    builder.initial('B', ['A@same'], lambda av: _bernoulli(params.b0_given_a0[av]))

    model = builder.build(params.horizon, params.gamma)
    modeled = frozenset({b, c}) if with_c else frozenset({b})
    lsf = LocalStateFunction({0: modeled})
    dset = DSetSpec.full_history([b])
    if with_c:
        dset = DSetSpec(dset.tracked + (Tracked(c, STAGE0_ONLY),))
    return Instance(model, lsf, dset, {}, agent=0)
