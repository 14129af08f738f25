#!/usr/bin/env python3
"""
Influence Abstraction Toolkit - Planetary Exploration Domain
A satellite may compute a plan that speeds up a rover heading for its goal
"""

from dataclasses import dataclass
from typing import Dict, Optional

from ..models.builder import ModelBuilder
from ..models.model import DSetSpec, LocalStateFunction, Policy
from .base import Instance

NOOP, PLAN = 0, 1
STAY, MOVE = 0, 1
SATELLITE_POLICIES = ('plan_first', 'noop', 'plan_always', 'battery_aware')


@dataclass
class PlanetaryParams:
    """Planetary exploration parameters; defaults are artifact choices"""
    length: int = 4
    p_move: float = 0.5
    speedup: float = 1.8
    plan_success: float = 0.9
    drain: float = 0.5
    goal_reward: float = 1.0
    move_cost: float = -0.1
    satellite_policy: str = 'plan_first'
    horizon: int = 3
    gamma: float = 1.0

    def validate(self):
        if self.length < 2:
            raise ValueError("grid length must be at least 2")
        for name in ('p_move', 'plan_success', 'drain'):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")
        if self.speedup < 0.0:
            raise ValueError("speedup must be non-negative")
        if self.satellite_policy not in SATELLITE_POLICIES:
            raise ValueError(f"unknown satellite policy {self.satellite_policy!r}")


def _explicit_plan_first(horizon: int) -> Policy:
    """PLAN on the empty history, NOOP afterwards"""
    table: Dict[tuple, int] = {(): PLAN}
    layer = [()]
    for _ in range(1, horizon):
        layer = [h + (act, obs) for h in layer for act in (NOOP, PLAN) for obs in (0, 1)
                 if (h == () and act == PLAN) or (h != () and act == NOOP)]
        table.update({h: NOOP for h in layer})
    return Policy.deterministic(table, 2)


def satellite_policy(name: str, horizon: int) -> Policy:
    if name == 'plan_first':
        return _explicit_plan_first(horizon)
    if name == 'noop':
        return Policy.reactive({None: [1.0, 0.0], 0: [1.0, 0.0], 1: [1.0, 0.0]}, 2)
    if name == 'plan_always':
        return Policy.reactive({None: [0.0, 1.0], 0: [0.0, 1.0], 1: [0.0, 1.0]}, 2)
    if name == 'battery_aware':
        return Policy.reactive({None: [0.0, 1.0], 0: [1.0, 0.0], 1: [0.0, 1.0]}, 2)
    raise ValueError(f"unknown satellite policy {name!r}")


def gen_planetary(params: Optional[PlanetaryParams] = None) -> Instance:
    """
    Build the satellite/rover model; the rover (index 1) is the protagonist.

    Returns:
        Instance with d-set = full history of pl
    """
    params = params or PlanetaryParams()
    params.validate()
    goal = params.length - 1

    builder = ModelBuilder('planetary')
    battery = builder.factor('battery', 2)
    position = builder.factor('l2', params.length)
    planned = builder.factor('pl', 2)
    builder.agent('satellite', ['NOOP', 'PLAN'], ['battery-empty', 'battery-full'])
    builder.agent('rover', ['STAY', 'MOVE'],
                  [f'pos{p}-{flag}' for p in range(params.length) for flag in ('noplan', 'plan')])

    def battery_row(level, action):
        if level == 1 and action == PLAN:
            return [params.drain, 1.0 - params.drain]
        return [1.0 - level, float(level)]

    def plan_row(pl, action, level):
        if pl:
            return [0.0, 1.0]
        if action == PLAN and level == 1:
            return [1.0 - params.plan_success, params.plan_success]
        return [1.0, 0.0]

    def move_row(pos, action, pl):
        row = [0.0] * params.length
        if action == STAY or pos == goal:
            row[pos] = 1.0
            return row
        p = min(1.0, params.p_move * params.speedup) if pl else params.p_move
        row[pos + 1] += p
        row[pos] += 1.0 - p
        return row

    builder.cpt('battery', ['battery@prev', 'action:satellite'], battery_row)
    builder.cpt('pl', ['pl@prev', 'action:satellite', 'battery@prev'], plan_row)
    builder.cpt('l2', ['l2@prev', 'action:rover', 'pl@prev'], move_row)

    builder.observation('satellite', ['battery@next'], lambda level: [1.0 - level, float(level)])

    def rover_observation(pos, pl):
        row = [0.0] * (2 * params.length)
        row[2 * pos + pl] = 1.0
        return row

    builder.observation('rover', ['l2@next', 'pl@next'], rover_observation)

    def rover_reward(pos, action, pos_next):
        value = params.move_cost if action == MOVE else 0.0
        if pos < goal and pos_next == goal:
            value += params.goal_reward
        return value

    builder.reward('rover', ['l2@prev', 'action:rover', 'l2@next'], rover_reward)
    builder.reward('satellite', ['l2@prev', 'l2@next'],
                   lambda pos, pos_next: params.goal_reward if pos < goal and pos_next == goal else 0.0)

    builder.point('battery', 1)
    builder.point('l2', 0)
    builder.point('pl', 0)

    model = builder.build(params.horizon, params.gamma)
    everything = frozenset({battery, position, planned})
    lsf = LocalStateFunction({0: everything, 1: frozenset({position, planned})})
    dset = DSetSpec.full_history([planned])
    policies = {0: satellite_policy(params.satellite_policy, params.horizon)}
    return Instance(model, lsf, dset, policies, agent=1)
