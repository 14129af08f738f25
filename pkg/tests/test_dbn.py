"""
Influence Abstraction Toolkit - Unrolled Network Tests
Exact inference, trajectory enumeration and d-separation on small domains
"""

import unittest
import sys
from collections import defaultdict
from pathlib import Path

# Add project root to path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from backend.domains import ChainParams, gen_chain, gen_housesearch, gen_planetary
from backend.models.dbn import (
    a,
    check_dsep_graph,
    check_policies,
    count_trajectories,
    dset_nodes,
    dsep_verdict,
    enumerate_trajectories,
    local_history_nodes,
    o,
    query,
    separation_gap,
    trajectory_return,
    unroll,
    x,
)
from backend.models.errors import CapExceeded, UnreachableHistory, ZeroEvidence
from backend.models.model import DSetSpec, Policy


class TestQuery(unittest.TestCase):
    """Test cases for forward elimination"""

    def setUp(self):
        """Set up test fixtures"""
        self.inst = gen_chain('plain', ChainParams(horizon=2))
        self.m = self.inst.model
        self.net = unroll(self.m, {}, 0)
        self.A, self.B = self.m.factor_id('A'), self.m.factor_id('B')

    def test_prior_marginal(self):
        """Stage-0 marginal of B matches the initial BN"""
        result = query(self.net, [x(self.B, 0)])
        self.assertAlmostEqual(result[(1,)], 0.5 * 0.3 + 0.5 * 0.8, places=12)

    def test_one_step_marginal(self):
        """P(A^1) follows the persistence CPT"""
        result = query(self.net, [x(self.A, 1)])
        self.assertAlmostEqual(result[(1,)], 0.5 * 0.9 + 0.5 * 0.1, places=12)

    def test_posterior(self):
        """P(A^0 | B^0 = 1) by Bayes' rule"""
        result = query(self.net, [x(self.A, 0)], {x(self.B, 0): 1})
        expected = 0.5 * 0.8 / (0.5 * 0.8 + 0.5 * 0.3)
        self.assertAlmostEqual(result[(1,)], expected, places=12)
        self.assertAlmostEqual(sum(result.values()), 1.0, places=12)

    def test_query_matches_enumeration(self):
        """Query results agree with summing enumerated trajectories"""
        targets = [x(self.A, 1), x(self.B, 2)]
        evidence = {o(0, 1): 1}
        expected = defaultdict(float)
        for trajectory in enumerate_trajectories(self.net):
            values = trajectory.assignment
            if values[o(0, 1)] == 1:
                expected[tuple(values[n] for n in targets)] += trajectory.weight
        total = sum(expected.values())
        result = query(self.net, targets, evidence)
        for key, p in expected.items():
            self.assertAlmostEqual(result.get(key, 0.0), p / total, places=12)

    def test_zero_evidence(self):
        """Conditioning on an impossible event raises"""
        m = gen_planetary().model
        net = unroll(m, gen_planetary().policies, 1)
        with self.assertRaises(ZeroEvidence):
            query(net, [x(m.factor_id('pl'), 1)], {x(m.factor_id('battery'), 0): 0})

    def test_unknown_node(self):
        """Nodes beyond the horizon are rejected"""
        with self.assertRaises(KeyError):
            query(self.net, [x(self.A, 5)])


class TestEnumeration(unittest.TestCase):
    """Test cases for trajectory enumeration"""

    def test_weights_sum_to_one(self):
        """Trajectory weights form a distribution"""
        inst = gen_housesearch()
        net = unroll(inst.model, inst.policies, inst.agent, 2)
        total = sum(t.weight for t in enumerate_trajectories(net))
        self.assertAlmostEqual(total, 1.0, places=12)

    def test_count_matches_enumeration(self):
        """The exact count equals the number of enumerated trajectories"""
        inst = gen_chain('correlated', ChainParams(horizon=2))
        net = unroll(inst.model, {}, 0)
        self.assertEqual(count_trajectories(net), sum(1 for _ in enumerate_trajectories(net)))

    def test_trajectory_cap(self):
        """Enumeration refuses to start above the cap"""
        inst = gen_chain('plain')
        net = unroll(inst.model, {}, 0, cap_trajectories=10)
        with self.assertRaises(CapExceeded) as ctx:
            next(enumerate_trajectories(net))
        self.assertEqual(ctx.exception.kind, 'trajectories')

    def test_plan_return(self):
        """Expected return of an open-loop plan from trajectories"""
        inst = gen_chain('plain', ChainParams(horizon=1))
        m = inst.model
        net = unroll(m, {}, 0, plan=[1])
        value = sum(t.weight * trajectory_return(m, t, 0, 1) for t in enumerate_trajectories(net))
        p_b1 = query(net, [x(m.factor_id('B'), 1)])[(1,)]
        self.assertAlmostEqual(value, p_b1, places=12)

    def test_undefined_policy(self):
        """A policy missing a reachable history is reported"""
        inst = gen_housesearch()
        holes = {0: Policy.reactive({None: [1.0, 0.0, 0.0]}, 3)}
        net = unroll(inst.model, holes, inst.agent, 2)
        self.assertFalse(check_policies(net).ok)
        with self.assertRaises(UnreachableHistory):
            sum(1 for _ in enumerate_trajectories(net))
        self.assertTrue(check_policies(unroll(inst.model, inst.policies, inst.agent, 2)).ok)


class TestDSeparation(unittest.TestCase):
    """Test cases for numeric and graphical d-separation"""

    def setUp(self):
        """Set up test fixtures"""
        self.inst = gen_chain('plain', ChainParams(horizon=2))
        self.m = self.inst.model
        self.net = unroll(self.m, {}, 0)
        self.A, self.B = self.m.factor_id('A'), self.m.factor_id('B')

    def test_full_history_separates(self):
        """B^0..B^t separates A^t from the agent's history"""
        t = 1
        shield = [n for group in dset_nodes(self.inst.dset, 0, t + 1) for n in group]
        rest = local_history_nodes(self.m, 0, self.inst.lsf.of(0), t)
        verdict = dsep_verdict(self.net, [x(self.A, t)], shield, rest)
        self.assertTrue(verdict.separated)
        self.assertTrue(verdict.graph_separated)
        self.assertLessEqual(verdict.max_violation, 1e-9)

    def test_empty_shield_fails(self):
        """Without the d-set, A^t and B^t are dependent"""
        rest = local_history_nodes(self.m, 0, self.inst.lsf.of(0), 1)
        verdict = dsep_verdict(self.net, [x(self.A, 1)], [], rest)
        self.assertFalse(verdict.separated)
        self.assertFalse(verdict.graph_separated)
        self.assertGreater(verdict.max_violation, 1e-6)

    def test_dset_nodes(self):
        """Retention kinds select the expected unrolled nodes"""
        spec = DSetSpec.full_history([self.B], own_action=True)
        groups = dset_nodes(spec, 0, 3)
        self.assertEqual(groups[0], [x(self.B, 0), x(self.B, 1), x(self.B, 2)])
        self.assertEqual(groups[1], [a(0, 0), a(0, 1)])

    def test_graph_check_on_chain(self):
        """A^1 and B^0 are connected through A^0"""
        self.assertFalse(check_dsep_graph(self.net, [x(self.A, 1)], [], [x(self.B, 0)]))
        self.assertTrue(check_dsep_graph(self.net, [x(self.A, 1)], [x(self.A, 0)], [x(self.B, 0)]))

    def test_separation_gap_independent(self):
        """A product joint has zero gap"""
        joint = {}
        for s in (0, 1):
            for r in (0, 1):
                joint[(s, r)] = (0.3 if s else 0.7) * (0.6 if r else 0.4)
        self.assertAlmostEqual(separation_gap(joint, 1, 0), 0.0, places=12)
        joint[(1, 1)] += 0.1
        joint[(1, 0)] -= 0.1
        self.assertGreater(separation_gap(joint, 1, 0), 0.05)


def run_tests():
    """Run all tests"""
    unittest.main(verbosity=2)


if __name__ == '__main__':
    run_tests()
