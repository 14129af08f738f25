"""
Influence Abstraction Toolkit - Model Tests
Validation, local-form checks, factor classification and proxy rewriting
"""

import unittest
import sys
from collections import defaultdict
from pathlib import Path

# Add project root to path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from backend.domains import gen_chain, gen_housesearch, gen_planetary
from backend.models.builder import ModelBuilder
from backend.models.dbn import enumerate_trajectories, trajectory_return, unroll, x
from backend.models.errors import InfluenceOnObservationOrReward, ModelFormatError, ModelValidationError
from backend.models.gfbrm import build_gfbrm
from backend.models.model import (
    DSetSpec,
    LocalStateFunction,
    Policy,
    classify_factors,
    proxy_rewrite,
    validate_lfm,
    validate_model,
    validate_policy,
)
from backend.models.solver import solve
from backend.models.verify import check_theorem

FACTOR_KIND = x(0, 0).kind


def _small_builder():
    """Two binary factors, one agent observing Y"""
    builder = ModelBuilder('small')
    builder.factor('X', 2)
    builder.factor('Y', 2)
    builder.agent('solo', ['a0', 'a1'], ['o0', 'o1'])
    builder.cpt('X', ['X@prev'], lambda xv: [0.9, 0.1] if xv == 0 else [0.1, 0.9])
    builder.observation('solo', ['Y@next'], lambda yv: [0.8, 0.2] if yv == 0 else [0.2, 0.8])
    builder.reward('solo', ['action:solo', 'Y@next'], lambda act, yv: float(act == yv))
    builder.initial('X', table=[0.5, 0.5])
    builder.initial('Y', ['X@same'], lambda xv: [0.7, 0.3] if xv == 0 else [0.3, 0.7])
    return builder


def trajectory_weights(model, n_factors: int):
    """Trajectory probabilities over the first n_factors factors, the actions and the observations"""
    weights = defaultdict(float)
    for traj in enumerate_trajectories(unroll(model, {}, 0)):
        key = tuple(sorted((node, value) for node, value in traj.assignment.items()
                           if node.kind != FACTOR_KIND or node.index < n_factors))
        weights[key] += traj.weight
    return weights


def expected_return(model) -> float:
    return sum(traj.weight * trajectory_return(model, traj, 0, model.horizon)
               for traj in enumerate_trajectories(unroll(model, {}, 0)))


class TestValidateModel(unittest.TestCase):
    """Test cases for structural validation"""

    def test_well_formed_domains(self):
        """Every built-in domain validates cleanly"""
        for inst in (gen_chain('plain'), gen_chain('correlated'), gen_housesearch(), gen_housesearch(isd=True),
                     gen_planetary()):
            report = validate_model(inst.model)
            self.assertTrue(report.ok, msg=f"{inst.model.name}: {report.violations}")

    def test_row_not_normalized(self):
        """A CPT row summing to 0.9 is reported"""
        builder = _small_builder()
        builder.cpt('Y', ['Y@prev', 'X@prev'], table=[0.5, 0.4, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5])
        report = validate_model(builder.build(2))
        self.assertFalse(report.ok)
        self.assertTrue(any('row not normalized' in v and 'row 0' in v for v in report.violations))

    def test_cycle_detected(self):
        """Intra-slice cycles are reported with the offending path"""
        builder = _small_builder()
        builder.cpt('X', ['Y@next'], lambda yv: [0.5, 0.5])
        builder.cpt('Y', ['X@next'], lambda xv: [0.5, 0.5])
        report = validate_model(builder.build(2))
        self.assertFalse(report.ok)
        self.assertTrue(any(v.startswith('cyclic 2DBN') for v in report.violations))

    def test_missing_cpt(self):
        """A factor without a next-slice CPT is reported"""
        report = validate_model(_small_builder().build(2))
        self.assertIn('missing CPT for factor Y', report.violations)

    def test_missing_initial(self):
        """Every factor must appear exactly once in the initial BN"""
        builder = ModelBuilder('no-initial')
        builder.factor('X', 2)
        builder.agent('solo', ['a0'], ['o0'])
        builder.cpt('X', ['X@prev'], lambda xv: [1.0 - xv, float(xv)])
        builder.observation('solo', [], lambda: [1.0])
        report = validate_model(builder.build(1))
        self.assertIn('initial BN must cover factor X exactly once', report.violations)

    def test_raise_if_invalid(self):
        """Report-style results convert to the validation error"""
        report = validate_model(_small_builder().build(2))
        with self.assertRaises(ModelValidationError) as ctx:
            report.raise_if_invalid()
        self.assertEqual(ctx.exception.violations, report.violations)

    def test_unknown_parent(self):
        """Parent strings naming unknown factors are rejected while building"""
        builder = _small_builder()
        with self.assertRaises(ModelFormatError):
            builder.cpt('Y', ['Z@prev'], lambda zv: [0.5, 0.5])
        with self.assertRaises(ModelFormatError):
            builder.cpt('Y', ['Y@later'], lambda yv: [0.5, 0.5])


class TestPolicies(unittest.TestCase):
    """Test cases for fixed policies"""

    def test_reactive_keys(self):
        """Reactive policies read the last observation only"""
        policy = Policy.reactive({None: [1.0, 0.0], 0: [0.0, 1.0], 1: [0.5, 0.5]}, 2)
        self.assertEqual(policy.distribution(()), (1.0, 0.0))
        self.assertEqual(policy.distribution((1, 0)), (0.0, 1.0))
        self.assertEqual(policy.distribution((1, 0, 0, 1)), (0.5, 0.5))

    def test_validate_policy(self):
        """Wrong sizes and non-normalized entries are reported"""
        m = gen_chain('plain').model
        self.assertTrue(validate_policy(m, 0, Policy.uniform(2)).ok)
        self.assertFalse(validate_policy(m, 0, Policy.uniform(3)).ok)
        self.assertFalse(validate_policy(m, 0, Policy.reactive({None: [0.6, 0.6]}, 2)).ok)


class TestLocalForm(unittest.TestCase):
    """Test cases for local-form checks and classification"""

    def test_chain_classification(self):
        """In the chain, B is the only NLAF and A the only NMF"""
        inst = gen_chain('plain')
        m = inst.model
        links = classify_factors(m, inst.lsf, 0)
        a, b = m.factor_id('A'), m.factor_id('B')
        self.assertEqual(links.nlaf, frozenset({b}))
        self.assertEqual(links.olaf, frozenset())
        self.assertEqual(links.nmf, frozenset({a}))
        self.assertEqual(links.source_prev, (a,))
        self.assertEqual(links.source_actions, ())
        self.assertFalse(links.has_intra_stage)

    def test_housesearch_classification(self):
        """For robot2, f is influenced by l1 and l2 is only locally affected"""
        inst = gen_housesearch()
        m = inst.model
        links = classify_factors(m, inst.lsf, inst.agent)
        self.assertEqual(links.nlaf, frozenset({m.factor_id('f')}))
        self.assertEqual(links.olaf, frozenset({m.factor_id('l2'), m.factor_id('ltgt')}))
        self.assertEqual(links.source_prev, (m.factor_id('l1'),))

    def test_isd_classification(self):
        """Same-stage detection makes l1 an intra-stage source driven by robot1's action"""
        inst = gen_housesearch(isd=True)
        m = inst.model
        links = classify_factors(m, inst.lsf, inst.agent)
        self.assertTrue(links.has_intra_stage)
        self.assertEqual(links.source_next, (m.factor_id('l1'),))
        self.assertEqual(links.indirect_prev, (m.factor_id('l1'),))
        self.assertEqual(links.indirect_actions, (0,))
        self.assertEqual(links.w_actions, (0,))

    def test_planetary_classification(self):
        """The rover's pl is influenced through the satellite's action and battery"""
        inst = gen_planetary()
        m = inst.model
        links = classify_factors(m, inst.lsf, inst.agent)
        self.assertEqual(links.nlaf, frozenset({m.factor_id('pl')}))
        self.assertEqual(links.source_prev, (m.factor_id('battery'),))
        self.assertEqual(links.source_actions, (0,))

    def test_classification_partitions(self):
        """OLAF, NLAF and NMF partition the factors"""
        inst = gen_housesearch()
        links = classify_factors(inst.model, inst.lsf, inst.agent)
        everything = frozenset(f.id for f in inst.model.factors)
        self.assertEqual(links.olaf | links.nlaf | links.nmf, everything)
        self.assertFalse(links.olaf & links.nlaf)
        self.assertFalse(links.modeled & links.nmf)

    def test_lfm_violation(self):
        """Observing an unmodeled factor breaks the local form"""
        inst = gen_chain('plain')
        lsf = LocalStateFunction({0: frozenset({inst.model.factor_id('A')})})
        report = validate_lfm(inst.model, lsf, 0)
        self.assertFalse(report.ok)
        self.assertIn('observation-relevant factor B not modeled', report.violations)
        with self.assertRaises(InfluenceOnObservationOrReward):
            classify_factors(inst.model, lsf, 0)

    def test_proxy_rewrite(self):
        """Proxies restore the local form without changing the observation model"""
        inst = gen_chain('plain')
        m = inst.model
        lsf = LocalStateFunction({0: frozenset({m.factor_id('A')})})
        rewritten, proxied = proxy_rewrite(m, lsf, 0)
        self.assertTrue(validate_model(rewritten).ok)
        self.assertTrue(validate_lfm(rewritten, proxied, 0).ok)
        self.assertEqual(len(rewritten.factors), len(m.factors) + 2)
        classify_factors(rewritten, proxied, 0)

    def test_proxy_rewrite_preserves_trajectories(self):
        """Every trajectory over the original variables keeps its probability"""
        m, rewritten, _ = self._proxied_chain()
        n = len(m.factors)
        before, after = trajectory_weights(m, n), trajectory_weights(rewritten, n)
        self.assertEqual(set(before), set(after))
        for key, weight in before.items():
            self.assertAlmostEqual(after[key], weight, delta=1e-12)

    def test_proxy_rewrite_preserves_reward(self):
        """The expected return is read off the proxy without change"""
        m, rewritten, _ = self._proxied_chain()
        self.assertAlmostEqual(expected_return(rewritten), expected_return(m), delta=1e-12)

    def test_proxy_rewrite_equivalence(self):
        """The rewritten model passes the equivalence check with its full local history"""
        m, rewritten, proxied = self._proxied_chain()
        dset = DSetSpec.full_history(sorted(proxied.of(0)), own_action=True)
        report = check_theorem(rewritten, proxied, 0, {}, dset)
        self.assertTrue(report.passed)
        self.assertAlmostEqual(report.value_global, solve(build_gfbrm(m, {}, 0)).value, delta=1e-9)

    @staticmethod
    def _proxied_chain():
        m = gen_chain('plain').model
        lsf = LocalStateFunction({0: frozenset({m.factor_id('A')})})
        rewritten, proxied = proxy_rewrite(m, lsf, 0)
        return m, rewritten, proxied

    def test_proxy_rewrite_noop(self):
        """Nothing is rewritten when the local form already holds"""
        inst = gen_chain('plain')
        rewritten, lsf = proxy_rewrite(inst.model, inst.lsf, 0)
        self.assertIs(rewritten, inst.model)
        self.assertIs(lsf, inst.lsf)


class TestInitialDistribution(unittest.TestCase):
    """Test cases for the stage-0 distribution"""

    def test_chain_initial(self):
        """The initial BN sweep multiplies A and B given A"""
        m = gen_chain('plain').model
        dist = m.initial_distribution
        self.assertAlmostEqual(sum(dist.values()), 1.0, places=12)
        self.assertAlmostEqual(dist[(1, 1)], 0.5 * 0.8, places=12)
        self.assertAlmostEqual(dist[(0, 1)], 0.5 * 0.3, places=12)

    def test_transition_normalized(self):
        """Every transition row sums to one"""
        m = gen_housesearch(isd=True).model
        for state in m.initial_distribution:
            for a1 in range(m.agents[0].n_actions):
                for a2 in range(m.agents[1].n_actions):
                    total = sum(m.transition(state, (a1, a2)).values())
                    self.assertAlmostEqual(total, 1.0, places=12)


def run_tests():
    """Run all tests"""
    unittest.main(verbosity=2)


if __name__ == '__main__':
    run_tests()
