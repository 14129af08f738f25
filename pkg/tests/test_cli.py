"""
Influence Abstraction Toolkit - Command Line Tests
Subcommands, report output and the exit-code contract
"""

import io
import json
import tempfile
import unittest
import sys
from contextlib import redirect_stderr, redirect_stdout
from pathlib import Path

# Add project root to path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from backend.cli.commands import EXIT_CAP, EXIT_FAILED, EXIT_OK, EXIT_USAGE, parse_node
from backend.cli.main import main
from backend.domains import gen_chain
from backend.models.dbn import Node


def run_cli(*argv):
    """Run the command line; returns (exit code, stdout, stderr)"""
    out, err = io.StringIO(), io.StringIO()
    with redirect_stdout(out), redirect_stderr(err):
        code = main(list(argv))
    return code, out.getvalue(), err.getvalue()


class TestCommands(unittest.TestCase):
    """Test cases for the subcommands on built-in domains"""

    def test_verify_passes(self):
        """verify on the chain exits 0 and reports a pass"""
        code, out, _ = run_cli('verify', '--domain', 'chain', '--format', 'json')
        self.assertEqual(code, EXIT_OK)
        data = json.loads(out)
        self.assertEqual(data['kind'], 'verify')
        self.assertTrue(data['summary']['passed'])
        self.assertLessEqual(data['summary']['value_delta'], 1e-9)
        self.assertEqual([row['stage'] for row in data['tables']['stages']], [0, 1, 2])

    def test_table_report(self):
        """The table format starts with the versioned header"""
        code, out, _ = run_cli('stats', '--domain', 'housesearch', '--format', 'table')
        self.assertEqual(code, EXIT_OK)
        self.assertTrue(out.startswith('# influence-abstraction report v1\n'))
        self.assertIn('# kind\tstats\n', out)
        self.assertIn('## stages\n', out)

    def test_solve(self):
        """solve reports both values and their difference"""
        code, out, _ = run_cli('solve', '--domain', 'planetary', '--format', 'json')
        self.assertEqual(code, EXIT_OK)
        summary = json.loads(out)['summary']
        self.assertAlmostEqual(summary['value_gfbrm'], summary['value_ialm'], delta=1e-9)
        self.assertLessEqual(summary['value_delta'], 1e-9)

    def test_solve_tree(self):
        """--tree adds the value tree of the chosen model"""
        code, out, _ = run_cli('solve', '--domain', 'chain', '--horizon', '1', '--which', 'gfbrm',
                               '--tree', '--format', 'json')
        self.assertEqual(code, EXIT_OK)
        data = json.loads(out)
        self.assertAlmostEqual(data['summary']['value_gfbrm'], 0.56, delta=1e-9)
        root = [row for row in data['tables']['value_tree'] if row['aoh'] == ''][0]
        self.assertEqual(root['best_action'], 1)

    def test_influence(self):
        """influence lists the rows of every stage and their gaps"""
        code, out, _ = run_cli('influence', '--domain', 'chain', '--format', 'json')
        self.assertEqual(code, EXIT_OK)
        data = json.loads(out)
        self.assertEqual(sorted({row['stage'] for row in data['tables']['influence']}), [1, 2, 3])
        self.assertTrue(data['summary']['factorized'])
        self.assertFalse(data['summary']['forced'])

    def test_dsep(self):
        """dsep separates the chain at every stage"""
        code, out, _ = run_cli('dsep', '--domain', 'chain', '--format', 'json')
        self.assertEqual(code, EXIT_OK)
        self.assertTrue(json.loads(out)['summary']['separated'])

    def test_query(self):
        """query answers a conditional on the unrolled network"""
        code, out, _ = run_cli('query', '--domain', 'chain', '--target', 'x:B:1',
                               '--evidence', 'x:B:0=1', '--format', 'json')
        self.assertEqual(code, EXIT_OK)
        rows = json.loads(out)['tables']['distribution']
        self.assertAlmostEqual(sum(row['probability'] for row in rows), 1.0, delta=1e-9)

    def test_human_report(self):
        """The human format lists the summary under the report kind"""
        code, out, _ = run_cli('validate', '--domain', 'housesearch-isd')
        self.assertEqual(code, EXIT_OK)
        self.assertTrue(out.startswith('validate\n'))
        self.assertIn('valid', out)


class TestModelFiles(unittest.TestCase):
    """Test cases for commands that read or write model documents"""

    def setUp(self):
        """Set up test fixtures"""
        self.tmp = tempfile.TemporaryDirectory()
        self.path = Path(self.tmp.name) / 'chain.json'

    def tearDown(self):
        """Clean up"""
        self.tmp.cleanup()

    def _write(self, mutate=None):
        code, _, _ = run_cli('gen', '--domain', 'chain', '--out', str(self.path))
        self.assertEqual(code, EXIT_OK)
        if mutate is not None:
            data = json.loads(self.path.read_text(encoding='utf-8'))
            mutate(data)
            self.path.write_text(json.dumps(data), encoding='utf-8')
        return str(self.path)

    def test_gen_to_stdout(self):
        """gen without --out prints the document"""
        code, out, _ = run_cli('gen', '--domain', 'chain-correlated')
        self.assertEqual(code, EXIT_OK)
        data = json.loads(out)
        self.assertEqual(data['format'], 'influence-model')
        self.assertEqual(data['name'], gen_chain('correlated').model.name)

    def test_generated_file_verifies(self):
        """A generated file verifies like the built-in domain"""
        code, out, _ = run_cli('verify', '--model', self._write(), '--format', 'json')
        self.assertEqual(code, EXIT_OK)
        self.assertTrue(json.loads(out)['summary']['passed'])

    def test_report_to_file(self):
        """--out writes the report instead of printing it"""
        report = Path(self.tmp.name) / 'report.json'
        code, out, _ = run_cli('dsep', '--model', self._write(), '--format', 'json', '--out', str(report))
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(out, '')
        self.assertEqual(json.loads(report.read_text(encoding='utf-8'))['kind'], 'dsep')

    def test_lossy_dset(self):
        """An empty d-set fails verify, also when the build is forced"""
        path = self._write(lambda d: d['dset'].update(guesser=[]))
        code, _, err = run_cli('verify', '--model', path)
        self.assertEqual(code, EXIT_FAILED)
        self.assertIn('check failed', err)
        code, out, _ = run_cli('verify', '--model', path, '--force', '--format', 'json')
        self.assertEqual(code, EXIT_FAILED)
        self.assertFalse(json.loads(out)['summary']['passed'])

    def test_broken_model(self):
        """validate reports violations; the other commands refuse the model"""
        def unnormalize(data):
            data['cpts'][0]['table'][0] += 0.5
        path = self._write(unnormalize)
        code, out, _ = run_cli('validate', '--model', path, '--format', 'json')
        self.assertEqual(code, EXIT_FAILED)
        self.assertFalse(json.loads(out)['summary']['valid'])
        code, _, err = run_cli('solve', '--model', path)
        self.assertEqual(code, EXIT_USAGE)
        self.assertIn('invalid model', err)

    def test_proxy_option(self):
        """A foreign observation parent needs --proxy before the model can be verified"""
        def narrow(data):
            data['lsf'] = {'guesser': ['A']}
            data['dset'].pop('guesser', None)
        path = self._write(narrow)
        code, _, err = run_cli('verify', '--model', path)
        self.assertEqual(code, EXIT_FAILED)
        self.assertIn('--proxy', err)
        code, out, _ = run_cli('verify', '--model', path, '--proxy', '--format', 'json')
        self.assertEqual(code, EXIT_OK)
        data = json.loads(out)
        self.assertTrue(data['summary']['passed'])
        self.assertIs(data['settings']['proxy'], True)

    def test_missing_file(self):
        """A missing model file is a usage error"""
        code, _, _ = run_cli('solve', '--model', str(Path(self.tmp.name) / 'absent.json'))
        self.assertEqual(code, EXIT_USAGE)


class TestDeterminism(unittest.TestCase):
    """Repeated runs on the same input print the same bytes"""

    def assertRepeatable(self, *argv):
        first = run_cli(*argv)
        second = run_cli(*argv)
        self.assertEqual(first[0], EXIT_OK)
        self.assertEqual(first[0], second[0])
        self.assertEqual(first[1].encode('utf-8'), second[1].encode('utf-8'))

    def test_verify_random(self):
        """verify on a seeded random instance"""
        self.assertRepeatable('verify', '--domain', 'random', '--seed', '3', '--format', 'table')

    def test_stats_random(self):
        """stats on a seeded random instance"""
        self.assertRepeatable('stats', '--domain', 'random', '--seed', '3', '--format', 'table')

    def test_parallel_verify(self):
        """Worker threads do not reorder the report"""
        self.assertRepeatable('verify', '--domain', 'housesearch', '--jobs', '4', '--format', 'json')


class TestExitCodes(unittest.TestCase):
    """Test cases for usage errors and resource caps"""

    def test_no_source(self):
        """Neither --model nor --domain"""
        code, _, err = run_cli('solve')
        self.assertEqual(code, EXIT_USAGE)
        self.assertIn('--model or --domain', err)

    def test_unknown_subcommand(self):
        """argparse rejects unknown subcommands"""
        with self.assertRaises(SystemExit) as ctx:
            run_cli('explain')
        self.assertEqual(ctx.exception.code, 2)

    def test_cap_exceeded(self):
        """Too many histories for the cap"""
        code, _, err = run_cli('solve', '--domain', 'housesearch', '--cap-aohs', '2')
        self.assertEqual(code, EXIT_CAP)
        self.assertIn('--cap-aohs', err)

    def test_bad_query(self):
        """Unknown node names and missing targets"""
        code, _, _ = run_cli('query', '--domain', 'chain', '--target', 'x:Z:1')
        self.assertEqual(code, EXIT_USAGE)
        code, _, _ = run_cli('query', '--domain', 'chain')
        self.assertEqual(code, EXIT_USAGE)

    def test_agent_mismatch(self):
        """Built-in domains fix the protagonist"""
        code, _, _ = run_cli('verify', '--domain', 'housesearch', '--agent', '0')
        self.assertEqual(code, EXIT_USAGE)


class TestParseNode(unittest.TestCase):
    """Test cases for node parsing"""

    def setUp(self):
        """Set up test fixtures"""
        self.model = gen_chain('plain').model

    def test_names_and_indices(self):
        """Factor and agent names or indices"""
        self.assertEqual(parse_node('x:B:2', self.model), Node('x', 1, 2))
        self.assertEqual(parse_node('x:0:0', self.model), Node('x', 0, 0))
        self.assertEqual(parse_node('a:guesser:1', self.model), Node('a', 0, 1))
        self.assertEqual(parse_node('o:0:1', self.model), Node('o', 0, 1))

    def test_malformed(self):
        """Bad kinds, stages and names"""
        for text in ('y:B:1', 'x:B', 'x:B:one', 'x:Q:1', 'x:7:1', 'x:B:-1'):
            with self.assertRaises(ValueError):
                parse_node(text, self.model)


def run_tests():
    """Run all tests"""
    unittest.main(verbosity=2)


if __name__ == '__main__':
    run_tests()
