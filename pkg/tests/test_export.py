"""
Influence Abstraction Toolkit - Report Export Tests
"""

import json
import unittest
import sys
from pathlib import Path

# Add project root to path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from backend.utils.export_manager import ExportManager, Report


class TestExportManager(unittest.TestCase):
    """Test cases for report rendering"""

    def setUp(self):
        """Set up test fixtures"""
        self.report = Report('verify', settings=ExportManager.settings_of({'tol': 1e-9, 'jobs': 2}))
        self.report.summary.update({'passed': True, 'value_delta': 1.0 / 3.0})
        self.report.add_table('stages', ExportManager.frame([[0, 1, 0.0], [1, 4, 2.5e-13]],
                                                            ['stage', 'histories', 'lemma1']))

    def test_header(self):
        """Versioned title, kind and sorted settings"""
        lines = ExportManager.header(self.report, 2).splitlines()
        self.assertEqual(lines[0], '# influence-abstraction report v2')
        self.assertEqual(lines[1], '# kind\tverify')
        self.assertEqual(lines[2:], ['# setting\tjobs\t2', '# setting\ttol\t1e-09'])

    def test_table_document(self):
        """Summary lines followed by tab-separated tables"""
        text = ExportManager.to_table_document(self.report)
        self.assertIn('summary\tpassed\tTrue\n', text)
        self.assertIn('summary\tvalue_delta\t0.333333333333\n', text)
        self.assertIn('## stages\nstage\thistories\tlemma1\n', text)
        self.assertIn('1\t4\t2.5e-13\n', text)

    def test_json(self):
        """JSON carries the same content with rounded floats"""
        data = json.loads(ExportManager.to_json(self.report))
        self.assertEqual(data['report'], 'influence-abstraction report')
        self.assertEqual(data['kind'], 'verify')
        self.assertEqual(data['settings'], {'jobs': 2, 'tol': 1e-9})
        self.assertIs(data['summary']['passed'], True)
        self.assertEqual(data['summary']['value_delta'], 0.333333333333)
        self.assertEqual(data['tables']['stages'][1], {'stage': 1, 'histories': 4, 'lemma1': 2.5e-13})

    def test_json_version(self):
        """The requested version is written, defaulting to the current one"""
        self.assertEqual(json.loads(ExportManager.to_json(self.report))['version'], 1)
        self.assertEqual(json.loads(ExportManager.to_json(self.report, 2))['version'], 2)
        self.assertEqual(json.loads(ExportManager.render(self.report, 'json', version=3))['version'], 3)

    def test_human(self):
        """Aligned summary and indented tables"""
        text = ExportManager.to_human(self.report)
        self.assertTrue(text.startswith('verify\n  passed       True\n'))
        self.assertIn('\nstages\n', text)

    def test_empty_table(self):
        """Empty tables keep their columns"""
        self.report.add_table('violations', ExportManager.frame([], ['violation']))
        self.assertIn('(empty)', ExportManager.to_human(self.report))
        self.assertIn('## violations\nviolation\n', ExportManager.to_table_document(self.report))
        self.assertEqual(json.loads(ExportManager.to_json(self.report))['tables']['violations'], [])

    def test_render(self):
        """render dispatches on the format name"""
        self.assertEqual(ExportManager.render(self.report, 'json'), ExportManager.to_json(self.report))
        self.assertEqual(ExportManager.render(self.report), ExportManager.to_human(self.report))
        with self.assertRaises(ValueError):
            ExportManager.render(self.report, 'xml')


def run_tests():
    """Run all tests"""
    unittest.main(verbosity=2)


if __name__ == '__main__':
    run_tests()
