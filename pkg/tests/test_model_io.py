"""
Influence Abstraction Toolkit - Model Document Tests
Writing and reading the JSON model format
"""

import json
import tempfile
import unittest
import sys
from pathlib import Path

# Add project root to path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from backend.domains import gen_chain, gen_housesearch, gen_planetary, gen_random
from backend.models.errors import ModelFormatError
from backend.models.model import EXPLICIT, REACTIVE
from backend.models.solver import solve
from backend.models.gfbrm import build_gfbrm
from backend.utils.model_io import (
    document_from_dict,
    document_to_dict,
    dumps_document,
    load_document,
    load_model,
    loads_document,
    save_document,
)


class TestModelDocuments(unittest.TestCase):
    """Test cases for the model document format"""

    def test_stable_text(self):
        """Loading and re-writing a document reproduces the same text"""
        for inst in (gen_chain('correlated'), gen_housesearch(isd=True), gen_planetary(), gen_random(seed=5)):
            text = dumps_document(inst.document())
            self.assertEqual(dumps_document(loads_document(text)), text)

    def test_header_fields(self):
        """Format tag, version and protagonist are written"""
        data = document_to_dict(gen_housesearch().document())
        self.assertEqual(data['format'], 'influence-model')
        self.assertEqual(data['version'], 1)
        self.assertEqual(data['protagonist'], 'robot2')
        self.assertEqual(data['lsf']['robot2'], ['f', 'l2', 'ltgt'])
        self.assertEqual([d['retention'] for d in data['dset']['robot2']], ['FullHistory'] * 3)

    def test_policy_kinds(self):
        """Explicit and reactive policies survive a round trip with their keys"""
        doc = loads_document(dumps_document(gen_planetary().document()))
        self.assertEqual(doc.policies[0].kind, EXPLICIT)
        self.assertIn((), doc.policies[0].table)
        doc = loads_document(dumps_document(gen_housesearch().document()))
        self.assertEqual(doc.policies[0].kind, REACTIVE)
        self.assertIn(None, doc.policies[0].table)

    def test_loaded_model_solves_the_same(self):
        """A loaded document gives the same optimal value"""
        inst = gen_housesearch()
        doc = loads_document(dumps_document(inst.document()))
        original = solve(build_gfbrm(inst.model, inst.policies, inst.agent)).value
        loaded = solve(build_gfbrm(doc.model, doc.others_policies(1), 1)).value
        self.assertAlmostEqual(original, loaded, delta=1e-12)

    def test_files(self):
        """save_document and load_document go through the filesystem"""
        inst = gen_chain('plain')
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'nested' / 'chain.json'
            save_document(inst.document(), path)
            self.assertTrue(path.exists())
            self.assertEqual(load_model(path).name, inst.model.name)
            self.assertEqual(dumps_document(load_document(path)), dumps_document(inst.document()))

    def test_missing_file(self):
        """Unreadable files raise the format error"""
        with self.assertRaises(ModelFormatError):
            load_document('/nonexistent/model.json')

    def test_malformed(self):
        """Broken JSON, missing fields and unknown names are rejected"""
        with self.assertRaises(ModelFormatError):
            loads_document('{"factors": [')
        data = json.loads(dumps_document(gen_chain('plain').document()))
        for mutate in (lambda d: d.pop('horizon'),
                       lambda d: d['cpts'][0].update(parents=['Z@prev']),
                       lambda d: d['dset']['guesser'][0].update(retention='Sometimes'),
                       lambda d: d['cpts'][0].update(table=['a', 'b']),
                       lambda d: d.update(format='other')):
            broken = json.loads(json.dumps(data))
            mutate(broken)
            with self.assertRaises(ModelFormatError):
                document_from_dict(broken)

    def test_optional_sections(self):
        """Policies, lsf, d-sets and protagonist may be omitted"""
        data = json.loads(dumps_document(gen_chain('plain').document()))
        for key in ('policies', 'lsf', 'dset', 'protagonist', 'rewards'):
            data.pop(key)
        doc = document_from_dict(data)
        self.assertIsNone(doc.lsf)
        self.assertEqual(doc.dsets, {})
        self.assertIsNone(doc.protagonist)


def run_tests():
    """Run all tests"""
    unittest.main(verbosity=2)


if __name__ == '__main__':
    run_tests()
