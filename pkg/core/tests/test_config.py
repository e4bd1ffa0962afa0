import copy
import json
import math
import tempfile
from pathlib import Path

import numpy as np
from django.conf import settings
from django.test import SimpleTestCase
from rest_framework.exceptions import ValidationError

from core.config.casestudy import TAU, casestudy_config
from core.config.schema import (
    MatrixField,
    ProjectConfigSerializer,
    VectorField,
    dump_config,
    expand_matrix,
    load_config,
)
from core.exceptions import ConfigInvalid
from core.speclang.labeling import LabeledPartition, PropositionLabeling


class MatrixGeneratorTests(SimpleTestCase):
    """Generator documents expanded into arrays."""

    def test_literals(self):
        """Test nested lists and scalars become 2-D arrays."""
        np.testing.assert_array_equal(expand_matrix([[1, 2], [3, 4]]), [[1.0, 2.0], [3.0, 4.0]])
        self.assertEqual(expand_matrix(2.5).shape, (1, 1))

    def test_basic_generators(self):
        """Test identity, zeros, ones, unit rows and scaling."""
        np.testing.assert_array_equal(expand_matrix({'generator': 'identity', 'n': 2}), np.eye(2))
        self.assertEqual(expand_matrix({'generator': 'zeros', 'rows': 2, 'cols': 3}).shape, (2, 3))
        np.testing.assert_array_equal(expand_matrix({'generator': 'ones', 'rows': 2}), [[1.0], [1.0]])
        np.testing.assert_array_equal(expand_matrix({'generator': 'unit_row', 'size': 3, 'index': 1}), [[0, 1, 0]])
        scaled = expand_matrix({'generator': 'scaled', 'factor': -0.5, 'of': {'generator': 'identity', 'n': 2}})
        np.testing.assert_array_equal(scaled, -0.5 * np.eye(2))

    def test_block_diag(self):
        """Test blocks are stacked along the diagonal."""
        M = expand_matrix({'generator': 'block_diag', 'blocks': [[[1.0]], {'generator': 'ones', 'rows': 2}]})
        np.testing.assert_array_equal(M, [[1.0, 0.0], [0.0, 1.0], [0.0, 1.0]])

    def test_consensus(self):
        """Test the consensus coupling with a fixed step and with a gain."""
        fixed = expand_matrix({'generator': 'consensus', 'graph': 'complete', 'n': 4, 'tau': 0.1})
        np.testing.assert_allclose(fixed, -0.1 * (4 * np.eye(4) - np.ones((4, 4))))
        gained = expand_matrix({'generator': 'consensus', 'graph': 'path', 'n': 3, 'tau_gain': 0.5})
        self.assertAlmostEqual(gained[1, 1], -0.5)

    def test_generator_errors(self):
        """Test unknown generators and bad parameters raise ValueError."""
        bad = [
            {'generator': 'spiral', 'n': 2},
            {'generator': 'unit_row', 'size': 2, 'index': 2},
            {'generator': 'block_diag', 'blocks': []},
            {'generator': 'consensus', 'graph': 'complete', 'n': 3},
            {'generator': 'consensus', 'graph': 'ring', 'n': 3, 'tau': 0.1},
            'identity',
        ]
        for spec in bad:
            with self.assertRaises(ValueError):
                expand_matrix(spec)


class FieldTests(SimpleTestCase):

    def test_vector_fill(self):
        """Test a fill document expands into a constant vector."""
        vector = VectorField().to_internal_value({'fill': -13, 'size': 4})
        np.testing.assert_array_equal(vector, [-13.0] * 4)

    def test_field_errors(self):
        """Test malformed fields report a validation error."""
        with self.assertRaises(ValidationError):
            VectorField().to_internal_value([1.0, float('nan')])
        with self.assertRaises(ValidationError):
            MatrixField().to_internal_value({'generator': 'identity'})


class LoadConfigTests(SimpleTestCase):
    """Validation of whole project documents."""

    def setUp(self):
        self.document = casestudy_config(block_size=3, trials=50, seed=4)

    def test_casestudy_document(self):
        """Test the reduced case study loads with its three rooms."""
        config = load_config(self.document)
        self.assertEqual(config.name, 'casestudy-n3')
        self.assertEqual([s.name for s in config.subsystems], ['room1', 'room2', 'room3'])
        self.assertEqual(config.subsystems[0].abstract.name, 'room1-abstract')
        self.assertEqual(config.coupling.shape, (9, 9))
        self.assertAlmostEqual(-config.coupling[0, 1], TAU)
        self.assertEqual(config.initial.x0.size, 9)
        self.assertEqual((config.mc.trials, config.mc.seed), (50, 4))
        self.assertIsInstance(config.spec.labeling(), PropositionLabeling)
        self.assertEqual(len(config.spec.alphabet()), 64)
        self.assertIsInstance(config.policy.build(config.abstract_network(np.zeros((3, 3)))).waypoints, np.ndarray)

    def test_dump_reloads_to_same_document(self):
        """Test dumping expands generators into a document that reloads unchanged."""
        dumped = dump_config(load_config(self.document))
        self.assertIsInstance(dumped['coupling'], list)
        self.assertEqual(dump_config(load_config(dumped)), dumped)
        self.assertEqual(dumped['subsystems'][0]['concrete']['phi']['kind'], 'sine')

    def test_partition_spec(self):
        """Test a partition labeling is accepted in place of propositions."""
        document = copy.deepcopy(self.document)
        document['spec'] = {
            'formula': 'a U b',
            'partition': {'regions': {'a': [[[-20, 0], [-20, 20], [-20, 20]]], 'b': [[[1, 20], [-20, 20], [-20, 20]]]},
                          'default': 'c'},
            'epsilon': 0.5,
            'horizon': 5,
        }
        config = load_config(document)
        self.assertIsInstance(config.spec.labeling(), LabeledPartition)
        self.assertEqual(set(config.spec.alphabet()), {'a', 'b', 'c'})

    def test_infinite_slope_roundtrip(self):
        """Test an unbounded sector is written back as "inf"."""
        document = copy.deepcopy(self.document)
        document['subsystems'][0]['concrete']['phi']['slope_bound'] = 'inf'
        config = load_config(document)
        self.assertTrue(math.isinf(config.subsystems[0].concrete.phi.slope_bound))
        self.assertEqual(dump_config(config)['subsystems'][0]['concrete']['phi']['slope_bound'], 'inf')

    def assertInvalid(self, document, fragment):
        with self.assertRaises(ConfigInvalid) as caught:
            load_config(document)
        self.assertIn(fragment, str(caught.exception))

    def test_weight_errors(self):
        """Test weight count and sign are validated."""
        document = copy.deepcopy(self.document)
        document['mu'] = [1.0, 1.0]
        self.assertInvalid(document, 'mu has 2 entries')
        document['mu'] = [1.0, -1.0, 1.0]
        self.assertInvalid(document, 'mu')

    def test_section_errors(self):
        """Test broken sections name the offending field."""
        document = copy.deepcopy(self.document)
        document['coupling'] = {'generator': 'spiral'}
        self.assertInvalid(document, 'coupling')

        document = copy.deepcopy(self.document)
        document['spec']['formula'] = '!(s)'
        self.assertInvalid(document, 'spec.formula')

        document = copy.deepcopy(self.document)
        document['spec']['partition'] = {'regions': {'a': [[[0, 1], [0, 1], [0, 1]]]}, 'default': 'b'}
        self.assertInvalid(document, "exactly one of 'props' and 'partition'")

        document = copy.deepcopy(self.document)
        del document['policy']['waypoints']
        self.assertInvalid(document, "needs 'waypoints'")

        document = copy.deepcopy(self.document)
        document['spec']['props']['t1'] = [[[-10, -6], [-10, -6]]]
        self.assertInvalid(document, 'Label boxes must have dimension 3')

        document = copy.deepcopy(self.document)
        document['initial']['x0'] = {'fill': 0.0, 'size': 8}
        self.assertInvalid(document, 'Initial states must have dimensions 9 and 3')

    def test_nonpositive_epsilon(self):
        """Test the spec epsilon must be strictly positive."""
        document = copy.deepcopy(self.document)
        document['spec']['epsilon'] = 0.0
        self.assertInvalid(document, 'Epsilon must be positive')

    def test_slope_violation(self):
        """Test a tabulated nonlinearity outside its sector is rejected."""
        document = copy.deepcopy(self.document)
        xs = list(np.linspace(-10, 10, 201))
        document['subsystems'][0]['concrete']['phi'] = {
            'kind': 'custom-table', 'slope_bound': 1.0, 'table_x': xs, 'table_y': [float(np.sin(x)) for x in xs],
        }
        self.assertInvalid(document, 'slope bound')

    def test_file_errors(self):
        """Test unreadable, malformed and non-object files raise ConfigInvalid."""
        with tempfile.TemporaryDirectory() as tmp:
            missing = Path(tmp) / 'missing.json'
            with self.assertRaises(ConfigInvalid):
                load_config(missing)
            broken = Path(tmp) / 'broken.json'
            broken.write_text('{"name": ')
            with self.assertRaises(ConfigInvalid):
                load_config(broken)
            listing = Path(tmp) / 'list.json'
            listing.write_text('[]')
            with self.assertRaises(ConfigInvalid):
                load_config(listing)

    def test_serializer_reports_nested_errors(self):
        """Test nested subsystem errors are keyed by index."""
        document = copy.deepcopy(self.document)
        document['subsystems'][1]['certificate']['k_til'] = -1.0
        serializer = ProjectConfigSerializer(data=document)
        self.assertFalse(serializer.is_valid())
        self.assertIn('subsystems', serializer.errors)


class FixtureTests(SimpleTestCase):

    def test_bundled_casestudy_matches_generator(self):
        """Test the bundled case study equals the generated 222-node document."""
        path = Path(settings.NETABS_CASESTUDY_CONFIG)
        bundled = load_config(path)
        generated = load_config(casestudy_config(74))
        self.assertEqual(bundled.name, 'casestudy')
        np.testing.assert_allclose(bundled.coupling, generated.coupling, rtol=1e-12)
        np.testing.assert_array_equal(bundled.initial.x0, generated.initial.x0)
        self.assertEqual(bundled.spec.formula, generated.spec.formula)
        self.assertEqual((bundled.mc.trials, bundled.mc.seed), (10_000, 2019))
        self.assertEqual(json.loads(path.read_text())['subsystems'][0]['name'], 'room1')
