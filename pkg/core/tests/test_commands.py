import json
import shutil
import tempfile
from io import StringIO
from pathlib import Path

import pytest
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from core.config.casestudy import casestudy_config


class CommandTestCase(SimpleTestCase):
    """Commands run against the reduced case study written to a temporary file."""

    def setUp(self):
        self.tmp = Path(tempfile.mkdtemp())
        self.addCleanup(shutil.rmtree, self.tmp, ignore_errors=True)
        self.config_path = self.write_config(casestudy_config(block_size=3, trials=40, seed=7))

    def write_config(self, document, name='config.json'):
        path = self.tmp / name
        path.write_text(json.dumps(document))
        return str(path)

    def call(self, *args, **options):
        out = StringIO()
        call_command(*args, stdout=out, stderr=StringIO(), **options)
        return out.getvalue()


class VerifyCommandTests(CommandTestCase):

    def test_verify_passes(self):
        """Test every room certificate is reported as verified."""
        output = self.call('verify', self.config_path)
        self.assertIn('room1', output)
        self.assertIn('All 3 certificates verified', output)

    def test_verify_jacobi_backend(self):
        """Test the Jacobi eigenvalue backend gives the same verdict."""
        output = self.call('verify', self.config_path, '--eig-method', 'jacobi')
        self.assertIn('All 3 certificates verified', output)

    def test_verify_failure_exit_code(self):
        """Test a failing scalar condition exits with code 1 and names the condition."""
        document = casestudy_config(block_size=3)
        document['subsystems'][1]['certificate']['kappa_hat'] = 1.5
        path = self.write_config(document, 'broken.json')
        with self.assertRaises(CommandError) as caught:
            self.call('verify', path)
        self.assertEqual(caught.exception.returncode, 1)
        self.assertIn('room2', str(caught.exception))
        self.assertIn('kappa_hat', str(caught.exception))

    def test_malformed_config_exit_code(self):
        """Test unreadable JSON exits with code 2."""
        path = self.tmp / 'malformed.json'
        path.write_text('{"subsystems": [')
        with self.assertRaises(CommandError) as caught:
            self.call('verify', str(path))
        self.assertEqual(caught.exception.returncode, 2)

    def test_json_report_written(self):
        """Test --format json prints and writes a parseable report."""
        out_dir = self.tmp / 'reports'
        self.call('verify', self.config_path, '--format', 'json', '--out', str(out_dir))
        payload = json.loads((out_dir / 'verify.json').read_text())
        self.assertTrue(payload['passed'])
        self.assertEqual(len(payload['subsystems']), 3)
        self.assertAlmostEqual(payload['subsystems'][0]['params']['kappa_lin'], 0.05)


class PipelineCommandTests(CommandTestCase):

    def test_compose(self):
        """Test composition succeeds and reports both alpha modes."""
        output = self.call('compose', self.config_path)
        self.assertIn('Composition conditions hold', output)
        self.assertIn('quadratic', output)
        self.assertIn('generic', output)

    def test_compose_lmi_failure(self):
        """Test a consensus step beyond the margin exits with code 1."""
        document = casestudy_config(block_size=3)
        document['coupling']['tau'] = 0.2
        path = self.write_config(document, 'coupled.json')
        with self.assertRaises(CommandError) as caught:
            self.call('compose', path)
        self.assertEqual(caught.exception.returncode, 1)
        self.assertIn('LmiFailed', str(caught.exception))

    def test_bound_json(self):
        """Test the bound table in JSON for both modes at the requested grid."""
        output = self.call('bound', self.config_path, '--eps', '1.0', '2.0', '--horizon', '10', '--format', 'json')
        payload = json.loads(output)
        quadratic = payload['tables']['quadratic']
        self.assertEqual([row['epsilon'] for row in quadratic], [1.0, 2.0])
        psi = 9 * 0.007 ** 2
        self.assertAlmostEqual(quadratic[0]['delta'], 1 - (1 - psi) ** 10, places=12)
        self.assertEqual(payload['V0'], 0.0)
        self.assertEqual(payload['primary'], 'quadratic')

    def test_bound_generic_mode(self):
        """Test the generic mode can be made primary."""
        output = self.call('bound', self.config_path, '--alpha-mode', 'generic')
        self.assertIn('primary mode generic', output)

    def test_simulate_writes_csv(self):
        """Test the simulation report and trajectory export."""
        out_dir = self.tmp / 'mc'
        output = self.call('simulate', self.config_path, '--trials', '20', '--seed', '3', '--out', str(out_dir))
        self.assertIn('trials 20', output)
        self.assertTrue((out_dir / 'trajectories.csv').exists())
        self.assertTrue((out_dir / 'simulate.txt').exists())


class CompileCommandTests(CommandTestCase):

    def test_formula_to_dot(self):
        """Test a formula compiles to DOT over the powerset of its propositions."""
        output = self.call('scltl_compile', '--formula', 'a U b')
        self.assertIn('digraph dfa', output)
        self.assertIn('doublecircle', output)

    def test_config_spec_with_absorbing_location(self):
        """Test the config spec compiles and the absorbing location is added on request."""
        path = self.tmp / 'spec.dot'
        self.call('scltl_compile', self.config_path, '--absorb', '--out', str(path))
        self.assertIn('q_abs', path.read_text())

    def test_missing_input(self):
        """Test neither a formula nor a config exits with code 2."""
        with self.assertRaises(CommandError) as caught:
            self.call('scltl_compile')
        self.assertEqual(caught.exception.returncode, 2)

    def test_syntax_error(self):
        """Test a malformed formula exits with code 1."""
        with self.assertRaises(CommandError) as caught:
            self.call('scltl_compile', '--formula', 'a U')
        self.assertEqual(caught.exception.returncode, 1)


@pytest.mark.integration
class CaseStudyCommandTests(CommandTestCase):

    def test_reduced_casestudy(self):
        """Test the reduced case study runs end to end and writes its artefacts."""
        out_dir = self.tmp / 'casestudy'
        output = self.call('casestudy', '--block-size', '3', '--trials', '50', '--seed', '1', '--out', str(out_dir))
        self.assertIn('Concrete specification satisfied with probability >=', output)
        for name in ('casestudy.txt', 'trajectories.csv', 'config.json'):
            self.assertTrue((out_dir / name).exists(), name)
        written = json.loads((out_dir / 'config.json').read_text())
        self.assertEqual(written['mc']['trials'], 50)

    def test_write_config(self):
        """Test --write-config stores the generated document without running."""
        path = self.tmp / 'generated.json'
        self.call('casestudy', '--block-size', '3', '--write-config', str(path))
        self.assertEqual(json.loads(path.read_text())['name'], 'casestudy-n3')

    def test_write_config_keeps_trials_and_seed(self):
        """Test --trials and --seed are stored in the generated document."""
        path = self.tmp / 'generated.json'
        self.call('casestudy', '--block-size', '3', '--trials', '12', '--seed', '99', '--write-config', str(path))
        written = json.loads(path.read_text())
        self.assertEqual((written['mc']['trials'], written['mc']['seed']), (12, 99))

    def test_same_seed_same_report(self):
        """Test two runs with one seed write identical reports."""
        reports = []
        for run in ('first', 'second'):
            out_dir = self.tmp / run
            self.call('casestudy', '--block-size', '3', '--trials', '30', '--seed', '9', '--out', str(out_dir))
            reports.append((out_dir / 'casestudy.txt').read_text())
        self.assertEqual(reports[0], reports[1])
