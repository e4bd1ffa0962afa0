from django.test import SimpleTestCase

from core.bounds.probability import BoundQuery, finite_horizon_delta
from core.composition.network import AlphaMode
from core.config.casestudy import casestudy_config
from core.config.schema import load_config
from core.services import (
    BoundService,
    CertificationService,
    CompositionService,
    SimulationService,
    SpecificationService,
)


class BoundLookupTests(SimpleTestCase):
    """Delta lookups on and off the configured grid."""

    def setUp(self):
        document = casestudy_config(block_size=3, trials=30, seed=5)
        document['bound'] = {'epsilons': [1.0], 'horizons': [10]}
        document['spec']['epsilon'] = 0.3
        self.config = load_config(document)
        self.composition = CompositionService.compose(self.config, CertificationService.verify(self.config))
        self.bounds = BoundService.tables(self.config, self.composition)

    def test_grid_value(self):
        """Test a tabulated pair returns the table entry."""
        row = self.bounds.tables[AlphaMode.QUADRATIC][0]
        self.assertEqual(self.bounds.delta(1.0, 10), row.bound.delta)

    def test_off_grid_value(self):
        """Test a pair outside the grid is computed from the composed params."""
        params = self.composition.report.quadratic.params
        expected = finite_horizon_delta(BoundQuery(V0=self.bounds.V0, epsilon=0.3, Td=7,
                                                   nuhat_sup=self.bounds.nuhat_sup, params=params))
        self.assertEqual(self.bounds.delta(0.3, 7), expected.delta)
        generic = self.composition.report.generic.params
        expected = finite_horizon_delta(BoundQuery(V0=self.bounds.V0, epsilon=0.3, Td=7,
                                                   nuhat_sup=self.bounds.nuhat_sup, params=generic))
        self.assertEqual(self.bounds.delta(0.3, 7, AlphaMode.GENERIC), expected.delta)

    def test_transfer_with_epsilon_off_grid(self):
        """Test the transfer uses the spec's epsilon even when the bound grid lacks it."""
        batch = SimulationService.run(self.config, self.composition.pair)
        outcome = SpecificationService.transfer(self.config, batch, self.bounds)
        self.assertEqual(outcome.epsilon, 0.3)
        self.assertEqual(outcome.delta, self.bounds.delta(0.3, self.config.spec.horizon))
        self.assertLessEqual(outcome.lower, outcome.upper)
