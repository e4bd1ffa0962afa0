import numpy as np
import pytest
from django.test import SimpleTestCase

from core.certificates.storage import SsfParams, StorageCertificate, derive_params
from core.composition.network import (
    AbstractionPair,
    AlphaMode,
    assess_composition,
    build_xcmp,
    check_lmi,
    compose,
    dissipativity_form,
    solve_abstract_coupling,
)
from core.dynamics.systems import complete_graph_laplacian, consensus_coupling, path_graph_laplacian
from core.exceptions import DimensionMismatch, ModeUnavailable, NotEquitable, NotVerified
from core.linalg.matlib import block_diag
from core.tests.helpers import casestudy, double_integrator


def coupling_cert(size):
    """Certificate carrying only the coupling blocks of a size-dimensional subsystem."""
    zero = np.zeros((1, 1))
    return StorageCertificate(
        Mtil=np.eye(size), K=zero, Q=zero, L1=zero, L2=zero, Z=np.eye(size), G=np.eye(size),
        Ghat=np.ones((size, 1)), H=np.ones((size, 1)), P=np.ones((size, 1)), Rtil=zero,
        Xbar11=np.eye(size), Xbar12=0.5 * np.eye(size), Xbar21=0.5 * np.eye(size), Xbar22=np.zeros((size, size)),
        kappa_hat=0.5, k_til=1.0,
    )


class CaseStudyCompositionTests(SimpleTestCase):
    """Composition of the reduced three-room network."""

    def setUp(self):
        self.config = casestudy(block_size=3)
        self.params = [derive_params(s.concrete, s.abstract, s.certificate) for s in self.config.subsystems]

    def test_lmi_holds(self):
        """Test the dissipativity form is negative semidefinite."""
        result = check_lmi(self.config.coupling, self.config.certs, self.config.mu)
        self.assertTrue(result.ok)
        self.assertLessEqual(result.lambda_max, 1e-9)

    def test_abstract_coupling_is_exact(self):
        """Test the complete-graph quotient gives an exact 3x3 Mhat."""
        result = solve_abstract_coupling(self.config.coupling, self.config.certs)
        self.assertTrue(result.ok)
        self.assertEqual(result.Mhat.shape, (3, 3))
        tau = -self.config.coupling[0, 1]
        expected = -tau * (9 * np.eye(3) - 3 * np.ones((3, 3)))
        np.testing.assert_allclose(result.Mhat, expected, atol=1e-12)
        np.testing.assert_allclose(result.Mhat.sum(axis=1), 0.0, atol=1e-12)

    def test_both_alpha_modes(self):
        """Test quadratic alpha is 1 and generic alpha is 1/3."""
        report = assess_composition(self.config.concs, self.config.certs, self.params, self.config.mu,
                                    self.config.coupling)
        self.assertTrue(report.passed)
        self.assertAlmostEqual(report.quadratic.params.alpha_coeff, 1.0)
        self.assertAlmostEqual(report.generic.params.alpha_coeff, 1.0 / 3.0)
        for composed in (report.quadratic, report.generic):
            self.assertAlmostEqual(composed.params.kappa_lin, 0.05)
            self.assertAlmostEqual(composed.params.rho_coeff, 0.0)
            self.assertAlmostEqual(composed.params.psi, 9 * 0.007 ** 2)
        self.assertIs(report.preferred(), report.quadratic)
        self.assertEqual(len(report.records), 2)

    def test_large_step_fails_lmi(self):
        """Test a consensus step beyond the margin breaks the dissipativity condition."""
        M = consensus_coupling(complete_graph_laplacian(9), tau=0.2)
        result = check_lmi(M, self.config.certs, self.config.mu)
        self.assertFalse(result.ok)
        self.assertGreater(result.lambda_max, 0.0)

    def test_pair_storage_matches_quadratic_form(self):
        """Test the composed V equals (x - P xh)^T blkdiag(mu Mtil) (x - P xh)."""
        Mhat = solve_abstract_coupling(self.config.coupling, self.config.certs).Mhat
        pair = AbstractionPair(self.config.concrete_network(), self.config.abstract_network(Mhat),
                               self.config.certs, [1.0, 2.0, 0.5])
        rng = np.random.default_rng(1)
        x, xhat = rng.standard_normal(9), rng.standard_normal(3)
        err = x - pair.P @ xhat
        self.assertAlmostEqual(float(pair.eval_V(x, xhat)), float(err @ pair.Mtil @ err))
        np.testing.assert_allclose(pair.lift(xhat), pair.P @ xhat)
        self.assertEqual(pair.interface(x, xhat, np.zeros(3)).shape, (9,))


class CompositionRuleTests(SimpleTestCase):

    def setUp(self):
        self.certs = [coupling_cert(1)] * 3

    def test_generic_alpha_harmonic_sum(self):
        """Test generic alpha with alphas (1, 1, 0.5) and unit weights is 0.25."""
        params = [SsfParams(1.0, 0.1, 0.0, 0.01), SsfParams(1.0, 0.2, 0.0, 0.02), SsfParams(0.5, 0.3, 0.0, 0.0)]
        composed = compose(self.certs, params, [1.0, 1.0, 1.0])
        self.assertAlmostEqual(composed.params.alpha_coeff, 0.25)
        self.assertAlmostEqual(composed.params.kappa_lin, 0.1)
        self.assertAlmostEqual(composed.params.psi, 0.03)

    def test_generic_alpha_grid_optimum(self):
        """Test the generic alpha equals the worst split of a unit output over a grid."""
        alphas = np.array([1.0, 1.0, 0.5])
        params = [SsfParams(a, 0.1, 0.0, 0.0) for a in alphas]
        composed = compose(self.certs, params, [1.0, 1.0, 1.0])
        grid = np.linspace(0.0, 1.0, 201)
        best = np.inf
        for s1 in grid:
            for s2 in grid:
                s3 = 1.0 - s1 - s2
                if s3 < -1e-12:
                    continue
                best = min(best, float(np.sum(alphas * np.array([s1, s2, max(s3, 0.0)]) ** 2)))
        self.assertAlmostEqual(composed.params.alpha_coeff, best, places=6)

    def test_rho_uses_weights(self):
        """Test rho is the largest weighted rho."""
        params = [SsfParams(1.0, 0.1, 2.0, 0.0), SsfParams(1.0, 0.1, 1.0, 0.0), SsfParams(1.0, 0.1, 0.0, 0.0)]
        composed = compose(self.certs, params, [1.0, 3.0, 1.0])
        self.assertAlmostEqual(composed.params.rho_coeff, 3.0)

    def test_quadratic_needs_subsystems(self):
        """Test quadratic mode without concrete subsystems is unavailable."""
        params = [SsfParams(1.0, 0.1, 0.0, 0.0)] * 3
        with self.assertRaises(ModeUnavailable):
            compose(self.certs, params, [1.0] * 3, AlphaMode.QUADRATIC)

    def test_weights_checked(self):
        """Test weights must match the certificates and be positive."""
        params = [SsfParams(1.0, 0.1, 0.0, 0.0)] * 3
        with self.assertRaises(DimensionMismatch):
            compose(self.certs, params, [1.0, 1.0])
        with self.assertRaises(ValueError):
            compose(self.certs, params, [1.0, 0.0, 1.0])

    def test_failed_lmi_blocks_composition(self):
        """Test composing on a failed dissipativity result raises NotVerified."""
        M = consensus_coupling(complete_graph_laplacian(3), tau=0.9)
        lmi = check_lmi(M, self.certs, [1.0] * 3)
        self.assertFalse(lmi.ok)
        with self.assertRaises(NotVerified):
            compose(self.certs, [SsfParams(1.0, 0.1, 0.0, 0.0)] * 3, [1.0] * 3, lmi=lmi)

    def test_xcmp_layout(self):
        """Test the network dissipativity matrix is assembled blockwise with weights."""
        X = build_xcmp(self.certs, [1.0, 2.0, 3.0])
        np.testing.assert_allclose(np.diag(X)[:3], [1.0, 2.0, 3.0])
        np.testing.assert_allclose(np.diag(X[:3, 3:]), [0.5, 1.0, 1.5])
        np.testing.assert_allclose(X[3:, 3:], 0.0)

    def test_form_shape_checked(self):
        """Test a coupling of the wrong size is rejected."""
        with self.assertRaises(DimensionMismatch):
            dissipativity_form(np.zeros((2, 2)), self.certs, [1.0] * 3)


class AbstractCouplingTests(SimpleTestCase):

    def test_path_partition_not_equitable(self):
        """Test the path graph split {1}, {2, 3} has no exact quotient."""
        certs = [coupling_cert(1), coupling_cert(2)]
        M = consensus_coupling(path_graph_laplacian(3), tau=0.3)
        result = solve_abstract_coupling(M, certs)
        self.assertFalse(result.ok)
        with self.assertRaises(NotEquitable):
            solve_abstract_coupling(M, certs, strict=True)

    def test_decoupled_single_subsystem(self):
        """Test one decoupled subsystem passes both conditions trivially."""
        conc, abst, cert = double_integrator()
        params = derive_params(conc, abst, cert)
        report = assess_composition([conc], [cert], [params], [1.0], np.zeros((1, 1)))
        self.assertTrue(report.passed)
        self.assertAlmostEqual(report.quadratic.params.alpha_coeff, params.alpha_coeff)
        self.assertAlmostEqual(report.generic.params.alpha_coeff, params.alpha_coeff)

    def test_quotient_of_complete_graph(self):
        """Test unequal blocks of a complete graph give Mhat_ij = -tau (n delta_ij - n_j)."""
        sizes = [1, 2, 3]
        certs = [coupling_cert(s) for s in sizes]
        tau = 0.1
        M = consensus_coupling(complete_graph_laplacian(6), tau=tau)
        result = solve_abstract_coupling(M, certs, strict=True)
        expected = -tau * (6 * np.eye(3) - np.array([sizes] * 3))
        np.testing.assert_allclose(result.Mhat, expected, atol=1e-12)
        G = block_diag(*[c.G for c in certs])
        Ghat = block_diag(*[c.Ghat for c in certs])
        H = block_diag(*[c.H for c in certs])
        np.testing.assert_allclose(Ghat @ result.Mhat, G @ M @ H, atol=1e-12)


@pytest.mark.slow
class FullCaseStudyCompositionTests(SimpleTestCase):

    def test_full_network(self):
        """Test the 222-node network passes both conditions with residuals below 1e-9."""
        config = casestudy(block_size=74)
        lmi = check_lmi(config.coupling, config.certs, config.mu)
        self.assertLessEqual(lmi.lambda_max, 1e-9)
        coupling = solve_abstract_coupling(config.coupling, config.certs)
        self.assertLessEqual(coupling.residual, 1e-9)
        self.assertAlmostEqual(coupling.Mhat[0, 1], 0.9 * 74 / 221)
