import math

import numpy as np
from django.test import SimpleTestCase

from core.dynamics.systems import (
    Network,
    Nonlinearity,
    NonlinearityKind,
    SystemModel,
    complete_graph_laplacian,
    consensus_coupling,
    max_degree,
    network_step,
    outputs,
    path_graph_laplacian,
    stacked_outputs,
    step,
)
from core.exceptions import DimensionMismatch, TooSmall


def scalar_system(a=0.5, name=''):
    return SystemModel.linear(A=[[a]], B=[[1.0]], C1=[[1.0]], C2=[[1.0]], D=[[1.0]], R=[[0.1]], name=name)


class NonlinearityTests(SimpleTestCase):
    """Raw and shifted nonlinearities."""

    def test_sine_is_within_unit_sector(self):
        """Test sin passes the sampled slope check for b = 1."""
        self.assertTrue(Nonlinearity(NonlinearityKind.SINE, slope_bound=1.0).check_slope())

    def test_shift_restores_sector(self):
        """Test tabulated sin fails [0, 1] but passes [0, 2] after shifting by -1."""
        table_x = np.linspace(-30, 30, 2001)
        table_y = np.sin(table_x)
        unshifted = Nonlinearity(NonlinearityKind.TABLE, slope_bound=1.0, table_x=table_x, table_y=table_y)
        self.assertFalse(unshifted.check_slope())
        shifted = Nonlinearity(NonlinearityKind.TABLE, slope_bound=2.0, shift=-1.0,
                               table_x=table_x, table_y=table_y)
        self.assertTrue(shifted.check_slope())
        self.assertEqual(float(unshifted.raw(0.3)), float(shifted.raw(0.3)))
        self.assertAlmostEqual(float(shifted(0.3)), math.sin(0.3) + 0.3, places=3)

    def test_table_validation(self):
        """Test malformed tables and non-positive bounds are rejected."""
        with self.assertRaises(ValueError):
            Nonlinearity(NonlinearityKind.TABLE, table_x=(0.0,), table_y=(0.0,))
        with self.assertRaises(ValueError):
            Nonlinearity(NonlinearityKind.TABLE, table_x=(1.0, 0.0), table_y=(0.0, 1.0))
        with self.assertRaises(ValueError):
            Nonlinearity(NonlinearityKind.SINE, slope_bound=0.0)

    def test_infinite_slope_bound_allowed(self):
        """Test an unbounded sector is accepted."""
        self.assertTrue(math.isinf(Nonlinearity(NonlinearityKind.SINE, slope_bound=math.inf).slope_bound))


class SystemModelTests(SimpleTestCase):

    def test_step_linear(self):
        """Test one linear transition with noise."""
        model = scalar_system()
        x = step(model, [2.0], [1.0], [0.5], [1.0])
        np.testing.assert_allclose(x, [0.5 * 2.0 + 1.0 + 0.5 + 0.1])

    def test_step_nonlinear_uses_raw_phi(self):
        """Test the transition applies the unshifted nonlinearity."""
        model = SystemModel(A=[[0.0]], B=[[0.0]], C1=[[1.0]], C2=[[1.0]], D=[[0.0]], E=[[1.0]], F=[[1.0]],
                            R=[[0.0]], phi=Nonlinearity(NonlinearityKind.SINE, shift=0.25))
        np.testing.assert_allclose(step(model, [1.0], [0.0], [0.0], [0.0]), [math.sin(1.0)])
        self.assertAlmostEqual(float(model.A_eff[0, 0]), 0.25)

    def test_batched_step(self):
        """Test rows of a 2-D state are stepped independently."""
        model = scalar_system()
        x = np.array([[1.0], [2.0]])
        nxt = step(model, x, np.zeros((2, 1)), np.zeros((2, 1)), np.zeros((2, 1)))
        np.testing.assert_allclose(nxt, [[0.5], [1.0]])

    def test_outputs(self):
        """Test external and internal outputs."""
        y1, y2 = outputs(scalar_system(), [3.0])
        np.testing.assert_allclose(y1, [3.0])
        np.testing.assert_allclose(y2, [3.0])

    def test_dimension_checks(self):
        """Test inconsistent matrices raise DimensionMismatch."""
        with self.assertRaises(DimensionMismatch):
            SystemModel.linear(A=np.eye(2), B=np.ones((3, 1)), C1=np.ones((1, 2)), C2=np.eye(2),
                               D=np.eye(2), R=np.zeros((2, 1)))
        with self.assertRaises(DimensionMismatch):
            step(scalar_system(), [1.0, 2.0], [0.0], [0.0], [0.0])

    def test_noiseless(self):
        """Test the noiseless flag follows R."""
        self.assertFalse(scalar_system().is_noiseless)
        quiet = SystemModel.linear(A=[[1.0]], B=[[1.0]], C1=[[1.0]], C2=[[1.0]], D=[[1.0]], R=[[0.0]])
        self.assertTrue(quiet.is_noiseless)


class NetworkTests(SimpleTestCase):

    def setUp(self):
        self.L = complete_graph_laplacian(3)
        self.M = consensus_coupling(self.L, tau=0.2)
        self.net = Network([scalar_system(name=f"s{i}") for i in range(3)], self.M)

    def test_laplacians(self):
        """Test complete and path graph Laplacians."""
        np.testing.assert_allclose(self.L, 3 * np.eye(3) - np.ones((3, 3)))
        np.testing.assert_allclose(path_graph_laplacian(3), [[1, -1, 0], [-1, 2, -1], [0, -1, 1]])
        self.assertEqual(max_degree(self.L), 2.0)
        with self.assertRaises(TooSmall):
            complete_graph_laplacian(1)

    def test_consensus_gain(self):
        """Test tau_gain divides by the maximum degree."""
        M = consensus_coupling(complete_graph_laplacian(222), tau_gain=0.9)
        self.assertAlmostEqual(-M[0, 1], 0.9 / 221)

    def test_network_step_matches_monolithic(self):
        """Test the blockwise step equals the monolithic linear system without noise."""
        x = np.array([1.0, -2.0, 0.5])
        nxt = network_step(self.net, x, np.zeros(3), np.zeros(3))
        np.testing.assert_allclose(nxt, self.net.closed_loop_matrix() @ x)

    def test_offsets_and_outputs(self):
        """Test stacked dimensions and outputs."""
        self.assertEqual((self.net.n, self.net.m, self.net.r, self.net.q1), (3, 3, 3, 3))
        np.testing.assert_allclose(stacked_outputs(self.net, [1.0, 2.0, 3.0]), [1.0, 2.0, 3.0])
        np.testing.assert_allclose(self.net.internal_inputs([1.0, 2.0, 3.0]), self.M @ [1.0, 2.0, 3.0])

    def test_coupling_shape_checked(self):
        """Test a wrongly sized coupling is rejected."""
        with self.assertRaises(DimensionMismatch):
            Network([scalar_system(), scalar_system()], np.zeros((3, 3)))
