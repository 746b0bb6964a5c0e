import math
import unittest

import numpy as np

from common.enums import GridSpacing
from common.exceptions import DilationOutOfRange, GridMismatch, ZeroFunction
from models import RadialFunction
from services.radial_field_service import RadialFieldService, sphere_area


class TestRadialField(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.service = RadialFieldService(s_max=3.0)
        cls.grid = cls.service.make_grid(3, 256, 8.0)
        cls.fine = cls.service.make_grid(3, 512, 8.0)
        cls.graded = cls.service.make_grid(3, 256, 12.0, GridSpacing.GRADED, 4.0)

    def test_sphere_area(self):
        """|S^2| = 4 pi, |S^3| = 2 pi^2"""
        self.assertAlmostEqual(sphere_area(3), 4 * math.pi, places=12)
        self.assertAlmostEqual(sphere_area(4), 2 * math.pi**2, places=12)

    def test_grid_layout(self):
        """Nodes increase to r_max and cells tile (0, r_max]"""
        for grid in (self.grid, self.graded):
            with self.subTest(spacing=grid.spacing.value):
                self.assertEqual(len(grid.nodes), grid.node_count)
                self.assertTrue(np.all(np.diff(grid.nodes) > 0))
                self.assertEqual(grid.nodes[-1], grid.r_max)
                self.assertGreater(grid.nodes[0], 0)
                self.assertEqual(len(grid.edges), grid.node_count + 1)
                self.assertTrue(np.all(grid.weights > 0))
                self.assertFalse(grid.nodes.flags.writeable)

    def test_grid_rejects_small_node_count(self):
        """Fewer than 16 nodes is refused"""
        with self.assertRaises(ValueError):
            self.service.make_grid(3, 8, 8.0)

    def test_gaussian_mass(self):
        """||e^{-r^2}||_2^2 = (pi/2)^{3/2} on both spacings"""
        exact = (math.pi / 2) ** 1.5
        for grid in (self.grid, self.graded):
            with self.subTest(spacing=grid.spacing.value):
                u = self.service.gaussian(grid, 1.0)
                self.assertAlmostEqual(self.service.l2_norm(u) ** 2 / exact, 1.0, delta=1e-5)

    def test_gaussian_gradient(self):
        """||grad e^{-r^2}||_2^2 = 3 (pi/2)^{3/2}, second order in h"""
        exact = 3 * (math.pi / 2) ** 1.5
        coarse = abs(self.service.grad_norm(self.service.gaussian(self.grid)) ** 2 / exact - 1)
        fine = abs(self.service.grad_norm(self.service.gaussian(self.fine)) ** 2 / exact - 1)
        self.assertLess(coarse, 1e-2)
        self.assertLess(fine, coarse / 2)

    def test_gradient_convergence_order(self):
        """Dirichlet energy of e^{-r^2} converges at second order under refinement"""
        exact = 3 * (math.pi / 2) ** 1.5
        errors = []
        for M in (128, 256, 512):
            grid = self.service.make_grid(3, M, 8.0)
            errors.append(abs(self.service.grad_norm(self.service.gaussian(grid)) ** 2 - exact))
        for coarse, fine in zip(errors, errors[1:]):
            with self.subTest(coarse=coarse, fine=fine):
                self.assertGreater(math.log2(coarse / fine), 1.8)

    def test_dirichlet_boundary(self):
        """A constant profile pays for the jump to zero past r_max, and only there"""
        for grid in (self.grid, self.graded):
            with self.subTest(spacing=grid.spacing.value):
                ones = RadialFunction(grid, np.ones(grid.node_count))
                self.assertTrue(np.all(self.service.span_gradient(ones)[:-1] == 0.0))
                expected = grid.span_weights[-1] / grid.spans[-1] ** 2
                self.assertAlmostEqual(self.service.grad_norm(ones) ** 2 / expected, 1.0, delta=1e-12)
                self.assertLess(self.service.radial_laplacian(ones).values[-1], 0)

    def test_stiffness_positive_definite(self):
        """S is symmetric tridiagonal and u^T S u > 0 for u != 0"""
        stiffness = self.graded.stiffness.toarray()
        self.assertTrue(np.allclose(stiffness, stiffness.T))
        self.assertTrue(np.all(np.triu(stiffness, 2) == 0))
        self.assertGreater(np.linalg.eigvalsh(stiffness).min(), 0)

    def test_metric_solve(self):
        """metric_solve inverts mass W + kinetic S"""
        rng = np.random.default_rng(8)
        rhs = rng.standard_normal((self.graded.node_count, 2))
        for mass, kinetic in ((1.0, 1.0), (0.3, 250.0)):
            with self.subTest(mass=mass, kinetic=kinetic):
                solved = self.graded.metric_solve(rhs, mass, kinetic)
                matrix = mass * np.diag(self.graded.weights) + kinetic * self.graded.stiffness.toarray()
                residual = np.abs(matrix @ solved - rhs).max()
                scale = np.abs(matrix).sum(axis=1).max() * np.abs(solved).max() + np.abs(rhs).max()
                self.assertLess(residual, 1e-10 * scale)

    def test_metric_inner(self):
        """metric_inner weighs the L2 and Dirichlet parts separately"""
        rng = np.random.default_rng(12)
        u = self.service.gaussian_mixture(self.grid, rng)
        expected = 0.5 * self.service.l2_norm(u) ** 2 + 4.0 * self.service.grad_norm(u) ** 2
        self.assertAlmostEqual(self.service.metric_inner(u, u, 0.5, 4.0), expected, delta=1e-12 * expected)

    def test_laplacian_adjoint_identity(self):
        """<-Lap u, u> equals the discrete Dirichlet energy"""
        rng = np.random.default_rng(3)
        u = self.service.gaussian_mixture(self.grid, rng)
        lap = self.service.radial_laplacian(u)
        self.assertAlmostEqual(-self.service.inner(lap, u) / self.service.grad_norm(u) ** 2, 1.0, delta=1e-12)

    def test_laplacian_consistency(self):
        """Lap e^{-r^2} = (4r^2 - 6) e^{-r^2} away from the ends"""
        r = self.fine.nodes
        lap = self.service.radial_laplacian(self.service.gaussian(self.fine)).values
        exact = (4 * r**2 - 6) * np.exp(-(r**2))
        interior = (r > 0.5) & (r < 3.0)
        self.assertLess(np.max(np.abs(lap[interior] - exact[interior])), 0.1)

    def test_normalize_mass(self):
        """Normalised profiles sit on S_c"""
        u = self.service.gaussian(self.grid, 1.3, amplitude=4.0)
        for c in (0.5, 1.0, 2.5):
            with self.subTest(c=c):
                self.assertAlmostEqual(self.service.l2_norm(self.service.normalize_mass(u, c)), c, places=12)
        with self.assertRaises(ZeroFunction):
            self.service.normalize_mass(RadialFunction(self.grid, np.zeros(self.grid.node_count)), 1.0)

    def test_dilation_scaling(self):
        """s * u keeps the mass and scales the gradient by e^s"""
        u = self.service.gaussian(self.fine, 1.0)
        mass, grad = self.service.l2_norm(u), self.service.grad_norm(u)
        for s in (-0.5, -0.2, 0.2, 0.5):
            with self.subTest(s=s):
                v = self.service.dilate(u, s)
                self.assertAlmostEqual(self.service.l2_norm(v) / mass, 1.0, delta=1e-3)
                self.assertAlmostEqual(self.service.grad_norm(v) / (math.exp(s) * grad), 1.0, delta=1e-2)

    def test_dilation_identity_and_range(self):
        """s = 0 is the identity and |s| > s_max is refused"""
        u = self.service.gaussian(self.grid)
        self.assertIs(self.service.dilate(u, 0.0), u)
        with self.assertRaises(DilationOutOfRange):
            self.service.dilate(u, 3.5)
        with self.assertRaises(DilationOutOfRange):
            self.service.dilate(u, 1.5, s_max=1.0)

    def test_dilation_group_action(self):
        """s * (t * u) = (s + t) * u, and -s undoes s"""
        u = self.service.gaussian(self.fine, 1.0)
        scale = self.service.l2_norm(u)
        for s, t in ((0.3, 0.2), (-0.25, 0.6), (0.4, -0.4)):
            with self.subTest(s=s, t=t):
                composed = self.service.dilate(self.service.dilate(u, t), s)
                direct = self.service.dilate(u, s + t)
                self.assertLess(self.service.l2_distance(composed, direct) / scale, 1e-3)

    def test_dilation_generator(self):
        """(N/2)u + r u' is the derivative of the dilation at s = 0"""
        u = self.service.gaussian(self.fine, 1.0)
        h = 1e-3
        numeric = (self.service.dilate(u, h).values - self.service.dilate(u, -h).values) / (2 * h)
        generator = self.service.dilation_generator(u)
        error = self.service.l2_norm(generator.with_values(generator.values - numeric))
        self.assertLess(error / self.service.l2_norm(generator), 5e-3)

    def test_h1_quantities(self):
        """H1 norm, inner product and distances agree"""
        rng = np.random.default_rng(11)
        u = self.service.gaussian_mixture(self.grid, rng)
        v = self.service.gaussian_mixture(self.grid, rng)
        self.assertAlmostEqual(self.service.h1_inner(u, u), self.service.h1_norm(u) ** 2, delta=1e-12 * self.service.h1_norm(u) ** 2)
        self.assertAlmostEqual(self.service.h1_distance(u, v), self.service.h1_distance(v, u), places=12)
        self.assertLessEqual(self.service.l2_distance(u, v), self.service.h1_distance(u, v))
        self.assertEqual(self.service.h1_distance(u, u), 0.0)

    def test_grid_mismatch(self):
        """Pairings refuse functions on different grids"""
        u = self.service.gaussian(self.grid)
        v = self.service.gaussian(self.fine)
        with self.assertRaises(GridMismatch):
            self.service.inner(u, v)
        with self.assertRaises(GridMismatch):
            self.service.h1_distance(u, v)

    def test_same_grid_key_matches(self):
        """Grids rebuilt from the same settings are interchangeable"""
        again = self.service.make_grid(3, 256, 8.0)
        self.assertTrue(again.matches(self.grid))
        self.assertTrue(np.array_equal(again.nodes, self.grid.nodes))
        self.assertAlmostEqual(
            self.service.inner(self.service.gaussian(again), self.service.gaussian(self.grid)),
            self.service.l2_norm(self.service.gaussian(self.grid)) ** 2,
            places=12,
        )

    def test_bubble_support(self):
        """Cut-off bubbles vanish beyond 2 delta"""
        delta = 2.0
        bubble = self.service.bubble(self.grid, 0.3, delta)
        self.assertTrue(np.all(bubble.values[self.grid.nodes >= 2 * delta] == 0.0))
        self.assertTrue(np.all(bubble.values >= 0))
        self.assertTrue(np.all(np.diff(bubble.values) <= 0))
        with self.assertRaises(ValueError):
            self.service.bubble(self.grid, 1.5)

    def test_gaussian_mixture_seeded(self):
        """Same seed, same profile; mixtures are nonnegative and decreasing"""
        first = self.service.gaussian_mixture(self.grid, np.random.default_rng(5))
        second = self.service.gaussian_mixture(self.grid, np.random.default_rng(5))
        self.assertTrue(np.array_equal(first.values, second.values))
        self.assertTrue(np.all(first.values >= 0))
        self.assertTrue(np.all(np.diff(first.values) <= 0))

    def test_radial_function_validation(self):
        """Wrong length and non-finite samples are refused"""
        with self.assertRaises(ValueError):
            RadialFunction(self.grid, np.ones(10))
        values = np.ones(self.grid.node_count)
        values[3] = np.nan
        with self.assertRaises(ValueError):
            RadialFunction(self.grid, values)


if __name__ == "__main__":
    unittest.main(verbosity=2)
