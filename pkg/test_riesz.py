import math
import os
import tempfile
import unittest

import numpy as np
from scipy.special import erf

from common.exceptions import CacheMismatch, ExponentOutOfRange, GridMismatch
from helper.kernel_cache import cache_path, read_kernel
from services.radial_field_service import RadialFieldService
from services.riesz_service import RieszService


class TestRiesz(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.radial = RadialFieldService()
        cls.riesz = RieszService()
        # node 192 sits exactly on r = 1
        cls.ball_grid = cls.radial.make_grid(3, 384, 2.0)
        cls.ball_kernel = cls.riesz.build_kernel(cls.ball_grid, 1.0)
        cls.grid = cls.radial.make_grid(3, 256, 8.0)
        cls.newton = cls.riesz.build_kernel(cls.grid, 1.0)

    def test_sphere_average_closed_form(self):
        """Angular quadrature agrees with the hypergeometric form"""
        rng = np.random.default_rng(2)
        for N, mu in ((3, 1.0), (3, 2.0), (4, 1.5), (5, 3.5)):
            with self.subTest(N=N, mu=mu):
                r = rng.uniform(0.01, 5.0, size=200)
                s = r * np.exp(rng.uniform(-2.0, 2.0, size=200))
                values, error = self.riesz.sphere_average(N, mu, r, s)
                exact = RieszService.sphere_average_closed_form(N, mu, r, s)
                self.assertLess(np.max(np.abs(values / exact - 1)), 1e-6)
                self.assertLess(error, 1e-8)

    def test_sphere_average_near_diagonal(self):
        """Nearly coincident radii stay accurate when |r - s| is passed"""
        r = np.full(5, 1.0)
        diff = np.array([1e-2, 1e-3, 1e-4, 1e-5, 1e-6])
        s = r + diff
        values, _ = self.riesz.sphere_average(3, 1.0, r, s, diff)
        exact = RieszService.sphere_average_closed_form(3, 1.0, r, s)
        self.assertLess(np.max(np.abs(values / exact - 1)), 1e-6)

    def test_kernel_shape(self):
        """Kernels are symmetric with positive entries"""
        matrix = self.newton.matrix
        self.assertEqual(matrix.shape, (256, 256))
        self.assertTrue(np.array_equal(matrix, matrix.T))
        self.assertTrue(np.all(matrix > 0))
        self.assertFalse(matrix.flags.writeable)
        self.assertLess(self.newton.achieved_tolerance, 1e-6)

    def test_newton_potential_of_gaussian(self):
        """I_1 * e^{-r^2} = pi^{3/2} erf(r) / r in R^3"""
        u = self.radial.gaussian(self.grid, math.sqrt(2.0))
        potential = self.riesz.potential(self.newton, u, 2.0).values
        r = self.grid.nodes
        exact = math.pi**1.5 * erf(r) / r
        interior = (r > 0.25) & (r < 5.0)
        self.assertLess(np.max(np.abs(potential[interior] / exact[interior] - 1)), 2e-3)

    def test_ball_self_energy(self):
        """Indicator of the unit ball: D = 32 pi^2 / 15 for mu = 1"""
        values = np.where(self.ball_grid.nodes < 1.0, 1.0, 0.0)
        values[self.ball_grid.nodes == 1.0] = math.sqrt(0.5)
        u = self.radial.sample(self.ball_grid, lambda r: values)
        energy = self.riesz.choquard_integral(self.ball_kernel, u, 2.0)
        self.assertAlmostEqual(energy / (32 * math.pi**2 / 15), 1.0, delta=5e-3)

    def test_monte_carlo_oracle(self):
        """Sampled double integral agrees with the kernel quadrature"""
        u = self.radial.gaussian(self.grid, 1.2)
        for t in (2.0, 3.0):
            with self.subTest(t=t):
                quadrature = self.riesz.choquard_integral(self.newton, u, t)
                estimate, std_error = self.riesz.choquard_oracle_mc(u, t, 1.0, samples=200_000, seed=17)
                self.assertLess(abs(estimate - quadrature), 4 * std_error + 5e-3 * quadrature)

    def test_monte_carlo_sample_floor(self):
        """Fewer than 10^4 samples is refused"""
        with self.assertRaises(ValueError):
            self.riesz.choquard_oracle_mc(self.radial.gaussian(self.grid), 2.0, 1.0, samples=500)

    def test_choquard_scaling(self):
        """D(k u, t) = k^{2t} D(u, t)"""
        u = self.radial.gaussian(self.grid, 1.5)
        base = self.riesz.choquard_integral(self.newton, u, 2.5)
        scaled = self.riesz.choquard_integral(self.newton, u.scaled(1.7), 2.5)
        self.assertAlmostEqual(scaled / base, 1.7**5, delta=1e-10 * 1.7**5)

    def test_exponent_range(self):
        """t outside [2_mu,*, 2*_mu] is refused"""
        lower, upper = RieszService.exponent_range(3, 1.0)
        self.assertAlmostEqual(lower, 5 / 3, places=14)
        self.assertAlmostEqual(upper, 5.0, places=14)
        u = self.radial.gaussian(self.grid)
        for t in (1.5, 5.5):
            with self.subTest(t=t):
                with self.assertRaises(ExponentOutOfRange):
                    self.riesz.choquard_integral(self.newton, u, t)
        self.riesz.choquard_integral(self.newton, u, upper)

    def test_grid_mismatch(self):
        """Applying a kernel to a function on another grid fails"""
        with self.assertRaises(GridMismatch):
            self.riesz.riesz_apply(self.newton, self.radial.gaussian(self.ball_grid))

    def test_kernel_cache(self):
        """Kernels persist and reload; a wrong header is refused"""
        grid = self.radial.make_grid(3, 64, 6.0)
        with tempfile.TemporaryDirectory() as tmp:
            cached = RieszService(cache_dir=tmp)
            built = cached.load_or_build_kernel(grid, 2.0)
            path = cache_path(tmp, 3, 2.0, 64, 6.0, grid.spacing, grid.grading)
            self.assertTrue(os.path.exists(path))

            loaded = cached.load_or_build_kernel(grid, 2.0)
            self.assertTrue(np.array_equal(built.matrix, loaded.matrix))
            self.assertEqual(loaded.achieved_tolerance, built.achieved_tolerance)

            with self.assertRaises(CacheMismatch):
                read_kernel(path, grid.key, 1.5)

            with open(path, "r+b") as handle:
                handle.truncate(100)
            with self.assertRaises(CacheMismatch):
                read_kernel(path, grid.key, 2.0)
            rebuilt = cached.load_or_build_kernel(grid, 2.0)
            self.assertTrue(np.allclose(rebuilt.matrix, built.matrix, rtol=1e-12, atol=0))


if __name__ == "__main__":
    unittest.main(verbosity=2)
