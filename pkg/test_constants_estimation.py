import math
import unittest

import numpy as np

from common.enums import GridSpacing
from common.exceptions import ExponentOutOfRange
from services.constants_estimation_service import ConstantsEstimationService
from services.radial_field_service import RadialFieldService
from services.riesz_service import RieszService

N, MU = 3, 2.0


class TestConstantsEstimation(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.radial = RadialFieldService()
        cls.riesz = RieszService()
        cls.grid = cls.radial.make_grid(N, 128, 12.0)
        cls.kernel = cls.riesz.build_kernel(cls.grid, MU)
        cls.service = ConstantsEstimationService(cls.riesz, cls.radial, starts=2, max_iter=40, seed=3)
        cls.gn = cls.service.estimate_gn_constant(N, MU, 3.0, cls.grid, cls.kernel)
        cls.eps_values = np.geomspace(0.2, 0.6, 5)
        cls.shl = cls.service.estimate_shl(N, MU, cls.grid, cls.kernel, eps_values=cls.eps_values)

    def test_gn_record(self):
        """The estimate carries its grid and exponent"""
        self.assertEqual(self.gn.name, "C_r")
        self.assertEqual(self.gn.exponent, 3.0)
        self.assertEqual(self.gn.grid_key, (N, 128, 12.0, "uniform", self.grid.grading))
        self.assertGreater(self.gn.value, 0)
        self.assertTrue(math.isfinite(self.gn.value))

    def test_gn_estimate_bounds_sampled_ratios(self):
        """No sampled profile beats the maximised ratio"""
        rng = np.random.default_rng(8)
        for _ in range(6):
            u = self.radial.gaussian_mixture(self.grid, rng, width_range=(0.6, 3.0))
            with self.subTest():
                self.assertLessEqual(self.service.gn_ratio(self.kernel, u, 3.0), self.gn.value * (1 + 1e-9))

    def test_gn_ratio_scale_invariant(self):
        """W(k u) = W(u)"""
        u = self.radial.gaussian(self.grid, 1.4)
        base = self.service.gn_ratio(self.kernel, u, 2.5)
        self.assertAlmostEqual(self.service.gn_ratio(self.kernel, u.scaled(3.7), 2.5) / base, 1.0, delta=1e-10)

    def test_gn_ratio_dilation_invariant(self):
        """W(s * u) = W(u) up to the resampling error of the dilation"""
        u = self.radial.gaussian(self.grid, 1.4)
        for r in (1.5, 3.0):
            base = self.service.gn_ratio(self.kernel, u, r)
            for s in (-0.3, 0.3):
                with self.subTest(r=r, s=s):
                    moved = self.service.gn_ratio(self.kernel, self.radial.dilate(u, s), r)
                    self.assertAlmostEqual(moved / base, 1.0, delta=1e-2)

    def test_gn_deterministic(self):
        """Same seed, same estimate"""
        again = ConstantsEstimationService(self.riesz, self.radial, starts=2, max_iter=40, seed=3)
        self.assertEqual(again.estimate_gn_constant(N, MU, 3.0, self.grid, self.kernel).value, self.gn.value)

    def test_gn_rejects_endpoint_exponent(self):
        """r must lie strictly inside the HLS range"""
        for r in (4 / 3, 4.0):
            with self.subTest(r=r):
                with self.assertRaises(ExponentOutOfRange):
                    self.service.estimate_gn_constant(N, MU, r, self.grid, self.kernel)

    def test_grid_dimension_checked(self):
        """The grid has to live in R^N"""
        with self.assertRaises(ValueError):
            self.service.estimate_gn_constant(4, MU, 3.0, self.grid, self.kernel)

    def test_shl_record(self):
        """S_HL is stored against the upper critical exponent"""
        self.assertEqual(self.shl.name, "S_HL")
        self.assertEqual(self.shl.exponent, 4.0)
        self.assertGreater(self.shl.value, 0)

    def test_shl_bounds_bubbles(self):
        """Every swept bubble has quotient at least the estimate"""
        for eps, quotient, bubble in self.service.bubble_sweep(self.kernel, self.eps_values):
            with self.subTest(eps=eps):
                self.assertAlmostEqual(quotient, self.service.shl_quotient(self.kernel, bubble), delta=1e-12 * quotient)
                self.assertGreaterEqual(quotient, self.shl.value * (1 - 1e-9))

    def test_gn_near_gaussian_ratio(self):
        """C_3 is at least the Gaussian ratio, about 0.029 for N = 3, mu = 2"""
        gaussian = self.service.gn_ratio(self.kernel, self.radial.gaussian(self.grid, 1.0), 3.0)
        self.assertAlmostEqual(gaussian, 0.02897, delta=1e-3)
        self.assertGreaterEqual(self.gn.value, gaussian * (1 - 1e-9))
        self.assertLess(self.gn.value, 0.06)

    def test_shl_quotient_scale_invariant(self):
        """The quotient is 0-homogeneous"""
        u = self.radial.bubble(self.grid, 0.3)
        base = self.service.shl_quotient(self.kernel, u)
        self.assertAlmostEqual(self.service.shl_quotient(self.kernel, u.scaled(0.2)) / base, 1.0, delta=1e-10)

    def test_projected_ascent_improves(self):
        """Ascent stays on the unit sphere and never lowers the objective"""
        objective = self.service._log_gn_ratio(self.kernel, 2.0)
        start = self.radial.gaussian_mixture(self.grid, np.random.default_rng(1), width_range=(0.6, 3.0))
        initial = objective(self.radial.normalize_mass(start, 1.0))[0]
        u, value, _ = self.service.projected_ascent(start, objective)
        self.assertAlmostEqual(self.radial.l2_norm(u), 1.0, places=12)
        self.assertGreaterEqual(value, initial)


def sharp_shl(N: int, mu: float) -> float:
    """S / C(N, mu)^(1/2*_mu), with the sharp Sobolev and HLS constants"""
    ratio = math.gamma(N / 2) / math.gamma(N)
    sobolev = math.pi * N * (N - 2) * ratio ** (2 / N)
    hls = math.pi ** (mu / 2) * math.gamma((N - mu) / 2) / math.gamma(N - mu / 2) * ratio ** (-1 + mu / N)
    return sobolev / hls ** ((N - 2) / (2 * N - mu))


class TestSharpConstants(unittest.TestCase):
    """Bubble sweep on a graded grid wide enough for the cut-off tails"""

    @classmethod
    def setUpClass(cls):
        cls.radial = RadialFieldService()
        cls.riesz = RieszService()
        cls.grid = cls.radial.make_grid(N, 320, 64.0, GridSpacing.GRADED, 6.0)
        cls.kernel = cls.riesz.build_kernel(cls.grid, MU)
        cls.service = ConstantsEstimationService(cls.riesz, cls.radial, starts=2, max_iter=40, seed=3)
        cls.sweep = cls.service.bubble_sweep(cls.kernel)
        cls.shl = cls.service.estimate_shl(N, MU, cls.grid, cls.kernel)

    def test_sharp_closed_form(self):
        """S_HL(3, 2) = S / C(3, 2)^(1/4), about 3.332"""
        self.assertAlmostEqual(sharp_shl(3, 2.0), 3.332, delta=2e-3)

    def test_sweep_spread(self):
        """Bubbles with eps in [0.1, 0.5] agree to 2% once the cutoff scales with eps"""
        quotients = [quotient for _, quotient, _ in self.sweep]
        self.assertEqual(len(quotients), 9)
        self.assertLessEqual((max(quotients) - min(quotients)) / min(quotients), 0.02)

    def test_shl_near_sharp_value(self):
        """The estimate lands within 10% of the sharp constant, and not above the sweep"""
        self.assertAlmostEqual(self.shl.value / sharp_shl(N, MU), 1.0, delta=0.1)
        self.assertLessEqual(self.shl.value, min(quotient for _, quotient, _ in self.sweep) * (1 + 1e-12))

    def test_gn_ratio_at_upper_exponent(self):
        """At r = 2*_mu the GN ratio is the HLS quotient to the power -2*_mu"""
        bubble = self.sweep[4][2]
        quotient = self.service.shl_quotient(self.kernel, bubble)
        self.assertAlmostEqual(self.service.gn_ratio(self.kernel, bubble, 4.0) * quotient**4, 1.0, delta=1e-10)


if __name__ == "__main__":
    unittest.main(verbosity=2)
