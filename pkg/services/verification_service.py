import math
from dataclasses import replace
from typing import Optional

import numpy as np

from common.enums import CardanoVariant, MorseClass
from common.exceptions import KcnError
from helper.logger_utils import force_log
from models import ProblemParams, RadialFunction, RadialGrid, RieszKernel, VerificationCheck, WorkingConstants
from services.constants_estimation_service import ConstantsEstimationService
from services.exponents_service import delta_of
from services.solver_service import SolverService

BALL_SELF_ENERGY = 32 * math.pi**2 / 15
# N, M, r_max: node 192 sits on the ball boundary
BALL_GRID = (3, 384, 2.0)


class VerificationService:
    """
    The invariant suite behind `main.py verify`. Every check returns a
    VerificationCheck; the suite passes when all of them do.
    """

    def __init__(
        self,
        solver: SolverService,
        estimation: ConstantsEstimationService,
        seed: int = 0,
        profiles: int = 100,
        mc_samples: int = 200_000,
    ):
        self.solver = solver
        self.estimation = estimation
        self.functional = solver.functional
        self.fiber = solver.fiber
        self.exponents = solver.exponents
        self.radial = solver.radial
        self.riesz = self.functional.riesz
        self.seed = seed
        self.profiles = profiles
        self.mc_samples = mc_samples

    def random_profiles(self, grid: RadialGrid, c: float, count: int, seed: Optional[int] = None) -> list[RadialFunction]:
        rng = np.random.default_rng(self.seed if seed is None else seed)
        width_range = (0.03 * grid.r_max, 0.15 * grid.r_max)
        return [
            self.radial.normalize_mass(self.radial.gaussian_mixture(grid, rng, width_range=width_range), c)
            for _ in range(count)
        ]

    # functional identities

    def check_fiber_pohozaev(self, params: ProblemParams, kernel: RieszKernel) -> VerificationCheck:
        worst = 0.0
        for u in self.random_profiles(kernel.grid, params.c, self.profiles):
            base = self.functional.base_quantities(u, params, kernel)
            d1 = self.functional.fiber_terms(base, params, 0.0)[1]
            pohozaev = self.functional.pohozaev(u, params, kernel)
            worst = max(worst, abs(d1 - pohozaev) / self.functional.fiber_scale(base, params))
        return VerificationCheck("fiber_pohozaev_identity", worst <= 1e-10, worst, 1e-10)

    def check_fiber_fd_order(self, params: ProblemParams, kernel: RieszKernel) -> VerificationCheck:
        """Observed order of centered differences of E_u at s = 0"""
        u = self.random_profiles(kernel.grid, params.c, 1)[0]
        base = self.functional.base_quantities(u, params, kernel)
        _, d1, d2 = self.functional.fiber_terms(base, params, 0.0)

        def energy(s):
            return self.functional.fiber_terms(base, params, s)[0]

        steps = (1e-2, 5e-3, 2.5e-3)
        err1 = [abs((energy(h) - energy(-h)) / (2 * h) - d1) for h in steps]
        err2 = [abs((energy(h) - 2 * energy(0.0) + energy(-h)) / h**2 - d2) for h in steps]
        orders = [math.log2(e[k] / e[k + 1]) for e in (err1, err2) for k in range(len(steps) - 1)]
        observed = min(orders)
        return VerificationCheck("fiber_fd_order", observed >= 1.8, observed, 1.8)

    def check_scaling_laws(self, params: ProblemParams, kernel: RieszKernel) -> VerificationCheck:
        grid = kernel.grid
        u = self.radial.normalize_mass(self.radial.gaussian(grid, 1.5), params.c)
        mass = self.radial.l2_norm(u)
        grad = self.radial.grad_norm(u)
        worst = 0.0
        for s in (-0.5, -0.25, 0.25, 0.5):
            v = self.radial.dilate(u, s)
            worst = max(worst, abs(self.radial.l2_norm(v) / mass - 1))
            worst = max(worst, abs(self.radial.grad_norm(v) / (math.exp(s) * grad) - 1))
            for t in (params.q, params.p):
                expected = math.exp(2 * t * delta_of(grid.dimension, kernel.mu, t) * s)
                ratio = self.riesz.choquard_integral(kernel, v, t) / self.riesz.choquard_integral(kernel, u, t)
                worst = max(worst, abs(ratio / expected - 1))
        return VerificationCheck("scaling_laws", worst <= 1e-2, worst, 1e-2)

    # kernel oracles

    def check_kernel_closed_form(self, kernel: RieszKernel) -> VerificationCheck:
        grid = kernel.grid
        M = grid.node_count
        rng = np.random.default_rng(self.seed)
        i = rng.integers(0, M, size=200)
        j = rng.integers(0, M, size=200)
        off = i != j
        i, j = i[off], j[off]
        expected = self.riesz.sphere_average_closed_form(grid.dimension, kernel.mu, grid.nodes[i], grid.nodes[j])
        worst = float(np.max(np.abs(kernel.matrix[i, j] / expected - 1)))
        return VerificationCheck("kernel_closed_form", worst <= 1e-7, worst, 1e-7)

    def ball_indicator(self, grid: RadialGrid) -> RadialFunction:
        """
        chi_{B_1} sampled so that |u|^2 carries the covered fraction of each
        cell; a node sitting on r = 1 gets half weight.
        """
        covered = np.clip((1.0 - grid.edges[:-1]) / np.diff(grid.edges), 0.0, 1.0)
        return RadialFunction(grid, np.sqrt(covered))

    def check_ball_energy(self) -> list[VerificationCheck]:
        """Coulomb self-energy of the unit ball for (N, mu) = (3, 1)"""
        ball_grid = self.radial.make_grid(*BALL_GRID)
        kernel = self.riesz.load_or_build_kernel(ball_grid, 1.0)
        u = self.ball_indicator(ball_grid)
        value = self.riesz.choquard_integral(kernel, u, 2.0)
        relative = abs(value / BALL_SELF_ENERGY - 1)
        estimate, std_error = self.riesz.choquard_oracle_mc(u, 2.0, 1.0, self.mc_samples, seed=self.seed)
        sigmas = abs(estimate - BALL_SELF_ENERGY) / std_error
        return [
            VerificationCheck("ball_self_energy", relative <= 1e-2, relative, 1e-2),
            VerificationCheck("ball_monte_carlo", sigmas <= 3.0, sigmas, 3.0),
        ]

    # closed forms

    def check_cardano(self, draws: int = 1000) -> VerificationCheck:
        rng = np.random.default_rng(self.seed)
        worst = 0.0
        for variant, theta, star in ((CardanoVariant.THETA2MU2, 2.0, 4.0), (CardanoVariant.THETA3MU1, 3.0, 5.0)):
            accepted = 0
            while accepted < draws:
                a, b, s = rng.uniform(0.05, 3.0), rng.uniform(0.0, 1.0), rng.uniform(0.2, 2.0)
                if variant is CardanoVariant.THETA2MU2 and not a * a / 4 - b**3 * s**4 / 27 > 0:
                    continue
                accepted += 1
                lam = self.exponents.cardano_lambda(a, b, s, variant)
                residual = lam ** (star - 1) - b * s**theta * lam ** (theta - 1) - a * s
                scale = lam ** (star - 1) + b * s**theta * lam ** (theta - 1) + a * s
                worst = max(worst, abs(residual) / scale)

        exact = [
            (self.exponents.cardano_lambda(1.3, 0.0, 0.7, CardanoVariant.THETA2MU2), (1.3 * 0.7) ** (1 / 3)),
            (self.exponents.cardano_lambda(1.3, 0.0, 0.7, CardanoVariant.THETA3MU1), (1.3 * 0.7) ** 0.25),
            (self.exponents.cardano_lambda(0.0, 0.4, 0.7, CardanoVariant.THETA3MU1), math.sqrt(0.4 * 0.7**3)),
        ]
        closed = max(abs(x / y - 1) for x, y in exact)
        passed = worst <= 1e-10 and closed <= 1e-14
        return VerificationCheck("cardano_residuals", passed, max(worst, closed), 1e-10)

    # geometry

    def check_two_point_geometry(self, params: ProblemParams, kernel: RieszKernel, constants: WorkingConstants) -> VerificationCheck:
        thresholds = self.solver.thresholds_for(params, constants)
        run = params.with_alpha(0.5 * min(thresholds.alpha1, thresholds.alpha2))
        regime = self.exponents.classify_regime(run)
        good = 0
        profiles = self.random_profiles(kernel.grid, run.c, 50, self.seed + 1)
        for u in profiles:
            try:
                report = self.fiber.fiber_structure(self.fiber.h_profile(u, run, kernel), regime)
            except KcnError:
                continue
            first, third = report.critical_points
            if first.energy < 0 < third.energy and first.morse_class is MorseClass.P_PLUS:
                good += 1
        return VerificationCheck("two_point_geometry", good == len(profiles), good, len(profiles))

    def check_unique_maximum(self, params: ProblemParams, kernel: RieszKernel) -> VerificationCheck:
        run = replace(params, q=3.0, p=3.5, alpha=1.0) if (params.N, params.mu) == (3, 2.0) else params
        regime = self.exponents.classify_regime(run)
        good = 0
        profiles = self.random_profiles(kernel.grid, run.c, 50, self.seed + 2)
        for u in profiles:
            try:
                self.fiber.fiber_structure(self.fiber.h_profile(u, run, kernel), regime)
                good += 1
            except KcnError:
                continue
        return VerificationCheck("unique_maximum_geometry", good == len(profiles), good, len(profiles))

    def check_gn_audit(self, params: ProblemParams, kernel: RieszKernel, c_p: float) -> VerificationCheck:
        """No random profile beats the working C_p inflated by 1e-6"""
        bound = c_p * (1 + 1e-6)
        violations = 0
        for u in self.random_profiles(kernel.grid, 1.0, 500, self.seed + 3):
            if self.estimation.gn_ratio(kernel, u, params.p) > bound:
                violations += 1
        return VerificationCheck("gn_audit", violations == 0, violations, 0)

    # suite

    def run(self, params: ProblemParams, kernel: RieszKernel, constants: WorkingConstants) -> list[VerificationCheck]:
        checks = [
            self.check_fiber_pohozaev(params, kernel),
            self.check_fiber_fd_order(params, kernel),
            self.check_scaling_laws(params, kernel),
            self.check_kernel_closed_form(kernel),
            *self.check_ball_energy(),
            self.check_cardano(),
        ]
        regime = self.exponents.classify_regime(params)
        if regime.is_mixed and constants.complete:
            checks.append(self.check_two_point_geometry(params, kernel, constants))
        checks.append(self.check_unique_maximum(params, kernel))
        if constants.c_p is not None and not params.p_is_critical:
            checks.append(self.check_gn_audit(params, kernel, constants.c_p))

        for check in checks:
            level = "INFO" if check.passed else "ERROR"
            force_log(f"{check.name}: {check.describe()}", "VerificationService", level)
        return checks
