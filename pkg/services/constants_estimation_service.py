import math
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Optional

import numpy as np
from numpy.typing import NDArray
from scipy.optimize import minimize_scalar

from common.exceptions import ExponentOutOfRange, ZeroFunction
from helper.logger_utils import force_log
from models import ConstantEstimate, RadialFunction, RadialGrid, RieszKernel
from services.exponents_service import delta_of
from services.functional_service import FunctionalService, signed_power
from services.radial_field_service import RadialFieldService
from services.riesz_service import RieszService

ARMIJO = 1e-4
# relative spread of the bubble sweep above which it is reported
SWEEP_SPREAD = 0.02
# objective value and weighted-L2 gradient field
Objective = Callable[[RadialFunction], tuple[float, NDArray[np.float64]]]


class ConstantsEstimationService:
    """
    Numerical working values for the Gagliardo-Nirenberg constants C_r
    and the Hardy-Littlewood-Sobolev best constant S_HL.
    """

    def __init__(
        self,
        riesz: RieszService | None = None,
        radial: RadialFieldService | None = None,
        functional: FunctionalService | None = None,
        starts: int = 16,
        max_iter: int = 300,
        tolerance: float = 1e-10,
        seed: int = 0,
        workers: int = 1,
    ):
        self.riesz = riesz or RieszService()
        self.radial = radial or RadialFieldService()
        self.functional = functional or FunctionalService(self.radial, self.riesz)
        self.starts = starts
        self.max_iter = max_iter
        self.tolerance = tolerance
        self.seed = seed
        self.workers = max(1, int(workers))

    # objectives

    def _choquard_parts(self, kernel: RieszKernel, u: RadialFunction, t: float) -> tuple[float, NDArray[np.float64]]:
        """D(u,t) and its weighted gradient 2t Phi_t |u|^(t-2)u"""
        potential = self.riesz.potential(kernel, u, t).values
        value = float(np.dot(kernel.grid.weights * np.abs(u.values) ** t, potential))
        return value, 2 * t * potential * signed_power(u.values, t)

    def _log_gn_ratio(self, kernel: RieszKernel, r: float) -> Objective:
        delta = delta_of(kernel.grid.dimension, kernel.mu, r)

        def objective(u: RadialFunction):
            grad_sq = self.radial.grad_norm(u) ** 2
            mass_sq = self.radial.l2_norm(u) ** 2
            d, d_grad = self._choquard_parts(kernel, u, r)
            if d <= 0 or grad_sq <= 0:
                raise ZeroFunction("GN ratio undefined for a constant or zero profile")
            value = math.log(d) - r * delta * math.log(grad_sq) - r * (1 - delta) * math.log(mass_sq)
            kinetic_grad = 2 * (u.grid.stiffness @ u.values) / u.grid.weights
            gradient = d_grad / d - r * delta * kinetic_grad / grad_sq - r * (1 - delta) * 2 * u.values / mass_sq
            return value, gradient

        return objective

    def _neg_log_shl_quotient(self, kernel: RieszKernel) -> Objective:
        star = self.riesz.exponent_range(kernel.grid.dimension, kernel.mu)[1]

        def objective(u: RadialFunction):
            grad_sq = self.radial.grad_norm(u) ** 2
            d, d_grad = self._choquard_parts(kernel, u, star)
            if d <= 0 or grad_sq <= 0:
                raise ZeroFunction("HLS quotient undefined for a constant or zero profile")
            value = -math.log(grad_sq) + math.log(d) / star
            kinetic_grad = 2 * (u.grid.stiffness @ u.values) / u.grid.weights
            return value, -kinetic_grad / grad_sq + d_grad / (star * d)

        return objective

    def gn_ratio(self, kernel: RieszKernel, u: RadialFunction, r: float) -> float:
        """W(u) = D(u,r) / (|grad u|^(2r delta_r) |u|^(2r(1-delta_r)))"""
        return math.exp(self._log_gn_ratio(kernel, r)(u)[0])

    def shl_quotient(self, kernel: RieszKernel, u: RadialFunction) -> float:
        """|grad u|^2 / D(u, 2*_mu)^(1/2*_mu)"""
        return math.exp(-self._neg_log_shl_quotient(kernel)(u)[0])

    # ascent

    def projected_ascent(self, u: RadialFunction, objective: Objective) -> tuple[RadialFunction, float, float]:
        """
        Maximise a mass-invariant objective over the unit L2 sphere with
        H1-preconditioned steps and Armijo backtracking. Returns the final
        profile, its value and the last relative improvement.
        """
        u = self.radial.normalize_mass(u, 1.0)
        value, gradient = objective(u)
        improvement = math.inf
        for _ in range(self.max_iter):
            direction = self.functional.sobolev_direction(u, u.with_values(gradient))
            slope = self.radial.inner(u.with_values(gradient), direction)
            if slope <= 0:
                break
            step = 1.0 / (1.0 + self.radial.h1_norm(direction))
            accepted = False
            while step > 1e-12:
                trial = self.radial.normalize_mass(u.with_values(u.values + step * direction.values), 1.0)
                trial_value, trial_gradient = objective(trial)
                if trial_value >= value + ARMIJO * step * slope:
                    accepted = True
                    break
                step /= 2
            if not accepted:
                break
            improvement = (trial_value - value) / max(1.0, abs(value))
            u, value, gradient = trial, trial_value, trial_gradient
            if improvement < self.tolerance:
                break
        return u, value, improvement

    def _run_starts(self, starts: list[RadialFunction], objective: Objective) -> list[tuple[RadialFunction, float, float]]:
        if self.workers > 1:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                return list(pool.map(lambda u: self.projected_ascent(u, objective), starts))
        return [self.projected_ascent(u, objective) for u in starts]

    def _width_bounds(self, grid: RadialGrid) -> tuple[float, float]:
        return math.log(8 * grid.r_max / grid.node_count), math.log(grid.r_max / 4)

    def _record(self, name, value, method, family, grid: RadialGrid, mu, exponent, tolerance) -> ConstantEstimate:
        return ConstantEstimate(
            name=name,
            value=value,
            method=method,
            family=family,
            N=grid.dimension,
            mu=float(mu),
            exponent=float(exponent),
            node_count=grid.node_count,
            r_max=grid.r_max,
            spacing=grid.spacing.value,
            grading=grid.grading,
            tolerance=float(tolerance),
        )

    # estimates

    def estimate_gn_constant(
        self,
        N: int,
        mu: float,
        r: float,
        grid: RadialGrid,
        kernel: Optional[RieszKernel] = None,
    ) -> ConstantEstimate:
        """Best Rayleigh ratio W found; a lower bound on the sharp C_r"""
        lower, upper = self.riesz.exponent_range(N, mu)
        if not lower < r < upper:
            raise ExponentOutOfRange(f"r={r} must lie strictly inside ({lower}, {upper})", {"r": r})
        if grid.dimension != N:
            raise ValueError(f"grid dimension {grid.dimension} differs from N={N}")
        kernel = kernel or self.riesz.load_or_build_kernel(grid, mu)
        objective = self._log_gn_ratio(kernel, r)

        lo, hi = self._width_bounds(grid)
        search = minimize_scalar(
            lambda z: -objective(self.radial.gaussian(grid, math.exp(z)))[0],
            bounds=(lo, hi),
            method="bounded",
            options={"xatol": 1e-6},
        )
        best_gaussian = self.radial.gaussian(grid, math.exp(search.x))

        seeds = np.random.SeedSequence(self.seed).spawn(self.starts)
        width_range = (0.05 * grid.r_max, 0.25 * grid.r_max)
        starts = [best_gaussian] + [
            self.radial.gaussian_mixture(grid, np.random.default_rng(child), width_range=width_range) for child in seeds
        ]
        results = self._run_starts(starts, objective)
        _, value, improvement = max(results, key=lambda item: item[1])

        estimate = math.exp(value)
        force_log(f"C_r estimate for N={N} mu={mu} r={r}: {estimate:.10g}", "ConstantsEstimationService")
        return self._record(
            "C_r",
            estimate,
            "projected-ascent",
            f"gaussian width search + {self.starts} gaussian mixtures",
            grid,
            mu,
            r,
            abs(improvement) if math.isfinite(improvement) else self.tolerance,
        )

    def bubble_sweep(
        self,
        kernel: RieszKernel,
        eps_values: Optional[NDArray[np.float64]] = None,
        delta: Optional[float] = None,
    ) -> list[tuple[float, float, RadialFunction]]:
        """
        HLS quotients (eps, quotient, bubble) of cut-off bubbles whose cutoff
        radius shrinks with eps, delta_eps = delta eps / max(eps), so the family
        is a pure dilation family. delta defaults to r_max / 2.
        """
        grid = kernel.grid
        eps_values = np.geomspace(0.1, 0.5, 9) if eps_values is None else np.asarray(eps_values, dtype=np.float64)
        delta = grid.r_max / 2 if delta is None else delta
        widest = float(eps_values.max())
        sweep = []
        for eps in eps_values:
            bubble = self.radial.bubble(grid, float(eps), delta * float(eps) / widest)
            sweep.append((float(eps), self.shl_quotient(kernel, bubble), bubble))

        quotients = [quotient for _, quotient, _ in sweep]
        spread = (max(quotients) - min(quotients)) / min(quotients)
        force_log(
            f"bubble sweep over {len(sweep)} eps values: spread {spread:.3%}",
            "ConstantsEstimationService",
            "WARNING" if spread > SWEEP_SPREAD else "DEBUG",
        )
        return sweep

    def estimate_shl(
        self,
        N: int,
        mu: float,
        grid: RadialGrid,
        kernel: Optional[RieszKernel] = None,
        eps_values: Optional[NDArray[np.float64]] = None,
        delta: Optional[float] = None,
    ) -> ConstantEstimate:
        """Minimum of the HLS quotient over the bubble sweep, refined by descent"""
        if grid.dimension != N:
            raise ValueError(f"grid dimension {grid.dimension} differs from N={N}")
        kernel = kernel or self.riesz.load_or_build_kernel(grid, mu)
        objective = self._neg_log_shl_quotient(kernel)
        sweep = self.bubble_sweep(kernel, eps_values, delta)
        eps_values = np.array([eps for eps, _, _ in sweep])
        start_quotient, start = min(((quotient, bubble) for _, quotient, bubble in sweep), key=lambda item: item[0])

        _, value, improvement = self.projected_ascent(start, objective)
        estimate = min(math.exp(-value), start_quotient)
        force_log(f"S_HL estimate for N={N} mu={mu}: {estimate:.10g}", "ConstantsEstimationService")
        return self._record(
            "S_HL",
            estimate,
            "bubble-sweep+descent",
            f"cut-off bubbles, eps in [{eps_values.min():.3g}, {eps_values.max():.3g}], cutoff proportional to eps",
            grid,
            mu,
            self.riesz.exponent_range(N, mu)[1],
            abs(improvement) if math.isfinite(improvement) else self.tolerance,
        )
