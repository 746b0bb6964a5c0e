import math
import time
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from common.enums import CardanoVariant, MorseClass, Regime, SolutionKind
from common.exceptions import (
    KcnError,
    NotConverged,
    ParameterError,
    RegimeMismatch,
    ThresholdViolated,
)
from helper.logger_utils import force_log
from models import (
    BoundCheck,
    FiberBase,
    ProblemParams,
    RadialFunction,
    RieszKernel,
    SolutionRecord,
    SolverSettings,
    SweepRow,
    SweepTable,
    ThresholdSet,
    VerificationCheck,
    WorkingConstants,
)
from services.exponents_service import ExponentsService
from services.fiber_geometry_service import FiberGeometryService
from services.functional_service import FunctionalService

MIN_STEP = 1e-14


class _State:
    """Energy, multiplier, constrained gradient and dilation slope at one iterate"""

    def __init__(self, u: RadialFunction, base: FiberBase, gradient: RadialFunction, energy: float, radial):
        self.u = u
        self.base = base
        self.gradient = gradient
        self.energy = energy
        self.lam = radial.inner(gradient, u) / radial.inner(u, u)
        self.constrained = u.with_values(gradient.values - self.lam * u.values)
        self.constrained_norm = radial.l2_norm(self.constrained)
        self.h1_norm = radial.h1_norm(u)
        self.pohozaev = radial.inner(self.constrained, radial.dilation_generator(u))


class SolverService:
    """
    Critical points of J on the mass sphere S_c: the local minimizer on the
    set {|grad u| < t0} and the mountain-pass point through the fiber
    inf-max reduction.
    """

    def __init__(
        self,
        functional: FunctionalService | None = None,
        fiber: FiberGeometryService | None = None,
        exponents: ExponentsService | None = None,
        settings: SolverSettings | None = None,
    ):
        self.functional = functional or FunctionalService()
        self.radial = self.functional.radial
        self.exponents = exponents or ExponentsService()
        self.fiber = fiber or FiberGeometryService(self.functional, self.exponents)
        self.settings = settings or SolverSettings()

    # shared pieces

    def _state(self, u: RadialFunction, params: ProblemParams, kernel: RieszKernel) -> _State:
        base, gradient = self.functional.evaluate(u, params, kernel)
        energy = self.functional.breakdown(base, params).total
        return _State(u, base, gradient, energy, self.radial)

    def _energy(self, u: RadialFunction, params: ProblemParams, kernel: RieszKernel) -> float:
        return self.functional.energy(u, params, kernel).total

    def _bounds(self, state: _State, params: ProblemParams) -> tuple[float, float, float]:
        """Gradient, EL and Pohozaev tolerances at the iterate"""
        settings = self.settings
        kinetic = params.a * state.base.grad_sq + params.b * state.base.grad_2theta
        return (
            settings.tol_grad * (1.0 + abs(state.energy)),
            settings.tol_el * (1.0 + state.h1_norm),
            settings.tol_pohozaev * kinetic,
        )

    def _converged(self, state: _State, params: ProblemParams) -> bool:
        grad_bound, el_bound, pohozaev_bound = self._bounds(state, params)
        return (
            state.constrained_norm <= grad_bound
            and state.constrained_norm <= el_bound
            and abs(state.pohozaev) <= pohozaev_bound
        )

    def thresholds_for(self, params: ProblemParams, constants: Optional[WorkingConstants]) -> ThresholdSet:
        if constants is None or constants.c_q is None or constants.s_hl is None or constants.c_p is None:
            raise ParameterError("thresholds need the working constants C_p, C_q and S_HL")
        return self.exponents.compute_thresholds(params, constants.c_p, constants.c_q, constants.s_hl)

    def _require_below(self, params: ProblemParams, bound: float, label: str) -> None:
        if params.alpha >= bound:
            raise ThresholdViolated(
                f"alpha={params.alpha} must be below {label}={bound:.10g}",
                {"alpha": params.alpha, label: bound},
            )

    def initial_local(self, kernel: RieszKernel, params: ProblemParams) -> RadialFunction:
        return self.radial.normalize_mass(self.radial.gaussian(kernel.grid, 1.0), params.c)

    def initial_mountain_pass(self, kernel: RieszKernel, params: ProblemParams, delta: Optional[float] = None) -> RadialFunction:
        grid = kernel.grid
        blend = self.radial.bubble(grid, 0.5, delta).values + self.radial.gaussian(grid, 1.0).values
        return self.radial.normalize_mass(RadialFunction(grid, blend), params.c)

    def _start(self, init: Optional[RadialFunction], fallback: RadialFunction, params: ProblemParams) -> RadialFunction:
        if init is None:
            return fallback
        self.radial.require_same_grid(init, fallback)
        return self.radial.normalize_mass(init, params.c)

    def _dilate(self, u: RadialFunction, s: float, c: float) -> RadialFunction:
        """s * u in chunks of at most s_max, renormalised onto S_c"""
        limit = self.radial.s_max
        while abs(s) > 0:
            step = max(-limit, min(limit, s))
            u = self.radial.dilate(u, step)
            s -= step
        return self.radial.normalize_mass(u, c)

    def _descent(self, state: _State, params: ProblemParams, kernel: RieszKernel) -> Optional[RadialFunction]:
        """
        One Armijo step on J along the mass sphere, preconditioned by the
        Kirchhoff metric. The dilation direction is left to the line search
        of `_linear_pull`.
        """
        u = state.u
        mass, kinetic = self.functional.kirchhoff_metric(u, params, state.lam)
        direction = self.functional.sobolev_direction(u, state.gradient, mass, kinetic)
        generator = self._tangent_generator(u, mass, kinetic)
        overlap = self.radial.metric_inner(direction, generator, mass, kinetic)
        direction = direction.with_values(direction.values - overlap * generator.values)
        slope = self.radial.metric_inner(direction, direction, mass, kinetic)
        if slope <= 0:
            return None
        step = 1.0
        while step > MIN_STEP:
            trial = self.radial.normalize_mass(u.with_values(u.values - step * direction.values), params.c)
            if self._energy(trial, params, kernel) <= state.energy - self.settings.armijo * step * slope:
                return trial
            step /= 2
        return None

    # fiber pulls

    def _fiber_report(self, base: FiberBase, params: ProblemParams, regime: Regime):
        return self.fiber.fiber_structure(self.fiber.profile_from_base(base, params), regime)

    def _tangent_generator(self, u: RadialFunction, mass: float = 1.0, kinetic: float = 1.0) -> RadialFunction:
        """Dilation generator made L2-tangent to S_c at u, unit in the given metric"""
        v = self.radial.dilation_generator(u)
        v = v.with_values(v.values - self.radial.inner(u, v) / self.radial.inner(u, u) * u.values)
        return v.scaled(1.0 / math.sqrt(self.radial.metric_inner(v, v, mass, kinetic)))

    def _linear_pull(
        self,
        u: RadialFunction,
        v: RadialFunction,
        params: ProblemParams,
        kernel: RieszKernel,
        ascend: bool = True,
    ) -> RadialFunction:
        """
        Move to the nearest stationary point of J along
        sigma -> c (u + sigma v)/|u + sigma v|, uphill or downhill.
        """
        c = params.c

        def point(sigma: float) -> tuple[RadialFunction, np.ndarray]:
            y = u.values + sigma * v.values
            norm = math.sqrt(float(np.dot(u.grid.weights, y * y)))
            tangent = c * (v.values - y * float(np.dot(u.grid.weights, y * v.values)) / norm**2) / norm
            return u.with_values(c * y / norm), tangent

        def slope(sigma: float) -> float:
            w, tangent = point(sigma)
            gradient = self.functional.gradient_field(w, params, kernel)
            return float(np.dot(u.grid.weights, gradient.values * tangent))

        g0 = slope(0.0)
        if g0 == 0.0:
            return u
        sign = math.copysign(1.0, g0) if ascend else -math.copysign(1.0, g0)
        reach = self.radial.h1_norm(u) / math.sqrt(self.radial.h1_inner(v, v))
        sigma = sign * 1e-6 * reach
        while abs(sigma) < reach:
            if slope(sigma) * g0 < 0:
                root = brentq(slope, 0.0, sigma, xtol=1e-15, rtol=1e-12, maxiter=200)
                return point(root)[0]
            sigma *= 2.0
        return u

    # solvers

    def solve_local_min(
        self,
        params: ProblemParams,
        kernel: RieszKernel,
        constants: Optional[WorkingConstants],
        init: Optional[RadialFunction] = None,
    ) -> SolutionRecord:
        """Descent on S_c confined to {|grad u| < t0} by fiber pulls"""
        started = time.perf_counter()
        regime = self.exponents.classify_regime(params)
        if not regime.is_mixed:
            raise RegimeMismatch(f"a local minimizer exists only in Cases I and II, got {regime.value}")
        if params.alpha == 0:
            raise RegimeMismatch("alpha=0: J_0 has no local minimizer on S_c")
        thresholds = self.thresholds_for(params, constants)
        self._require_below(params, thresholds.alpha_bound, "min(alpha_i)")
        t0 = self.fiber.g_profile(params, thresholds.c_p, thresholds.c_q).t0
        guard = (1.0 - self.settings.k_margin) * t0

        u = self._start(init, self.initial_local(kernel, params), params)
        state = self._state(u, params, kernel)
        report = self._fiber_report(state.base, params, regime)
        if report.local_min is not None and report.local_min.s != 0.0:
            state = self._state(self._dilate(u, report.local_min.s, params.c), params, kernel)

        converged = False
        iteration = 0
        for iteration in range(1, self.settings.max_iter + 1):
            if math.sqrt(state.base.grad_sq) >= guard:
                report = self._fiber_report(state.base, params, regime)
                s1 = report.local_min.s if report.local_min else 0.0
                if abs(s1) > self.settings.pull_threshold:
                    state = self._state(self._dilate(state.u, s1, params.c), params, kernel)
                    continue

            generator = self._tangent_generator(state.u)
            state = self._state(self._linear_pull(state.u, generator, params, kernel, ascend=False), params, kernel)
            if self._converged(state, params):
                converged = True
                break

            trial = self._descent(state, params, kernel)
            if trial is None:
                force_log(f"local-min line search stalled at iteration {iteration}", "SolverService", "WARNING")
                break
            state = self._state(trial, params, kernel)
            if iteration % 100 == 0:
                force_log(
                    f"local-min it={iteration} J={state.energy:.12g} grad={state.constrained_norm:.3e}",
                    "SolverService",
                    "DEBUG",
                )

        return self._finalize(
            state, params, kernel, SolutionKind.LOCAL_MIN, iteration, started, converged, constants, thresholds, t0
        )

    def solve_mountain_pass(
        self,
        params: ProblemParams,
        kernel: RieszKernel,
        constants: Optional[WorkingConstants] = None,
        init: Optional[RadialFunction] = None,
        delta: Optional[float] = None,
    ) -> SolutionRecord:
        """
        Minimise u -> max_s J(s * u) over S_c. Each outer step moves the iterate
        to its fiber maximiser, then descends J in the directions orthogonal
        to the dilation.
        """
        started = time.perf_counter()
        regime = self.exponents.classify_regime(params)
        thresholds = None
        if regime.is_mixed and params.alpha > 0:
            thresholds = self.thresholds_for(params, constants)
            self._require_below(params, min(thresholds.alpha1, thresholds.alpha2), "min(alpha1, alpha2)")

        u = self._start(init, self.initial_mountain_pass(kernel, params, delta), params)
        state = self._state(u, params, kernel)

        converged = False
        iteration = 0
        for iteration in range(1, self.settings.max_iter + 1):
            report = self._fiber_report(state.base, params, regime)
            s_max = report.maximizer.s
            if abs(s_max) > self.settings.pull_threshold:
                state = self._state(self._dilate(state.u, s_max, params.c), params, kernel)
                continue

            generator = self._tangent_generator(state.u)
            state = self._state(self._linear_pull(state.u, generator, params, kernel), params, kernel)
            if self._converged(state, params):
                converged = True
                break

            trial = self._descent(state, params, kernel)
            if trial is None:
                force_log(f"mountain-pass line search stalled at iteration {iteration}", "SolverService", "WARNING")
                break
            state = self._state(trial, params, kernel)
            if iteration % 100 == 0:
                force_log(
                    f"mountain-pass it={iteration} J={state.energy:.12g} grad={state.constrained_norm:.3e}",
                    "SolverService",
                    "DEBUG",
                )

        return self._finalize(
            state, params, kernel, SolutionKind.MOUNTAIN_PASS, iteration, started, converged, constants, thresholds
        )

    def solve_ground_level_alpha0(
        self,
        params: ProblemParams,
        kernel: RieszKernel,
        init: Optional[RadialFunction] = None,
    ) -> SolutionRecord:
        """m(c, 0) > 0: the mountain-pass level of the pure p-problem"""
        return self.solve_mountain_pass(params.with_alpha(0.0), kernel, None, init)

    # verification

    def _finalize(
        self,
        state: _State,
        params: ProblemParams,
        kernel: RieszKernel,
        kind: SolutionKind,
        iterations: int,
        started: float,
        converged: bool,
        constants: Optional[WorkingConstants],
        thresholds: Optional[ThresholdSet],
        t0: Optional[float] = None,
    ) -> SolutionRecord:
        settings = self.settings
        u = state.u
        base = state.base
        energy = state.energy
        grad_l2 = math.sqrt(base.grad_sq)
        _, scaling_identity, second = self.functional.fiber_terms(base, params, 0.0)
        morse = MorseClass.from_second_derivative(second, energy, self.functional.morse_tol)
        lam = self.functional.lagrange_multiplier(u, params, kernel)
        _, el_norm = self.functional.el_residual(u, lam, params, kernel)
        mass = self.radial.l2_norm(u)
        pohozaev = self.functional.dilation_slope(u, params, kernel)
        grad_bound, el_bound, pohozaev_bound = self._bounds(state, params)
        force_log(
            f"{kind.value} dilation slope={pohozaev:.3e} scaling identity={scaling_identity:.3e}",
            "SolverService",
            "DEBUG",
        )

        checks = [
            VerificationCheck("mass", abs(mass - params.c) <= settings.mass_tol * params.c, abs(mass - params.c), settings.mass_tol * params.c),
            VerificationCheck("constrained_gradient", state.constrained_norm <= grad_bound, state.constrained_norm, grad_bound),
            VerificationCheck("pohozaev", abs(pohozaev) <= pohozaev_bound, abs(pohozaev), pohozaev_bound),
            VerificationCheck("el_residual", el_norm <= el_bound, el_norm, el_bound),
            VerificationCheck("lambda_negative", lam < 0, lam, 0.0),
        ]
        if kind is SolutionKind.LOCAL_MIN:
            checks.append(VerificationCheck("energy_negative", energy < 0, energy, 0.0))
            checks.append(VerificationCheck("morse_pplus", morse is MorseClass.P_PLUS, second, 0.0))
            if t0 is not None:
                checks.append(VerificationCheck("below_t0", grad_l2 < t0, grad_l2, t0))
        else:
            checks.append(VerificationCheck("energy_positive", energy > 0, energy, 0.0))
            checks.append(VerificationCheck("morse_pminus", morse is MorseClass.P_MINUS, second, 0.0))

        converged = converged and all(check.passed for check in checks[:4])
        provenance = dict(constants.as_dict()) if constants else {}
        if constants:
            provenance.update(constants.provenance)
        if thresholds is not None:
            provenance.update({"alpha1": thresholds.alpha1, "alpha2": thresholds.alpha2, "alpha3": thresholds.alpha3})
        if t0 is not None:
            provenance["t0"] = t0

        record = SolutionRecord(
            profile=u,
            energy=energy,
            pohozaev_residual=abs(pohozaev),
            lagrange=lam,
            grad_l2=grad_l2,
            kind=kind,
            morse=morse,
            iterations=iterations,
            wall_time=time.perf_counter() - started,
            converged=converged,
            constrained_grad_norm=state.constrained_norm,
            el_residual=el_norm,
            params=params.as_dict(),
            constants=provenance,
            checks=checks,
        )
        force_log(
            f"{kind.value} alpha={params.alpha} J={energy:.12g} lambda={lam:.6g} it={iterations} converged={converged}",
            "SolverService",
        )
        if not converged:
            raise NotConverged(
                f"{kind.value} solve stopped after {iterations} iterations with gradient {state.constrained_norm:.3e}",
                record,
            )
        return record

    # alpha ladder

    def alpha_ladder(self, params: ProblemParams, factors: Sequence[float], constants: WorkingConstants, relative: bool = True) -> list[float]:
        if not relative:
            return sorted((float(f) for f in factors), reverse=True)
        thresholds = self.thresholds_for(params.with_alpha(0.0), constants)
        bound = min(thresholds.alpha1, thresholds.alpha2)
        return sorted((float(f) * bound for f in factors), reverse=True)

    def _attempt(self, label: str, solve, errors: list[str]) -> tuple[Optional[SolutionRecord], Optional[RadialFunction]]:
        """Run one solve; failures become row errors, partial iterates still warm-start"""
        try:
            record = solve()
            return record, record.profile
        except NotConverged as e:
            errors.append(f"{label}: {e}")
            return None, e.record.profile if e.record else None
        except KcnError as e:
            errors.append(f"{label}: {e}")
            return None, None

    def sweep_row(
        self,
        params: ProblemParams,
        alpha: float,
        kernel: RieszKernel,
        constants: WorkingConstants,
        previous_loc: Optional[RadialFunction] = None,
        previous_mp: Optional[RadialFunction] = None,
    ) -> tuple[SweepRow, Optional[SolutionRecord], Optional[SolutionRecord], Optional[RadialFunction], Optional[RadialFunction]]:
        """One ladder row; returns the row, both records and the next warm starts"""
        row_params = params.with_alpha(alpha)
        errors: list[str] = []
        loc, loc_start = self._attempt(
            "local", lambda: self.solve_local_min(row_params, kernel, constants, previous_loc), errors
        )
        mp, mp_start = self._attempt(
            "mp", lambda: self.solve_mountain_pass(row_params, kernel, constants, previous_mp), errors
        )
        row = SweepRow(
            alpha=alpha,
            m=loc.energy if loc else None,
            sigma=mp.energy if mp else None,
            grad_loc=loc.grad_l2 if loc else None,
            lambda_loc=loc.lagrange if loc else None,
            converged_loc=loc is not None,
            converged_mp=mp is not None,
            error="; ".join(errors),
        )
        if errors:
            force_log(f"sweep row alpha={alpha}: {row.error}", "SolverService", "ERROR")
        return row, loc, mp, loc_start or previous_loc, mp_start or previous_mp

    def reference_row(
        self, params: ProblemParams, kernel: RieszKernel, init: Optional[RadialFunction] = None
    ) -> tuple[SweepRow, Optional[SolutionRecord]]:
        """The alpha = 0 row: no local minimizer, sigma = m(c, 0)"""
        errors: list[str] = []
        reference, _ = self._attempt("mp", lambda: self.solve_ground_level_alpha0(params, kernel, init), errors)
        sigma = reference.energy if reference else None
        row = SweepRow(0.0, None, sigma, None, None, False, reference is not None, "; ".join(errors))
        return row, reference

    def sweep_alpha(
        self,
        params: ProblemParams,
        alphas: Sequence[float],
        kernel: RieszKernel,
        constants: WorkingConstants,
        include_reference: bool = True,
    ) -> SweepTable:
        """
        Local-min and mountain-pass levels along a decreasing alpha ladder,
        each solve warm-started from the previous row. Failed rows are kept.
        """
        table = SweepTable(rows=[])
        previous_loc: Optional[RadialFunction] = None
        previous_mp: Optional[RadialFunction] = None
        for alpha in alphas:
            row, loc, mp, previous_loc, previous_mp = self.sweep_row(
                params, alpha, kernel, constants, previous_loc, previous_mp
            )
            table.rows.append(row)
            table.local_records.append(loc)
            table.mp_records.append(mp)
        if include_reference:
            row, table.reference = self.reference_row(params, kernel, previous_mp)
            table.rows.append(row)
        return table

    @staticmethod
    def sweep_trends(table: SweepTable, tolerance: float = 1e-2) -> dict[str, bool]:
        """
        m increases toward 0 and grad_loc decreases as alpha decreases; sigma is
        nonincreasing in alpha and stays below m(c, 0) (1 + tolerance).
        """
        ladder = [row for row in table.rows if row.alpha > 0]
        m = [row.m for row in ladder]
        grad = [row.grad_loc for row in ladder]
        sigma = [row.sigma for row in ladder]
        trends: dict[str, bool] = {}
        if None not in m and len(m) > 1:
            trends["m_increasing_to_zero"] = all(x < y < 0 for x, y in zip(m, m[1:]))
        if None not in grad and len(grad) > 1:
            trends["grad_loc_decreasing"] = all(x > y for x, y in zip(grad, grad[1:]))
        if None not in sigma and len(sigma) > 1:
            trends["sigma_nonincreasing_in_alpha"] = all(x <= y * (1 + 1e-9) for x, y in zip(sigma, sigma[1:]))
        if table.reference is not None and None not in sigma:
            bound = table.reference.energy * (1 + tolerance)
            trends["sigma_below_ground_level"] = all(x <= bound for x in sigma)
        return trends

    def h1_cauchy_trend(self, records: Sequence[Optional[SolutionRecord]]) -> tuple[list[float], bool]:
        """H1 distances between consecutive profiles along the ladder"""
        profiles = [record.profile for record in records if record is not None]
        distances = [self.radial.h1_distance(v, u) for u, v in zip(profiles, profiles[1:])]
        decreasing = all(x > y for x, y in zip(distances, distances[1:]))
        return distances, decreasing

    # critical case

    def bubble_test_level(
        self,
        params: ProblemParams,
        kernel: RieszKernel,
        eps_values: Sequence[float] = (0.5, 0.4, 0.3, 0.2),
        delta: Optional[float] = None,
    ) -> list[tuple[float, float]]:
        """max_s E_v(s) for the bubble v_eps renormalised onto S_c"""
        levels = []
        for eps in eps_values:
            v = self.radial.normalize_mass(self.radial.bubble(kernel.grid, eps, delta), params.c)
            _, level = self.fiber.supercritical_maximizer(self.fiber.h_profile(v, params, kernel))
            levels.append((float(eps), level))
        return levels

    def critical_bound_check(
        self,
        params: ProblemParams,
        kernel: RieszKernel,
        constants: WorkingConstants,
        eps_values: Sequence[float] = (0.5, 0.4, 0.3, 0.2),
        delta: Optional[float] = None,
        q_lower_critical: float = 10 / 3,
    ) -> BoundCheck:
        """0 < sigma < the Cardano bound in the Sobolev-critical supercritical case"""
        variant = CardanoVariant.for_parameters(params.N, params.theta, params.mu)
        if not params.p_is_critical or variant is None:
            raise RegimeMismatch("the bound check needs p = 2*_mu and (N, theta, mu) in {(3,2,2), (3,3,1)}")
        if constants is None or constants.s_hl is None:
            raise ParameterError("the bound check needs S_HL")
        s_hl = constants.s_hl

        bound = self.exponents.critical_bound(params.a, params.b, s_hl, variant)
        lam = self.exponents.cardano_lambda(params.a, params.b, s_hl, variant)
        warnings = tuple(
            check.note
            for check in self.exponents.hypothesis_report(params, None, q_lower_critical, s_hl)
            if check.holds is False
        )

        record = self.solve_mountain_pass(params, kernel, constants, delta=delta)
        levels = self.bubble_test_level(params, kernel, eps_values, delta)
        bubble_level = min(level for _, level in levels) if levels else None
        sigma = record.energy
        ok = 0 < sigma < bound
        force_log(f"critical bound: sigma={sigma:.12g} bound={bound:.12g} ok={ok}", "SolverService")
        return BoundCheck(
            sigma=sigma,
            bound=bound,
            ok=ok,
            cardano_lambda=lam,
            bubble_level=bubble_level,
            warnings=warnings,
            record=record,
        )
