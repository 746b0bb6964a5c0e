import math
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from common.enums import MorseClass, Regime
from common.exceptions import ConditionFailed, ExponentPattern, StructureMismatch
from helper.logger_utils import force_log
from models import (
    CriticalPoint,
    FiberBase,
    FiberReport,
    GProfile,
    ProblemParams,
    RadialFunction,
    RieszKernel,
    ScalarProfile,
)
from services.exponents_service import ExponentsService, delta_of
from services.functional_service import FunctionalService

LOG_T_MIN = math.log(1e-6)
LOG_T_MAX = math.log(1e6)
BRACKET_POINTS = 512
ROOT_RESIDUAL = 1e-10


class FiberGeometryService:
    """
    Scalar geometry of the fiber map: the profiles h and g, the two-point condition
    and the critical-point structure per regime. Works on t = e^s.
    """

    def __init__(
        self,
        functional: FunctionalService | None = None,
        exponents: ExponentsService | None = None,
    ):
        self.functional = functional or FunctionalService()
        self.exponents = exponents or ExponentsService()

    # profiles

    @staticmethod
    def profile_from_base(base: FiberBase, params: ProblemParams) -> ScalarProfile:
        dq = delta_of(params.N, params.mu, params.q)
        dp = delta_of(params.N, params.mu, params.p)
        return ScalarProfile(
            a1=params.a * base.grad_sq / 2,
            a2=params.b * base.grad_2theta / (2 * params.theta),
            a3=base.d_p / (2 * params.p),
            a4=params.alpha * base.d_q / (2 * params.q),
            p1=2 * params.p * dp,
            q1=2 * params.q * dq,
            theta=params.theta,
            role="h",
        )

    def h_profile(self, u: RadialFunction, params: ProblemParams, kernel: RieszKernel) -> ScalarProfile:
        return self.profile_from_base(self.functional.base_quantities(u, params, kernel), params)

    @staticmethod
    def g_scalar_profile(params: ProblemParams, c_p: float, c_q: float) -> ScalarProfile:
        """Lower bound g(|grad u|) <= J(u) from the GN inequalities"""
        dq = delta_of(params.N, params.mu, params.q)
        dp = delta_of(params.N, params.mu, params.p)
        c = params.c
        return ScalarProfile(
            a1=params.a / 2,
            a2=params.b / (2 * params.theta),
            a3=c_p * c ** (2 * params.p * (1 - dp)) / (2 * params.p),
            a4=params.alpha * c_q * c ** (2 * params.q * (1 - dq)) / (2 * params.q),
            p1=2 * params.p * dp,
            q1=2 * params.q * dq,
            theta=params.theta,
            role="g",
        )

    # two-point condition

    @staticmethod
    def t1_condition(profile: ScalarProfile) -> float:
        theta2, p1, q1 = 2 * profile.theta, profile.p1, profile.q1
        return theta2 * (theta2 - q1) * (theta2 - 2) / (p1 * (p1 - q1) * (p1 - 2))

    def two_point_condition(self, profile: ScalarProfile, theta: float | None = None) -> tuple[bool, float]:
        """
        Left side of the two-point condition. Above 1, h has a negative
        local minimum and a positive global maximum.
        """
        theta = profile.theta if theta is None else theta
        p1, q1 = profile.p1, profile.q1
        if not (0 < q1 < 2 < 2 * theta < p1):
            raise ExponentPattern(f"need 0 < q1 < 2 < 2 theta < p1, got q1={q1}, theta={theta}, p1={p1}")
        if profile.a4 == 0:
            return True, math.inf

        gap = p1 - 2 * theta
        t1 = self.t1_condition(profile)
        factor = t1 ** ((2 * theta - q1) / gap) - t1 ** ((p1 - q1) / gap)
        a1, a2, a3, a4 = profile.a1, profile.a2, profile.a3, profile.a4
        bracket = a1 / a4 * (a2 / a3) ** ((2 - q1) / gap) + a2 ** ((p1 - q1) / gap) / (a4 * a3 ** ((2 * theta - q1) / gap))
        lhs = factor * bracket
        return lhs > 1, lhs

    # root finding on log t

    @staticmethod
    def _log_roots(func: Callable[[np.ndarray], np.ndarray], points: int = BRACKET_POINTS) -> list[float]:
        """Roots in log t of func, bracketed by sign changes on a log-uniform grid"""
        z = np.linspace(LOG_T_MIN, LOG_T_MAX, points)
        y = func(z)
        roots = []
        for i in range(points - 1):
            if y[i] == 0.0:
                roots.append(float(z[i]))
            elif y[i] * y[i + 1] < 0:
                roots.append(brentq(lambda x: float(func(np.array([x]))[0]), z[i], z[i + 1], xtol=1e-14, rtol=1e-14))
        return roots

    def stationary_points(self, profile: ScalarProfile) -> list[float]:
        """log t of every zero of t h'(t), scaled by t^-(min exponent)"""
        low = profile.min_exponent
        return self._log_roots(lambda z: profile.t_derivative(np.exp(z)) * np.exp(-low * z))

    def zeros(self, profile: ScalarProfile) -> list[float]:
        low = profile.min_exponent
        return self._log_roots(lambda z: profile.value(np.exp(z)) * np.exp(-low * z))

    def _critical_point(self, profile: ScalarProfile, z: float) -> CriticalPoint:
        t = math.exp(z)
        residual = abs(profile.t_derivative(t))
        if residual > ROOT_RESIDUAL * profile.scale(t):
            force_log(f"fiber root at s={z:.6g} has residual {residual:.3g}", "FiberGeometryService", "WARNING")
        energy = profile.value(t)
        second = profile.t_second(t)
        return CriticalPoint(
            s=z,
            energy=energy,
            second_derivative=second,
            morse_class=MorseClass.from_second_derivative(second, energy, self.functional.morse_tol),
        )

    # g-profile structure

    def g_profile(self, params: ProblemParams, c_p: float, c_q: float) -> GProfile:
        """Zeros t0 < t1_zero of g and its local-min / global-max locations"""
        profile = self.g_scalar_profile(params, c_p, c_q)
        if profile.a4 == 0:
            raise ConditionFailed("alpha=0: g has no negative local minimum")
        critical = self.stationary_points(profile)
        zeros = self.zeros(profile)
        diagnostics = {"critical": critical, "zeros": zeros, "alpha": params.alpha}
        if len(critical) != 2 or len(zeros) != 2:
            raise ConditionFailed(
                f"g has {len(critical)} critical points and {len(zeros)} zeros; expected 2 and 2",
                diagnostics,
            )
        t_minus, t_plus = (math.exp(z) for z in critical)
        t0, t1 = (math.exp(z) for z in zeros)
        g_minus, g_plus = profile.value(t_minus), profile.value(t_plus)
        if not (g_minus < 0 < g_plus and t_minus < t0 < t_plus < t1):
            raise ConditionFailed(
                f"g structure broken: g(t-)={g_minus:.3g}, g(t+)={g_plus:.3g}",
                diagnostics,
            )
        return GProfile(t0=t0, t1_zero=t1, t_minus=t_minus, t_plus=t_plus, g_minus=g_minus, g_plus=g_plus)

    # fiber structure

    def supercritical_maximizer(self, profile: ScalarProfile) -> tuple[float, float]:
        critical = self.stationary_points(profile)
        if len(critical) != 1:
            raise StructureMismatch(
                f"expected a unique maximizer, found {len(critical)} critical points",
                {"critical": critical},
            )
        t_star = math.exp(critical[0])
        level = profile.value(t_star)
        if not level > 0:
            raise StructureMismatch(f"maximizer level {level:.6g} is not positive", {"t_star": t_star})
        return t_star, level

    def fiber_structure(self, profile: ScalarProfile, regime: Regime) -> FiberReport:
        """Critical points and zeros of E_u(s) = h(e^s)"""
        critical = [self._critical_point(profile, z) for z in self.stationary_points(profile)]
        zeros = self.zeros(profile)
        diagnostics = {
            "critical_s": [point.s for point in critical],
            "zeros_s": zeros,
            "a": (profile.a1, profile.a2, profile.a3, profile.a4),
        }

        if regime.is_mixed and profile.a4 > 0:
            classes = [point.morse_class for point in critical]
            if len(critical) != 2 or len(zeros) != 2:
                raise StructureMismatch(
                    f"{regime.value}: found {len(critical)} critical points and {len(zeros)} zeros, expected 2 and 2",
                    diagnostics,
                )
            t1, t3 = critical[0].s, critical[1].s
            t2, t4 = zeros
            if not (t1 < t2 < t3 < t4) or classes != [MorseClass.P_PLUS, MorseClass.P_MINUS]:
                raise StructureMismatch(f"{regime.value}: ordering or Morse classes broken", diagnostics)
        else:
            if len(critical) != 1 or critical[0].morse_class is not MorseClass.P_MINUS or critical[0].energy <= 0:
                raise StructureMismatch(
                    f"{regime.value}: expected a single maximizer of positive level, found {len(critical)} critical points",
                    diagnostics,
                )
        return FiberReport(critical_points=critical, zeros=zeros, regime=regime, diagnostics=diagnostics)

    def fiber_critical_points(self, u: RadialFunction, params: ProblemParams, kernel: RieszKernel) -> FiberReport:
        regime = self.exponents.classify_regime(params)
        return self.fiber_structure(self.h_profile(u, params, kernel), regime)

    # brute-force oracle

    @staticmethod
    def sample_structure(profile: ScalarProfile, points: int = 100_000) -> tuple[int, list[tuple[float, float, str]]]:
        """
        Count sign changes of h' on a dense log grid. Each extremum is
        returned as (t, h(t), "min" | "max").
        """
        z = np.linspace(LOG_T_MIN, LOG_T_MAX, points)
        t = np.exp(z)
        slope = profile.t_derivative(t) * np.exp(-profile.min_exponent * z)
        signs = np.sign(slope)
        changes = np.nonzero(signs[:-1] * signs[1:] < 0)[0]
        extrema = []
        for i in changes:
            kind = "min" if signs[i] < 0 else "max"
            extrema.append((float(t[i]), float(profile.value(t[i])), kind))
        return len(changes), extrema
