import math
from typing import Optional

from mpmath import mp
from scipy.optimize import brentq
from scipy.special import cbrt

from common.enums import CardanoVariant, Regime
from common.exceptions import (
    BoundaryExponent,
    DiscriminantNonpositive,
    ExponentPattern,
    RegimeMismatch,
)
from helper.logger_utils import force_log
from models import (
    CriticalLevel,
    DerivedExponents,
    HypothesisCheck,
    ProblemParams,
    ThresholdSet,
    same_exponent,
)


def delta_of(N: int, mu: float, r: float) -> float:
    """delta_r = (N(r-2)+mu)/(2r)"""
    return (N * (r - 2) + mu) / (2 * r)


class ExponentsService:
    """
    Exponent algebra, regime classification and the closed-form thresholds.
    All methods are pure.
    """

    def derive_exponents(self, params: ProblemParams) -> DerivedExponents:
        N, mu, theta = params.N, params.mu, params.theta
        delta_q = delta_of(N, mu, params.q)
        delta_p = delta_of(N, mu, params.p)
        return DerivedExponents(
            two_mu_lower=(2 * N - mu) / N,
            two_mu_star=(2 * N - mu) / (N - 2),
            a_star=2 + (2 - mu) / N,
            b_star=2 + (2 * theta - mu) / N,
            delta_q=delta_q,
            delta_p=delta_p,
            q_delta_q=params.q * delta_q,
            p_delta_p=params.p * delta_p,
        )

    def classify_regime(self, params: ProblemParams) -> Regime:
        ex = self.derive_exponents(params)
        q, p = params.q, params.p

        for name, value in (("q", q), ("p", p)):
            for label, edge in (("A*", ex.a_star), ("B*", ex.b_star)):
                if same_exponent(value, edge):
                    raise BoundaryExponent(
                        f"{name}={value} sits on {label}={edge}; regime inequalities are strict",
                        {"exponent": name, "edge": label},
                    )

        p_critical = params.p_is_critical
        if q < ex.a_star and ex.b_star < p:
            return Regime.CASE_II if p_critical else Regime.CASE_I
        if ex.b_star < q:
            return Regime.CASE_IV if p_critical else Regime.CASE_III

        raise RegimeMismatch(
            f"(q, p)=({q}, {p}) is covered by no case: A*={ex.a_star}, B*={ex.b_star}, 2*_mu={ex.two_mu_star}",
            {"q": q, "p": p},
        )

    def compute_thresholds(self, params: ProblemParams, c_p: float, c_q: float, s_hl: float) -> ThresholdSet:
        if min(c_p, c_q, s_hl) <= 0:
            raise ValueError("C_p, C_q and S_HL must be positive")
        ex = self.derive_exponents(params)
        if params.q >= ex.a_star:
            raise RegimeMismatch(f"thresholds need q < A*={ex.a_star}, got q={params.q}")
        regime = self.classify_regime(params)
        if not regime.is_mixed:
            raise RegimeMismatch(f"thresholds are defined for Cases I and II, got {regime.value}")

        if params.p_is_critical:
            c_p = s_hl ** (-ex.two_mu_star)

        a, b, c, q, p, theta = params.a, params.b, params.c, params.q, params.p, params.theta
        dq, dp = ex.delta_q, ex.delta_p
        qd, pd = ex.q_delta_q, ex.p_delta_p
        cq_mass = c ** (2 * q * (1 - dq))
        cp_mass = c ** (2 * p * (1 - dp))
        gap = pd - theta

        alpha1 = (b * (theta - qd) / (dp * (pd - qd) * c_p * cp_mass)) ** ((theta - qd) / gap) * (
            b * gap / (dq * (pd - qd) * c_q * cq_mass)
        )

        kappa_base = theta * (theta - qd) * (theta - 1) / (pd * (pd - qd) * (pd - 1))
        kappa = kappa_base ** ((theta - qd) / gap) - kappa_base ** ((pd - qd) / gap)

        first = (
            a
            / c ** (2 * q * (1 - dq) + 2 * p * (1 - dp) * (1 - qd) / gap)
            * (b * p / (theta * c_p)) ** ((1 - qd) / gap)
        )
        second = (
            2
            / c ** (2 * q * (1 - dq) + 2 * p * (1 - dp) * (theta - qd) / gap)
            * (b / (2 * theta)) ** ((pd - qd) / gap)
            / (c_p / (2 * p)) ** ((theta - qd) / gap)
        )
        alpha2 = kappa * q / c_q * (first + second)

        alpha3: Optional[float] = None
        if params.p_is_critical:
            alpha3 = self._alpha3(params, ex, c_q, s_hl)

        return ThresholdSet(
            alpha1=alpha1,
            alpha2=alpha2,
            alpha3=alpha3,
            kappa=kappa,
            kappa_base=kappa_base,
            c_p=c_p,
            c_q=c_q,
            s_hl=s_hl,
        )

    def _alpha3(self, params: ProblemParams, ex: DerivedExponents, c_q: float, s_hl: float) -> float:
        a, b, c, q, theta = params.a, params.b, params.c, params.q, params.theta
        star, qd, dq = ex.two_mu_star, ex.q_delta_q, ex.delta_q
        level_base = (s_hl ** (theta + 1) * 4 * a * b) ** (star / (2 * star - (theta + 1)))
        numerator = (
            (level_base * q / (theta - qd)) ** ((theta - qd) / theta) * (b / dq) ** (qd / theta) * (star - theta)
        )
        return numerator / ((star - qd) * c_q * c ** (2 * q * (1 - dq)))

    def cardano_lambda(self, a: float, b: float, s_hl: float, variant: CardanoVariant) -> float:
        """Closed-form positive root Lambda of the critical algebraic equation"""
        if variant is CardanoVariant.THETA2MU2:
            if not a * a / 4 - b**3 * s_hl**4 / 27 > 0:
                raise DiscriminantNonpositive(
                    f"a^2/4 - b^3 S^4/27 = {a * a / 4 - b**3 * s_hl**4 / 27} must be positive",
                    {"a": a, "b": b, "s_hl": s_hl},
                )
            half = a * s_hl / 2
            disc = a * a * s_hl**2 / 4 - b**3 * s_hl**6 / 27
            u = cbrt(half + math.sqrt(disc))
            # product of the two Cardano cube roots is b S^2 / 3
            v = b * s_hl**2 / (3 * u)
            return float(u + v)

        inner = math.sqrt(b * b * s_hl**6 + 4 * a * s_hl)
        return math.sqrt((b * s_hl**3 + inner) / 2)

    def critical_root(self, a: float, b: float, s_hl: float, theta: float, two_star: float) -> float:
        """
        Positive root of x^(2*-1) - b S^theta x^(theta-1) - a S = 0.
        """
        if two_star - 1 <= theta - 1:
            raise ExponentPattern(f"2*_mu - 1 = {two_star - 1} must exceed theta - 1 = {theta - 1}")

        def f(x):
            return x ** (two_star - 1) - b * s_hl**theta * x ** (theta - 1) - a * s_hl

        hi = 1.0
        while f(hi) <= 0:
            hi *= 2.0
        lo = hi / 2.0
        while lo > 1e-300 and f(lo) > 0:
            lo /= 2.0
        return brentq(f, lo, hi, xtol=1e-300, rtol=1e-15, maxiter=500)

    def critical_bound(self, a: float, b: float, s_hl: float, variant: CardanoVariant) -> float:
        lam = self.cardano_lambda(a, b, s_hl, variant)
        if variant is CardanoVariant.THETA2MU2:
            return b * lam**2 * s_hl**2 / 8 + 3 * a * lam * s_hl / 8
        return b * lam**3 * s_hl**3 / 15 + 2 * a * lam * s_hl / 5

    def critical_energy_level(self, params: ProblemParams, s_hl: float) -> CriticalLevel:
        ex = self.derive_exponents(params)
        if not params.p_is_critical:
            raise RegimeMismatch(f"critical level needs p = 2*_mu = {ex.two_mu_star}, got p={params.p}")

        star, theta = ex.two_mu_star, params.theta
        base = s_hl ** (theta + 1) * 4 * params.a * params.b
        level = base ** (star / (2 * star - (theta + 1))) * (star - theta) / (2 * star * theta)

        variant = CardanoVariant.for_parameters(params.N, theta, params.mu)
        if variant is None:
            return CriticalLevel(level=level)
        try:
            lam = self.cardano_lambda(params.a, params.b, s_hl, variant)
            bound = self.critical_bound(params.a, params.b, s_hl, variant)
        except DiscriminantNonpositive as e:
            force_log(f"Cardano bound unavailable: {e}", "ExponentsService", "WARNING")
            return CriticalLevel(level=level, variant=variant.value)
        return CriticalLevel(level=level, cardano_bound=bound, cardano_lambda=lam, variant=variant.value)

    def thresholds_golden(
        self, params: ProblemParams, c_p: float, c_q: float, s_hl: float, digits: int = 30
    ) -> dict[str, str]:
        """
        Thresholds re-evaluated with mpmath at `digits` significant digits.
        Values are returned as decimal strings.
        """
        old = mp.dps
        try:
            mp.dps = int(digits) + 5
            N, mu = mp.mpf(params.N), mp.mpf(params.mu)
            a, b, c = mp.mpf(params.a), mp.mpf(params.b), mp.mpf(params.c)
            q, p, theta = mp.mpf(params.q), mp.mpf(params.p), mp.mpf(params.theta)
            S = mp.mpf(s_hl)
            star = (2 * N - mu) / (N - 2)
            Cq = mp.mpf(c_q)
            Cp = S ** (-star) if params.p_is_critical else mp.mpf(c_p)

            dq = (N * (q - 2) + mu) / (2 * q)
            dp = (N * (p - 2) + mu) / (2 * p)
            qd, pd = q * dq, p * dp
            gap = pd - theta

            alpha1 = mp.power(b * (theta - qd) / (dp * (pd - qd) * Cp * c ** (2 * p * (1 - dp))), (theta - qd) / gap)
            alpha1 *= b * gap / (dq * (pd - qd) * Cq * c ** (2 * q * (1 - dq)))

            x = theta * (theta - qd) * (theta - 1) / (pd * (pd - qd) * (pd - 1))
            kappa = mp.power(x, (theta - qd) / gap) - mp.power(x, (pd - qd) / gap)

            first = a / c ** (2 * q * (1 - dq) + 2 * p * (1 - dp) * (1 - qd) / gap)
            first *= mp.power(b * p / (theta * Cp), (1 - qd) / gap)
            second = 2 / c ** (2 * q * (1 - dq) + 2 * p * (1 - dp) * (theta - qd) / gap)
            second *= mp.power(b / (2 * theta), (pd - qd) / gap) / mp.power(Cp / (2 * p), (theta - qd) / gap)
            alpha2 = kappa * q / Cq * (first + second)

            golden = {
                "alpha1": mp.nstr(alpha1, digits),
                "alpha2": mp.nstr(alpha2, digits),
                "kappa": mp.nstr(kappa, digits),
            }
            if params.p_is_critical:
                base = mp.power(S ** (theta + 1) * 4 * a * b, star / (2 * star - (theta + 1)))
                alpha3 = mp.power(base * q / (theta - qd), (theta - qd) / theta) * mp.power(b / dq, qd / theta)
                alpha3 *= (star - theta) / ((star - qd) * Cq * c ** (2 * q * (1 - dq)))
                golden["alpha3"] = mp.nstr(alpha3, digits)
            return golden
        finally:
            mp.dps = old

    def case2_energy_floor(self, params: ProblemParams, c_q: float, s_hl: float) -> tuple[float, float, float, bool]:
        """
        Minimum of the Case II lower-bound function f(t) against the critical level.
        ok is equivalent to alpha < alpha3.
        """
        ex = self.derive_exponents(params)
        if not params.p_is_critical or params.q >= ex.a_star:
            raise RegimeMismatch("the Case II energy floor needs q < A* and p = 2*_mu")
        star, qd, dq = ex.two_mu_star, ex.q_delta_q, ex.delta_q
        b, theta, q, alpha = params.b, params.theta, params.q, params.alpha
        mass = c_q * params.c ** (2 * q * (1 - dq))

        level = self.critical_energy_level(params, s_hl).level
        if alpha == 0:
            return 0.0, 0.0, level, True

        t_star = (alpha * dq * (star - qd) * mass / (b * (star - theta))) ** (1 / (2 * theta - 2 * qd))
        f_min = b * (star - theta) / (2 * star * theta) * t_star ** (2 * theta) - alpha * (star - qd) / (
            2 * q * star
        ) * mass * t_star ** (2 * qd)
        return t_star, f_min, level, f_min > -level

    def hypothesis_report(
        self,
        params: ProblemParams,
        thresholds: Optional[ThresholdSet],
        q_lower_critical: float = 10 / 3,
        s_hl: Optional[float] = None,
    ) -> list[HypothesisCheck]:
        regime = self.classify_regime(params)
        alpha = params.alpha
        checks: list[HypothesisCheck] = []

        if alpha == 0:
            checks.append(HypothesisCheck("alpha>0", "alpha > 0", None, "alpha=0: not applicable"))
        else:
            checks.append(HypothesisCheck("alpha>0", "alpha > 0", True))

        if regime.is_mixed:
            names = ["alpha1", "alpha2"] + (["alpha3"] if regime is Regime.CASE_II else [])
            for name in names:
                bound = getattr(thresholds, name) if thresholds else None
                if alpha == 0:
                    holds = None
                    note = "alpha=0: not applicable"
                elif bound is None:
                    holds, note = None, "threshold unavailable"
                else:
                    holds, note = alpha < bound, f"{name}={bound:.10g}"
                checks.append(HypothesisCheck(f"alpha<{name}", f"alpha < {name}", holds, note))
            checks.append(
                HypothesisCheck(
                    "constants",
                    "sharp C_r",
                    None,
                    "C_r is a numerical lower bound; alpha-ranges may exceed the guaranteed range",
                )
            )
            return checks

        checks.append(HypothesisCheck("thresholds", "none", None, "not required"))
        if regime is Regime.CASE_IV:
            variant = CardanoVariant.for_parameters(params.N, params.theta, params.mu)
            if variant is CardanoVariant.THETA2MU2:
                holds = params.q > q_lower_critical
                note = f"q_lower_critical={q_lower_critical:.10g}"
                if not holds and params.q > 8 / 3:
                    note += "; q lies in (8/3, 10/3], compactness holds but existence is not guaranteed"
                    force_log(f"q={params.q} between 8/3 and {q_lower_critical}", "ExponentsService", "WARNING")
                checks.append(HypothesisCheck("q_lower", f"q > {q_lower_critical:.6g}", holds, note))
                if s_hl is not None:
                    disc = params.a**2 / 4 - params.b**3 * s_hl**4 / 27
                    checks.append(HypothesisCheck("discriminant", "a^2/4 - b^3 S^4/27 > 0", disc > 0, f"{disc:.6g}"))
            elif variant is CardanoVariant.THETA3MU1:
                checks.append(HypothesisCheck("q_lower", "q > 9/2", params.q > 4.5))
            else:
                checks.append(HypothesisCheck("cardano", "(N,theta,mu) in {(3,2,2),(3,3,1)}", None, "only the general critical level applies"))
        return checks
