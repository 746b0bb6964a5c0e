from dataclasses import dataclass, field
from typing import Optional

from common.enums import MorseClass, Regime


@dataclass(frozen=True)
class CriticalPoint:
    s: float
    energy: float
    second_derivative: float
    morse_class: MorseClass


@dataclass(frozen=True)
class FiberReport:
    critical_points: list[CriticalPoint]
    zeros: list[float]
    regime: Regime
    diagnostics: dict = field(default_factory=dict)

    @property
    def local_min(self) -> Optional[CriticalPoint]:
        """t1_u of the mixed regime"""
        for point in self.critical_points:
            if point.morse_class is MorseClass.P_PLUS:
                return point
        return None

    @property
    def maximizer(self) -> Optional[CriticalPoint]:
        """t3_u in the mixed regime, t*_u in the supercritical one"""
        maxima = [p for p in self.critical_points if p.morse_class is MorseClass.P_MINUS]
        return maxima[-1] if maxima else None


@dataclass(frozen=True)
class ScalarProfile:
    """h(t) = a1 t^2 + a2 t^(2 theta) - a3 t^p1 - a4 t^q1"""

    a1: float
    a2: float
    a3: float
    a4: float
    p1: float
    q1: float
    theta: float
    role: str = "h"

    def value(self, t):
        return self.a1 * t**2 + self.a2 * t ** (2 * self.theta) - self.a3 * t**self.p1 - self.a4 * t**self.q1

    def t_derivative(self, t):
        """t h'(t)"""
        return (
            2 * self.a1 * t**2
            + 2 * self.theta * self.a2 * t ** (2 * self.theta)
            - self.p1 * self.a3 * t**self.p1
            - self.q1 * self.a4 * t**self.q1
        )

    def t_second(self, t):
        """t d/dt (t h'(t)), the second derivative in s = log t"""
        return (
            4 * self.a1 * t**2
            + (2 * self.theta) ** 2 * self.a2 * t ** (2 * self.theta)
            - self.p1**2 * self.a3 * t**self.p1
            - self.q1**2 * self.a4 * t**self.q1
        )

    @property
    def min_exponent(self) -> float:
        exponents = [2.0, 2 * self.theta, self.p1]
        if self.a4 > 0:
            exponents.append(self.q1)
        return min(exponents)

    def scale(self, t) -> float:
        """Magnitude of the individual terms, for residual tolerances"""
        return (
            self.a1 * t**2 + self.a2 * t ** (2 * self.theta) + self.a3 * t**self.p1 + self.a4 * t**self.q1
        )


@dataclass(frozen=True)
class GProfile:
    t0: float
    t1_zero: float
    t_minus: float
    t_plus: float
    g_minus: float
    g_plus: float
