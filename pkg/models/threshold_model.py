from dataclasses import dataclass
from typing import Optional


@dataclass(frozen=True)
class ThresholdSet:
    alpha1: float
    alpha2: float
    alpha3: Optional[float]
    kappa: float
    kappa_base: float
    c_p: float
    c_q: float
    s_hl: float

    @property
    def alpha_bound(self) -> float:
        """min(alpha1, alpha2), and alpha3 as well when it applies"""
        bounds = [self.alpha1, self.alpha2]
        if self.alpha3 is not None:
            bounds.append(self.alpha3)
        return min(bounds)


@dataclass(frozen=True)
class HypothesisCheck:
    name: str
    required: str
    holds: Optional[bool]
    note: str = ""

    @property
    def status(self) -> str:
        if self.holds is None:
            return "n/a"
        return "pass" if self.holds else "fail"


@dataclass(frozen=True)
class CriticalLevel:
    level: float
    cardano_bound: Optional[float] = None
    cardano_lambda: Optional[float] = None
    variant: Optional[str] = None
