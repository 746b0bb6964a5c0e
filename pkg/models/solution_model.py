from dataclasses import dataclass, field
from typing import Optional

from common.enums import MorseClass, SolutionKind
from models.base_model import BaseRecord
from models.radial_model import RadialFunction


@dataclass(frozen=True)
class VerificationCheck:
    name: str
    passed: bool
    value: float
    bound: float

    def describe(self) -> str:
        status = "pass" if self.passed else "fail"
        return f"{status} ({self.value:.6g} vs {self.bound:.6g})"


@dataclass
class SolutionRecord(BaseRecord):
    profile: RadialFunction
    energy: float
    pohozaev_residual: float
    lagrange: float
    grad_l2: float
    kind: SolutionKind
    morse: MorseClass
    iterations: int
    wall_time: float
    converged: bool
    constrained_grad_norm: float
    el_residual: float
    params: dict = field(default_factory=dict)
    constants: dict = field(default_factory=dict)
    checks: list[VerificationCheck] = field(default_factory=list)

    @property
    def all_checks_pass(self) -> bool:
        return all(check.passed for check in self.checks)


@dataclass(frozen=True)
class SweepRow:
    alpha: float
    m: Optional[float]
    sigma: Optional[float]
    grad_loc: Optional[float]
    lambda_loc: Optional[float]
    converged_loc: bool
    converged_mp: bool
    error: str = ""


@dataclass(frozen=True)
class BoundCheck:
    sigma: float
    bound: float
    ok: bool
    cardano_lambda: float
    bubble_level: Optional[float] = None
    warnings: tuple = ()
    record: Optional[SolutionRecord] = None


@dataclass
class SweepTable:
    rows: list[SweepRow]
    local_records: list[Optional[SolutionRecord]] = field(default_factory=list)
    mp_records: list[Optional[SolutionRecord]] = field(default_factory=list)
    # alpha = 0 mountain-pass run, m(c, 0)
    reference: Optional[SolutionRecord] = None
