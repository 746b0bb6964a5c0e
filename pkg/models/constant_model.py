from dataclasses import dataclass, field
from typing import Optional

from models.base_model import BaseRecord


@dataclass
class ConstantEstimate(BaseRecord):
    name: str
    value: float
    method: str
    family: str
    N: int
    mu: float
    exponent: float
    node_count: int
    r_max: float
    spacing: str
    grading: float
    tolerance: float

    @property
    def grid_key(self) -> tuple:
        return (self.N, self.node_count, float(self.r_max), self.spacing, float(self.grading))


@dataclass(frozen=True)
class WorkingConstants:
    """Constants a run is evaluated against, with where each came from"""

    c_p: Optional[float] = None
    c_q: Optional[float] = None
    s_hl: Optional[float] = None
    provenance: dict = field(default_factory=dict, compare=False)

    @property
    def complete(self) -> bool:
        return None not in (self.c_p, self.c_q, self.s_hl)

    def as_dict(self) -> dict:
        return {"c_p": self.c_p, "c_q": self.c_q, "s_hl": self.s_hl}
