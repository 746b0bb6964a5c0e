from dataclasses import dataclass


@dataclass(frozen=True)
class EnergyBreakdown:
    kin2: float
    kin2theta: float
    choq_q: float
    choq_p: float
    total: float


@dataclass(frozen=True)
class FiberBase:
    """
    The scalars the fiber map is built from. Every s-dependence is
    a power of e^s applied to these.
    """

    grad_sq: float
    grad_2theta: float
    d_q: float
    d_p: float
    mass_sq: float

    @property
    def grad(self) -> float:
        return self.grad_sq ** 0.5
