from enum import Enum


class MorseClass(Enum):
    """Sign of the fiber second derivative at a Pohozaev point"""

    P_PLUS = "Pplus"
    P_MINUS = "Pminus"
    P_ZERO = "Pzero"

    @classmethod
    def from_second_derivative(cls, e2: float, energy: float, tol: float = 1e-8) -> "MorseClass":
        if abs(e2) <= tol * (1.0 + abs(energy)):
            return cls.P_ZERO
        return cls.P_PLUS if e2 > 0 else cls.P_MINUS
