from enum import Enum


class CardanoVariant(Enum):
    """
    Closed-form roots of the Sobolev-critical algebraic equation.
    THETA2MU2 is the depressed cubic for (N, theta, mu) = (3, 2, 2),
    THETA3MU1 the biquadratic for (N, theta, mu) = (3, 3, 1).
    """

    THETA2MU2 = "theta2mu2"
    THETA3MU1 = "theta3mu1"

    @classmethod
    def for_parameters(cls, N: int, theta: float, mu: float) -> "CardanoVariant | None":
        if N == 3 and theta == 2 and mu == 2:
            return cls.THETA2MU2
        if N == 3 and theta == 3 and mu == 1:
            return cls.THETA3MU1
        return None
