import math
from dataclasses import dataclass, replace

from common.exceptions import ParameterError

EXPONENT_RTOL = 1e-12


def same_exponent(x: float, y: float) -> bool:
    """Exponents equal up to representation error, e.g. p == 2*_mu"""
    return math.isclose(x, y, rel_tol=EXPONENT_RTOL, abs_tol=EXPONENT_RTOL)


@dataclass(frozen=True)
class ProblemParams:
    N: int
    mu: float
    a: float
    b: float
    theta: float
    c: float
    q: float
    p: float
    alpha: float = 0.0

    def __post_init__(self):
        problems = []
        if int(self.N) != self.N or self.N < 3:
            problems.append(f"N={self.N} must be an integer >= 3")
        if not 0 < self.mu < self.N:
            problems.append(f"mu={self.mu} must lie in (0, N)")
        for name in ("a", "b", "c"):
            if not getattr(self, name) > 0:
                problems.append(f"{name}={getattr(self, name)} must be positive")
        if self.alpha < 0:
            problems.append(f"alpha={self.alpha} must be nonnegative")
        if problems:
            raise ParameterError("; ".join(problems))

        lower = (2 * self.N - self.mu) / self.N
        star = (2 * self.N - self.mu) / (self.N - 2)
        if not 1 < self.theta < star:
            raise ParameterError(f"theta={self.theta} must lie in (1, 2*_mu={star})")
        if not lower < self.q:
            raise ParameterError(f"q={self.q} must exceed 2_mu,*={lower}")
        if not self.q < self.p:
            raise ParameterError(f"q={self.q} must be smaller than p={self.p}")
        if self.p > star and not same_exponent(self.p, star):
            raise ParameterError(f"p={self.p} exceeds 2*_mu={star}")

    @property
    def p_is_critical(self) -> bool:
        return same_exponent(self.p, (2 * self.N - self.mu) / (self.N - 2))

    def with_alpha(self, alpha: float) -> "ProblemParams":
        return replace(self, alpha=alpha)

    def as_dict(self) -> dict:
        return {
            "N": self.N,
            "mu": self.mu,
            "a": self.a,
            "b": self.b,
            "theta": self.theta,
            "c": self.c,
            "q": self.q,
            "p": self.p,
            "alpha": self.alpha,
        }


@dataclass(frozen=True)
class DerivedExponents:
    two_mu_lower: float
    two_mu_star: float
    a_star: float
    b_star: float
    delta_q: float
    delta_p: float

    # q*delta_q and p*delta_p appear in every fiber exponent
    q_delta_q: float
    p_delta_p: float
