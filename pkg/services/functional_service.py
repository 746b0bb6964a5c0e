import math

import numpy as np
from numpy.typing import NDArray

from common.enums import MorseClass
from common.exceptions import MassMismatch
from models import EnergyBreakdown, FiberBase, ProblemParams, RadialFunction, RieszKernel
from services.exponents_service import delta_of
from services.radial_field_service import RadialFieldService
from services.riesz_service import RieszService

MASS_TOLERANCE = 1e-6
MORSE_TOLERANCE = 1e-8


def signed_power(values: NDArray[np.float64], exponent: float) -> NDArray[np.float64]:
    """|u|^(t-2) u written as sign(u)|u|^(t-1), finite at u = 0"""
    return np.sign(values) * np.abs(values) ** (exponent - 1.0)


class FunctionalService:
    """
    Energy, Pohozaev functional and fiber map of the Kirchhoff-Choquard
    problem on a radial grid.
    """

    def __init__(
        self,
        radial: RadialFieldService | None = None,
        riesz: RieszService | None = None,
        morse_tol: float = MORSE_TOLERANCE,
    ):
        self.radial = radial or RadialFieldService()
        self.riesz = riesz or RieszService()
        self.morse_tol = morse_tol

    def base_quantities(self, u: RadialFunction, params: ProblemParams, kernel: RieszKernel) -> FiberBase:
        """grad^2, grad^(2 theta), D(u,q), D(u,p) and the mass, computed once"""
        grad_sq = self.radial.grad_norm(u) ** 2
        d_q = self.riesz.choquard_integral(kernel, u, params.q) if params.alpha else 0.0
        return FiberBase(
            grad_sq=grad_sq,
            grad_2theta=grad_sq**params.theta,
            d_q=d_q,
            d_p=self.riesz.choquard_integral(kernel, u, params.p),
            mass_sq=self.radial.l2_norm(u) ** 2,
        )

    def energy(self, u: RadialFunction, params: ProblemParams, kernel: RieszKernel) -> EnergyBreakdown:
        base = self.base_quantities(u, params, kernel)
        return self.breakdown(base, params)

    @staticmethod
    def breakdown(base: FiberBase, params: ProblemParams) -> EnergyBreakdown:
        kin2 = 0.5 * params.a * base.grad_sq
        kin2theta = params.b / (2 * params.theta) * base.grad_2theta
        choq_q = params.alpha / (2 * params.q) * base.d_q
        choq_p = base.d_p / (2 * params.p)
        return EnergyBreakdown(
            kin2=kin2,
            kin2theta=kin2theta,
            choq_q=choq_q,
            choq_p=choq_p,
            total=kin2 + kin2theta - choq_q - choq_p,
        )

    def pohozaev(self, u: RadialFunction, params: ProblemParams, kernel: RieszKernel) -> float:
        return self.fiber_terms(self.base_quantities(u, params, kernel), params, 0.0)[1]

    @staticmethod
    def fiber_terms(base: FiberBase, params: ProblemParams, s: float) -> tuple[float, float, float]:
        """
        E_u(s), E_u'(s), E_u''(s) from the cached base quantities:
        each term scales as a power of e^s under the dilation.
        """
        a, b, theta, alpha = params.a, params.b, params.theta, params.alpha
        dq = delta_of(params.N, params.mu, params.q)
        dp = delta_of(params.N, params.mu, params.p)
        qd, pd = params.q * dq, params.p * dp

        kin = base.grad_sq * math.exp(2 * s)
        kin_theta = base.grad_2theta * math.exp(2 * theta * s)
        choq_q = alpha * base.d_q * math.exp(2 * qd * s)
        choq_p = base.d_p * math.exp(2 * pd * s)

        value = 0.5 * a * kin + b / (2 * theta) * kin_theta - choq_q / (2 * params.q) - choq_p / (2 * params.p)
        first = a * kin + b * kin_theta - dq * choq_q - dp * choq_p
        second = 2 * a * kin + 2 * theta * b * kin_theta - 2 * qd * dq * choq_q - 2 * pd * dp * choq_p
        return value, first, second

    def fiber_energy(self, u, s: float, params: ProblemParams, kernel: RieszKernel) -> float:
        return self.fiber_terms(self.base_quantities(u, params, kernel), params, s)[0]

    def fiber_d1(self, u, s: float, params: ProblemParams, kernel: RieszKernel) -> float:
        return self.fiber_terms(self.base_quantities(u, params, kernel), params, s)[1]

    def fiber_d2(self, u, s: float, params: ProblemParams, kernel: RieszKernel) -> float:
        return self.fiber_terms(self.base_quantities(u, params, kernel), params, s)[2]

    @staticmethod
    def fiber_scale(base: FiberBase, params: ProblemParams) -> float:
        """Size of the individual Pohozaev terms at s = 0"""
        return params.a * base.grad_sq + params.b * base.grad_2theta + params.alpha * base.d_q + base.d_p

    def morse_class(self, u: RadialFunction, params: ProblemParams, kernel: RieszKernel) -> MorseClass:
        value, _, second = self.fiber_terms(self.base_quantities(u, params, kernel), params, 0.0)
        return MorseClass.from_second_derivative(second, value, self.morse_tol)

    def _require_mass(self, u: RadialFunction, params: ProblemParams) -> float:
        norm = self.radial.l2_norm(u)
        if abs(norm - params.c) > MASS_TOLERANCE * max(1.0, params.c):
            raise MassMismatch(f"||u||_2={norm:.12g} differs from c={params.c}", {"norm": norm, "c": params.c})
        return norm

    def lagrange_multiplier(self, u: RadialFunction, params: ProblemParams, kernel: RieszKernel) -> float:
        """lambda c^2 = a|grad u|^2 + b|grad u|^(2 theta) - alpha D(u,q) - D(u,p)"""
        self._require_mass(u, params)
        base = self.base_quantities(u, params, kernel)
        numerator = params.a * base.grad_sq + params.b * base.grad_2theta - params.alpha * base.d_q - base.d_p
        return numerator / params.c**2

    def lagrange_multiplier_at_critical(self, u: RadialFunction, params: ProblemParams, kernel: RieszKernel) -> float:
        """The same multiplier after eliminating the kinetic terms with P(u) = 0"""
        self._require_mass(u, params)
        base = self.base_quantities(u, params, kernel)
        dq = delta_of(params.N, params.mu, params.q)
        dp = delta_of(params.N, params.mu, params.p)
        return (params.alpha * (dq - 1) * base.d_q + (dp - 1) * base.d_p) / params.c**2

    def evaluate(self, u: RadialFunction, params: ProblemParams, kernel: RieszKernel) -> tuple[FiberBase, RadialFunction]:
        """
        Base quantities together with the unconstrained gradient of J in the
        weighted L2 pairing,
        -(a + b|grad u|^(2(theta-1))) Lap u - alpha Phi_q |u|^(q-2)u - Phi_p |u|^(p-2)u,
        sharing one potential evaluation per exponent.
        """
        weights = u.grid.weights
        grad_sq = self.radial.grad_norm(u) ** 2
        coefficient = params.a + params.b * grad_sq ** (params.theta - 1)
        field = -coefficient * self.radial.radial_laplacian(u).values

        phi_p = self.riesz.potential(kernel, u, params.p).values
        d_p = float(np.dot(weights * np.abs(u.values) ** params.p, phi_p))
        field -= phi_p * signed_power(u.values, params.p)

        d_q = 0.0
        if params.alpha:
            phi_q = self.riesz.potential(kernel, u, params.q).values
            d_q = float(np.dot(weights * np.abs(u.values) ** params.q, phi_q))
            field -= params.alpha * phi_q * signed_power(u.values, params.q)

        base = FiberBase(
            grad_sq=grad_sq,
            grad_2theta=grad_sq**params.theta,
            d_q=max(d_q, 0.0),
            d_p=max(d_p, 0.0),
            mass_sq=self.radial.l2_norm(u) ** 2,
        )
        return base, u.with_values(field)

    def gradient_field(self, u: RadialFunction, params: ProblemParams, kernel: RieszKernel) -> RadialFunction:
        return self.evaluate(u, params, kernel)[1]

    def el_residual(
        self, u: RadialFunction, lam: float, params: ProblemParams, kernel: RieszKernel
    ) -> tuple[RadialFunction, float]:
        residual = self.gradient_field(u, params, kernel).values - lam * u.values
        field = u.with_values(residual)
        return field, self.radial.l2_norm(field)

    def constrained_gradient(self, u: RadialFunction, params: ProblemParams, kernel: RieszKernel) -> RadialFunction:
        """L2 gradient projected onto the tangent space of S_c at u"""
        norm = self._require_mass(u, params)
        gradient = self.gradient_field(u, params, kernel)
        lam = self.radial.inner(gradient, u) / norm**2
        return u.with_values(gradient.values - lam * u.values)

    def sobolev_direction(
        self, u: RadialFunction, gradient: RadialFunction, mass: float = 1.0, kinetic: float = 1.0
    ) -> RadialFunction:
        """
        Riesz representative of the L2 gradient in the metric
        mass <u, v> + kinetic <grad u, grad v>, projected onto the tangent
        space of the mass sphere at u. The pairing <G, d> equals the squared
        metric norm of d.
        """
        grid = u.grid
        rhs = np.column_stack([grid.weights * gradient.values, grid.weights * u.values])
        solved = grid.metric_solve(rhs, mass, kinetic)
        g_tilde, u_tilde = solved[:, 0], solved[:, 1]
        shift = self.radial.inner(u, u.with_values(g_tilde)) / self.radial.inner(u, u.with_values(u_tilde))
        return u.with_values(g_tilde - shift * u_tilde)

    def kirchhoff_metric(self, u: RadialFunction, params: ProblemParams, lam: float) -> tuple[float, float]:
        """
        (mass, kinetic) weights matching the leading part of the Hessian,
        -(a + b |grad u|^(2 theta - 2)) Lap - lambda.
        """
        grad_sq = self.radial.grad_norm(u) ** 2
        kinetic = params.a + params.b * grad_sq ** (params.theta - 1)
        return max(abs(lam), 1e-3 * kinetic), kinetic

    def dilation_slope(self, u: RadialFunction, params: ProblemParams, kernel: RieszKernel) -> float:
        """
        Slope of the discrete energy on S_c along the dilation generator,
        <G - lambda u, (N/2) u + r u'>. This is the Pohozaev functional of the
        discretised problem; it vanishes at discrete critical points.
        """
        projected = self.constrained_gradient(u, params, kernel)
        return self.radial.inner(projected, self.radial.dilation_generator(u))
