import math
from typing import Callable, Optional

import numpy as np
from numpy.typing import NDArray
from scipy.interpolate import PchipInterpolator
from scipy.special import gamma

from common.enums import GridSpacing
from common.exceptions import DilationOutOfRange, GridMismatch, ZeroFunction
from models import RadialFunction, RadialGrid

# Gregory end corrections (exact for polynomials up to degree 5 on uniform nodes)
GREGORY_END_WEIGHTS = (95 / 288, 317 / 240, 23 / 30, 793 / 720, 157 / 160)


def sphere_area(N: int) -> float:
    """Surface measure of the unit sphere S^(N-1)"""
    return 2.0 * math.pi ** (N / 2) / gamma(N / 2)


def _smooth_step(t: NDArray[np.float64]) -> NDArray[np.float64]:
    """C-infinity transition: 0 for t <= 0, 1 for t >= 1"""
    t = np.clip(t, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        f = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
        g = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return f / (f + g)


class RadialFieldService:
    """
    Radial grids, norms and the mass-preserving dilation.
    """

    def __init__(self, s_max: float = 3.0):
        self.s_max = s_max

    def make_grid(
        self,
        N: int,
        M: int,
        r_max: float,
        spacing: GridSpacing = GridSpacing.UNIFORM,
        grading: float = 6.0,
    ) -> RadialGrid:
        """
        Nodes r_1 < ... < r_M in (0, r_max] with Gregory-corrected trapezoid weights.
        Graded grids map a uniform xi-grid through r = r_max (e^(g xi) - 1)/(e^g - 1).
        """
        if M < 16:
            raise ValueError(f"node count M={M} must be at least 16")
        if r_max <= 0:
            raise ValueError(f"r_max={r_max} must be positive")

        xi = np.arange(M + 1, dtype=np.float64) / M
        if spacing is GridSpacing.UNIFORM:
            radii = r_max * xi
            jacobian = np.full(M + 1, r_max)
        else:
            scale = math.expm1(grading)
            radii = r_max * np.expm1(grading * xi) / scale
            jacobian = r_max * grading * np.exp(grading * xi) / scale
        radii[-1] = r_max

        gregory = np.ones(M + 1)
        k = len(GREGORY_END_WEIGHTS)
        gregory[:k] = GREGORY_END_WEIGHTS
        gregory[-k:] = GREGORY_END_WEIGHTS[::-1]

        weights = sphere_area(N) * gregory * jacobian * radii ** (N - 1) / M

        nodes = radii[1:].copy()
        mids = 0.5 * (nodes[1:] + nodes[:-1])
        first_edge = max(0.0, nodes[0] - 0.5 * (nodes[1] - nodes[0]))
        edges = np.concatenate([[first_edge], mids, [r_max]])

        weights = weights[1:].copy()

        # midpoint rule on the segments; the ghost segment closes the Dirichlet end
        spans = np.append(np.diff(nodes), nodes[-1] - nodes[-2])
        midpoints = np.append(mids, r_max + 0.5 * spans[-1])
        span_weights = sphere_area(N) * midpoints ** (N - 1) * spans

        for array in (nodes, weights, edges, spans, span_weights):
            array.setflags(write=False)
        return RadialGrid(
            dimension=N,
            node_count=M,
            r_max=float(r_max),
            spacing=spacing,
            grading=float(grading),
            nodes=nodes,
            weights=weights,
            edges=edges,
            spans=spans,
            span_weights=span_weights,
        )

    def sample(self, grid: RadialGrid, f: Callable[[NDArray[np.float64]], NDArray[np.float64]]) -> RadialFunction:
        return RadialFunction(grid, f(grid.nodes))

    @staticmethod
    def require_same_grid(u: RadialFunction, v: RadialFunction) -> None:
        if not u.grid.matches(v.grid):
            raise GridMismatch(f"grid {u.grid.key} does not match {v.grid.key}")

    def inner(self, u: RadialFunction, v: RadialFunction) -> float:
        """Weighted L2 pairing <u, v>"""
        self.require_same_grid(u, v)
        return float(np.dot(u.grid.weights, u.values * v.values))

    def l2_norm(self, u: RadialFunction) -> float:
        return math.sqrt(float(np.dot(u.grid.weights, u.values**2)))

    def radial_derivative(self, u: RadialFunction) -> NDArray[np.float64]:
        return u.grid.derivative @ u.values

    def span_gradient(self, u: RadialFunction) -> NDArray[np.float64]:
        """Difference quotients on the segments, zero Dirichlet value past r_max"""
        return u.grid.span_difference @ u.values

    def grad_norm(self, u: RadialFunction) -> float:
        du = self.span_gradient(u)
        return math.sqrt(float(np.dot(u.grid.span_weights, du**2)))

    def h1_norm(self, u: RadialFunction) -> float:
        return math.hypot(self.l2_norm(u), self.grad_norm(u))

    def metric_inner(self, u: RadialFunction, v: RadialFunction, mass: float = 1.0, kinetic: float = 1.0) -> float:
        """mass <u, v> + kinetic <grad u, grad v>"""
        self.require_same_grid(u, v)
        dirichlet = float(np.dot(u.grid.span_weights, self.span_gradient(u) * self.span_gradient(v)))
        return mass * self.inner(u, v) + kinetic * dirichlet

    def h1_inner(self, u: RadialFunction, v: RadialFunction) -> float:
        return self.metric_inner(u, v)

    def l2_distance(self, u: RadialFunction, v: RadialFunction) -> float:
        self.require_same_grid(u, v)
        return self.l2_norm(u.with_values(u.values - v.values))

    def h1_distance(self, u: RadialFunction, v: RadialFunction) -> float:
        self.require_same_grid(u, v)
        return self.h1_norm(u.with_values(u.values - v.values))

    def radial_laplacian(self, u: RadialFunction) -> RadialFunction:
        """
        Discrete u'' + (N-1)u'/r with u(r_max + h) = 0, built as -W^-1 E^T Omega E
        so that <-Lap u, u> equals grad_norm(u)^2 exactly.
        """
        grid = u.grid
        return u.with_values(-(grid.stiffness @ u.values) / grid.weights)

    def normalize_mass(self, u: RadialFunction, c: float) -> RadialFunction:
        norm = self.l2_norm(u)
        if norm == 0.0:
            raise ZeroFunction("cannot normalize the zero function onto S_c")
        return u.scaled(c / norm)

    def dilate(self, u: RadialFunction, s: float, s_max: Optional[float] = None) -> RadialFunction:
        """
        (s * u)(r) = e^(Ns/2) u(e^s r), resampled with monotone cubic interpolation
        and zero extension beyond r_max.
        """
        limit = self.s_max if s_max is None else s_max
        if abs(s) > limit:
            raise DilationOutOfRange(f"|s|={abs(s)} exceeds s_max={limit}", {"s": s, "s_max": limit})
        if s == 0.0:
            return u

        grid = u.grid
        # even reflection resolves the interpolant between 0 and r_1
        x = np.concatenate([-grid.nodes[1::-1], grid.nodes])
        y = np.concatenate([u.values[1::-1], u.values])
        interpolant = PchipInterpolator(x, y, extrapolate=False)

        target = math.exp(s) * grid.nodes
        sampled = interpolant(target)
        sampled = np.where(target > grid.r_max, 0.0, sampled)
        sampled = np.nan_to_num(sampled, nan=0.0)
        return u.with_values(math.exp(grid.dimension * s / 2) * sampled)

    def dilation_generator(self, u: RadialFunction) -> RadialFunction:
        """d/ds (s * u) at s = 0, i.e. (N/2) u + r u'"""
        grid = u.grid
        return u.with_values(0.5 * grid.dimension * u.values + grid.nodes * self.radial_derivative(u))

    def cutoff(self, grid: RadialGrid, delta: Optional[float] = None) -> NDArray[np.float64]:
        """eta = 1 on B_delta, 0 outside B_2delta"""
        delta = grid.r_max / 4 if delta is None else delta
        return _smooth_step((2 * delta - grid.nodes) / delta)

    def bubble(self, grid: RadialGrid, eps: float, delta: Optional[float] = None) -> RadialFunction:
        """
        Cut-off bubble eta(r) (eps/(eps^2 + r^2))^((N-2)/2), without the
        normalisation prefactor.
        """
        if not 0 < eps < 1:
            raise ValueError(f"eps={eps} must lie in (0, 1)")
        N = grid.dimension
        core = (eps / (eps**2 + grid.nodes**2)) ** ((N - 2) / 2)
        return RadialFunction(grid, self.cutoff(grid, delta) * core)

    def gaussian(self, grid: RadialGrid, width: float = 1.0, amplitude: float = 1.0) -> RadialFunction:
        return RadialFunction(grid, amplitude * np.exp(-((grid.nodes / width) ** 2)))

    def gaussian_mixture(
        self, grid: RadialGrid, rng: np.random.Generator, components: int = 3, width_range: tuple = (0.5, 2.5)
    ) -> RadialFunction:
        """Random nonnegative, radially decreasing profile"""
        widths = rng.uniform(*width_range, size=components)
        amplitudes = rng.uniform(0.2, 1.0, size=components)
        values = np.zeros(grid.node_count)
        for width, amplitude in zip(widths, amplitudes):
            values += amplitude * np.exp(-((grid.nodes / width) ** 2))
        return RadialFunction(grid, values)
