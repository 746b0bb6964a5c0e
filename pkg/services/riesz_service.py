import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Optional

import numpy as np
from numpy.typing import NDArray
from scipy.special import gammaln, hyp2f1, roots_legendre

from common.exceptions import CacheMismatch, ExponentOutOfRange, GridMismatch, QuadratureFailure
from helper.kernel_cache import cache_path, read_kernel, write_kernel
from helper.logger_utils import force_log
from models import RadialFunction, RadialGrid, RieszKernel
from services.radial_field_service import sphere_area

ENTRY_TOLERANCE = 1e-8
BASE_NODES = 12
MAX_REFINEMENTS = 3
MAX_LEVEL = 400
DIAGONAL_NODES = 24
# float budget per evaluation block
BLOCK_BUDGET = 1 << 22


def _sphere_normalization(N: int) -> float:
    """1 / int_0^pi sin^(N-2) phi dphi"""
    return math.exp(gammaln(N / 2) - gammaln((N - 1) / 2)) / math.sqrt(math.pi)


def _legendre_01(n: int) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    x, w = roots_legendre(n)
    return 0.5 * (x + 1.0), 0.5 * w


class _AngularRule:
    """
    Composite Gauss-Legendre rule on [0, pi], panels halving toward phi = 0.
    Stores sin^2(phi/2) and the weights already multiplied by sin^(N-2) phi.
    """

    def __init__(self, N: int, level: int, n: int):
        breaks = np.concatenate([[0.0], math.pi * 2.0 ** -np.arange(level, -1, -1, dtype=np.float64)])
        x, w = _legendre_01(n)
        lengths = np.diff(breaks)
        phi = (breaks[:-1, None] + lengths[:, None] * x[None, :]).ravel()
        weights = (lengths[:, None] * w[None, :]).ravel()
        self.half_sin_sq = np.sin(0.5 * phi) ** 2
        self.weights = weights * np.sin(phi) ** (N - 2)
        self.size = phi.size


class RieszService:
    """
    Radial Riesz potential I_mu * f and the Choquard double integral on a
    radial grid, backed by a dense angular-quadrature kernel.
    """

    def __init__(
        self,
        cache_dir: Optional[str] = None,
        tolerance: float = ENTRY_TOLERANCE,
        workers: int = 1,
    ):
        self.cache_dir = cache_dir
        self.tolerance = tolerance
        self.workers = max(1, int(workers))
        self._rules: dict = {}

    # angular quadrature

    def _rule(self, N: int, level: int, n: int) -> _AngularRule:
        key = (N, level, n)
        if key not in self._rules:
            self._rules[key] = _AngularRule(N, level, n)
        return self._rules[key]

    def _evaluate_block(self, rule: _AngularRule, diff_sq, prod4, mu) -> NDArray[np.float64]:
        dist_sq = diff_sq[:, None] + prod4[:, None] * rule.half_sin_sq[None, :]
        return np.power(dist_sq, -0.5 * mu) @ rule.weights

    def _integrate_level(self, N, mu, level, n, diff_sq, prod4) -> NDArray[np.float64]:
        rule = self._rule(N, level, n)
        block = max(64, BLOCK_BUDGET // rule.size)
        starts = range(0, diff_sq.size, block)
        jobs = [(diff_sq[k : k + block], prod4[k : k + block]) for k in starts]
        if self.workers > 1 and len(jobs) > 1:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                parts = list(pool.map(lambda job: self._evaluate_block(rule, job[0], job[1], mu), jobs))
        else:
            parts = [self._evaluate_block(rule, d, p, mu) for d, p in jobs]
        return np.concatenate(parts) if parts else np.zeros(0)

    def sphere_average(
        self,
        N: int,
        mu: float,
        r: NDArray[np.float64],
        s: NDArray[np.float64],
        diff: Optional[NDArray[np.float64]] = None,
    ) -> tuple[NDArray[np.float64], float]:
        """
        Average of |r e_1 - s omega|^-mu over omega on the unit sphere, for
        arrays of radius pairs. Passing `diff` = |r - s| avoids cancellation
        when the radii nearly coincide. Returns the values and the worst
        relative error estimate.
        """
        r = np.asarray(r, dtype=np.float64).ravel()
        s = np.asarray(s, dtype=np.float64).ravel()
        diff = np.abs(r - s) if diff is None else np.asarray(diff, dtype=np.float64).ravel()
        if r.size == 0:
            return np.zeros(0), 0.0

        diff_sq = diff**2
        prod4 = 4.0 * r * s
        with np.errstate(divide="ignore"):
            ratio = np.where(prod4 > 0, diff / np.sqrt(np.maximum(prod4, 1e-300) / 4.0), np.inf)
        levels = np.clip(np.ceil(np.log2(2.0 * math.pi / np.maximum(ratio, 1e-300))), 1, MAX_LEVEL).astype(int)

        values = np.empty_like(r)
        errors = np.full_like(r, np.inf)
        pending = np.arange(r.size)
        n = BASE_NODES
        extra = 0
        for attempt in range(MAX_REFINEMENTS + 1):
            for level in np.unique(levels[pending]):
                idx = pending[levels[pending] == level]
                depth = int(min(level + extra, MAX_LEVEL))
                low = self._integrate_level(N, mu, depth, n, diff_sq[idx], prod4[idx])
                high = self._integrate_level(N, mu, depth, n + n // 2, diff_sq[idx], prod4[idx])
                values[idx] = high
                errors[idx] = np.abs(high - low) / np.abs(high)
            pending = pending[errors[pending] > self.tolerance]
            if pending.size == 0:
                break
            n *= 2
            extra += 4
        if pending.size:
            worst = float(np.max(errors[pending]))
            raise QuadratureFailure(
                f"{pending.size} kernel entries missed tolerance {self.tolerance:g} (worst {worst:.3g})",
                {"failed": int(pending.size), "worst": worst},
            )
        return values * _sphere_normalization(N), float(np.max(errors))

    @staticmethod
    def sphere_average_closed_form(N: int, mu: float, r, s) -> NDArray[np.float64]:
        """
        Same average through max(r,s)^-mu 2F1(mu/2, (mu-N+2)/2; N/2; (min/max)^2).
        """
        r = np.asarray(r, dtype=np.float64)
        s = np.asarray(s, dtype=np.float64)
        big = np.maximum(r, s)
        z = (np.minimum(r, s) / big) ** 2
        return big ** (-mu) * hyp2f1(mu / 2, (mu - N + 2) / 2, N / 2, z)

    # kernel assembly

    def _diagonal(self, grid: RadialGrid, mu: float) -> tuple[NDArray[np.float64], float]:
        """
        Cell averages of K(r_i, s) over the cell of node i, using s = r_i -+ l v^gamma
        on each half so that the |r - s|^(N-1-mu) singularity is integrated smoothly.
        """
        N = grid.dimension
        M = grid.node_count
        gamma = max(1.0, 3.0 / (N - mu))
        v, wv = _legendre_01(DIAGONAL_NODES)
        stretch = v**gamma
        jac = gamma * v ** (gamma - 1.0) * wv

        nodes = grid.nodes
        left = nodes - grid.edges[:-1]
        right = grid.edges[1:] - nodes

        r_all, s_all, d_all, w_all, owner = [], [], [], [], []
        for length, sign in ((left, -1.0), (right, 1.0)):
            active = np.nonzero(length > 0)[0]
            offset = length[active, None] * stretch[None, :]
            s = nodes[active, None] + sign * offset
            r_all.append(np.broadcast_to(nodes[active, None], s.shape).ravel())
            s_all.append(s.ravel())
            d_all.append(offset.ravel())
            w_all.append((length[active, None] * jac[None, :] * s ** (N - 1)).ravel())
            owner.append(np.broadcast_to(active[:, None], s.shape).ravel())

        r_all, s_all, d_all = np.concatenate(r_all), np.concatenate(s_all), np.concatenate(d_all)
        w_all, owner = np.concatenate(w_all), np.concatenate(owner)
        values, error = self.sphere_average(N, mu, r_all, s_all, d_all)

        cell_integral = np.bincount(owner, weights=values * w_all, minlength=M)
        return sphere_area(N) * cell_integral / grid.weights, error

    def build_kernel(self, grid: RadialGrid, mu: float) -> RieszKernel:
        N = grid.dimension
        if not 0 < mu < N:
            raise ValueError(f"mu={mu} must lie in (0, {N})")

        started = time.perf_counter()
        M = grid.node_count
        rows, cols = np.triu_indices(M, k=1)
        r = grid.nodes[rows]
        s = grid.nodes[cols]
        values, off_error = self.sphere_average(N, mu, r, s)

        matrix = np.empty((M, M))
        matrix[rows, cols] = values
        matrix[cols, rows] = values
        diagonal, diag_error = self._diagonal(grid, mu)
        matrix[np.arange(M), np.arange(M)] = diagonal

        if not np.all(np.isfinite(matrix)) or np.any(matrix <= 0):
            raise QuadratureFailure(f"kernel for N={N}, mu={mu} has non-positive or non-finite entries")

        achieved = max(off_error, diag_error)
        force_log(
            f"built kernel N={N} mu={mu} M={M} in {time.perf_counter() - started:.2f}s (tol {achieved:.2e})",
            "RieszService",
        )
        return RieszKernel(grid=grid, mu=float(mu), matrix=matrix, achieved_tolerance=achieved)

    def load_or_build_kernel(self, grid: RadialGrid, mu: float) -> RieszKernel:
        """
        Cached kernel for (N, mu, M, r_max, spacing, grading); rebuilt and
        rewritten when the cache is absent or its header disagrees.
        """
        if not self.cache_dir:
            return self.build_kernel(grid, mu)

        path = cache_path(self.cache_dir, grid.dimension, mu, grid.node_count, grid.r_max, grid.spacing, grid.grading)
        if os.path.exists(path):
            try:
                matrix, tolerance = read_kernel(path, grid.key, mu)
                force_log(f"loaded kernel from {path}", "RieszService", "DEBUG")
                return RieszKernel(grid=grid, mu=float(mu), matrix=matrix, achieved_tolerance=tolerance)
            except CacheMismatch as e:
                force_log(f"rebuilding kernel: {e}", "RieszService", "WARNING")

        kernel = self.build_kernel(grid, mu)
        try:
            write_kernel(path, grid.key, mu, kernel.matrix, kernel.achieved_tolerance)
        except OSError as e:
            force_log(f"could not write kernel cache {path}: {e}", "RieszService", "WARNING")
        return kernel

    # applications

    @staticmethod
    def _require_grid(kernel: RieszKernel, f: RadialFunction) -> None:
        if not kernel.grid.matches(f.grid):
            raise GridMismatch(f"function grid {f.grid.key} does not match kernel grid {kernel.grid.key}")

    def riesz_apply(self, kernel: RieszKernel, f: RadialFunction) -> RadialFunction:
        """Phi(r_i) = sum_j K_ij f(r_j) w_j"""
        self._require_grid(kernel, f)
        return f.with_values(kernel.matrix @ (kernel.grid.weights * f.values))

    @staticmethod
    def exponent_range(N: int, mu: float) -> tuple[float, float]:
        """[2_{mu,*}, 2*_mu]"""
        return (2 * N - mu) / N, (2 * N - mu) / (N - 2)

    def check_exponent(self, kernel: RieszKernel, t: float) -> None:
        lower, upper = self.exponent_range(kernel.grid.dimension, kernel.mu)
        if not (lower * (1 - 1e-12) <= t <= upper * (1 + 1e-12)):
            raise ExponentOutOfRange(f"t={t} outside [{lower}, {upper}]", {"t": t, "lower": lower, "upper": upper})

    def potential(self, kernel: RieszKernel, u: RadialFunction, t: float) -> RadialFunction:
        """I_mu * |u|^t sampled on the grid"""
        self.check_exponent(kernel, t)
        return self.riesz_apply(kernel, u.with_values(np.abs(u.values) ** t))

    def choquard_integral(self, kernel: RieszKernel, u: RadialFunction, t: float) -> float:
        """D(u, t) = <K|u|^t, |u|^t> in the weighted pairing"""
        self.check_exponent(kernel, t)
        self._require_grid(kernel, u)
        density = kernel.grid.weights * np.abs(u.values) ** t
        return float(max(density @ (kernel.matrix @ density), 0.0))

    def choquard_oracle_mc(
        self,
        u: RadialFunction,
        t: float,
        mu: float,
        samples: int = 100_000,
        seed: Optional[int] = None,
        rng: Optional[np.random.Generator] = None,
    ) -> tuple[float, float]:
        """
        Monte-Carlo estimate of the 2N-dimensional double integral. Radii are
        drawn cell-wise with probability proportional to w_i |u_i|^t and
        uniformly in volume inside the cell; directions are uniform on the sphere.
        """
        if samples < 10_000:
            raise ValueError(f"samples={samples} must be at least 10000")
        if u.is_zero:
            return 0.0, 0.0

        rng = rng if rng is not None else np.random.default_rng(seed)
        grid = u.grid
        N = grid.dimension
        mass = grid.weights * np.abs(u.values) ** t
        total = float(mass.sum())
        probabilities = mass / total

        def draw_radii() -> NDArray[np.float64]:
            cells = rng.choice(grid.node_count, size=samples, p=probabilities)
            lo = grid.edges[cells] ** N
            hi = grid.edges[cells + 1] ** N
            return (lo + rng.random(samples) * (hi - lo)) ** (1.0 / N)

        r = draw_radii()
        s = draw_radii()
        # only the relative angle matters: first coordinate of a uniform direction
        direction = rng.standard_normal((samples, N))
        cos_angle = direction[:, 0] / np.linalg.norm(direction, axis=1)
        dist_sq = np.maximum(r**2 + s**2 - 2.0 * r * s * cos_angle, 1e-300)
        draws = dist_sq ** (-0.5 * mu)

        estimate = total**2 * float(draws.mean())
        std_error = total**2 * float(draws.std(ddof=1)) / math.sqrt(samples)
        return estimate, std_error
