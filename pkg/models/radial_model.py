from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numpy.typing import NDArray
from scipy import sparse
from scipy.linalg import solveh_banded

from common.enums import GridSpacing


def _derivative_stencil(nodes: NDArray[np.float64]) -> sparse.csr_matrix:
    """
    Second-order first-derivative stencil on a (possibly nonuniform) radial grid.

    The first row uses the even reflection u(-r_1) = u(r_1); the last row is
    one-sided.
    """
    m = len(nodes)
    rows, cols, vals = [], [], []

    def put(i, j, v):
        rows.append(i)
        cols.append(j)
        vals.append(v)

    # reflected left neighbour at -r_1 carries the value u_1
    hl, hr = 2.0 * nodes[0], nodes[1] - nodes[0]
    put(0, 0, -hr / (hl * (hl + hr)) + (hr - hl) / (hl * hr))
    put(0, 1, hl / (hr * (hl + hr)))

    hl = nodes[1:-1] - nodes[:-2]
    hr = nodes[2:] - nodes[1:-1]
    for k, i in enumerate(range(1, m - 1)):
        put(i, i - 1, -hr[k] / (hl[k] * (hl[k] + hr[k])))
        put(i, i, (hr[k] - hl[k]) / (hl[k] * hr[k]))
        put(i, i + 1, hl[k] / (hr[k] * (hl[k] + hr[k])))

    h1, h2 = nodes[-2] - nodes[-3], nodes[-1] - nodes[-2]
    put(m - 1, m - 3, h2 / (h1 * (h1 + h2)))
    put(m - 1, m - 2, -(h1 + h2) / (h1 * h2))
    put(m - 1, m - 1, (2.0 * h2 + h1) / (h2 * (h1 + h2)))

    return sparse.csr_matrix((vals, (rows, cols)), shape=(m, m))


@dataclass(frozen=True, eq=False)
class RadialGrid:
    dimension: int
    node_count: int
    r_max: float
    spacing: GridSpacing
    grading: float
    nodes: NDArray[np.float64]
    weights: NDArray[np.float64]
    # cell boundaries, node i owns [edges[i], edges[i+1]]
    edges: NDArray[np.float64]
    # segment e joins nodes e and e+1; the last one joins r_max to a ghost node
    # one spacing further out, where u = 0
    spans: NDArray[np.float64]
    span_weights: NDArray[np.float64]

    @property
    def key(self) -> tuple:
        return (self.dimension, self.node_count, float(self.r_max), self.spacing.value, float(self.grading))

    def matches(self, other: "RadialGrid") -> bool:
        return self is other or self.key == other.key

    @cached_property
    def derivative(self) -> sparse.csr_matrix:
        """Nodal u'(r_i), used for r u' in the dilation generator"""
        return _derivative_stencil(self.nodes)

    @cached_property
    def span_difference(self) -> sparse.csr_matrix:
        """(u_{e+1} - u_e)/h_e on every segment, with u = 0 at the ghost node"""
        m = self.node_count
        inverse = 1.0 / self.spans
        upper = sparse.diags(inverse[:-1], 1, shape=(m, m))
        return (upper - sparse.diags(inverse)).tocsr()

    @cached_property
    def conductance(self) -> NDArray[np.float64]:
        return self.span_weights / self.spans**2

    @cached_property
    def stiffness(self) -> sparse.csr_matrix:
        """E^T Omega E, so that <u, S u> is the discrete Dirichlet energy"""
        e = self.span_difference
        return (e.T @ sparse.diags(self.span_weights) @ e).tocsr()

    def metric_solve(self, rhs: NDArray[np.float64], mass: float = 1.0, kinetic: float = 1.0) -> NDArray[np.float64]:
        """Solves (mass W + kinetic S) x = rhs; S is tridiagonal"""
        k = self.conductance
        banded = np.zeros((2, self.node_count))
        banded[0, 1:] = -kinetic * k[:-1]
        banded[1] = mass * self.weights + kinetic * (k + np.concatenate([[0.0], k[:-1]]))
        return solveh_banded(banded, rhs)


@dataclass(frozen=True, eq=False)
class RadialFunction:
    grid: RadialGrid
    values: NDArray[np.float64]

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64, copy=True)
        if values.shape != (self.grid.node_count,):
            raise ValueError(f"expected {self.grid.node_count} samples, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("radial function samples must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def with_values(self, values: NDArray[np.float64]) -> "RadialFunction":
        return RadialFunction(self.grid, values)

    def scaled(self, factor: float) -> "RadialFunction":
        return RadialFunction(self.grid, factor * self.values)

    @property
    def is_zero(self) -> bool:
        return not np.any(self.values)
