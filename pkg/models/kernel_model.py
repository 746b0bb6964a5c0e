from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from models.radial_model import RadialGrid


@dataclass(frozen=True, eq=False)
class RieszKernel:
    """
    Symmetric matrix K with (I_mu * f)(r_i) = sum_j K_ij f(r_j) w_j for radial f.
    """

    grid: RadialGrid
    mu: float
    matrix: NDArray[np.float64]
    # worst relative angular-quadrature error estimate over all entries
    achieved_tolerance: float = 0.0

    def __post_init__(self):
        matrix = np.asarray(self.matrix, dtype=np.float64)
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)
