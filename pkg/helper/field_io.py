"""
Text format for sampled radial profiles.

    # N mu M r_max spacing grading
    3 2.0 512 16.0 uniform 6.0
    r_1 u_1
    ...

Floats are written with repr() so a profile read back is bit-identical.
"""

from typing import Callable

import numpy as np

from common.enums import GridSpacing
from common.exceptions import GridMismatch
from helper.atomic_io import atomic_write, read_locked
from models import RadialFunction, RadialGrid

HEADER = "# N mu M r_max spacing grading"

GridFactory = Callable[[int, int, float, GridSpacing, float], RadialGrid]


def format_field(u: RadialFunction, mu: float) -> str:
    grid = u.grid
    lines = [
        HEADER,
        f"{grid.dimension} {float(mu)!r} {grid.node_count} {grid.r_max!r} {grid.spacing.value} {grid.grading!r}",
    ]
    lines.extend(f"{float(r)!r} {float(v)!r}" for r, v in zip(grid.nodes, u.values))
    return "\n".join(lines) + "\n"


def parse_field(text: str, make_grid: GridFactory) -> tuple[RadialFunction, float]:
    """
    Rebuild the profile on the grid named in the header. The stored radii
    must equal the rebuilt nodes exactly.
    """
    rows = [line.split() for line in text.splitlines() if line.strip() and not line.startswith("#")]
    if not rows:
        raise ValueError("field file is empty")
    head, body = rows[0], rows[1:]
    if len(head) != 6:
        raise ValueError(f"field header needs 6 entries, got {len(head)}")

    N, mu, M, r_max = int(head[0]), float(head[1]), int(head[2]), float(head[3])
    spacing = GridSpacing.from_tag(head[4])
    if spacing is None:
        raise ValueError(f"unknown grid spacing {head[4]!r}")
    grading = float(head[5])
    if len(body) != M:
        raise GridMismatch(f"header announces M={M} nodes, file has {len(body)}")

    grid = make_grid(N, M, r_max, spacing, grading)
    radii = np.array([float(row[0]) for row in body])
    values = np.array([float(row[1]) for row in body])
    if not np.array_equal(radii, grid.nodes):
        worst = float(np.max(np.abs(radii - grid.nodes)))
        raise GridMismatch(f"stored radii differ from the rebuilt grid by up to {worst:.3g}")
    return RadialFunction(grid, values), mu


def write_field(path: str, u: RadialFunction, mu: float) -> None:
    with atomic_write(path) as f:
        f.write(format_field(u, mu))


def read_field(path: str, make_grid: GridFactory) -> tuple[RadialFunction, float]:
    return parse_field(read_locked(path), make_grid)
