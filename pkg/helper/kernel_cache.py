import os
import re
import struct

import numpy as np

from common.enums import GridSpacing
from common.exceptions import CacheMismatch
from helper.atomic_io import atomic_write, read_locked

MAGIC = b"KCNK"
VERSION = 1
# magic, version, N, mu, M, r_max, spacing tag, grading, achieved tolerance
HEADER = struct.Struct("<4sHHdIdBdd")


def cache_path(cache_dir: str, N: int, mu: float, M: int, r_max: float, spacing: GridSpacing, grading: float) -> str:
    stem = f"riesz_N{N}_mu{mu!r}_M{M}_r{r_max!r}_{spacing.value}_g{grading!r}"
    stem = re.sub(r"[^A-Za-z0-9_.-]", "_", stem)
    return os.path.join(cache_dir, f"{stem}.bin")


def write_kernel(path: str, key: tuple, mu: float, matrix: np.ndarray, tolerance: float) -> None:
    N, M, r_max, spacing_tag, grading = key
    spacing = GridSpacing.from_tag(spacing_tag)
    header = HEADER.pack(MAGIC, VERSION, N, float(mu), M, float(r_max), spacing.code, float(grading), float(tolerance))
    with atomic_write(path, "wb") as handle:
        handle.write(header)
        handle.write(np.ascontiguousarray(matrix, dtype="<f8").tobytes(order="C"))


def read_kernel(path: str, key: tuple, mu: float) -> tuple[np.ndarray, float]:
    """
    Load a cached kernel matrix, refusing any header that differs from
    the requested grid and mu.
    """
    raw = read_locked(path, "rb")
    if len(raw) < HEADER.size:
        raise CacheMismatch(f"{path}: truncated header")
    magic, version, N, cached_mu, M, r_max, code, grading, tolerance = HEADER.unpack_from(raw)

    expected = (MAGIC, VERSION, key[0], float(mu), key[1], float(key[2]), GridSpacing.from_tag(key[3]).code, float(key[4]))
    found = (magic, version, N, cached_mu, M, r_max, code, grading)
    if found != expected:
        raise CacheMismatch(f"{path}: header {found} does not match {expected}")

    body = raw[HEADER.size:]
    if len(body) != 8 * M * M:
        raise CacheMismatch(f"{path}: expected {M * M} entries, found {len(body) // 8}")
    matrix = np.frombuffer(body, dtype="<f8").reshape(M, M).astype(np.float64)
    return matrix, tolerance
