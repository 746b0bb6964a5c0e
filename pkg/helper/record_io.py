"""
key=value text records: the solution metadata sidecar and the constant
estimate store.
"""

import os
from datetime import datetime
from typing import Iterable, Optional

from common.exceptions import StaleEstimateError
from helper.atomic_io import atomic_write, read_locked
from helper.dateutils import DateUtils
from helper.logger_utils import force_log
from models import ConstantEstimate, RadialGrid, SolutionRecord, WorkingConstants

ESTIMATE_FIELDS = (
    "name",
    "value",
    "method",
    "family",
    "N",
    "mu",
    "exponent",
    "node_count",
    "r_max",
    "spacing",
    "grading",
    "tolerance",
)


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    if value is None:
        return ""
    return str(value)


def format_pairs(pairs: Iterable[tuple[str, object]]) -> str:
    return "".join(f"{key}={_format_value(value)}\n" for key, value in pairs)


def parse_pairs(text: str) -> list[tuple[str, str]]:
    pairs = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#") or "=" not in line:
            continue
        key, value = line.split("=", 1)
        pairs.append((key.strip(), value.strip()))
    return pairs


# solution metadata


def metadata_pairs(record: SolutionRecord, constants: Optional[WorkingConstants] = None) -> list[tuple[str, object]]:
    pairs: list[tuple[str, object]] = [
        ("kind", record.kind.value),
        ("energy", record.energy),
        ("lagrange", record.lagrange),
        ("grad_l2", record.grad_l2),
        ("morse", record.morse.value),
        ("pohozaev_residual", record.pohozaev_residual),
        ("constrained_grad_norm", record.constrained_grad_norm),
        ("el_residual", record.el_residual),
        ("iterations", record.iterations),
        ("wall_time", record.wall_time),
        ("converged", record.converged),
        ("created_at", record.created_at.isoformat()),
    ]
    pairs.extend((f"param.{key}", value) for key, value in record.params.items())
    pairs.extend((f"constant.{key}", value) for key, value in record.constants.items())
    if constants is not None:
        for key, source in sorted(constants.provenance.items()):
            pairs.append((f"provenance.{key}", source))
    for check in record.checks:
        pairs.append((f"check.{check.name}", check.describe()))
    return pairs


def write_metadata(path: str, record: SolutionRecord, constants: Optional[WorkingConstants] = None) -> None:
    with atomic_write(path) as f:
        f.write(format_pairs(metadata_pairs(record, constants)))


def read_metadata(path: str) -> dict[str, str]:
    return dict(parse_pairs(read_locked(path)))


# constant estimates


def estimate_key(estimate: ConstantEstimate) -> str:
    if estimate.name == "S_HL":
        return "shl"
    return f"gn.{estimate.exponent!r}"


def store_key(estimate: ConstantEstimate) -> str:
    """Section label: the constant plus the grid and mu it was computed on"""
    N, M, r_max, spacing, grading = estimate.grid_key
    return f"{estimate_key(estimate)}@N={N},mu={estimate.mu!r},M={M},r_max={r_max!r},{spacing},g={grading!r}"


def format_estimates(estimates: Iterable[ConstantEstimate]) -> str:
    blocks = []
    for estimate in sorted(estimates, key=store_key):
        pairs = [(field_name, getattr(estimate, field_name)) for field_name in ESTIMATE_FIELDS]
        pairs.append(("created_at", estimate.created_at.isoformat()))
        blocks.append(f"[{store_key(estimate)}]\n" + format_pairs(pairs))
    return "\n".join(blocks)


def parse_estimates(text: str) -> dict[str, ConstantEstimate]:
    sections: dict[str, dict[str, str]] = {}
    current: Optional[dict[str, str]] = None
    for line in text.splitlines():
        line = line.strip()
        if line.startswith("[") and line.endswith("]"):
            current = sections.setdefault(line[1:-1], {})
        elif current is not None and "=" in line and not line.startswith("#"):
            key, value = line.split("=", 1)
            current[key.strip()] = value.strip()

    estimates = {}
    for key, raw in sections.items():
        try:
            estimate = ConstantEstimate(
                name=raw["name"],
                value=float(raw["value"]),
                method=raw["method"],
                family=raw["family"],
                N=int(raw["N"]),
                mu=float(raw["mu"]),
                exponent=float(raw["exponent"]),
                node_count=int(raw["node_count"]),
                r_max=float(raw["r_max"]),
                spacing=raw["spacing"],
                grading=float(raw["grading"]),
                tolerance=float(raw["tolerance"]),
                created_at=DateUtils.localize_datetime(datetime.fromisoformat(raw["created_at"])),
            )
        except (KeyError, ValueError) as e:
            raise StaleEstimateError(f"estimate block [{key}] is malformed: {e}") from e
        if store_key(estimate) != key:
            raise StaleEstimateError(f"estimate block [{key}] holds {store_key(estimate)}")
        estimates[key] = estimate
    return estimates


def save_estimates(path: str, estimates: Iterable[ConstantEstimate]) -> None:
    """Merge into the existing store; a new estimate replaces one for the same constant, grid and mu"""
    merged = parse_estimates(read_locked(path)) if os.path.exists(path) else {}
    for estimate in estimates:
        merged[store_key(estimate)] = estimate
    with atomic_write(path) as f:
        f.write(format_estimates(merged.values()))
    force_log(f"Saved {len(merged)} estimates to {path}", "RecordIO")


def load_estimates(path: str, grid: RadialGrid, mu: float) -> dict[str, ConstantEstimate]:
    """Estimates made on this grid and mu, by constant; blocks for other grids are left alone"""
    estimates = {
        estimate_key(estimate): estimate
        for estimate in parse_estimates(read_locked(path)).values()
        if estimate.grid_key == grid.key and estimate.mu == float(mu)
    }
    force_log(f"Loaded {len(estimates)} estimates for grid {grid.key} mu={mu} from {path}", "RecordIO", "DEBUG")
    return estimates
