import math
from typing import Iterable, Optional

from helper.atomic_io import atomic_write
from models import SweepRow

SWEEP_HEADER = "alpha,m,sigma,grad_loc,lambda_loc,converged_loc,converged_mp"
FIBER_HEADER = "s,E,E2,class"


def format_number(value: Optional[float]) -> str:
    """Full double precision; undefined cells are nan"""
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "nan"
    return "%.17g" % value


def format_flag(flag: bool) -> str:
    return "1" if flag else "0"


def provenance_block(provenance: dict) -> str:
    return "".join(f"# {key}={value}\n" for key, value in provenance.items())


def sweep_csv(rows: Iterable[SweepRow], provenance: Optional[dict] = None) -> str:
    text = provenance_block(provenance or {}) + SWEEP_HEADER + "\n"
    for row in rows:
        cells = [
            format_number(row.alpha),
            format_number(row.m),
            format_number(row.sigma),
            format_number(row.grad_loc),
            format_number(row.lambda_loc),
            format_flag(row.converged_loc),
            format_flag(row.converged_mp),
        ]
        text += ",".join(cells) + "\n"
    return text


def fiber_csv(rows: Iterable[tuple[float, float, float, str]], provenance: Optional[dict] = None) -> str:
    text = provenance_block(provenance or {}) + FIBER_HEADER + "\n"
    for s, energy, second, morse in rows:
        text += f"{format_number(s)},{format_number(energy)},{format_number(second)},{morse}\n"
    return text


def write_csv(path: str, text: str) -> None:
    with atomic_write(path) as f:
        f.write(text)
