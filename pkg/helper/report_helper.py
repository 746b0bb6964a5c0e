from typing import Iterable, Optional

from common.enums import Regime, SolutionKind
from helper.atomic_io import atomic_write
from helper.dateutils import DateUtils
from models import (
    BoundCheck,
    CriticalLevel,
    GProfile,
    HypothesisCheck,
    ProblemParams,
    SolutionRecord,
    ThresholdSet,
    VerificationCheck,
    WorkingConstants,
)


def _num(value: Optional[float]) -> str:
    return "n/a" if value is None else f"{value:.12g}"


def constants_lines(constants: WorkingConstants) -> list[str]:
    lines = []
    for key, value in constants.as_dict().items():
        source = constants.provenance.get(key, "unset")
        lines.append(f"  {key:<5} = {_num(value)}  [{source}]")
    return lines


def threshold_report(
    params: ProblemParams,
    regime: Regime,
    thresholds: Optional[ThresholdSet],
    hypotheses: Iterable[HypothesisCheck],
    constants: WorkingConstants,
    g_profile: Optional[GProfile] = None,
    g_note: str = "",
    critical: Optional[CriticalLevel] = None,
) -> str:
    """Plain-text threshold summary printed by `main.py thresholds`"""
    lines = [f"Thresholds ({DateUtils.format_timestamp()})"]
    lines.append("  " + " ".join(f"{key}={value!r}" for key, value in params.as_dict().items()))
    lines.append(f"  regime = {regime.value}")
    lines.append("Constants")
    lines.extend(constants_lines(constants))

    lines.append("Alpha thresholds")
    if thresholds is None:
        lines.append("  not required" if not regime.is_mixed else "  unavailable (constants missing)")
    else:
        lines.append(f"  alpha1 = {_num(thresholds.alpha1)}")
        lines.append(f"  alpha2 = {_num(thresholds.alpha2)}")
        lines.append(f"  alpha3 = {_num(thresholds.alpha3)}")
        lines.append(f"  kappa  = {_num(thresholds.kappa)}")

    lines.append("g profile")
    if g_profile is None:
        lines.append(f"  t0 = n/a, t1 = n/a ({g_note or 'not applicable'})")
    else:
        lines.append(f"  t0 = {_num(g_profile.t0)}")
        lines.append(f"  t1 = {_num(g_profile.t1_zero)}")
        lines.append(f"  g(t-) = {_num(g_profile.g_minus)} at t- = {_num(g_profile.t_minus)}")
        lines.append(f"  g(t+) = {_num(g_profile.g_plus)} at t+ = {_num(g_profile.t_plus)}")

    if critical is not None:
        lines.append("Critical level")
        lines.append(f"  level = {_num(critical.level)}")
        if critical.cardano_bound is not None:
            lines.append(f"  cardano ({critical.variant}) lambda = {_num(critical.cardano_lambda)}")
            lines.append(f"  cardano bound = {_num(critical.cardano_bound)}")

    lines.append("Hypotheses")
    for check in hypotheses:
        note = f"  ({check.note})" if check.note else ""
        lines.append(f"  {check.name:<14} {check.required:<36} {check.status}{note}")
    return "\n".join(lines) + "\n"


def checks_lines(checks: Iterable[VerificationCheck]) -> list[str]:
    return [f"  {check.name:<28} {check.describe()}" for check in checks]


def solution_summary(record: SolutionRecord) -> str:
    lines = [
        f"{record.kind.value}: energy={record.energy:.12g} lambda={record.lagrange:.12g} grad={record.grad_l2:.12g}",
        f"  morse={record.morse.value} iterations={record.iterations} converged={record.converged}",
        "Verification",
        *checks_lines(record.checks),
    ]
    if record.kind is SolutionKind.LOCAL_MIN and record.energy < 0:
        lines.insert(2, "  ground state: lowest among found critical points")
    return "\n".join(lines) + "\n"


def bound_summary(check: BoundCheck) -> str:
    lines = [
        f"sigma = {check.sigma:.12g}",
        f"bound = {check.bound:.12g} (Lambda = {check.cardano_lambda:.12g})",
        f"bubble test level = {_num(check.bubble_level)}",
        f"inside (0, bound): {'yes' if check.ok else 'no'}",
    ]
    lines.extend(f"warning: {warning}" for warning in check.warnings)
    return "\n".join(lines) + "\n"


def verification_summary(checks: list[VerificationCheck]) -> str:
    failed = sum(not check.passed for check in checks)
    lines = [f"Verification: {len(checks) - failed}/{len(checks)} passed", *checks_lines(checks)]
    return "\n".join(lines) + "\n"


def write_report(path: str, text: str) -> None:
    with atomic_write(path) as f:
        f.write(text)
