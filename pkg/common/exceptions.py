"""
Error hierarchy shared by services and the command line.
Every error carries the process exit code the CLI should return.
"""

from typing import Any, Optional


class KcnError(Exception):
    exit_code = 1

    def __init__(self, message: str, details: Optional[dict[str, Any]] = None):
        super().__init__(message)
        self.details = details or {}


# Construction and configuration (exit 4)
class ParameterError(KcnError, ValueError):
    exit_code = 4


class ConfigError(KcnError):
    exit_code = 4

    def __init__(self, message: str, line: Optional[int] = None, key: Optional[str] = None):
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(f"{prefix}{message}", {"line": line, "key": key})
        self.line = line
        self.key = key


class StaleEstimateError(KcnError):
    exit_code = 4


# Regime and hypothesis mismatches (exit 2)
class BoundaryExponent(KcnError):
    exit_code = 2


class RegimeMismatch(KcnError):
    exit_code = 2


class ThresholdViolated(KcnError):
    exit_code = 2


class DiscriminantNonpositive(KcnError):
    exit_code = 2


class ExponentOutOfRange(KcnError):
    exit_code = 2


class ExponentPattern(KcnError):
    exit_code = 2


class ConditionFailed(KcnError):
    exit_code = 2


class StructureMismatch(KcnError):
    exit_code = 2


# Numerical and usage errors (exit 1)
class ZeroFunction(KcnError):
    pass


class DilationOutOfRange(KcnError):
    pass


class GridMismatch(KcnError):
    pass


class MassMismatch(KcnError):
    pass


class QuadratureFailure(KcnError):
    pass


class CacheMismatch(KcnError):
    pass


class NotConverged(KcnError):
    exit_code = 3

    def __init__(self, message: str, record: Any = None, details: Optional[dict[str, Any]] = None):
        super().__init__(message, details)
        self.record = record


__all__ = [
    "KcnError",
    "ParameterError",
    "ConfigError",
    "StaleEstimateError",
    "BoundaryExponent",
    "RegimeMismatch",
    "ThresholdViolated",
    "DiscriminantNonpositive",
    "ExponentOutOfRange",
    "ExponentPattern",
    "ConditionFailed",
    "StructureMismatch",
    "ZeroFunction",
    "DilationOutOfRange",
    "GridMismatch",
    "MassMismatch",
    "QuadratureFailure",
    "CacheMismatch",
    "NotConverged",
]
