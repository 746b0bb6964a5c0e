"""
Flat key=value run configuration.

    # Case I canonical run
    N=3
    mu=2.0
    alphas=0.5,0.25,0.1,0.05

Blank lines and lines starting with '#' are ignored. Unknown and repeated
keys are rejected with their line number. An empty value leaves an
optional key unset.
"""

from dataclasses import dataclass, fields, replace
from typing import Any, Callable, Optional

from typing_extensions import Self

from common.enums import GridSpacing
from common.exceptions import ConfigError
from helper.atomic_io import atomic_write
from models import ProblemParams, SolverSettings

INT_KEYS = {"N", "M", "max_iter", "seed", "starts", "mc_samples"}
STR_KEYS = {"spacing", "alpha_ladder_mode", "estimates_file", "out_dir"}
OPTIONAL_KEYS = {"bubble_delta", "c_p", "c_q", "s_hl"}
LADDER_MODES = ("relative", "absolute")


@dataclass(frozen=True)
class RunConfig:
    # problem
    N: int = 3
    mu: float = 2.0
    a: float = 1.0
    b: float = 1.0
    theta: float = 2.0
    c: float = 1.0
    q: float = 1.5
    p: float = 3.0
    alpha: float = 0.0

    # grid
    M: int = 512
    r_max: float = 16.0
    spacing: str = "uniform"
    grading: float = 6.0
    s_max: float = 3.0
    bubble_delta: Optional[float] = None

    # solver
    tol_grad: float = 1e-6
    tol_pohozaev: float = 1e-6
    tol_el: float = 1e-4
    max_iter: int = 50_000
    armijo: float = 1e-4
    morse_tol: float = 1e-8

    # sweep
    alphas: tuple[float, ...] = (0.5, 0.25, 0.1, 0.05)
    alpha_ladder_mode: str = "relative"

    # constant overrides
    c_p: Optional[float] = None
    c_q: Optional[float] = None
    s_hl: Optional[float] = None

    # run
    estimates_file: str = "estimates.txt"
    out_dir: str = "out"
    seed: int = 0
    starts: int = 16
    mc_samples: int = 200_000
    q_lower_critical: float = 10 / 3

    def __post_init__(self):
        if GridSpacing.from_tag(self.spacing) is None:
            raise ConfigError(f"spacing={self.spacing!r} must be uniform or graded", key="spacing")
        if self.alpha_ladder_mode not in LADDER_MODES:
            raise ConfigError(f"alpha_ladder_mode={self.alpha_ladder_mode!r} must be relative or absolute", key="alpha_ladder_mode")
        if self.M < 16:
            raise ConfigError(f"M={self.M} must be at least 16", key="M")
        if not self.alphas:
            raise ConfigError("alphas must name at least one value", key="alphas")

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    @property
    def grid_spacing(self) -> GridSpacing:
        return GridSpacing.from_tag(self.spacing)

    @property
    def delta(self) -> float:
        """Bubble cut-off radius, r_max / 4 unless configured"""
        return self.bubble_delta if self.bubble_delta is not None else self.r_max / 4

    def problem_params(self) -> ProblemParams:
        return ProblemParams(
            N=self.N, mu=self.mu, a=self.a, b=self.b, theta=self.theta, c=self.c, q=self.q, p=self.p, alpha=self.alpha
        )

    def solver_settings(self) -> SolverSettings:
        return SolverSettings(
            tol_grad=self.tol_grad,
            tol_pohozaev=self.tol_pohozaev,
            tol_el=self.tol_el,
            max_iter=self.max_iter,
            armijo=self.armijo,
        )

    def with_overrides(self, **overrides: Any) -> Self:
        """Apply CLI flags; None means the flag was not given"""
        given = {key: value for key, value in overrides.items() if value is not None}
        unknown = set(given) - set(self.keys())
        if unknown:
            raise ConfigError(f"unknown override(s): {', '.join(sorted(unknown))}")
        return replace(self, **given)

    # text format

    @staticmethod
    def _converter(key: str) -> Callable[[str], Any]:
        if key in INT_KEYS:
            return int
        if key in STR_KEYS:
            return str
        if key == "alphas":
            return lambda raw: tuple(float(item) for item in raw.split(",") if item.strip())
        return float

    @classmethod
    def parse(cls, text: str) -> Self:
        known = set(cls.keys())
        values: dict[str, Any] = {}
        for number, raw_line in enumerate(text.splitlines(), start=1):
            line = raw_line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"expected key=value, got {line!r}", line=number)
            key, raw = (part.strip() for part in line.split("=", 1))
            if key not in known:
                raise ConfigError(f"unknown key {key!r}", line=number, key=key)
            if key in values:
                raise ConfigError(f"duplicate key {key!r}", line=number, key=key)
            if raw == "":
                if key not in OPTIONAL_KEYS:
                    raise ConfigError(f"key {key!r} needs a value", line=number, key=key)
                values[key] = None
                continue
            try:
                values[key] = cls._converter(key)(raw)
            except ValueError as e:
                raise ConfigError(f"bad value for {key!r}: {raw!r} ({e})", line=number, key=key) from e
        return cls(**values)

    def serialize(self) -> str:
        lines = []
        for key in self.keys():
            value = getattr(self, key)
            if value is None:
                text = ""
            elif key == "alphas":
                text = ",".join(repr(float(item)) for item in value)
            elif isinstance(value, float):
                text = repr(value)
            else:
                text = str(value)
            lines.append(f"{key}={text}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_file(cls, path: str) -> Self:
        try:
            with open(path, encoding="utf-8") as f:
                text = f.read()
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        return cls.parse(text)

    def write(self, path: str) -> None:
        with atomic_write(path) as f:
            f.write(self.serialize())
