import json
import os
from pathlib import Path
from typing import Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, NonNegativeFloat, PositiveInt, ValidationError, field_validator, model_validator

from .errors import NetflowError


THREADS_ENV = "NETFLOW_THREADS"

log_levels = [
    "WARNING",
    "CRITICAL",
    "ERROR",
    "INFO",
    "DEBUG",
]

DEFAULT_CELLS = 256
DEFAULT_TIMES = (0.0, 0.5, 1.0, 2.0, 3.0, 5.0)
DEFAULT_LAMBDAS = (0.5, 1.0, 2.0, 4.0, 1 + 2j, 1 - 2j)
DEFAULT_CFL = 1.0
DEFAULT_SEED = 0
DEFAULT_N_MAX = 5
DEFAULT_REFERENCE = 8
DEFAULT_TRIALS = 5
FAMILIES = ["ladder"]


class ConfigError(NetflowError):
    module = "config"


def parse_times(text: str) -> Tuple[float, ...]:
    try:
        return tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise ConfigError(f"times must be comma separated reals, got {text!r}") from None


def parse_lambdas(text: str) -> Tuple[complex, ...]:
    """ comma separated values, each real or `a+bj` """
    try:
        return tuple(complex(lam.strip()) for lam in text.split(",") if lam.strip())
    except ValueError:
        raise ConfigError(f"lambdas must be comma separated numbers like 2 or 1+2j, got {text!r}") from None


def parse_lambda_pair(text: str) -> complex:
    """ `re` or `re,im` """
    parts = text.split(",")
    try:
        if len(parts) == 1:
            return complex(float(parts[0]), 0.0)
        if len(parts) == 2:
            return complex(float(parts[0]), float(parts[1]))
    except ValueError:
        pass
    raise ConfigError(f"lambda must be <re> or <re>,<im>, got {text!r}")


def resolve_threads(flag: Optional[int]) -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        if not env.isdigit() or int(env) < 1:
            raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {env!r}")
        return int(env)
    if flag is not None:
        if flag < 1:
            raise ConfigError(f"--threads must be positive, got {flag}")
        return flag
    return os.cpu_count() or 1


class RunConfig(BaseModel):
    """ Everything a subcommand run depends on; echoed into output headers. """

    model_config = ConfigDict(extra="forbid", frozen=True)

    subcommand: str
    graph: Optional[Path] = None
    initial: Optional[Path] = None
    out: Optional[Path] = None
    cells: PositiveInt = DEFAULT_CELLS
    t: NonNegativeFloat = 0.0
    times: Tuple[NonNegativeFloat, ...] = DEFAULT_TIMES
    lambdas: Tuple[Tuple[float, float], ...] = tuple((lam.real, lam.imag) for lam in map(complex, DEFAULT_LAMBDAS))
    mu: Optional[Tuple[float, float]] = None
    method: Optional[str] = None
    cfl: float = Field(DEFAULT_CFL, gt=0, le=1)
    family: str = "ladder"
    n_max: PositiveInt = DEFAULT_N_MAX
    reference: PositiveInt = DEFAULT_REFERENCE
    trials: PositiveInt = DEFAULT_TRIALS
    seed: int = DEFAULT_SEED
    threads: PositiveInt = 1
    gnuplot: bool = False

    @field_validator("lambdas", mode="before")
    @classmethod
    def split_lambdas(cls, value):
        return tuple(_pair(lam) for lam in value)

    @field_validator("mu", mode="before")
    @classmethod
    def split_mu(cls, value):
        return None if value is None else _pair(value)

    @field_validator("method")
    @classmethod
    def known_method(cls, value):
        if value not in (None, "exact", "upwind"):
            raise ValueError(f"unknown evaluator {value!r}")
        return value

    @field_validator("family")
    @classmethod
    def known_family(cls, value):
        if value not in FAMILIES:
            raise ValueError(f"unknown family {value!r}, expected one of {FAMILIES}")
        return value

    @model_validator(mode="after")
    def consistent(self):
        if self.reference < self.n_max:
            raise ValueError(f"reference {self.reference} must be at least n_max {self.n_max}")
        for re, im in self.lambdas + ((self.mu,) if self.mu else ()):
            if re <= 0:
                raise ValueError(f"lambda {complex(re, im)} needs a positive real part")
        return self

    @property
    def lambda_values(self) -> Tuple[complex, ...]:
        return tuple(complex(re, im) for re, im in self.lambdas)

    @property
    def mu_value(self) -> Optional[complex]:
        return None if self.mu is None else complex(*self.mu)

    def echo(self) -> str:
        return json.dumps(self.model_dump(mode="json", exclude_none=True), sort_keys=True)


def _pair(value):
    if isinstance(value, (int, float, complex, str)):
        value = complex(value)
        return (value.real, value.imag)
    return tuple(value)


def run_config(**fields) -> RunConfig:
    try:
        return RunConfig(**fields)
    except ValidationError as e:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc']) or 'config'}: {err['msg']}" for err in e.errors()
        )
        raise ConfigError(problems) from e
