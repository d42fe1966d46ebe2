"""
Run configurations.

A run configuration is a TOML file with one table per concern::

    [model]
    class = "hmm"
    n_states = 2

    [model.emission]
    kind = "normal"
    column = "y"
    params = { mean = [0.0, 3.0], sd = [1.0, 1.0] }

    [init]
    tpm = [[0.9, 0.1], [0.1, 0.9]]

    [optimizer]
    max_iterations = 500

    [simulate]
    seed = 42
    length = 1000

    [forecast]
    level = 0.01

    [output]
    dir = "out"

Errors are reported with the line of the offending key.
"""

import re

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from latent_chain.core.base import ModelSpec
from latent_chain.core.errors import ConfigError
from latent_chain.fit.optimizer import OptimizerOptions
from latent_chain.simulate.simulator import SimulationConfiguration

_TABLE = re.compile(r"^\s*\[\[?\s*([^\]]+?)\s*\]\]?\s*(#.*)?$")
_KEY = re.compile(r"^\s*([A-Za-z0-9_.\-\"']+)\s*=")
_LINE = re.compile(r"at line (\d+)")


class SimulateSection(BaseModel):
    """The ``[simulate]`` table."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    seed: int | None = Field(default=None, description="The root seed.")
    n_sequences: int = Field(default=1, ge=1, description="Number of sequences.")
    length: int = Field(default=1000, ge=1, description="Observations per sequence.")
    horizon: float | None = Field(
        default=None, gt=0.0, description="Window of point processes."
    )
    mean_gap: float = Field(
        default=1.0, gt=0.0, description="Mean gap of irregular observation times."
    )
    step: float = Field(default=1.0, gt=0.0, description="Gap of regular times.")
    covariate_probabilities: dict[str, float] = Field(
        default_factory=dict, description="Bernoulli probability of each covariate."
    )
    params: dict[str, Any] = Field(
        default_factory=dict,
        description="True parameter values; defaults to the [init] table.",
    )

    def configuration(self) -> SimulationConfiguration:
        return SimulationConfiguration(
            n_sequences=self.n_sequences,
            length=self.length,
            horizon=self.horizon,
            mean_gap=self.mean_gap,
            step=self.step,
            covariate_probabilities=dict(self.covariate_probabilities),
        )


class ForecastSection(BaseModel):
    """The ``[forecast]`` table."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    column: str | None = Field(default=None, description="The forecast column.")
    level: float = Field(default=0.01, gt=0.0, lt=1.0, description="Quantile level.")
    dt: float = Field(default=1.0, ge=0.0, description="Time to the next observation.")
    lower: float | None = Field(default=None, description="Lowest evaluation point.")
    upper: float | None = Field(default=None, description="Highest evaluation point.")
    n_points: int = Field(default=400, ge=2, description="Number of evaluation points.")
    holdout: int | None = Field(
        default=None, ge=1, description="Observations of the rolling backtest."
    )

    @model_validator(mode="after")
    def _validate_range(self) -> "ForecastSection":
        if (self.lower is None) != (self.upper is None):
            msg = "Set both lower and upper, or neither."
            raise ValueError(msg)
        if (
            self.lower is not None
            and self.upper is not None
            and self.lower >= self.upper
        ):
            msg = f"lower must be below upper, got {self.lower} and {self.upper}."
            raise ValueError(msg)
        return self


class OutputSection(BaseModel):
    """The ``[output]`` table."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    dir: str = Field(default="out", description="The output directory.")
    ci_level: float = Field(
        default=0.95, gt=0.0, lt=1.0, description="Level of the parameter intervals."
    )


class RunConfig(BaseModel):
    """
    A complete run configuration.

    Attributes:
        model (ModelSpec):
            The model description.
        init (dict[str, Any]):
            Initial natural values keyed by parameter block.
        optimizer (OptimizerOptions):
            The optimizer settings.
        simulate (SimulateSection):
            The simulation settings.
        forecast (ForecastSection):
            The forecast settings.
        output (OutputSection):
            Where and how results are written.

    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    model: ModelSpec = Field(description="The model description.")
    init: dict[str, Any] = Field(
        default_factory=dict, description="Initial natural values."
    )
    optimizer: OptimizerOptions = Field(
        default_factory=OptimizerOptions, description="The optimizer settings."
    )
    simulate: SimulateSection = Field(
        default_factory=SimulateSection, description="The simulation settings."
    )
    forecast: ForecastSection = Field(
        default_factory=ForecastSection, description="The forecast settings."
    )
    output: OutputSection = Field(
        default_factory=OutputSection, description="The output settings."
    )

    @property
    def truth(self) -> dict[str, Any]:
        """The parameters used for simulation."""
        return {**self.init, **self.simulate.params}


def _key_lines(text: str) -> dict[tuple[str, ...], int]:
    """Maps the dotted path of every table and key to its first line."""
    lines: dict[tuple[str, ...], int] = {}
    table: tuple[str, ...] = ()
    for number, line in enumerate(text.splitlines(), start=1):
        header = _TABLE.match(line)
        if header:
            table = tuple(p.strip().strip("\"'") for p in header.group(1).split("."))
            lines.setdefault(table, number)
            continue
        key = _KEY.match(line)
        if key:
            parts = tuple(p.strip().strip("\"'") for p in key.group(1).split("."))
            lines.setdefault(table + parts, number)
    return lines


def _locate(
    lines: dict[tuple[str, ...], int], loc: tuple[int | str, ...]
) -> int | None:
    """The line of the longest known prefix of a validation error location."""
    path = tuple(str(part) for part in loc if isinstance(part, str))
    while path:
        if path in lines:
            return lines[path]
        path = path[:-1]
    return None


def parse_config(text: str, path: str = "<config>") -> RunConfig:
    """
    Parses and validates a run configuration.

    Args:
        text (str):
            The TOML text.
        path (str):
            The file name used in diagnostics.

    Returns:
        RunConfig:
            The validated configuration.

    Raises:
        ConfigError:
            On TOML syntax errors and invalid fields, with the line of the
            offending key when it can be located.

    """
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as err:
        line = getattr(err, "lineno", None)
        if line is None:
            match = _LINE.search(str(err))
            line = int(match.group(1)) if match else None
        raise ConfigError(str(err).split(" (at line")[0], path, line) from err

    try:
        return RunConfig.model_validate(raw)
    except ValidationError as err:
        first = err.errors()[0]
        loc = tuple(first["loc"])
        field = ".".join(str(part) for part in loc) or None
        message = first["msg"]
        raise ConfigError(message, path, _locate(_key_lines(text), loc), field) from err


def load_config(path: str | Path) -> RunConfig:
    """
    Reads a run configuration file.

    Raises:
        ConfigError:
            If the file cannot be read or is invalid.

    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as err:
        msg = f"Cannot read the configuration: {err.strerror}."
        raise ConfigError(msg, str(path)) from err
    return parse_config(text, str(path))
