"""
Reading and writing datasets and reports.

Datasets are CSV files with a header row: an optional sequence key column, a
time column and named observation and covariate columns. Empty fields are
missing values. Reports are JSON documents of pydantic models.
"""

import os
import re
from collections.abc import Sequence
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from latent_chain.core.base import FloatArray, Grid, ModelSpec, ObservationSequence
from latent_chain.core.errors import DataError
from latent_chain.fit.optimizer import FitResult, ParameterInterval
from latent_chain.simulate.simulator import SimulatedSequence

DEFAULT_KEY = "1"
_PARSER_LINE = re.compile(r"line (\d+)")


def required_columns(spec: ModelSpec) -> list[str]:
    """The data columns a model reads besides time and key."""
    columns: list[str] = []
    if spec.emission is not None:
        columns += spec.emission.leaf_columns() + spec.emission.covariate_columns()
    columns += spec.tpm_covariates
    return list(dict.fromkeys(columns))


def _numeric(frame: pd.DataFrame, column: str, path: str) -> FloatArray:
    values = frame[column]
    converted = pd.to_numeric(values, errors="coerce")
    bad = converted.isna() & values.notna()
    if bad.any():
        row = int(np.flatnonzero(bad.to_numpy())[0])
        msg = f"Column {column!r} holds a non-numeric value {values.iloc[row]!r}."
        raise DataError(msg, path, row + 2)
    return np.asarray(converted.to_numpy(dtype=np.float64), dtype=np.float64)


def read_dataset(path: str | Path, spec: ModelSpec) -> list[ObservationSequence]:
    """
    Reads the sequences of a CSV dataset.

    Rows are grouped by the key column (in order of first appearance) when
    the file has one; otherwise the whole file is one sequence. Times must
    be strictly increasing within each sequence.

    Args:
        path (str | Path):
            The CSV file.
        spec (ModelSpec):
            The model, which names the time, key and data columns.

    Returns:
        list[ObservationSequence]:
            The sequences.

    Raises:
        DataError:
            If the file is malformed, misses a column, holds a non-numeric
            value or has unordered times; the CSV line is reported.

    """
    name = str(path)
    id_column = spec.id_column
    try:
        frame = pd.read_csv(
            path,
            dtype={id_column: str} if id_column else None,
            float_precision="round_trip",
            skipinitialspace=True,
        )
    except FileNotFoundError as err:
        raise DataError("The file does not exist.", name) from err
    except pd.errors.EmptyDataError as err:
        raise DataError("The file is empty.", name, 1) from err
    except pd.errors.ParserError as err:
        match = _PARSER_LINE.search(str(err))
        raise DataError(str(err), name, int(match.group(1)) if match else None) from err

    needed = [spec.time_column, *required_columns(spec)]
    missing = [c for c in needed if c not in frame.columns]
    if missing:
        raise DataError(f"Missing column(s): {', '.join(missing)}.", name, 1)
    if frame.empty:
        raise DataError("The file holds no rows.", name, 1)

    times = _numeric(frame, spec.time_column, name)
    if np.isnan(times).any():
        row = int(np.flatnonzero(np.isnan(times))[0])
        raise DataError(f"Missing time in column {spec.time_column!r}.", name, row + 2)
    columns = {c: _numeric(frame, c, name) for c in required_columns(spec)}

    if id_column and id_column in frame.columns:
        keys = frame[id_column].fillna("").astype(str).to_numpy()
    else:
        keys = np.full(len(frame), DEFAULT_KEY, dtype=object)

    sequences = []
    for key in dict.fromkeys(keys):
        rows = np.flatnonzero(keys == key)
        gaps = np.diff(times[rows])
        if np.any(gaps <= 0):
            row = int(rows[int(np.flatnonzero(gaps <= 0)[0]) + 1])
            msg = f"Times of sequence {key!r} must be strictly increasing."
            raise DataError(msg, name, row + 2)
        sequences.append(
            ObservationSequence(
                key=str(key),
                times=times[rows],
                columns={c: values[rows] for c, values in columns.items()},
            )
        )
    return sequences


def _frame(
    key: str,
    times: FloatArray,
    columns: dict[str, Any],
    time_column: str = "time",
    id_column: str | None = "id",
) -> pd.DataFrame:
    frame = pd.DataFrame({time_column: times, **columns})
    if id_column:
        frame.insert(0, id_column, key)
    return frame


def _write(frames: list[pd.DataFrame], path: str | Path) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    pd.concat(frames, ignore_index=True).to_csv(path, index=False, lineterminator="\n")


def write_dataset(
    sequences: Sequence[ObservationSequence | SimulatedSequence],
    path: str | Path,
    spec: ModelSpec,
) -> None:
    """Writes sequences in the format :func:`read_dataset` reads."""
    _write(
        [
            _frame(s.key, s.times, s.columns, spec.time_column, spec.id_column)
            for s in sequences
        ],
        path,
    )


def write_latent(
    sequences: Sequence[SimulatedSequence], path: str | Path, spec: ModelSpec
) -> None:
    """Writes the latent truth: 1-based states and/or continuous values."""
    frames = []
    for s in sequences:
        columns: dict[str, Any] = {}
        if s.states is not None:
            columns["state"] = s.states + 1
        if s.state_values is not None:
            columns["value"] = s.state_values
        frames.append(_frame(s.key, s.times, columns, spec.time_column, spec.id_column))
    _write(frames, path)


def write_table(frames: list[pd.DataFrame], path: str | Path) -> None:
    """Writes plot-ready tables one after another."""
    _write(frames, path)


def _finite_or_none(values: Sequence[float]) -> list[float | None]:
    return [float(v) if np.isfinite(v) else None for v in values]


class IntervalReport(BaseModel):
    """A confidence interval of one parameter block."""

    lower: Any = Field(default=None, description="The lower bounds.")
    upper: Any = Field(default=None, description="The upper bounds.")


class FitBlock(BaseModel):
    """
    The fit of one group of sequences.

    Attributes:
        key (str):
            The sequence key, or ``all`` for a joint fit.
        estimates (dict[str, Any]):
            The estimates in natural units, as nested lists.
        labels (list[str]):
            Labels of the unconstrained coordinates.
        covariance (list[list[float]] | None):
            The unconstrained covariance, ``None`` if unavailable.

    """

    key: str
    log_likelihood: float
    aic: float
    bic: float
    n_params: int
    n_obs: int
    converged: bool
    method: str
    message: str
    n_iterations: int
    estimates: dict[str, Any]
    labels: list[str]
    covariance: list[list[float]] | None
    ci_level: float
    intervals: dict[str, IntervalReport]
    derived: dict[str, list[float | None]]
    trace: list[float]
    grid: Grid | None = None

    @classmethod
    def from_result(
        cls,
        key: str,
        result: FitResult,
        intervals: dict[str, ParameterInterval],
        ci_level: float,
    ) -> "FitBlock":
        return cls(
            key=key,
            log_likelihood=result.log_likelihood,
            aic=result.aic,
            bic=result.bic,
            n_params=result.n_params,
            n_obs=result.n_obs,
            converged=result.converged,
            method=result.method,
            message=result.message,
            n_iterations=result.n_iterations,
            estimates={k: np.asarray(v).tolist() for k, v in result.estimates.items()},
            labels=result.vector.labels,
            covariance=(
                None if result.covariance is None else result.covariance.tolist()
            ),
            ci_level=ci_level,
            intervals={
                name: IntervalReport(
                    lower=None if ci.lower is None else np.asarray(ci.lower).tolist(),
                    upper=None if ci.upper is None else np.asarray(ci.upper).tolist(),
                )
                for name, ci in intervals.items()
            },
            derived={k: _finite_or_none(v) for k, v in result.derived.items()},
            trace=list(result.trace),
            grid=result.grid,
        )

    def natural(self) -> dict[str, FloatArray]:
        """The estimates as arrays."""
        return {k: np.asarray(v, dtype=np.float64) for k, v in self.estimates.items()}


class FitReport(BaseModel):
    """The result file of a fit run."""

    model_config = ConfigDict(populate_by_name=True)

    model: ModelSpec
    fits: list[FitBlock]

    def block_for(self, key: str) -> FitBlock:
        """The fit that applies to a sequence."""
        for block in self.fits:
            if block.key in {key, "all"}:
                return block
        msg = f"The estimates hold no fit for sequence {key!r}."
        raise DataError(msg)


class BacktestSummary(BaseModel):
    holdout: int
    n_exceedances: int
    frequency: float


class ForecastBlock(BaseModel):
    """The forecast of one sequence."""

    key: str
    level: float
    dt: float
    quantile: float
    state_weights: list[float]
    lower: float
    upper: float
    n_points: int
    backtest: BacktestSummary | None = None


class ForecastReport(BaseModel):
    forecasts: list[ForecastBlock]


def save_report(report: BaseModel, path: str | Path) -> None:
    """Writes a report as indented JSON."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write(report.model_dump_json(indent=4, by_alias=True))
        f.write("\n")


def load_fit_report(path: str | Path) -> FitReport:
    """
    Reads a fit result file.

    Raises:
        DataError:
            If the file cannot be read or is not a fit report.

    """
    try:
        with open(path, encoding="utf-8") as f:
            return FitReport.model_validate_json(f.read())
    except OSError as err:
        msg = f"Cannot read the estimates: {err.strerror}."
        raise DataError(msg, str(path)) from err
    except ValidationError as err:
        msg = f"Not a fit report: {err.errors()[0]['msg']}."
        raise DataError(msg, str(path)) from err
