"""
The batch commands: fit, simulate, decode and forecast.

Every command reads a run configuration, writes its results under the output
directory and returns the process exit code.
"""

from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import pandas as pd

from latent_chain.cli.config import RunConfig, load_config
from latent_chain.cli.io import (
    BacktestSummary,
    FitBlock,
    FitReport,
    ForecastBlock,
    ForecastReport,
    load_fit_report,
    read_dataset,
    save_report,
    write_dataset,
    write_latent,
    write_table,
)
from latent_chain.core.base import EmissionKind, ObservationSequence
from latent_chain.core.errors import DataError
from latent_chain.fit import _default_threads
from latent_chain.fit.base_model import BaseLatentModel
from latent_chain.fit.factory import build_model
from latent_chain.fit.optimizer import FitResult, fit_mle, hessian_ci
from latent_chain.simulate.simulator import Simulator
from latent_chain.utils import cprint, crule, cwarning, get_logger

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_INPUT_ERROR = 1
EXIT_NOT_CONVERGED = 2

JOINT_KEY = "all"


def _out_dir(config: RunConfig, out: str | None) -> Path:
    return Path(out if out is not None else config.output.dir)


def dump_fit(block: FitBlock) -> None:
    """
    Dumps a fit summary to the console.

    Args:
        block (FitBlock): The fit to dump.

    """
    crule(f"Fit [{block.key}]", style="cyan")
    cprint(
        f"  log-likelihood={block.log_likelihood:.6f}, AIC={block.aic:.4f}, "
        f"BIC={block.bic:.4f}, n_params={block.n_params}, n_obs={block.n_obs}",
        style="cyan",
    )
    cprint(
        f"  converged={block.converged} after {block.n_iterations} iterations "
        f"({block.method}): {block.message}",
        style="cyan" if block.converged else "yellow",
    )
    for name, value in block.estimates.items():
        interval = block.intervals.get(name)
        bounds = ""
        if interval is not None and interval.lower is not None:
            bounds = f"  [{interval.lower}, {interval.upper}]"
        cprint(f"  {name} = {value}{bounds}", style="cyan")
    for name, derived in block.derived.items():
        cprint(f"  {name}: {derived}", style="cyan")
    crule("", style="cyan")


def cmd_fit(
    config_path: str,
    data_path: str,
    out: str | None = None,
    threads: int | None = None,
    per_id: bool = False,
) -> int:
    """
    Fits the configured model to a dataset and writes ``fit.json``.

    With ``per_id`` every sequence gets its own fit; otherwise all sequences
    share one parameter set.

    Args:
        config_path (str):
            The run configuration.
        data_path (str):
            The CSV dataset.
        out (str | None):
            The output directory, overriding the configuration.
        threads (int | None):
            The number of workers, overriding the configuration.
        per_id (bool):
            Fit every sequence separately.

    Returns:
        int:
            0 if every fit converged, 2 otherwise.

    """
    config = load_config(config_path)
    sequences = read_dataset(data_path, config.model)
    options = config.optimizer
    if threads is not None:
        options = options.model_copy(update={"threads": threads})

    def run(key: str, group: Sequence[ObservationSequence], workers: int) -> FitBlock:
        result: FitResult = fit_mle(
            config.model,
            group,
            config.init,
            options.model_copy(update={"threads": workers}),
        )
        level = config.output.ci_level
        return FitBlock.from_result(key, result, hessian_ci(result, level), level)

    if per_id:
        groups = [(seq.key, [seq]) for seq in sequences]
        if options.threads > 1:
            with ThreadPoolExecutor(max_workers=options.threads) as pool:
                blocks = list(pool.map(lambda g: run(g[0], g[1], 1), groups))
        else:
            blocks = [run(key, group, 1) for key, group in groups]
    else:
        blocks = [run(JOINT_KEY, sequences, options.threads)]

    report = FitReport(model=config.model, fits=blocks)
    path = _out_dir(config, out) / "fit.json"
    save_report(report, path)
    for block in blocks:
        dump_fit(block)
    cprint(f"Estimates written to {path}.")
    if all(block.converged for block in blocks):
        return EXIT_OK
    cwarning("At least one fit did not converge.")
    return EXIT_NOT_CONVERGED


def cmd_simulate(
    config_path: str,
    out: str | None = None,
    seed: int | None = None,
    threads: int | None = None,
) -> int:
    """
    Simulates a dataset from the configured true parameters.

    Writes ``data.csv`` (readable by the other commands) and ``latent.csv``
    (the latent truth).
    """
    config = load_config(config_path)
    simulator = Simulator(
        seed if seed is not None else config.simulate.seed,
        threads or _default_threads(),
    )
    sequences = simulator.simulate(
        config.model, config.truth, config.simulate.configuration()
    )
    directory = _out_dir(config, out)
    write_dataset(sequences, directory / "data.csv", config.model)
    write_latent(sequences, directory / "latent.csv", config.model)
    n_obs = sum(len(s) for s in sequences)
    cprint(f"Simulated {len(sequences)} sequence(s), {n_obs} rows, into {directory}.")
    return EXIT_OK


class _FittedModels:
    """Builds one model per fit block of a result file."""

    def __init__(self, config: RunConfig, estimates_path: str) -> None:
        self.config = config
        self.report = load_fit_report(estimates_path)
        if self.report.model.model_class != config.model.model_class:
            msg = (
                f"The estimates belong to a {self.report.model.model_class.value} "
                f"model, the configuration describes {config.model.model_class.value}."
            )
            raise DataError(msg, estimates_path)
        self._models: dict[str, tuple[BaseLatentModel, dict[str, np.ndarray]]] = {}

    def get(self, key: str) -> tuple[BaseLatentModel, dict[str, np.ndarray]]:
        block = self.report.block_for(key)
        if block.key not in self._models:
            self._models[block.key] = build_model(
                self.config.model, block.natural(), grid=block.grid
            )
        return self._models[block.key]


def cmd_decode(
    config_path: str,
    data_path: str,
    estimates_path: str,
    out: str | None = None,
) -> int:
    """
    Appends the Viterbi path to the dataset and writes ``decoded.csv``.

    Discrete models get a 1-based ``state`` column, grid models the decoded
    midpoint in ``value``; stochastic volatility models also get the decoded
    volatility ``exp(value / 2)``.
    """
    config = load_config(config_path)
    spec = config.model
    sequences = read_dataset(data_path, spec)
    models = _FittedModels(config, estimates_path)
    frames = []
    for seq in sequences:
        model, params = models.get(seq.key)
        decoded = model.decode(params, seq)
        loglik = model.log_likelihood(params, [seq])
        logger.info("Sequence %s: log-likelihood %.10g", seq.key, loglik)
        columns: dict[str, np.ndarray] = dict(seq.columns)
        if model.state_values is None:
            columns["state"] = decoded.states + 1
        else:
            values = model.state_values[decoded.states]
            columns["value"] = values
            emission = spec.emission
            if emission is not None and emission.kind == EmissionKind.SV_SCALED_NORMAL:
                columns["volatility"] = np.exp(values / 2.0)
        frame = pd.DataFrame({spec.time_column: seq.times, **columns})
        if spec.id_column:
            frame.insert(0, spec.id_column, seq.key)
        frames.append(frame)
    path = _out_dir(config, out) / "decoded.csv"
    write_table(frames, path)
    cprint(f"Decoded {len(sequences)} sequence(s) into {path}.")
    return EXIT_OK


def _eval_points(
    config: RunConfig, seq: ObservationSequence, column: str
) -> np.ndarray:
    """The forecast grid: configured, or the data range widened by half."""
    settings = config.forecast
    if settings.lower is not None and settings.upper is not None:
        lower, upper = settings.lower, settings.upper
    else:
        observed = seq.columns[column]
        observed = observed[np.isfinite(observed)]
        if observed.size == 0:
            msg = f"Sequence {seq.key} has no observed {column!r} to size the grid."
            raise DataError(msg)
        lo, hi = float(observed.min()), float(observed.max())
        span = max(hi - lo, 1.0)
        lower, upper = lo - 0.5 * span, hi + 0.5 * span
    return np.linspace(lower, upper, settings.n_points)


def cmd_forecast(
    config_path: str,
    data_path: str,
    estimates_path: str,
    out: str | None = None,
    level: float | None = None,
) -> int:
    """
    Forecasts the observation after the last one of every sequence.

    Writes the forecast density on the evaluation grid (``forecast.csv``) and
    the lower quantile at ``level`` (``forecast.json``). With a configured
    holdout, the rolling quantiles of the last observations and their
    exceedances are written to ``backtest.csv``.
    """
    config = load_config(config_path)
    spec = config.model
    settings = config.forecast
    level = level if level is not None else settings.level
    sequences = read_dataset(data_path, spec)
    models = _FittedModels(config, estimates_path)
    column = settings.column
    if column is None and spec.emission is not None:
        column = spec.emission.leaf_columns()[0]

    directory = _out_dir(config, out)
    density_frames, backtest_frames, blocks = [], [], []
    for seq in sequences:
        model, params = models.get(seq.key)
        if column is None:
            msg = "Forecasts need an emission family."
            raise DataError(msg, config_path)
        points = _eval_points(config, seq, column)
        result = model.forecast(params, seq, points, settings.dt, column)
        density_frames.append(
            pd.DataFrame(
                {
                    "id": seq.key,
                    "point": result.eval_points,
                    "density": result.density,
                    "weight": result.point_weights,
                }
            )
        )
        summary = None
        if settings.holdout is not None:
            backtest = model.backtest(
                params, seq, points, level, settings.holdout, column
            )
            backtest_frames.append(
                pd.DataFrame(
                    {
                        "id": seq.key,
                        "time": seq.times[backtest.steps],
                        "observed": backtest.observed,
                        "quantile": backtest.quantiles,
                        "exceedance": backtest.exceedances.astype(int),
                    }
                )
            )
            summary = BacktestSummary(
                holdout=settings.holdout,
                n_exceedances=backtest.n_exceedances,
                frequency=backtest.frequency,
            )
            cprint(
                f"Sequence {seq.key}: quantile at level {level} exceeded "
                f"{backtest.n_exceedances} times in {settings.holdout} "
                f"(frequency {backtest.frequency:.4f})."
            )
        quantile = result.quantile(level)
        cprint(
            f"Sequence {seq.key}: forecast quantile at level {level} "
            f"= {quantile:.6g}."
        )
        blocks.append(
            ForecastBlock(
                key=seq.key,
                level=level,
                dt=settings.dt,
                quantile=quantile,
                state_weights=result.state_weights.tolist(),
                lower=float(points[0]),
                upper=float(points[-1]),
                n_points=int(points.shape[0]),
                backtest=summary,
            )
        )

    write_table(density_frames, directory / "forecast.csv")
    if backtest_frames:
        write_table(backtest_frames, directory / "backtest.csv")
    save_report(ForecastReport(forecasts=blocks), directory / "forecast.json")
    return EXIT_OK
