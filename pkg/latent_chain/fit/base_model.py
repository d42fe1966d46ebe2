from abc import ABC, abstractmethod
from collections.abc import Mapping, Sequence

import numpy as np
from numpy.typing import ArrayLike

from latent_chain.core.base import (
    EmissionFamily,
    FloatArray,
    Grid,
    ModelSpec,
    ObservationSequence,
)
from latent_chain.core.emissions import emission_matrix
from latent_chain.core.errors import InvalidArgumentError
from latent_chain.core.forward import (
    BacktestResult,
    DecodeResult,
    ForecastResult,
    LikelihoodInputs,
    filtered_probabilities,
    forecast,
    log_likelihood,
    marginal_densities,
    rolling_quantiles,
    viterbi,
)
from latent_chain.core.grid import build_grid, default_bounds
from latent_chain.fit import _default_threads, _map_sequences, _n_observations
from latent_chain.fit.params import ParamBlock, ParamVector, transform, untransform

Params = Mapping[str, FloatArray]


def _scalar(params: Params, name: str) -> float:
    return float(np.asarray(params[name], dtype=np.float64).ravel()[0])


class BaseLatentModel(ABC):
    """
    Base class for all latent Markov model classes.

    A model turns natural parameters and one observed sequence into the
    ingredients of the forward algorithm; likelihood evaluation, decoding and
    forecasting are shared.

    Attributes:
        spec (ModelSpec):
            The model description.
        grid (Grid | None):
            The discretization of a continuous state space, once resolved.
        threads (int):
            The number of workers used to evaluate independent sequences.

    """

    def __init__(
        self,
        spec: ModelSpec,
        grid: Grid | None = None,
        threads: int | None = None,
    ) -> None:
        self.spec: ModelSpec = spec
        self.grid: Grid | None = grid
        self.threads: int = threads if threads is not None else _default_threads()

    @property
    @abstractmethod
    def param_blocks(self) -> list[ParamBlock]:
        """
        The parameter blocks of the model, in packing order.

        Returns:
            list[ParamBlock]:
                The blocks.

        """

    @abstractmethod
    def _default_parameters(self) -> dict[str, FloatArray]:
        """
        Default natural values of the non-emission blocks.

        Returns:
            dict[str, FloatArray]:
                The values keyed by block name.

        """

    @abstractmethod
    def likelihood_inputs(
        self, params: Params, sequence: ObservationSequence
    ) -> LikelihoodInputs:
        """
        Builds the forward-algorithm ingredients for one sequence.

        Args:
            params (Params):
                Natural parameters keyed by block name.
            sequence (ObservationSequence):
                The observed sequence.

        Returns:
            LikelihoodInputs:
                The initial distribution, operators and emission diagonals.

        """

    def next_omega(
        self,
        params: Params,
        sequence: ObservationSequence,
        dt: float,
        covariates: Mapping[str, float] | None = None,
    ) -> FloatArray:
        """
        The operator from the last observation to the next one, ``dt`` later.

        Raises:
            InvalidArgumentError:
                If the model class does not support forecasts.

        """
        msg = f"Forecasts are not supported for {self.spec.model_class.value} models."
        raise InvalidArgumentError(msg)

    def derived(self, params: Params) -> dict[str, list[float]]:
        """Summary quantities derived from the estimates."""
        return {}

    def prepare(self, params: Params) -> None:
        """Resolves anything that is fixed for a fit, such as the grid."""

    def check_estimates(self, params: Params) -> None:
        """Reports diagnostics about a set of estimates."""

    def initial_parameters(
        self, init: Mapping[str, ArrayLike] | None = None
    ) -> dict[str, FloatArray]:
        """
        Collects initial natural values of every block.

        Defaults are overridden by the emission parameters of the spec, which
        are overridden by ``init``.

        Args:
            init (Mapping[str, ArrayLike] | None):
                User-supplied initial values keyed by block name.

        Returns:
            dict[str, FloatArray]:
                The initial values of every block.

        Raises:
            InvalidArgumentError:
                If ``init`` names an unknown block.

        """
        natural = self._default_parameters()
        if self.spec.emission is not None:
            natural.update(self.spec.emission.parameter_blocks())
        shapes = {b.name: b.shape for b in self.param_blocks}
        for name, value in (init or {}).items():
            if name not in shapes:
                msg = (
                    f"Unknown parameter block {name!r}; "
                    f"known blocks: {sorted(shapes)}."
                )
                raise InvalidArgumentError(msg)
            array = np.asarray(value, dtype=np.float64)
            if array.size != int(np.prod(shapes[name], dtype=np.int64)):
                msg = (
                    f"Parameter block {name} needs shape {shapes[name]}, "
                    f"got {array.shape}."
                )
                raise InvalidArgumentError(msg)
            natural[name] = array.reshape(shapes[name])
        return {b.name: natural[b.name] for b in self.param_blocks}

    def transform(self, natural: Mapping[str, ArrayLike]) -> ParamVector:
        """Maps natural parameters to the optimizer's unconstrained vector."""
        return transform(self.param_blocks, natural, self.spec.fixed)

    def untransform(self, vector: ParamVector) -> dict[str, FloatArray]:
        """Maps an unconstrained vector back to natural parameters."""
        return untransform(vector)

    @property
    def state_values(self) -> FloatArray | None:
        """The continuous state values (grid midpoints), if any."""
        return None if self.grid is None else self.grid.midpoints

    @property
    def n_states(self) -> int:
        """The state count of the likelihood (N states or m grid cells)."""
        if self.grid is not None:
            return self.grid.m
        assert self.spec.n_states is not None
        return self.spec.n_states

    def emission(self, params: Params) -> EmissionFamily | None:
        """The emission family at the given parameters."""
        if self.spec.emission is None:
            return None
        return self.spec.emission.with_parameters(params)

    def emission_diagonals(
        self, params: Params, sequence: ObservationSequence
    ) -> FloatArray:
        """The ``T x n`` emission diagonals of one sequence."""
        state_values = self.state_values
        return emission_matrix(
            self.emission(params),
            sequence.columns,
            len(sequence),
            n_states=None if state_values is not None else self.n_states,
            state_values=state_values,
        )

    def sequence_log_likelihoods(
        self, params: Params, sequences: Sequence[ObservationSequence]
    ) -> list[float]:
        """The log-likelihood of every sequence, in order."""
        return _map_sequences(
            lambda seq: log_likelihood(self.likelihood_inputs(params, seq)),
            sequences,
            self.threads,
        )

    def log_likelihood(
        self, params: Params, sequences: Sequence[ObservationSequence]
    ) -> float:
        """
        The total log-likelihood of independent sequences sharing one
        parameter set.

        Args:
            params (Params):
                Natural parameters keyed by block name.
            sequences (Sequence[ObservationSequence]):
                The observed sequences.

        Returns:
            float:
                The sum of the per-sequence log-likelihoods.

        Raises:
            ZeroLikelihoodError:
                If some sequence is impossible under the parameters.

        """
        return float(sum(self.sequence_log_likelihoods(params, sequences)))

    def decode(self, params: Params, sequence: ObservationSequence) -> DecodeResult:
        """The most probable state sequence of one sequence."""
        return viterbi(self.likelihood_inputs(params, sequence))

    def filtered(self, params: Params, sequence: ObservationSequence) -> FloatArray:
        """The filtered state distributions of one sequence."""
        return filtered_probabilities(self.likelihood_inputs(params, sequence))

    def forecast(
        self,
        params: Params,
        sequence: ObservationSequence,
        eval_points: ArrayLike,
        dt: float = 1.0,
        column: str | None = None,
        covariates: Mapping[str, float] | None = None,
    ) -> ForecastResult:
        """
        The one-step-ahead forecast distribution after the last observation.

        Args:
            params (Params):
                Natural parameters keyed by block name.
            sequence (ObservationSequence):
                The observed sequence.
            eval_points (ArrayLike):
                The candidate observations.
            dt (float):
                The time to the next observation.
            column (str | None):
                The forecast column.
            covariates (Mapping[str, float] | None):
                Covariate values at the next observation.

        Returns:
            ForecastResult:
                The predictive distribution.

        """
        family = self.emission(params)
        if family is None:
            msg = "Forecasts need an emission family."
            raise InvalidArgumentError(msg)
        state_values = self.state_values
        return forecast(
            self.likelihood_inputs(params, sequence),
            self.next_omega(params, sequence, dt, covariates),
            eval_points,
            family,
            column=column,
            n_states=None if state_values is not None else self.n_states,
            state_values=state_values,
            covariates=covariates,
        )

    def backtest(
        self,
        params: Params,
        sequence: ObservationSequence,
        eval_points: ArrayLike,
        level: float,
        holdout: int,
        column: str | None = None,
    ) -> BacktestResult:
        """
        Rolling one-step-ahead quantile forecasts of the last ``holdout``
        observations, each made from the data before it.

        Raises:
            InvalidArgumentError:
                If the family has covariate-dependent means or the holdout
                does not fit in the sequence.

        """
        family = self.emission(params)
        if family is None or family.covariate_columns():
            msg = "Backtests need an emission family without mean covariates."
            raise InvalidArgumentError(msg)
        state_values = self.state_values
        points = np.sort(np.atleast_1d(np.asarray(eval_points, dtype=np.float64)))
        densities = marginal_densities(
            family,
            points,
            column,
            n_states=None if state_values is not None else self.n_states,
            state_values=state_values,
        )
        target = column or family.leaf_columns()[0]
        return rolling_quantiles(
            self.likelihood_inputs(params, sequence),
            len(sequence) - holdout,
            points,
            densities,
            sequence.columns[target],
            level,
        )

    def n_observations(self, sequences: Sequence[ObservationSequence]) -> int:
        """The number of observations entering the likelihood."""
        return _n_observations(sequences)


class GridLatentModel(BaseLatentModel):
    """
    Base class for models whose continuous state space is discretized.

    The grid is resolved once per fit: from explicit bounds in the spec, or
    from the stationary distribution at the initial parameters.
    """

    @abstractmethod
    def stationary_moments(self, params: Params) -> tuple[float, float]:
        """
        The stationary mean and standard deviation of the state process.

        Returns:
            tuple[float, float]:
                The mean and the standard deviation.

        """

    def prepare(self, params: Params) -> None:
        if self.grid is not None:
            return
        grid_spec = self.spec.grid
        assert grid_spec is not None
        if grid_spec.b0 is not None and grid_spec.bm is not None:
            b0, bm = grid_spec.b0, grid_spec.bm
        else:
            b0, bm = default_bounds(*self.stationary_moments(params))
        self.grid = build_grid(b0, bm, grid_spec.m)

    def require_grid(self) -> Grid:
        """Returns the resolved grid."""
        if self.grid is None:
            msg = "The grid is not resolved yet; call prepare() with initial values."
            raise InvalidArgumentError(msg)
        return self.grid
