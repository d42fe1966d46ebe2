"""
The scaled forward algorithm, Viterbi decoding and one-step-ahead forecasts.

Everything here is generic over the model class: a model only has to supply
an initial distribution, the per-step operators ``Omega^(2..T)`` and the
emission diagonals ``P(x_1..x_T)``.
"""

from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from latent_chain.core.base import EmissionFamily, FloatArray
from latent_chain.core.emissions import log_density_matrix
from latent_chain.core.errors import InvalidArgumentError, ZeroLikelihoodError


@dataclass(frozen=True)
class LikelihoodInputs:
    """
    The ingredients of the likelihood
    ``delta P(x_1) Omega^(2) P(x_2) ... Omega^(T) P(x_T) 1'``.

    Attributes:
        delta1 (FloatArray):
            The initial distribution, length n.
        omegas (Sequence[FloatArray]):
            The ``T-1`` nonnegative ``n x n`` operators.
        pdiags (FloatArray):
            The ``T x n`` emission diagonals.

    """

    delta1: FloatArray
    omegas: Sequence[FloatArray]
    pdiags: FloatArray

    def __post_init__(self) -> None:
        delta = np.asarray(self.delta1, dtype=np.float64)
        pdiags = np.atleast_2d(np.asarray(self.pdiags, dtype=np.float64))
        object.__setattr__(self, "delta1", delta)
        object.__setattr__(self, "pdiags", pdiags)
        n = delta.shape[0]
        if delta.ndim != 1 or n == 0:
            msg = f"delta1 must be a non-empty vector, got shape {delta.shape}."
            raise InvalidArgumentError(msg)
        if pdiags.shape[1] != n:
            msg = f"pdiags have {pdiags.shape[1]} states, delta1 has {n}."
            raise InvalidArgumentError(msg)
        if len(self.omegas) != pdiags.shape[0] - 1:
            msg = (
                f"Expected {pdiags.shape[0] - 1} transition operators for "
                f"{pdiags.shape[0]} observations, got {len(self.omegas)}."
            )
            raise InvalidArgumentError(msg)
        if isinstance(self.omegas, np.ndarray):
            if self.omegas.ndim != 3 or self.omegas.shape[1:] != (n, n):
                msg = (
                    f"omegas must have shape (T-1, {n}, {n}), "
                    f"got {self.omegas.shape}."
                )
                raise InvalidArgumentError(msg)
            _check_nonnegative(self.omegas, "omegas")
        _check_nonnegative(delta, "delta1")
        _check_nonnegative(pdiags, "pdiags")

    @classmethod
    def homogeneous(
        cls, delta1: ArrayLike, omega: ArrayLike, pdiags: ArrayLike
    ) -> "LikelihoodInputs":
        """
        Builds inputs sharing one operator across all steps.

        Args:
            delta1 (ArrayLike):
                The initial distribution.
            omega (ArrayLike):
                The common ``n x n`` operator.
            pdiags (ArrayLike):
                The ``T x n`` emission diagonals.

        Returns:
            LikelihoodInputs:
                The inputs, with a broadcast (copy-free) operator stack.

        """
        matrix = np.asarray(omega, dtype=np.float64)
        diagonals = np.atleast_2d(np.asarray(pdiags, dtype=np.float64))
        n_steps = max(diagonals.shape[0] - 1, 0)
        stack = np.broadcast_to(matrix, (n_steps, *matrix.shape))
        return cls(np.asarray(delta1, dtype=np.float64), stack, diagonals)

    @property
    def n_obs(self) -> int:
        return int(self.pdiags.shape[0])

    @property
    def n_states(self) -> int:
        return int(self.delta1.shape[0])


def _check_nonnegative(values: NDArray[np.float64], name: str) -> None:
    if not np.all(np.isfinite(values)) or np.any(values < 0):
        msg = f"{name} must be finite and nonnegative."
        raise InvalidArgumentError(msg)


@dataclass(frozen=True)
class DecodeResult:
    """
    The most probable state sequence.

    Attributes:
        states (NDArray[np.intp]):
            The 0-based decoded states, one per observation.
        log_joint (float):
            The log joint density of the data and the decoded sequence.

    """

    states: NDArray[np.intp]
    log_joint: float


def _forward(inp: LikelihoodInputs, keep: bool) -> tuple[float, FloatArray]:
    """Runs the scaled recursion; returns the log-likelihood and filtered vectors."""
    pdiags = inp.pdiags
    filtered = np.empty_like(pdiags) if keep else np.empty((1, inp.n_states))
    phi = inp.delta1 * pdiags[0]
    total = phi.sum()
    if not total > 0:
        raise ZeroLikelihoodError(1)
    loglik = float(np.log(total))
    phi = phi / total
    filtered[0] = phi
    for tau in range(1, inp.n_obs):
        foo = (phi @ inp.omegas[tau - 1]) * pdiags[tau]
        total = foo.sum()
        if not total > 0:
            raise ZeroLikelihoodError(tau + 1)
        loglik += float(np.log(total))
        phi = foo / total
        filtered[tau if keep else 0] = phi
    return loglik, filtered


def log_likelihood(inp: LikelihoodInputs) -> float:
    """
    Evaluates the log-likelihood with the scaled forward algorithm.

    Args:
        inp (LikelihoodInputs):
            The likelihood ingredients.

    Returns:
        float:
            The log-likelihood.

    Raises:
        ZeroLikelihoodError:
            If the probability mass vanishes; ``tau`` names the 1-based step.

    """
    return _forward(inp, keep=False)[0]


def filtered_probabilities(inp: LikelihoodInputs) -> FloatArray:
    """
    Computes the normalized forward vectors ``phi_tau``, the state
    distributions given the observations up to ``tau``.

    Returns:
        FloatArray:
            A ``T x n`` matrix with rows summing to one.

    """
    return _forward(inp, keep=True)[1]


def viterbi(inp: LikelihoodInputs) -> DecodeResult:
    """
    Finds the most probable state sequence in log space.

    Ties are broken toward the lowest state index.

    Args:
        inp (LikelihoodInputs):
            The likelihood ingredients.

    Returns:
        DecodeResult:
            The decoded states and their log joint density.

    Raises:
        ZeroLikelihoodError:
            If every state has zero probability at some step.

    """
    with np.errstate(divide="ignore"):
        log_p = np.log(inp.pdiags)
        xi = np.log(inp.delta1) + log_p[0]
    if not np.any(np.isfinite(xi)):
        raise ZeroLikelihoodError(1)
    backpointers = np.zeros((inp.n_obs, inp.n_states), dtype=np.intp)
    for tau in range(1, inp.n_obs):
        with np.errstate(divide="ignore"):
            scores = xi[:, None] + np.log(inp.omegas[tau - 1])
        backpointers[tau] = np.argmax(scores, axis=0)
        xi = scores[backpointers[tau], np.arange(inp.n_states)] + log_p[tau]
        if not np.any(np.isfinite(xi)):
            raise ZeroLikelihoodError(tau + 1)
    states = np.empty(inp.n_obs, dtype=np.intp)
    states[-1] = int(np.argmax(xi))
    for tau in range(inp.n_obs - 1, 0, -1):
        states[tau - 1] = backpointers[tau, states[tau]]
    return DecodeResult(states=states, log_joint=float(xi[states[-1]]))


@dataclass(frozen=True)
class ForecastResult:
    """
    A one-step-ahead predictive distribution evaluated on a grid of points.

    Attributes:
        state_weights (FloatArray):
            The predicted state distribution ``normalize(phi_T Omega)``.
        eval_points (FloatArray):
            The ascending evaluation points.
        density (FloatArray):
            The mixture density ``sum_j w_j f_j(x)`` at each point.

    """

    state_weights: FloatArray
    eval_points: FloatArray
    density: FloatArray

    @property
    def point_weights(self) -> FloatArray:
        """The density normalized to probability weights over the points."""
        total = self.density.sum()
        if not total > 0:
            return np.full_like(self.density, 1.0 / self.density.shape[0])
        return np.asarray(self.density / total, dtype=np.float64)

    def cdf(self, x: float) -> float:
        """The accumulated weight of the points not exceeding ``x``."""
        return float(self.point_weights[self.eval_points <= x].sum())

    def quantile(self, level: float) -> float:
        """
        Returns the smallest evaluation point whose accumulated weight reaches
        ``level``.

        Raises:
            InvalidArgumentError:
                If ``level`` is outside ``(0, 1)``.

        """
        if not 0.0 < level < 1.0:
            msg = f"The quantile level must lie in (0, 1), got {level}."
            raise InvalidArgumentError(msg)
        cumulative = np.cumsum(self.point_weights)
        index = int(np.searchsorted(cumulative, level - 1e-12, side="left"))
        return float(self.eval_points[min(index, cumulative.shape[0] - 1)])


def predictive_distribution(
    state_weights: ArrayLike, eval_points: ArrayLike, state_densities: ArrayLike
) -> ForecastResult:
    """
    Mixes precomputed state-dependent densities with predicted state weights.

    Args:
        state_weights (ArrayLike):
            The predicted state distribution (normalized internally).
        eval_points (ArrayLike):
            The ascending evaluation points, K of them.
        state_densities (ArrayLike):
            The ``K x n`` densities ``f_j(x_k)``.

    Returns:
        ForecastResult:
            The predictive distribution.

    """
    points = np.asarray(eval_points, dtype=np.float64)
    if points.ndim != 1 or points.shape[0] == 0:
        msg = "The evaluation grid must be a non-empty vector."
        raise InvalidArgumentError(msg)
    if np.any(np.diff(points) < 0):
        msg = "The evaluation grid must be ascending."
        raise InvalidArgumentError(msg)
    w = np.asarray(state_weights, dtype=np.float64)
    total = w.sum()
    if not total > 0:
        msg = "The predicted state distribution has no mass."
        raise InvalidArgumentError(msg)
    w = w / total
    density = np.asarray(state_densities, dtype=np.float64) @ w
    return ForecastResult(state_weights=w, eval_points=points, density=density)


def forecast(
    inp: LikelihoodInputs,
    next_omega: ArrayLike,
    eval_points: ArrayLike,
    family: EmissionFamily,
    column: str | None = None,
    n_states: int | None = None,
    state_values: ArrayLike | None = None,
    covariates: Mapping[str, float] | None = None,
) -> ForecastResult:
    """
    Computes the one-step-ahead forecast distribution of one observation
    column after consuming the data in ``inp``.

    Other columns of a product family are treated as missing, so the result
    is the marginal forecast of ``column``.

    Args:
        inp (LikelihoodInputs):
            The likelihood ingredients up to time T.
        next_omega (ArrayLike):
            The operator from T to T+1.
        eval_points (ArrayLike):
            The candidate observations.
        family (EmissionFamily):
            The emission family.
        column (str | None):
            The forecast column; defaults to the family's only column.
        n_states (int | None):
            The number of discrete states.
        state_values (ArrayLike | None):
            Continuous state values (grid midpoints).
        covariates (Mapping[str, float] | None):
            Covariate values at T+1 for linear-mean families.

    Returns:
        ForecastResult:
            The predictive distribution.

    Raises:
        InvalidArgumentError:
            If the evaluation grid is empty.

    """
    points = np.sort(np.atleast_1d(np.asarray(eval_points, dtype=np.float64)))
    if n_states is None and state_values is None:
        n_states = inp.n_states
    densities = marginal_densities(
        family, points, column, n_states, state_values, covariates
    )
    phi_last = filtered_probabilities(inp)[-1]
    weights = phi_last @ np.asarray(next_omega, dtype=np.float64)
    return predictive_distribution(weights, points, densities)


def marginal_densities(
    family: EmissionFamily,
    points: ArrayLike,
    column: str | None = None,
    n_states: int | None = None,
    state_values: ArrayLike | None = None,
    covariates: Mapping[str, float] | None = None,
) -> FloatArray:
    """
    Evaluates the state-dependent densities of one observation column at
    every point, all other columns of the family treated as missing.

    Returns:
        FloatArray:
            The ``K x n`` densities ``f_j(x_k)``.

    Raises:
        InvalidArgumentError:
            If the points are empty or the column is ambiguous.

    """
    values = np.atleast_1d(np.asarray(points, dtype=np.float64))
    if values.shape[0] == 0:
        msg = "The evaluation grid must not be empty."
        raise InvalidArgumentError(msg)
    columns = family.leaf_columns()
    target = column or (columns[0] if len(columns) == 1 else None)
    if target is None or target not in columns:
        msg = f"Choose the forecast column among {columns}."
        raise InvalidArgumentError(msg)
    observations: dict[str, ArrayLike] = {
        name: np.full(values.shape[0], np.nan) for name in columns
    }
    observations[target] = values
    for name, value in (covariates or {}).items():
        observations[name] = np.full(values.shape[0], value)
    return np.exp(log_density_matrix(family, observations, n_states, state_values))


@dataclass(frozen=True)
class BacktestResult:
    """
    Rolling one-step-ahead quantile forecasts over a holdout range.

    Attributes:
        level (float):
            The quantile level, e.g. 0.01 for a 1% value at risk.
        steps (NDArray[np.intp]):
            The 0-based positions of the holdout observations.
        quantiles (FloatArray):
            The forecast quantile at every holdout step.
        observed (FloatArray):
            The realized observations.

    """

    level: float
    steps: NDArray[np.intp]
    quantiles: FloatArray
    observed: FloatArray

    @property
    def exceedances(self) -> NDArray[np.bool_]:
        """Whether each observation fell below its forecast quantile."""
        return np.asarray(self.observed < self.quantiles)

    @property
    def n_exceedances(self) -> int:
        return int(self.exceedances.sum())

    @property
    def frequency(self) -> float:
        """The relative exceedance frequency."""
        if self.steps.shape[0] == 0:
            return 0.0
        return self.n_exceedances / self.steps.shape[0]


def rolling_quantiles(
    inp: LikelihoodInputs,
    start: int,
    eval_points: ArrayLike,
    state_densities: ArrayLike,
    observed: ArrayLike,
    level: float,
) -> BacktestResult:
    """
    Forecasts every observation from ``start`` on given the data before it,
    and compares it with the quantile of its forecast distribution.

    Args:
        inp (LikelihoodInputs):
            The likelihood ingredients of the whole sequence.
        start (int):
            The 0-based position of the first holdout observation, at least 1.
        eval_points (ArrayLike):
            The ascending evaluation points.
        state_densities (ArrayLike):
            The ``K x n`` densities at the points (see :func:`marginal_densities`).
        observed (ArrayLike):
            The observed values of the forecast column, length T.
        level (float):
            The quantile level.

    Returns:
        BacktestResult:
            The quantiles and realized values of the holdout steps.

    Raises:
        InvalidArgumentError:
            If the holdout range is empty or out of bounds.

    """
    values = np.asarray(observed, dtype=np.float64)
    if values.shape[0] != inp.n_obs:
        msg = f"Expected {inp.n_obs} observed values, got {values.shape[0]}."
        raise InvalidArgumentError(msg)
    if not 1 <= start < inp.n_obs:
        msg = f"The holdout must start within 1..{inp.n_obs - 1}, got {start}."
        raise InvalidArgumentError(msg)
    filtered = filtered_probabilities(inp)
    densities = np.asarray(state_densities, dtype=np.float64)
    steps = np.arange(start, inp.n_obs, dtype=np.intp)
    quantiles = np.empty(steps.shape[0])
    for k, tau in enumerate(steps):
        weights = filtered[tau - 1] @ np.asarray(inp.omegas[tau - 1], dtype=np.float64)
        predictive = predictive_distribution(weights, eval_points, densities)
        quantiles[k] = predictive.quantile(level)
    return BacktestResult(
        level=level, steps=steps, quantiles=quantiles, observed=values[steps]
    )
