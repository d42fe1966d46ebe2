"""
State-dependent observation distributions and the diagonal emission matrices
``P(x_t) = diag(f_1(x_t), ..., f_N(x_t))`` of the forward algorithm.

Observations are passed as a mapping from column name to an array of values
(``NaN`` marks a missing value, which contributes density 1). States are
either 0-based indices of a discrete state space or continuous state values
(grid midpoints).
"""

from collections.abc import Mapping

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import special, stats

from latent_chain.core.base import (
    STATE_VALUE_KINDS,
    EmissionFamily,
    EmissionKind,
    FloatArray,
)
from latent_chain.core.errors import InvalidArgumentError

Observation = Mapping[str, ArrayLike]

LOG_2PI = float(np.log(2.0 * np.pi))


def _column(observations: Observation, name: str | None) -> FloatArray:
    if name is None or name not in observations:
        msg = f"Observation column {name!r} is missing."
        raise InvalidArgumentError(msg)
    return np.atleast_1d(np.asarray(observations[name], dtype=np.float64))


def _applicable_states(family: EmissionFamily, n_states: int) -> NDArray[np.intp]:
    """Returns the 0-based states a discrete-state family applies to."""
    if family.states is None:
        expected = n_states
        idx = np.arange(n_states)
    else:
        expected = len(family.states)
        idx = np.asarray(family.states, dtype=np.intp) - 1
    labels = list(idx + 1) + family.indicator_states
    if any(label > n_states for label in labels):
        msg = (
            f"The {family.kind.value} family refers to states beyond "
            f"the {n_states} states of the model."
        )
        raise InvalidArgumentError(msg)
    length = family.param_length
    if length is not None and length != expected:
        msg = (
            f"The {family.kind.value} family holds {length} values per "
            f"parameter, expected {expected} for {n_states} states."
        )
        raise InvalidArgumentError(msg)
    return idx


def _parameter_arrays(
    family: EmissionFamily, grid_valued: bool
) -> dict[str, FloatArray]:
    """Collects per-state parameter rows (shape ``(1, k)``) or shared scalars."""
    raw: dict[str, list[float]] = dict(family.params)
    raw.update({f"mean_{c}": v for c, v in family.mean_covariates.items()})
    if grid_valued:
        return {
            name: np.asarray(values[0], dtype=np.float64)
            for name, values in raw.items()
        }
    return {
        name: np.asarray(values, dtype=np.float64)[None, :]
        for name, values in raw.items()
    }


def _leaf_log_density(
    family: EmissionFamily,
    observations: Observation,
    n_states: int | None,
    state_values: FloatArray | None,
) -> FloatArray:
    x = _column(observations, family.column)
    grid_valued = state_values is not None
    if state_values is not None:
        if family.kind not in STATE_VALUE_KINDS:
            msg = (
                f"The {family.kind.value} family cannot be evaluated at "
                "continuous state values."
            )
            raise InvalidArgumentError(msg)
        n = state_values.shape[0]
        idx = np.arange(n)
        s: FloatArray | float = state_values[None, :]
    else:
        assert n_states is not None
        n = n_states
        idx = _applicable_states(family, n)
        s = 0.0

    p = _parameter_arrays(family, grid_valued)
    xc = x[:, None]
    kind = family.kind

    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if kind == EmissionKind.NORMAL:
            mean = p["mean"] + s
            for cov in family.mean_covariates:
                mean = mean + _column(observations, cov)[:, None] * p[f"mean_{cov}"]
            values = stats.norm.logpdf(xc, loc=mean, scale=p["sd"])
        elif kind == EmissionKind.GAMMA:
            values = stats.gamma.logpdf(xc, a=p["shape"], scale=p["scale"])
        elif kind == EmissionKind.VON_MISES:
            kappa = p["kappa"]
            log_norm = LOG_2PI + np.log(special.i0e(kappa)) + kappa
            values = kappa * np.cos(xc - p["mu"]) - log_norm
            values = np.where((xc > -np.pi) & (xc <= np.pi), values, -np.inf)
        elif kind == EmissionKind.POISSON:
            values = stats.poisson.logpmf(xc, p["rate"])
        elif kind == EmissionKind.BERNOULLI:
            values = stats.bernoulli.logpmf(xc, p["prob"])
        elif kind == EmissionKind.BERNOULLI_STATE_OFFSET:
            eta = p["beta0"] + s
            values = np.where(
                xc == 1.0,
                special.log_expit(eta),
                np.where(xc == 0.0, special.log_expit(-eta), -np.inf),
            )
        elif kind == EmissionKind.SV_SCALED_NORMAL:
            scale = p["beta"] * np.exp(np.asarray(s) / 2.0)
            values = stats.norm.logpdf(xc, loc=p["mu"], scale=scale)
        elif kind == EmissionKind.DEGENERATE_INDICATOR:
            tied = np.isin(idx + 1, family.indicator_states)[None, :]
            values = np.where(
                tied,
                np.where(xc == 1.0, 0.0, -np.inf),
                np.where(xc == 0.0, 0.0, -np.inf),
            )
        else:
            msg = f"Unsupported emission family {kind.value}."
            raise InvalidArgumentError(msg)

    values = np.broadcast_to(values, (x.shape[0], idx.shape[0]))
    values = np.where(np.isnan(values), -np.inf, values)
    out = np.zeros((x.shape[0], n))
    out[:, idx] = values
    out[np.isnan(x), :] = 0.0
    return out


def log_density_matrix(
    family: EmissionFamily,
    observations: Observation,
    n_states: int | None = None,
    state_values: ArrayLike | None = None,
) -> FloatArray:
    """
    Evaluates the log densities of all observations under all states.

    Args:
        family (EmissionFamily):
            The emission family.
        observations (Observation):
            Observation (and covariate) columns of equal length T.
        n_states (int | None):
            The number of discrete states. Mutually exclusive with
            ``state_values``.
        state_values (ArrayLike | None):
            Continuous state values (grid midpoints).

    Returns:
        FloatArray:
            A ``T x n`` matrix of log densities; ``-inf`` outside the support,
            ``0`` for missing values.

    Raises:
        InvalidArgumentError:
            If a column is missing, the family does not match the state count,
            or the family cannot take continuous state values.

    """
    if (n_states is None) == (state_values is None):
        msg = "Pass exactly one of n_states and state_values."
        raise InvalidArgumentError(msg)
    values = (
        None if state_values is None else np.asarray(state_values, dtype=np.float64)
    )
    if family.kind == EmissionKind.PRODUCT:
        total: FloatArray | None = None
        for component in family.components:
            part = log_density_matrix(component, observations, n_states, values)
            total = part if total is None else total + part
        assert total is not None
        return total
    return _leaf_log_density(family, observations, n_states, values)


def log_density(
    family: EmissionFamily,
    state: int | float,
    x: float | Mapping[str, float],
    n_states: int | None = None,
) -> float:
    """
    Evaluates ``log f(x | state)`` for a single observation.

    An integer ``state`` is a 0-based discrete state, a float is a continuous
    state value. A scalar ``x`` binds to the family's column.

    Args:
        family (EmissionFamily):
            The emission family.
        state (int | float):
            The state index or state value.
        x (float | Mapping[str, float]):
            The observation.
        n_states (int | None):
            The number of discrete states; defaults to the family size.

    Returns:
        float:
            The log density, ``-inf`` outside the support.

    """
    if isinstance(x, Mapping):
        observation: dict[str, ArrayLike] = {k: [v] for k, v in x.items()}
    else:
        if family.kind == EmissionKind.PRODUCT:
            msg = "Product families need an observation mapping."
            raise InvalidArgumentError(msg)
        observation = {str(family.column): [x]}

    if isinstance(state, (int, np.integer)):
        n = n_states if n_states is not None else _family_size(family, int(state) + 1)
        if not 0 <= state < n:
            msg = f"State index {state} is outside 0..{n - 1}."
            raise InvalidArgumentError(msg)
        return float(log_density_matrix(family, observation, n_states=n)[0, state])
    return float(log_density_matrix(family, observation, state_values=[state])[0, 0])


def _family_size(family: EmissionFamily, minimum: int) -> int:
    """Infers the state count of a family from its labels and parameter size."""
    if family.kind == EmissionKind.PRODUCT:
        return max(_family_size(c, minimum) for c in family.components)
    labels = (family.states or []) + family.indicator_states
    size = max([minimum, *labels])
    if family.states is None and family.param_length is not None:
        size = max(size, family.param_length)
    return size


def emission_matrix(
    family: EmissionFamily | None,
    observations: Observation,
    n_obs: int,
    n_states: int | None = None,
    state_values: ArrayLike | None = None,
) -> FloatArray:
    """
    Computes the diagonals of ``P(x_t)`` for a whole sequence.

    Without a family (point processes without marks) every diagonal is the
    all-ones vector.

    Returns:
        FloatArray:
            A ``T x n`` matrix of densities.

    """
    if family is None:
        n = n_states if state_values is None else np.asarray(state_values).shape[0]
        assert n is not None
        return np.ones((n_obs, n))
    return np.exp(log_density_matrix(family, observations, n_states, state_values))


def emission_diag(
    family: EmissionFamily | None,
    x: Mapping[str, float],
    n_states: int | None = None,
    state_values: ArrayLike | None = None,
) -> FloatArray:
    """
    Computes the diagonal of ``P(x)`` for one observation.

    Args:
        family (EmissionFamily | None):
            The emission family, ``None`` for point processes without marks.
        x (Mapping[str, float]):
            The observation.
        n_states (int | None):
            The number of discrete states.
        state_values (ArrayLike | None):
            Continuous state values (grid midpoints).

    Returns:
        FloatArray:
            The ``n`` state-dependent densities.

    Raises:
        InvalidArgumentError:
            If the family size does not match the state count.

    """
    observation = {k: [v] for k, v in x.items()}
    return emission_matrix(family, observation, 1, n_states, state_values)[0]


def sample_emissions(
    family: EmissionFamily,
    rng: np.random.Generator,
    states: ArrayLike | None = None,
    state_values: ArrayLike | None = None,
    covariates: Observation | None = None,
) -> dict[str, FloatArray]:
    """
    Draws one observation per time point given the latent states.

    States a family does not apply to produce a missing value (``NaN``);
    degenerate-indicator columns hold 1 in the tied states and 0 otherwise.

    Args:
        family (EmissionFamily):
            The emission family.
        rng (np.random.Generator):
            The random generator.
        states (ArrayLike | None):
            0-based discrete states, one per time point.
        state_values (ArrayLike | None):
            Continuous state values, one per time point.
        covariates (Observation | None):
            Covariate columns used by linear-mean options.

    Returns:
        dict[str, FloatArray]:
            The simulated observation columns.

    """
    if (states is None) == (state_values is None):
        msg = "Pass exactly one of states and state_values."
        raise InvalidArgumentError(msg)
    if family.kind == EmissionKind.PRODUCT:
        draws: dict[str, FloatArray] = {}
        for component in family.components:
            draws.update(
                sample_emissions(component, rng, states, state_values, covariates)
            )
        return draws

    covariates = covariates or {}
    if state_values is not None:
        s = np.asarray(state_values, dtype=np.float64)
        n_obs = s.shape[0]
        applies = np.ones(n_obs, dtype=bool)
        p = _parameter_arrays(family, grid_valued=True)
        tied = np.zeros(n_obs, dtype=bool)
    else:
        k = np.asarray(states, dtype=np.intp)
        n_obs = k.shape[0]
        s = np.zeros(n_obs)
        labels = family.states if family.states is not None else None
        if labels is None:
            position = k
            applies = np.ones(n_obs, dtype=bool)
        else:
            lookup = {label - 1: pos for pos, label in enumerate(labels)}
            position = np.array([lookup.get(int(i), 0) for i in k], dtype=np.intp)
            applies = np.isin(k + 1, labels)
        p = {
            name: values[0][position]
            for name, values in _parameter_arrays(family, grid_valued=False).items()
        }
        tied = np.isin(k + 1, family.indicator_states)

    kind = family.kind
    if kind == EmissionKind.NORMAL:
        mean = p["mean"] + s
        for cov in family.mean_covariates:
            mean = mean + _column(covariates, cov) * p[f"mean_{cov}"]
        draw = rng.normal(mean, p["sd"], size=n_obs)
    elif kind == EmissionKind.GAMMA:
        draw = rng.gamma(p["shape"], p["scale"], size=n_obs)
    elif kind == EmissionKind.VON_MISES:
        draw = rng.vonmises(p["mu"], p["kappa"], size=n_obs)
    elif kind == EmissionKind.POISSON:
        draw = rng.poisson(p["rate"], size=n_obs).astype(np.float64)
    elif kind == EmissionKind.BERNOULLI:
        draw = (rng.random(n_obs) < p["prob"]).astype(np.float64)
    elif kind == EmissionKind.BERNOULLI_STATE_OFFSET:
        draw = (rng.random(n_obs) < special.expit(p["beta0"] + s)).astype(np.float64)
    elif kind == EmissionKind.SV_SCALED_NORMAL:
        draw = rng.normal(p["mu"], p["beta"] * np.exp(s / 2.0), size=n_obs)
    elif kind == EmissionKind.DEGENERATE_INDICATOR:
        draw = tied.astype(np.float64)
    else:
        msg = f"Unsupported emission family {kind.value}."
        raise InvalidArgumentError(msg)

    draw = np.where(applies, draw, np.nan)
    assert family.column is not None
    return {family.column: np.asarray(draw, dtype=np.float64)}
