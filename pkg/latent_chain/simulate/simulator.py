"""
Simulators for every model class.

Every function takes ``seed`` as an integer, a ``numpy.random.Generator`` or
``None``; a fixed integer seed gives bitwise-reproducible output. The
:class:`Simulator` gives every sequence its own PCG64 stream spawned from one
seed, so sequences do not depend on each other or on the order they are
simulated in.
"""

from collections.abc import Mapping
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from numpy.typing import ArrayLike, NDArray

from latent_chain.core.base import (
    EmissionFamily,
    FloatArray,
    Grid,
    ModelClass,
    ModelSpec,
    ObservationSequence,
    OUParams,
)
from latent_chain.core.emissions import sample_emissions
from latent_chain.core.errors import InvalidArgumentError
from latent_chain.core.linalg import stationary_continuous
from latent_chain.core.validate import (
    is_generator_matrix,
    is_probability_vector,
    is_transition_matrix,
)
from latent_chain.fit.cthmm import CTHMMModel
from latent_chain.fit.ctssm import CTSSMModel
from latent_chain.fit.factory import build_model
from latent_chain.fit.hmm import HMMModel
from latent_chain.fit.mmpp import CoxOUMMPPModel, MMPPModel
from latent_chain.fit.ssm import SSMModel
from latent_chain.utils import get_logger

logger = get_logger(__name__)

Seed = int | np.random.Generator | None


class OUMethod(str, Enum):
    EULER_MARUYAMA = "euler-maruyama"
    EXACT = "exact"


def _rng(seed: Seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(seed))


def _draw(cdf: FloatArray, u: float) -> int:
    """Inverse-CDF draw of a 0-based index."""
    return min(int(np.searchsorted(cdf, u, side="right")), cdf.shape[0] - 1)


def _require(valid: bool, what: str) -> None:
    if not valid:
        msg = f"Invalid {what}; see the diagnostics above."
        raise InvalidArgumentError(msg)


@dataclass(frozen=True)
class CTMCPath:
    """
    A piecewise-constant trajectory of a continuous-time Markov chain.

    Attributes:
        jump_times (FloatArray):
            The start time followed by every jump time.
        states (NDArray[np.intp]):
            The 0-based state entered at each jump time.
        horizon (float):
            The end of the trajectory.

    """

    jump_times: FloatArray
    states: NDArray[np.intp]
    horizon: float

    def state_at(self, times: ArrayLike) -> NDArray[np.intp]:
        """The state occupied at each of the given times."""
        t = np.asarray(times, dtype=np.float64)
        index = np.searchsorted(self.jump_times, t, side="right") - 1
        return self.states[np.clip(index, 0, None)]

    def occupancy(self, n_states: int) -> FloatArray:
        """The fraction of ``[start, horizon]`` spent in each state."""
        ends = np.append(self.jump_times[1:], self.horizon)
        durations = ends - self.jump_times
        total = self.horizon - self.jump_times[0]
        return np.bincount(self.states, weights=durations, minlength=n_states) / total


def sim_markov_chain(
    gamma: ArrayLike, delta1: ArrayLike, n_steps: int, seed: Seed = None
) -> NDArray[np.intp]:
    """
    Simulates a discrete-time Markov chain by inverse-CDF sampling.

    Args:
        gamma (ArrayLike):
            The ``N x N`` transition probability matrix, or a ``(T, N, N)``
            stack whose entry ``t`` governs the transition into step ``t``.
        delta1 (ArrayLike):
            The initial distribution.
        n_steps (int):
            The number of steps T.
        seed (Seed):
            The random seed or generator.

    Returns:
        NDArray[np.intp]:
            The 0-based states.

    Raises:
        InvalidArgumentError:
            If the inputs are not a valid chain.

    """
    rng = _rng(seed)
    matrices = np.asarray(gamma, dtype=np.float64)
    delta = np.asarray(delta1, dtype=np.float64)
    _require(
        is_probability_vector(delta, name="Initial distribution"),
        "initial distribution",
    )
    if matrices.ndim == 3:
        if matrices.shape[0] != n_steps:
            msg = f"Expected {n_steps} transition matrices, got {matrices.shape[0]}."
            raise InvalidArgumentError(msg)
        for t in range(1, n_steps):
            _require(is_transition_matrix(matrices[t], name=f"Gamma[{t}]"), "t.p.m.")
    else:
        _require(is_transition_matrix(matrices), "transition probability matrix")
        matrices = matrices[None, :, :]
    if matrices.shape[-1] != delta.shape[0]:
        msg = "The t.p.m. and the initial distribution disagree in size."
        raise InvalidArgumentError(msg)

    cdfs = np.cumsum(matrices, axis=-1)
    u = rng.random(n_steps)
    states = np.empty(n_steps, dtype=np.intp)
    if n_steps == 0:
        return states
    states[0] = _draw(np.cumsum(delta), u[0])
    for t in range(1, n_steps):
        states[t] = _draw(cdfs[min(t, cdfs.shape[0] - 1), states[t - 1]], u[t])
    return states


def sim_ctmc(
    q: ArrayLike,
    delta: ArrayLike,
    horizon: float,
    seed: Seed = None,
    start: float = 0.0,
) -> CTMCPath:
    """
    Simulates a continuous-time Markov chain on ``[start, horizon]``.

    Holding times are exponential with rate ``-q_ii``; the next state is
    ``j`` with probability ``q_ij / -q_ii``. Absorbing states end the jumps.

    Raises:
        InvalidArgumentError:
            If the inputs are not a valid chain or ``horizon < start``.

    """
    rng = _rng(seed)
    generator = np.asarray(q, dtype=np.float64)
    initial = np.asarray(delta, dtype=np.float64)
    _require(is_generator_matrix(generator), "generator matrix")
    _require(
        is_probability_vector(initial, name="Initial distribution"),
        "initial distribution",
    )
    if horizon < start:
        msg = f"The horizon {horizon} lies before the start {start}."
        raise InvalidArgumentError(msg)

    jumps = np.clip(generator, 0.0, None)
    np.fill_diagonal(jumps, 0.0)
    totals = jumps.sum(axis=1)
    cdfs = np.cumsum(jumps, axis=1) / np.where(totals > 0, totals, 1.0)[:, None]

    state = _draw(np.cumsum(initial), rng.random())
    times, states = [start], [state]
    t = start
    while totals[state] > 0:
        t += rng.exponential(1.0 / totals[state])
        if t >= horizon:
            break
        state = _draw(cdfs[state], rng.random())
        times.append(t)
        states.append(state)
    return CTMCPath(
        jump_times=np.asarray(times, dtype=np.float64),
        states=np.asarray(states, dtype=np.intp),
        horizon=horizon,
    )


def sim_ou_path(
    p: OUParams,
    s0: float,
    horizon: float,
    step: float,
    method: OUMethod = OUMethod.EXACT,
    seed: Seed = None,
) -> tuple[FloatArray, FloatArray]:
    """
    Simulates an Ornstein-Uhlenbeck path on an equidistant time grid.

    Args:
        p (OUParams):
            The OU parameters.
        s0 (float):
            The initial value.
        horizon (float):
            The end time.
        step (float):
            The step length.
        method (OUMethod):
            Euler-Maruyama or exact Gaussian transitions.
        seed (Seed):
            The random seed or generator.

    Returns:
        tuple[FloatArray, FloatArray]:
            The times and the path values.

    """
    if not step > 0 or not horizon > 0:
        msg = "The step and the horizon must be positive."
        raise InvalidArgumentError(msg)
    rng = _rng(seed)
    n = int(round(horizon / step))
    z = rng.standard_normal(n)
    if OUMethod(method) == OUMethod.EXACT:
        decay = np.exp(-p.theta * step)
        noise = p.sigma * np.sqrt(-np.expm1(-2.0 * p.theta * step) / (2.0 * p.theta))
    else:
        decay = 1.0 - p.theta * step
        noise = p.sigma * np.sqrt(step)
    values = np.empty(n + 1)
    values[0] = s0
    for k in range(n):
        values[k + 1] = p.mu + decay * (values[k] - p.mu) + noise * z[k]
    return np.arange(n + 1) * step, values


def sim_ou_at_times(
    p: OUParams, times: ArrayLike, s0: float | None = None, seed: Seed = None
) -> FloatArray:
    """
    Draws an OU process exactly at arbitrary nondecreasing times.

    ``s0`` is the value at the first time; by default it is drawn from the
    stationary distribution.
    """
    t = np.asarray(times, dtype=np.float64)
    gaps = np.diff(t)
    if np.any(gaps < 0):
        msg = "Observation times must be nondecreasing."
        raise InvalidArgumentError(msg)
    rng = _rng(seed)
    values = np.empty(t.shape[0])
    if t.shape[0] == 0:
        return values
    values[0] = rng.normal(p.mu, p.stationary_sd) if s0 is None else s0
    z = rng.standard_normal(gaps.shape[0])
    decay = np.exp(-p.theta * gaps)
    noise = p.sigma * np.sqrt(-np.expm1(-2.0 * p.theta * gaps) / (2.0 * p.theta))
    for k in range(gaps.shape[0]):
        values[k + 1] = p.mu + decay[k] * (values[k] - p.mu) + noise[k] * z[k]
    return values


@dataclass(frozen=True)
class SimulatedSequence:
    """
    One simulated sequence with its latent truth.

    Attributes:
        key (str):
            The sequence identifier.
        times (FloatArray):
            The observation or event times.
        columns (dict[str, FloatArray]):
            Observation and covariate columns.
        states (NDArray[np.intp] | None):
            The 0-based latent states (grid cells for the Cox model).
        state_values (FloatArray | None):
            The latent continuous values.

    """

    key: str
    times: FloatArray
    columns: dict[str, FloatArray] = field(default_factory=dict)
    states: NDArray[np.intp] | None = None
    state_values: FloatArray | None = None

    def __len__(self) -> int:
        return int(self.times.shape[0])

    def to_observations(self) -> ObservationSequence:
        return ObservationSequence(
            key=self.key, times=self.times, columns=dict(self.columns)
        )


def _emissions(
    family: EmissionFamily | None,
    rng: np.random.Generator,
    states: NDArray[np.intp] | None = None,
    state_values: FloatArray | None = None,
    covariates: Mapping[str, FloatArray] | None = None,
) -> dict[str, FloatArray]:
    if family is None:
        return {}
    return sample_emissions(family, rng, states, state_values, covariates)


def sim_hmm(
    spec: ModelSpec,
    params: Mapping[str, ArrayLike],
    n_obs: int,
    seed: Seed = None,
    times: ArrayLike | None = None,
    covariates: Mapping[str, ArrayLike] | None = None,
) -> SimulatedSequence:
    """
    Simulates a discrete-time HMM: a Markov chain, then one emission per
    state.

    Args:
        spec (ModelSpec):
            An ``hmm`` model description.
        params (Mapping[str, ArrayLike]):
            The true natural parameters.
        n_obs (int):
            The number of observations.
        seed (Seed):
            The random seed or generator.
        times (ArrayLike | None):
            Observation times for time-of-day predictors; ``0..T-1`` by default.
        covariates (Mapping[str, ArrayLike] | None):
            Covariate columns for t.p.m. predictors and linear means.

    Returns:
        SimulatedSequence:
            The observations and the latent states.

    """
    rng = _rng(seed)
    model, natural = build_model(spec, params)
    assert isinstance(model, HMMModel)
    if times is None:
        t = np.arange(n_obs, dtype=np.float64)
    else:
        t = np.asarray(times, dtype=np.float64)
    columns = {
        k: np.asarray(v, dtype=np.float64) for k, v in (covariates or {}).items()
    }
    if model.has_predictors:
        gamma = model.tpm_stack(natural, t, columns)
        first = gamma[0]
    else:
        gamma = np.asarray(natural["tpm"], dtype=np.float64)
        first = gamma
    delta = model.initial_distribution(natural, first)
    states = sim_markov_chain(gamma, delta, n_obs, rng)
    columns.update(_emissions(model.emission(natural), rng, states, covariates=columns))
    return SimulatedSequence(key="1", times=t, columns=columns, states=states)


def sim_ssm_ar1(
    spec: ModelSpec,
    params: Mapping[str, ArrayLike],
    n_obs: int,
    seed: Seed = None,
) -> SimulatedSequence:
    """
    Simulates a state-space model with a stationary Gaussian AR(1) state,
    without discretization.
    """
    rng = _rng(seed)
    model, natural = build_model(spec, params)
    assert isinstance(model, SSMModel)
    p = model.state_params(natural)
    z = rng.standard_normal(n_obs)
    values = np.empty(n_obs)
    if n_obs > 0:
        values[0] = p.mu + p.stationary_sd * z[0]
    for t in range(1, n_obs):
        values[t] = p.mu + p.phi * (values[t - 1] - p.mu) + p.sigma * z[t]
    columns = _emissions(model.emission(natural), rng, state_values=values)
    return SimulatedSequence(
        key="1",
        times=np.arange(n_obs, dtype=np.float64),
        columns=columns,
        state_values=values,
    )


def sim_cthmm(
    spec: ModelSpec,
    params: Mapping[str, ArrayLike],
    times: ArrayLike,
    seed: Seed = None,
) -> SimulatedSequence:
    """Simulates a continuous-time HMM observed at the given times."""
    rng = _rng(seed)
    model, natural = build_model(spec, params)
    assert isinstance(model, CTHMMModel)
    t = np.asarray(times, dtype=np.float64)
    if t.shape[0] == 0:
        return SimulatedSequence(key="1", times=t, states=np.zeros(0, dtype=np.intp))
    delta = model.initial_distribution(natural)
    path = sim_ctmc(natural["generator"], delta, t[-1], rng, start=t[0])
    states = path.state_at(t)
    columns = _emissions(model.emission(natural), rng, states)
    return SimulatedSequence(key="1", times=t, columns=columns, states=states)


def sim_ctssm_ou(
    spec: ModelSpec,
    params: Mapping[str, ArrayLike],
    times: ArrayLike,
    seed: Seed = None,
) -> SimulatedSequence:
    """Simulates a continuous-time state-space model at irregular times."""
    rng = _rng(seed)
    model, natural = build_model(spec, params)
    assert isinstance(model, CTSSMModel)
    t = np.asarray(times, dtype=np.float64)
    values = sim_ou_at_times(model.state_params(natural), t, seed=rng)
    columns = _emissions(model.emission(natural), rng, state_values=values)
    return SimulatedSequence(key="1", times=t, columns=columns, state_values=values)


def sim_mmpp(
    q: ArrayLike,
    rates: ArrayLike,
    horizon: float,
    seed: Seed = None,
    marks: EmissionFamily | None = None,
    delta: ArrayLike | None = None,
) -> SimulatedSequence:
    """
    Simulates an (optionally marked) MMPP on ``[0, horizon]``.

    The chain is simulated first; events are then thinned from a Poisson
    process with the largest rate, keeping a candidate in state ``j`` with
    probability ``lambda_j / lambda_max``. Marks are drawn from the emission
    family of the state at each event.

    Args:
        q (ArrayLike):
            The generator matrix.
        rates (ArrayLike):
            The event rates.
        horizon (float):
            The end of the observation window.
        seed (Seed):
            The random seed or generator.
        marks (EmissionFamily | None):
            The mark distribution.
        delta (ArrayLike | None):
            The initial distribution; stationary by default.

    Returns:
        SimulatedSequence:
            The event times, marks and states at the events.

    """
    rng = _rng(seed)
    lam = np.asarray(rates, dtype=np.float64)
    if np.any(lam < 0) or not np.all(np.isfinite(lam)):
        msg = "Event rates must be finite and nonnegative."
        raise InvalidArgumentError(msg)
    initial = stationary_continuous(q) if delta is None else np.asarray(delta, float)
    path = sim_ctmc(q, initial, horizon, rng)
    lam_max = float(lam.max())
    n_candidates = int(rng.poisson(lam_max * horizon)) if lam_max > 0 else 0
    candidates = np.sort(rng.uniform(0.0, horizon, size=n_candidates))
    candidate_states = path.state_at(candidates)
    keep = rng.random(n_candidates) * lam_max < lam[candidate_states]
    times, states = candidates[keep], candidate_states[keep]
    columns = _emissions(marks, rng, states)
    return SimulatedSequence(key="1", times=times, columns=columns, states=states)


@dataclass
class SimulationConfiguration:
    """Configuration of a simulated dataset."""

    n_sequences: int = 1
    # observations per sequence (expected events for point processes)
    length: int = 1000
    # window of point processes; derived from the mean event rate if unset
    horizon: float | None = None
    # mean exponential gap of irregular observation times
    mean_gap: float = 1.0
    step: float = 1.0
    covariate_probabilities: dict[str, float] = field(default_factory=dict)


class Simulator:
    """
    Simulates datasets for any model class.

    Attributes:
        seed (int | None):
            The root seed; every sequence gets its own spawned stream.

    """

    def __init__(self, seed: int | None = None, threads: int = 1):
        self.seed = seed
        self.threads = threads

    def simulate(
        self,
        spec: ModelSpec,
        params: Mapping[str, ArrayLike],
        configuration: SimulationConfiguration,
        grid: Grid | None = None,
    ) -> list[SimulatedSequence]:
        """
        Simulates ``configuration.n_sequences`` independent sequences.

        Args:
            spec (ModelSpec):
                The model description.
            params (Mapping[str, ArrayLike]):
                The true natural parameters.
            configuration (SimulationConfiguration):
                The dataset shape.
            grid (Grid | None):
                The grid of a Cox model; resolved from the spec otherwise.

        Returns:
            list[SimulatedSequence]:
                The sequences, keyed ``1..n_sequences``.

        """
        if configuration.n_sequences < 1 or configuration.length < 1:
            msg = "Simulate at least one sequence with at least one observation."
            raise InvalidArgumentError(msg)
        streams = np.random.SeedSequence(self.seed).spawn(configuration.n_sequences)

        def one(index: int) -> SimulatedSequence:
            rng = np.random.Generator(np.random.PCG64(streams[index]))
            sequence = self._simulate_one(spec, params, configuration, grid, rng)
            return SimulatedSequence(
                key=str(index + 1),
                times=sequence.times,
                columns=sequence.columns,
                states=sequence.states,
                state_values=sequence.state_values,
            )

        indices = range(configuration.n_sequences)
        if self.threads > 1:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                sequences = list(pool.map(one, indices))
        else:
            sequences = [one(i) for i in indices]
        logger.info(
            "Simulated %d %s sequence(s) with %d observations in total.",
            len(sequences),
            spec.model_class.value,
            sum(len(s) for s in sequences),
        )
        return sequences

    def _simulate_one(
        self,
        spec: ModelSpec,
        params: Mapping[str, ArrayLike],
        configuration: SimulationConfiguration,
        grid: Grid | None,
        rng: np.random.Generator,
    ) -> SimulatedSequence:
        cls_ = spec.model_class
        n = configuration.length
        if cls_ == ModelClass.HMM:
            times = np.arange(n) * configuration.step
            covariates = {
                name: (rng.random(n) < prob).astype(np.float64)
                for name, prob in configuration.covariate_probabilities.items()
            }
            return sim_hmm(spec, params, n, rng, times, covariates)
        if cls_ == ModelClass.SSM_AR1:
            return sim_ssm_ar1(spec, params, n, rng)
        if cls_ in {ModelClass.CTHMM, ModelClass.CTSSM_OU}:
            gaps = rng.exponential(configuration.mean_gap, size=n - 1)
            times = np.concatenate([[0.0], np.cumsum(gaps)])
            if cls_ == ModelClass.CTHMM:
                return sim_cthmm(spec, params, times, rng)
            return sim_ctssm_ou(spec, params, times, rng)

        model, natural = build_model(spec, params, grid=grid)
        horizon = configuration.horizon
        if horizon is None:
            horizon = n / model.derived(natural)["mean_rate"][0]
        if isinstance(model, CoxOUMMPPModel):
            q, rates = model.generator(natural), model.rates(natural)
            sequence = sim_mmpp(q, rates, horizon, rng)
            assert sequence.states is not None
            values = model.require_grid().midpoints[sequence.states]
            return SimulatedSequence(
                key="1",
                times=sequence.times,
                states=sequence.states,
                state_values=values,
            )
        assert isinstance(model, MMPPModel)
        emission = model.emission(natural)
        return sim_mmpp(
            natural["generator"], natural["rates"], horizon, rng, emission
        )
