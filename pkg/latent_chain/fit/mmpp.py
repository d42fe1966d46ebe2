"""
Markov-modulated Poisson processes.

Event times are the observations: the first event is the time origin and
every later event contributes the density of its waiting time, so the
likelihood is ``delta Omega(y_2) ... Omega(y_T) 1'`` with
``Omega(y) = exp((Q - Lambda) y) Lambda``, marks entering through the usual
emission diagonals.
"""

from collections.abc import Iterable, Mapping

import numpy as np
from numpy.typing import ArrayLike, NDArray
from typing_extensions import override

from latent_chain.core.base import FloatArray, ObservationSequence, OUParams
from latent_chain.core.errors import InvalidArgumentError, NonUniqueStationaryError
from latent_chain.core.forward import LikelihoodInputs
from latent_chain.core.grid import ou_autocorrelation, ou_tpm, warn_truncation
from latent_chain.core.kernels import cox_generator, cox_rates, omega_mmpp_sequence
from latent_chain.core.linalg import mean_sojourn_times, stationary_continuous
from latent_chain.fit import (
    _default_generator,
    _emission_blocks,
    _generator_support,
)
from latent_chain.fit.base_model import (
    BaseLatentModel,
    GridLatentModel,
    Params,
    _scalar,
)
from latent_chain.fit.params import Constraint, ParamBlock, ParamVector, transform

DEFAULT_SWITCH_RATE = 0.5


def _waiting_times(sequence: ObservationSequence) -> FloatArray:
    waits = sequence.gaps
    if np.any(waits <= 0):
        msg = f"Event times of sequence {sequence.key} must be strictly increasing."
        raise InvalidArgumentError(msg)
    return waits


class MMPPModel(BaseLatentModel):
    """
    Markov-modulated Poisson process, optionally with marks (MMMPP).

    States listed in ``zero_rates`` never produce events; their rate is held
    at zero.
    """

    @property
    def rate_support(self) -> NDArray[np.bool_]:
        """The states with a free (nonzero) event rate."""
        support = np.ones(self.n_states, dtype=bool)
        support[[s - 1 for s in self.spec.zero_rates]] = False
        return support

    @property
    @override
    def param_blocks(self) -> list[ParamBlock]:
        n = self.n_states
        support = _generator_support(self.spec)
        blocks = [
            ParamBlock("generator", (n, n), Constraint.GENERATOR, support),
            ParamBlock("rates", (n,), Constraint.RATES, self.rate_support),
        ]
        if self.spec.emission is not None:
            blocks += _emission_blocks(self.spec.emission)
        return blocks

    @override
    def _default_parameters(self) -> dict[str, FloatArray]:
        support = _generator_support(self.spec)
        generator = _default_generator(support, DEFAULT_SWITCH_RATE)
        rates = 0.5 * 2.0 ** np.arange(self.n_states, dtype=np.float64)
        rates = np.where(self.rate_support, rates, 0.0)
        return {"generator": generator, "rates": rates}

    @override
    def likelihood_inputs(
        self, params: Params, sequence: ObservationSequence
    ) -> LikelihoodInputs:
        q = np.asarray(params["generator"], dtype=np.float64)
        rates = np.asarray(params["rates"], dtype=np.float64)
        kernels = omega_mmpp_sequence(q, rates, _waiting_times(sequence))
        pdiags = self.emission_diagonals(params, sequence)
        return LikelihoodInputs(stationary_continuous(q), kernels, pdiags)

    @override
    def derived(self, params: Params) -> dict[str, list[float]]:
        q = np.asarray(params["generator"], dtype=np.float64)
        derived = {"mean_sojourn": mean_sojourn_times(q).tolist()}
        try:
            delta = stationary_continuous(q)
        except NonUniqueStationaryError:
            return derived
        derived["stationary"] = delta.tolist()
        derived["mean_rate"] = [float(delta @ np.asarray(params["rates"]))]
        return derived


class CoxOUMMPPModel(GridLatentModel):
    """
    Cox process whose log intensity is an Ornstein-Uhlenbeck process,
    approximated by an MMPP on the grid midpoints.

    The intensity in cell ``i`` is ``exp(beta0 + b_i*)``; the state mean is
    not identifiable next to ``beta0`` and is always held at its initial
    value.
    """

    @property
    @override
    def param_blocks(self) -> list[ParamBlock]:
        return [
            ParamBlock("state.theta", (1,), Constraint.POSITIVE),
            ParamBlock("state.mu", (1,), Constraint.REAL),
            ParamBlock("state.sigma", (1,), Constraint.POSITIVE),
            ParamBlock("intensity.beta0", (1,), Constraint.REAL),
        ]

    @override
    def _default_parameters(self) -> dict[str, FloatArray]:
        return {
            "state.theta": np.array([1.0]),
            "state.mu": np.array([0.0]),
            "state.sigma": np.array([1.0]),
            "intensity.beta0": np.array([0.0]),
        }

    @override
    def transform(self, natural: Mapping[str, ArrayLike]) -> ParamVector:
        fixed: Iterable[str] = {*self.spec.fixed, "state.mu"}
        return transform(self.param_blocks, natural, fixed)

    def state_params(self, params: Params) -> OUParams:
        return OUParams(
            theta=_scalar(params, "state.theta"),
            mu=_scalar(params, "state.mu"),
            sigma=_scalar(params, "state.sigma"),
        )

    @override
    def stationary_moments(self, params: Params) -> tuple[float, float]:
        p = self.state_params(params)
        return p.mu, p.stationary_sd

    def generator(self, params: Params) -> FloatArray:
        """The approximate generator of the discretized intensity process."""
        return cox_generator(
            self.require_grid(),
            self.state_params(params),
            self.spec.cox_dt_star,
            self.spec.renormalize,
        )

    def rates(self, params: Params) -> FloatArray:
        """The event rate of every grid cell."""
        return cox_rates(self.require_grid(), _scalar(params, "intensity.beta0"))

    @override
    def likelihood_inputs(
        self, params: Params, sequence: ObservationSequence
    ) -> LikelihoodInputs:
        q = self.generator(params)
        kernels = omega_mmpp_sequence(q, self.rates(params), _waiting_times(sequence))
        pdiags = self.emission_diagonals(params, sequence)
        return LikelihoodInputs(stationary_continuous(q), kernels, pdiags)

    @override
    def check_estimates(self, params: Params) -> None:
        p = self.state_params(params)
        kernel = ou_tpm(self.require_grid(), p, self.spec.cox_dt_star)
        warn_truncation(kernel, "OU intensity kernel")

    @override
    def derived(self, params: Params) -> dict[str, list[float]]:
        p = self.state_params(params)
        beta0 = _scalar(params, "intensity.beta0")
        return {
            "stationary_sd": [p.stationary_sd],
            "autocorrelation": [ou_autocorrelation(p.theta, 1.0)],
            "mean_rate": [float(np.exp(beta0 + p.mu + 0.5 * p.stationary_sd**2))],
        }
