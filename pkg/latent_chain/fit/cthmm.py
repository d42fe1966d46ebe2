from collections.abc import Mapping

import numpy as np
from typing_extensions import override

from latent_chain.core.base import FloatArray, InitialMode, ObservationSequence
from latent_chain.core.errors import NonUniqueStationaryError
from latent_chain.core.forward import LikelihoodInputs
from latent_chain.core.kernels import omega_cthmm, omega_cthmm_sequence
from latent_chain.core.linalg import mean_sojourn_times, stationary_continuous
from latent_chain.fit import (
    _default_generator,
    _emission_blocks,
    _generator_support,
)
from latent_chain.fit.base_model import BaseLatentModel, Params
from latent_chain.fit.params import Constraint, ParamBlock

DEFAULT_SWITCH_RATE = 0.5


class CTHMMModel(BaseLatentModel):
    """
    Continuous-time hidden Markov model observed at arbitrary times.

    The transition probabilities over an interval of length ``dt`` are
    ``exp(Q dt)``; structural zeros of the generator (e.g. no recovery from
    an absorbing state) stay zero during fitting.
    """

    @property
    @override
    def param_blocks(self) -> list[ParamBlock]:
        n = self.n_states
        support = _generator_support(self.spec)
        blocks = [ParamBlock("generator", (n, n), Constraint.GENERATOR, support)]
        if self.spec.initial == InitialMode.ESTIMATED:
            blocks.append(ParamBlock("delta", (n,), Constraint.SIMPLEX))
        assert self.spec.emission is not None
        return blocks + _emission_blocks(self.spec.emission)

    @override
    def _default_parameters(self) -> dict[str, FloatArray]:
        n = self.n_states
        support = _generator_support(self.spec)
        return {
            "generator": _default_generator(support, DEFAULT_SWITCH_RATE),
            "delta": np.full(n, 1.0 / n),
        }

    def initial_distribution(self, params: Params) -> FloatArray:
        if self.spec.initial == InitialMode.ESTIMATED:
            return np.asarray(params["delta"], dtype=np.float64)
        return stationary_continuous(params["generator"])

    @override
    def likelihood_inputs(
        self, params: Params, sequence: ObservationSequence
    ) -> LikelihoodInputs:
        q = np.asarray(params["generator"], dtype=np.float64)
        kernels = omega_cthmm_sequence(q, sequence.gaps)
        pdiags = self.emission_diagonals(params, sequence)
        return LikelihoodInputs(self.initial_distribution(params), kernels, pdiags)

    @override
    def next_omega(
        self,
        params: Params,
        sequence: ObservationSequence,
        dt: float,
        covariates: Mapping[str, float] | None = None,
    ) -> FloatArray:
        return omega_cthmm(params["generator"], dt)

    @override
    def derived(self, params: Params) -> dict[str, list[float]]:
        q = np.asarray(params["generator"], dtype=np.float64)
        derived = {"mean_sojourn": mean_sojourn_times(q).tolist()}
        try:
            derived["stationary"] = stationary_continuous(q).tolist()
        except NonUniqueStationaryError:
            pass
        return derived
