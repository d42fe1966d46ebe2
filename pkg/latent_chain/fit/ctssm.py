from collections.abc import Mapping

import numpy as np
from typing_extensions import override

from latent_chain.core.base import FloatArray, ObservationSequence, OUParams
from latent_chain.core.forward import LikelihoodInputs
from latent_chain.core.grid import (
    ou_autocorrelation,
    ou_initial,
    ou_tpm,
    warn_truncation,
)
from latent_chain.core.kernels import ou_tpm_sequence
from latent_chain.fit import _emission_blocks
from latent_chain.fit.base_model import GridLatentModel, Params, _scalar
from latent_chain.fit.params import Constraint, ParamBlock


class CTSSMModel(GridLatentModel):
    """
    Continuous-time state-space model with an Ornstein-Uhlenbeck state
    process observed at irregular times.

    Each interval gets the exact OU transition density discretized on the
    grid; intervals of equal length share one kernel.
    """

    @property
    @override
    def param_blocks(self) -> list[ParamBlock]:
        assert self.spec.emission is not None
        return [
            ParamBlock("state.theta", (1,), Constraint.POSITIVE),
            ParamBlock("state.mu", (1,), Constraint.REAL),
            ParamBlock("state.sigma", (1,), Constraint.POSITIVE),
            *_emission_blocks(self.spec.emission),
        ]

    @override
    def _default_parameters(self) -> dict[str, FloatArray]:
        return {
            "state.theta": np.array([1.0]),
            "state.mu": np.array([0.0]),
            "state.sigma": np.array([1.0]),
        }

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

    @override
    def likelihood_inputs(
        self, params: Params, sequence: ObservationSequence
    ) -> LikelihoodInputs:
        grid = self.require_grid()
        p = self.state_params(params)
        kernels = ou_tpm_sequence(grid, p, sequence.gaps, self.spec.renormalize)
        pdiags = self.emission_diagonals(params, sequence)
        return LikelihoodInputs(ou_initial(grid, p), kernels, pdiags)

    @override
    def next_omega(
        self,
        params: Params,
        sequence: ObservationSequence,
        dt: float,
        covariates: Mapping[str, float] | None = None,
    ) -> FloatArray:
        p = self.state_params(params)
        return ou_tpm(self.require_grid(), p, dt, self.spec.renormalize)

    @override
    def check_estimates(self, params: Params) -> None:
        kernel = ou_tpm(self.require_grid(), self.state_params(params), 1.0)
        warn_truncation(kernel, "OU state kernel at unit lag")

    @override
    def derived(self, params: Params) -> dict[str, list[float]]:
        p = self.state_params(params)
        return {
            "stationary_sd": [p.stationary_sd],
            "autocorrelation": [ou_autocorrelation(p.theta, 1.0)],
        }
