from collections.abc import Mapping

import numpy as np
from typing_extensions import override

from latent_chain.core.base import AR1Params, FloatArray, ObservationSequence
from latent_chain.core.forward import LikelihoodInputs
from latent_chain.core.grid import ar1_initial, ar1_tpm, warn_truncation
from latent_chain.fit import _emission_blocks
from latent_chain.fit.base_model import GridLatentModel, Params, _scalar
from latent_chain.fit.params import Constraint, ParamBlock


class SSMModel(GridLatentModel):
    """
    State-space model with a Gaussian AR(1) state process, approximated by an
    m-state HMM on the grid midpoints.
    """

    @property
    @override
    def param_blocks(self) -> list[ParamBlock]:
        assert self.spec.emission is not None
        return [
            ParamBlock("state.phi", (1,), Constraint.SIGNED_UNIT),
            ParamBlock("state.mu", (1,), Constraint.REAL),
            ParamBlock("state.sigma", (1,), Constraint.POSITIVE),
            *_emission_blocks(self.spec.emission),
        ]

    @override
    def _default_parameters(self) -> dict[str, FloatArray]:
        return {
            "state.phi": np.array([0.9]),
            "state.mu": np.array([0.0]),
            "state.sigma": np.array([0.5]),
        }

    def state_params(self, params: Params) -> AR1Params:
        return AR1Params(
            phi=_scalar(params, "state.phi"),
            mu=_scalar(params, "state.mu"),
            sigma=_scalar(params, "state.sigma"),
        )

    @override
    def stationary_moments(self, params: Params) -> tuple[float, float]:
        p = self.state_params(params)
        return p.mu, p.stationary_sd

    def tpm(self, params: Params) -> FloatArray:
        """The discretized AR(1) transition probability matrix."""
        p = self.state_params(params)
        return ar1_tpm(self.require_grid(), p, self.spec.renormalize)

    @override
    def likelihood_inputs(
        self, params: Params, sequence: ObservationSequence
    ) -> LikelihoodInputs:
        delta = ar1_initial(self.require_grid(), self.state_params(params))
        pdiags = self.emission_diagonals(params, sequence)
        return LikelihoodInputs.homogeneous(delta, self.tpm(params), pdiags)

    @override
    def next_omega(
        self,
        params: Params,
        sequence: ObservationSequence,
        dt: float,
        covariates: Mapping[str, float] | None = None,
    ) -> FloatArray:
        return self.tpm(params)

    @override
    def check_estimates(self, params: Params) -> None:
        warn_truncation(self.tpm(params), "AR(1) state kernel")

    @override
    def derived(self, params: Params) -> dict[str, list[float]]:
        return {"stationary_sd": [self.state_params(params).stationary_sd]}
