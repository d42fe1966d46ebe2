from collections.abc import Mapping

import numpy as np
from typing_extensions import override

from latent_chain.core.base import (
    FloatArray,
    Grid,
    InitialMode,
    ModelSpec,
    ObservationSequence,
)
from latent_chain.core.errors import InvalidArgumentError, NonUniqueStationaryError
from latent_chain.core.forward import LikelihoodInputs
from latent_chain.core.kernels import hmm_tpm_sequence, trig_design
from latent_chain.core.linalg import stationary_discrete
from latent_chain.fit import _default_tpm, _emission_blocks
from latent_chain.fit.base_model import BaseLatentModel, Params
from latent_chain.fit.params import Constraint, ParamBlock


class HMMModel(BaseLatentModel):
    """
    Discrete-time hidden Markov model with N states.

    The transition probability matrix is either a free ``tpm`` block or, when
    covariates or a time-of-day period are configured, the multinomial logit
    of linear predictors with coefficients ``tpm_beta``. The initial
    distribution is the stationary distribution of the (first) t.p.m. or a
    free ``delta`` block.
    """

    def __init__(
        self, spec: ModelSpec, grid: Grid | None = None, threads: int | None = None
    ) -> None:
        super().__init__(spec, grid, threads)
        if self.has_predictors and self.n_states < 2:
            msg = "T.p.m. covariates need at least two states."
            raise InvalidArgumentError(msg)

    @property
    def has_predictors(self) -> bool:
        return bool(self.spec.tpm_covariates) or self.spec.tod_period is not None

    @property
    def n_predictors(self) -> int:
        """The number of design columns, intercept included."""
        trig = 2 if self.spec.tod_period is not None else 0
        return 1 + trig + len(self.spec.tpm_covariates)

    @property
    @override
    def param_blocks(self) -> list[ParamBlock]:
        n = self.n_states
        if self.has_predictors:
            shape = (n * (n - 1), self.n_predictors)
            blocks = [ParamBlock("tpm_beta", shape, Constraint.REAL)]
        else:
            blocks = [ParamBlock("tpm", (n, n), Constraint.TPM)]
        if self.spec.initial == InitialMode.ESTIMATED:
            blocks.append(ParamBlock("delta", (n,), Constraint.SIMPLEX))
        assert self.spec.emission is not None
        return blocks + _emission_blocks(self.spec.emission)

    @override
    def _default_parameters(self) -> dict[str, FloatArray]:
        n = self.n_states
        gamma = _default_tpm(n)
        beta = np.zeros((n * (n - 1), self.n_predictors))
        if n > 1:
            beta[:, 0] = np.log(gamma[0, 1] / gamma[0, 0])
        return {"tpm": gamma, "tpm_beta": beta, "delta": np.full(n, 1.0 / n)}

    def tpm_stack(
        self, params: Params, times: FloatArray, covariates: Mapping[str, FloatArray]
    ) -> FloatArray:
        """
        The transition probability matrices at the given times.

        Args:
            params (Params):
                Natural parameters keyed by block name.
            times (FloatArray):
                The observation times.
            covariates (Mapping[str, FloatArray]):
                The covariate columns, one value per time.

        Returns:
            FloatArray:
                The ``(T, N, N)`` stack; entry ``t`` governs the transition
                into observation ``t``.

        """
        missing = [c for c in self.spec.tpm_covariates if c not in covariates]
        if missing:
            msg = f"Missing t.p.m. covariate columns {missing}."
            raise InvalidArgumentError(msg)
        design, _ = trig_design(
            times,
            self.spec.tod_period,
            {c: covariates[c] for c in self.spec.tpm_covariates},
        )
        return hmm_tpm_sequence(params["tpm_beta"], design)

    def initial_distribution(self, params: Params, gamma: FloatArray) -> FloatArray:
        """The initial distribution given the t.p.m. into the second observation."""
        if self.spec.initial == InitialMode.ESTIMATED:
            return np.asarray(params["delta"], dtype=np.float64)
        return stationary_discrete(gamma)

    @override
    def likelihood_inputs(
        self, params: Params, sequence: ObservationSequence
    ) -> LikelihoodInputs:
        pdiags = self.emission_diagonals(params, sequence)
        if not self.has_predictors:
            gamma = np.asarray(params["tpm"], dtype=np.float64)
            delta = self.initial_distribution(params, gamma)
            return LikelihoodInputs.homogeneous(delta, gamma, pdiags)
        gammas = self.tpm_stack(params, sequence.times, sequence.columns)
        delta = self.initial_distribution(params, gammas[0])
        return LikelihoodInputs(delta, gammas[1:], pdiags)

    @override
    def next_omega(
        self,
        params: Params,
        sequence: ObservationSequence,
        dt: float,
        covariates: Mapping[str, float] | None = None,
    ) -> FloatArray:
        if not self.has_predictors:
            return np.asarray(params["tpm"], dtype=np.float64)
        values = {name: np.array([value]) for name, value in (covariates or {}).items()}
        time = np.array([sequence.times[-1] + dt])
        return self.tpm_stack(params, time, values)[0]

    @override
    def derived(self, params: Params) -> dict[str, list[float]]:
        if self.has_predictors:
            return {}
        gamma = np.asarray(params["tpm"], dtype=np.float64)
        stay = np.diag(gamma)
        with np.errstate(divide="ignore"):
            sojourn = np.where(stay < 1.0, 1.0 / (1.0 - stay), np.inf)
        derived = {"mean_sojourn": sojourn.tolist()}
        try:
            derived["stationary"] = stationary_discrete(gamma).tolist()
        except NonUniqueStationaryError:
            pass
        return derived
