from collections.abc import Mapping

from numpy.typing import ArrayLike

from latent_chain.core.base import FloatArray, Grid, ModelClass, ModelSpec
from latent_chain.fit.base_model import BaseLatentModel
from latent_chain.fit.cthmm import CTHMMModel
from latent_chain.fit.ctssm import CTSSMModel
from latent_chain.fit.hmm import HMMModel
from latent_chain.fit.mmpp import CoxOUMMPPModel, MMPPModel
from latent_chain.fit.ssm import SSMModel

MODEL_TYPES: dict[ModelClass, type[BaseLatentModel]] = {
    ModelClass.HMM: HMMModel,
    ModelClass.SSM_AR1: SSMModel,
    ModelClass.CTHMM: CTHMMModel,
    ModelClass.CTSSM_OU: CTSSMModel,
    ModelClass.MMPP: MMPPModel,
    ModelClass.MMMPP: MMPPModel,
    ModelClass.COX_OU_MMPP: CoxOUMMPPModel,
}


def build_model(
    spec: ModelSpec,
    init: Mapping[str, ArrayLike] | None = None,
    threads: int | None = None,
    grid: Grid | None = None,
) -> tuple[BaseLatentModel, dict[str, FloatArray]]:
    """
    Builds the model of a spec together with its initial parameters.

    The grid of a grid-based model is resolved here, from the spec's bounds
    or from the stationary distribution at the initial parameters, unless
    ``grid`` is given.

    Args:
        spec (ModelSpec):
            The model description.
        init (Mapping[str, ArrayLike] | None):
            Initial natural values overriding the defaults.
        threads (int | None):
            The number of workers for independent sequences.
        grid (Grid | None):
            A grid to use instead of resolving one.

    Returns:
        tuple[BaseLatentModel, dict[str, FloatArray]]:
            The model and the initial natural parameters.

    Raises:
        InvalidArgumentError:
            If ``init`` names unknown blocks or yields an invalid grid.

    """
    model = MODEL_TYPES[spec.model_class](spec, grid, threads)
    params = model.initial_parameters(init)
    model.prepare(params)
    return model, params
