import os
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from typing import TypeVar

import numpy as np
from numpy.typing import NDArray

from latent_chain.core.base import (
    EMISSION_PARAMETERS,
    NONNEGATIVE_PARAMETERS,
    POSITIVE_PARAMETERS,
    UNIT_PARAMETERS,
    EmissionFamily,
    EmissionKind,
    FloatArray,
    GeneratorMask,
    ModelSpec,
    ObservationSequence,
)
from latent_chain.fit.params import Constraint, ParamBlock

THREADS_ENV = "LATENT_CHAIN_THREADS"

T = TypeVar("T")


def _default_threads() -> int:
    """Reads the default worker count from the environment."""
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _map_sequences(
    fn: Callable[[ObservationSequence], T],
    sequences: Sequence[ObservationSequence],
    threads: int = 1,
) -> list[T]:
    """
    Applies ``fn`` to every sequence, on a thread pool when ``threads > 1``.

    Results keep the order of ``sequences``.
    """
    if threads <= 1 or len(sequences) <= 1:
        return [fn(seq) for seq in sequences]
    with ThreadPoolExecutor(max_workers=min(threads, len(sequences))) as pool:
        return list(pool.map(fn, sequences))


def _emission_constraint(kind: EmissionKind, name: str) -> Constraint:
    if name in POSITIVE_PARAMETERS or name in NONNEGATIVE_PARAMETERS:
        return Constraint.POSITIVE
    if name in UNIT_PARAMETERS:
        return Constraint.UNIT
    if kind == EmissionKind.VON_MISES and name == "mu":
        return Constraint.ANGLE
    return Constraint.REAL


def _emission_blocks(
    family: EmissionFamily, prefix: str = "emission"
) -> list[ParamBlock]:
    """
    Lists the parameter blocks of an emission family.

    Args:
        family (EmissionFamily):
            The emission family.
        prefix (str):
            The block name prefix.

    Returns:
        list[ParamBlock]:
            One block per natural parameter, in the order of
            ``EmissionFamily.parameter_blocks``.

    """
    if family.kind == EmissionKind.PRODUCT:
        return [
            block
            for k, comp in enumerate(family.components)
            for block in _emission_blocks(comp, f"{prefix}.{k}")
        ]
    blocks = []
    for name in EMISSION_PARAMETERS[family.kind]:
        size = len(family.params[name])
        constraint = _emission_constraint(family.kind, name)
        blocks.append(ParamBlock(f"{prefix}.{name}", (size,), constraint))
    for cov, coefs in family.mean_covariates.items():
        name = f"{prefix}.mean_{cov}"
        blocks.append(ParamBlock(name, (len(coefs),), Constraint.REAL))
    return blocks


def _default_tpm(n: int, stay: float = 0.9) -> FloatArray:
    """A persistent transition matrix with ``stay`` on the diagonal."""
    if n == 1:
        return np.ones((1, 1))
    gamma = np.full((n, n), (1.0 - stay) / (n - 1))
    np.fill_diagonal(gamma, stay)
    return gamma


def _default_generator(free: np.ndarray, rate: float = 1.0) -> FloatArray:
    """A generator with every free off-diagonal rate set to ``rate``."""
    q = np.where(free, rate, 0.0)
    np.fill_diagonal(q, -q.sum(axis=1))
    return q


def _n_observations(sequences: Sequence[ObservationSequence]) -> int:
    return int(sum(len(seq) for seq in sequences))


def _generator_support(spec: ModelSpec) -> NDArray[np.bool_]:
    """The free off-diagonal cells of the model's generator."""
    assert spec.n_states is not None
    mask = spec.generator_mask or GeneratorMask.full(spec.n_states)
    support = np.zeros((mask.n, mask.n), dtype=bool)
    for i, j in mask.free_cells:
        support[i, j] = True
    return support
