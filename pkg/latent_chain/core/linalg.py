"""Dense matrix kernels shared by every model class."""

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import linalg, special

from latent_chain.core.errors import InvalidArgumentError, NonUniqueStationaryError

FloatArray = NDArray[np.float64]

CLAMP_TOL = 1e-12
MAX_CONDITION = 1e12


def _as_square(a: ArrayLike, name: str) -> FloatArray:
    matrix = np.asarray(a, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1] or matrix.size == 0:
        msg = f"{name} must be a non-empty square matrix, got shape {matrix.shape}."
        raise InvalidArgumentError(msg)
    if not np.all(np.isfinite(matrix)):
        msg = f"{name} must be finite-valued."
        raise InvalidArgumentError(msg)
    return matrix


def expm(a: ArrayLike) -> FloatArray:
    """
    Computes the matrix exponential by scaling and squaring with a degree-13
    Padé approximant.

    Entries in ``(-1e-12, 0)`` are clamped to zero; rows are not renormalized.

    Args:
        a (ArrayLike):
            A finite square matrix.

    Returns:
        FloatArray:
            ``exp(a)``.

    Raises:
        InvalidArgumentError:
            If ``a`` is not square or has non-finite entries.

    """
    matrix = _as_square(a, "expm input")
    result = np.asarray(linalg.expm(matrix), dtype=np.float64)
    result[(result < 0.0) & (result > -CLAMP_TOL)] = 0.0
    return result


def _solve_stationary(system: FloatArray) -> FloatArray:
    """Solves ``delta M = e_n`` where the last column of M holds the sum constraint."""
    n = system.shape[0]
    system = system.copy()
    system[:, -1] = 1.0
    cond = np.linalg.cond(system)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        msg = (
            f"The stationary distribution is not unique "
            f"(condition number {cond:.3g})."
        )
        raise NonUniqueStationaryError(msg)
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    delta = linalg.lu_solve(linalg.lu_factor(system.T), rhs)
    delta = np.clip(delta, 0.0, None)
    return np.asarray(delta / delta.sum(), dtype=np.float64)


def stationary_discrete(gamma: ArrayLike) -> FloatArray:
    """
    Computes the stationary distribution of a transition probability matrix,
    the solution of ``delta Gamma = delta`` with ``sum(delta) = 1``.

    Args:
        gamma (ArrayLike):
            The transition probability matrix.

    Returns:
        FloatArray:
            The stationary distribution.

    Raises:
        NonUniqueStationaryError:
            If the chain has no unique stationary distribution.

    """
    matrix = _as_square(gamma, "Transition matrix")
    return _solve_stationary(matrix - np.eye(matrix.shape[0]))


def stationary_continuous(q: ArrayLike) -> FloatArray:
    """
    Computes the stationary distribution of a generator matrix, the solution
    of ``delta Q = 0`` with ``sum(delta) = 1``.

    Args:
        q (ArrayLike):
            The generator matrix.

    Returns:
        FloatArray:
            The stationary distribution.

    Raises:
        NonUniqueStationaryError:
            If the chain has no unique stationary distribution.

    """
    return _solve_stationary(_as_square(q, "Generator matrix"))


def tpm_from_eta(eta: ArrayLike) -> FloatArray:
    """
    Applies the inverse multinomial logistic link row-wise.

    Accepts a single ``n x n`` predictor matrix or a stack of shape
    ``(T, n, n)``.

    Args:
        eta (ArrayLike):
            Linear predictors with an exactly zero diagonal.

    Returns:
        FloatArray:
            The transition probability matrix (or stack of them).

    Raises:
        InvalidArgumentError:
            If a diagonal entry of ``eta`` is not zero.

    """
    predictors = np.asarray(eta, dtype=np.float64)
    if predictors.ndim < 2 or predictors.shape[-1] != predictors.shape[-2]:
        msg = f"eta must be square, got shape {predictors.shape}."
        raise InvalidArgumentError(msg)
    if np.any(np.diagonal(predictors, axis1=-2, axis2=-1) != 0.0):
        msg = "The diagonal of eta must be exactly zero."
        raise InvalidArgumentError(msg)
    return np.asarray(special.softmax(predictors, axis=-1), dtype=np.float64)


def mean_sojourn_times(q: ArrayLike) -> FloatArray:
    """
    Computes the expected time spent in each state per visit, ``-1/q_ii``.

    Absorbing states have an infinite sojourn time.
    """
    matrix = _as_square(q, "Generator matrix")
    exit_rates = -np.diag(matrix)
    return np.divide(
        1.0,
        exit_rates,
        out=np.full(matrix.shape[0], np.inf),
        where=exit_rates > 0.0,
    )
