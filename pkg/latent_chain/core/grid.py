"""
Discretization of continuous state spaces by midpoint quadrature.

A continuous state process is approximated by an m-state Markov chain on the
interval midpoints ``b_i*``; the transition probability from ``b_i*`` to
``b_j*`` is ``h`` times the transition density evaluated at ``b_j*``.
"""

import numpy as np
from numpy.typing import ArrayLike
from pydantic import ValidationError
from scipy import stats

from latent_chain.core.base import AR1Params, FloatArray, Grid, OUParams
from latent_chain.core.errors import InvalidArgumentError
from latent_chain.utils import get_logger

logger = get_logger(__name__)

DEFAULT_WIDTH = 3.5
TRUNCATION_WARN = 1e-6


def build_grid(b0: float, bm: float, m: int) -> Grid:
    """
    Builds an equidistant grid of ``m`` intervals on ``[b0, bm]``.

    Args:
        b0 (float):
            The lower bound.
        bm (float):
            The upper bound.
        m (int):
            The number of intervals, at least 2.

    Returns:
        Grid:
            The grid.

    Raises:
        InvalidArgumentError:
            If ``b0 >= bm`` or ``m < 2``.

    """
    try:
        return Grid(b0=b0, bm=bm, m=m)
    except ValidationError as err:
        raise InvalidArgumentError(str(err)) from err


def default_bounds(
    mean: float, sd: float, width: float = DEFAULT_WIDTH
) -> tuple[float, float]:
    """Returns the range of ``width`` standard deviations around ``mean``."""
    if not sd > 0:
        msg = f"The stationary standard deviation must be positive, got {sd}."
        raise InvalidArgumentError(msg)
    return mean - width * sd, mean + width * sd


def _renormalize_rows(matrix: FloatArray) -> FloatArray:
    sums = matrix.sum(axis=-1, keepdims=True)
    return np.divide(matrix, sums, out=matrix.copy(), where=sums > 0)


def _gaussian_kernel(
    grid: Grid, means: FloatArray, sd: float, renormalize: bool
) -> FloatArray:
    midpoints = grid.midpoints
    tpm = grid.h * stats.norm.pdf(midpoints[None, :], loc=means[:, None], scale=sd)
    tpm = np.asarray(tpm, dtype=np.float64)
    return _renormalize_rows(tpm) if renormalize else tpm


def ar1_tpm(grid: Grid, p: AR1Params, renormalize: bool = False) -> FloatArray:
    """
    Discretizes the AR(1) transition density
    ``S_t | S_{t-1} = b_i* ~ N(phi (b_i* - mu) + mu, sigma^2)``.

    Args:
        grid (Grid):
            The discretization.
        p (AR1Params):
            The AR(1) parameters.
        renormalize (bool):
            Rescale rows to sum to one.

    Returns:
        FloatArray:
            The ``m x m`` transition probability matrix.

    """
    means = p.phi * (grid.midpoints - p.mu) + p.mu
    return _gaussian_kernel(grid, means, p.sigma, renormalize)


def ou_tpm(grid: Grid, p: OUParams, dt: float, renormalize: bool = False) -> FloatArray:
    """
    Discretizes the exact OU transition density over a time step ``dt``: a
    normal with mean ``e^{-theta dt} b_i* + mu (1 - e^{-theta dt})`` and
    variance ``sigma^2 (1 - e^{-2 theta dt}) / (2 theta)``.

    Args:
        grid (Grid):
            The discretization.
        p (OUParams):
            The OU parameters, with ``sigma > 0``.
        dt (float):
            The time step, strictly positive.
        renormalize (bool):
            Rescale rows to sum to one.

    Returns:
        FloatArray:
            The ``m x m`` transition probability matrix.

    Raises:
        InvalidArgumentError:
            If ``dt <= 0`` or ``sigma == 0``.

    """
    if not dt > 0:
        msg = f"The OU time step must be positive, got {dt}."
        raise InvalidArgumentError(msg)
    if p.sigma == 0:
        msg = "The OU transition kernel needs sigma > 0."
        raise InvalidArgumentError(msg)
    decay = np.exp(-p.theta * dt)
    means = decay * grid.midpoints + p.mu * (1.0 - decay)
    sd = p.sigma * np.sqrt(-np.expm1(-2.0 * p.theta * dt) / (2.0 * p.theta))
    return _gaussian_kernel(grid, means, float(sd), renormalize)


def _stationary_weights(grid: Grid, mean: float, sd: float) -> FloatArray:
    weights = grid.h * stats.norm.pdf(grid.midpoints, loc=mean, scale=sd)
    return np.asarray(weights / weights.sum(), dtype=np.float64)


def ar1_initial(grid: Grid, p: AR1Params) -> FloatArray:
    """Discretizes the stationary N(mu, sigma^2 / (1 - phi^2)) on the grid."""
    return _stationary_weights(grid, p.mu, p.stationary_sd)


def ou_initial(grid: Grid, p: OUParams) -> FloatArray:
    """Discretizes the stationary N(mu, sigma^2 / (2 theta)) on the grid."""
    if p.sigma == 0:
        msg = "The OU stationary distribution needs sigma > 0."
        raise InvalidArgumentError(msg)
    return _stationary_weights(grid, p.mu, p.stationary_sd)


def generator_approx(gamma_star: ArrayLike, dt_star: float) -> FloatArray:
    """
    Approximates a generator from a transition matrix over a short step.

    Off-diagonal rates are ``gamma_ij / dt_star``; each diagonal entry is reset
    to the negative sum of its row's off-diagonal rates.

    Args:
        gamma_star (ArrayLike):
            The transition matrix over ``dt_star``.
        dt_star (float):
            The step, strictly positive.

    Returns:
        FloatArray:
            The generator matrix.

    Raises:
        InvalidArgumentError:
            If ``dt_star <= 0`` or an off-diagonal entry is negative.

    """
    if not dt_star > 0:
        msg = f"dt_star must be positive, got {dt_star}."
        raise InvalidArgumentError(msg)
    gamma = np.asarray(gamma_star, dtype=np.float64)
    if gamma.ndim != 2 or gamma.shape[0] != gamma.shape[1]:
        msg = f"gamma_star must be square, got shape {gamma.shape}."
        raise InvalidArgumentError(msg)
    off_diagonal = ~np.eye(gamma.shape[0], dtype=bool)
    if np.any(gamma[off_diagonal] < 0):
        msg = "gamma_star has negative off-diagonal entries."
        raise InvalidArgumentError(msg)
    q = np.where(off_diagonal, gamma / dt_star, 0.0)
    np.fill_diagonal(q, -q.sum(axis=1))
    return q


def truncation_mass(tpm: ArrayLike) -> FloatArray:
    """Returns the probability mass each row loses outside the grid range."""
    rows = np.asarray(tpm, dtype=np.float64).sum(axis=-1)
    return np.asarray(1.0 - rows, dtype=np.float64)


def warn_truncation(tpm: ArrayLike, label: str) -> float:
    """
    Logs a warning when a discretized kernel loses noticeable mass at the grid
    boundaries.

    Returns:
        float:
            The largest per-row truncation mass.

    """
    worst = float(np.max(truncation_mass(tpm)))
    if worst > TRUNCATION_WARN:
        logger.warning(
            "%s loses up to %.3g probability mass outside the grid range; "
            "consider wider bounds.",
            label,
            worst,
        )
    return worst


def ou_autocorrelation(theta: float, dt: float = 1.0) -> float:
    """The autocorrelation of an OU process at lag ``dt``, ``exp(-theta dt)``."""
    return float(np.exp(-theta * dt))
