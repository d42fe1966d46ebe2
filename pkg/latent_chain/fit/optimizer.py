"""
Numerical maximum-likelihood estimation.

The negative log-likelihood is minimized over the unconstrained parameter
vector with BFGS on central finite-difference gradients, falling back to
Nelder-Mead when the line search gives up. Approximate standard errors come
from a finite-difference Hessian at the optimum.
"""

from collections.abc import Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike
from pydantic import BaseModel, ConfigDict, Field
from scipy import linalg, optimize, stats

from latent_chain.core.base import FloatArray, Grid, ModelSpec, ObservationSequence
from latent_chain.core.errors import (
    FitError,
    InvalidArgumentError,
    LatentChainError,
    ZeroLikelihoodError,
)
from latent_chain.fit import _default_threads
from latent_chain.fit.base_model import BaseLatentModel
from latent_chain.fit.factory import build_model
from latent_chain.fit.params import MONOTONE_CONSTRAINTS, ParamVector
from latent_chain.utils import get_logger

logger = get_logger(__name__)

PENALTY = 1e10
PENALIZED_ERRORS = (LatentChainError, ValueError, ArithmeticError, linalg.LinAlgError)


class OptimizerOptions(BaseModel):
    """
    Settings of the maximum-likelihood driver.

    Attributes:
        max_iterations (int):
            The iteration limit of the quasi-Newton search.
        grad_tol (float):
            Converged when the gradient's infinity norm drops below this.
        rel_tol (float):
            Converged when the relative objective change drops below this.
        fd_step (float):
            The relative finite-difference step.
        fallback (bool):
            Retry with Nelder-Mead after a failed line search.
        threads (int):
            Workers for sequences and finite-difference perturbations.

    """

    model_config = ConfigDict(frozen=True)

    max_iterations: int = Field(default=500, ge=1, description="Iteration limit.")
    grad_tol: float = Field(default=1e-5, gt=0.0, description="Gradient tolerance.")
    rel_tol: float = Field(
        default=1e-10, ge=0.0, description="Relative change tolerance."
    )
    fd_step: float = Field(default=1e-6, gt=0.0, description="Finite-difference step.")
    fallback: bool = Field(default=True, description="Use the Nelder-Mead fallback.")
    threads: int = Field(
        default_factory=_default_threads, ge=1, description="Number of workers."
    )


@dataclass(frozen=True)
class FitResult:
    """
    The outcome of a maximum-likelihood fit.

    Attributes:
        estimates (dict[str, FloatArray]):
            The estimates in natural units, fixed blocks included.
        vector (ParamVector):
            The estimates on the unconstrained scale.
        log_likelihood (float):
            The maximized log-likelihood, re-evaluated at the estimates.
        converged (bool):
            Whether a convergence criterion was met.
        n_iterations (int):
            The number of accepted iterations, all methods combined.
        n_obs (int):
            The number of observations.
        covariance (FloatArray | None):
            The inverse Hessian of the negative log-likelihood on the
            unconstrained scale, ``None`` if it is not positive definite.
        trace (tuple[float, ...]):
            The negative log-likelihood at the start and after every
            accepted iteration.
        method (str):
            The optimizer that produced the estimates.
        message (str):
            The optimizer's final message.
        derived (dict[str, list[float]]):
            Summary quantities derived from the estimates.
        grid (Grid | None):
            The grid of a grid-based model.

    """

    estimates: dict[str, FloatArray]
    vector: ParamVector
    log_likelihood: float
    converged: bool
    n_iterations: int
    n_obs: int
    covariance: FloatArray | None = None
    trace: tuple[float, ...] = ()
    method: str = "BFGS"
    message: str = ""
    derived: dict[str, list[float]] = field(default_factory=dict)
    grid: Grid | None = None

    @property
    def n_params(self) -> int:
        """The number of estimated (free) parameters."""
        return int(self.vector.values.shape[0])

    @property
    def aic(self) -> float:
        return 2.0 * self.n_params - 2.0 * self.log_likelihood

    @property
    def bic(self) -> float:
        penalty = self.n_params * float(np.log(max(self.n_obs, 1)))
        return penalty - 2.0 * self.log_likelihood

    @property
    def intervals_available(self) -> bool:
        return self.covariance is not None

    def __str__(self) -> str:
        return (
            f"FitResult("
            f"log_likelihood={self.log_likelihood:.6f}, "
            f"converged={self.converged}, "
            f"n_params={self.n_params}, "
            f"method={self.method})"
        )


@dataclass(frozen=True)
class ParameterInterval:
    """
    A confidence interval for one parameter block, in natural units.

    ``lower`` and ``upper`` are ``None`` when no interval is available.
    """

    block: str
    estimate: FloatArray
    lower: FloatArray | None = None
    upper: FloatArray | None = None

    @property
    def available(self) -> bool:
        return self.lower is not None and self.upper is not None


class _Objective:
    """The penalized negative log-likelihood on the unconstrained scale."""

    def __init__(
        self,
        model: BaseLatentModel,
        template: ParamVector,
        sequences: Sequence[ObservationSequence],
        options: OptimizerOptions,
    ) -> None:
        self.model = model
        self.template = template
        self.sequences = sequences
        self.options = options

    def exact(self, values: ArrayLike) -> float:
        params = self.model.untransform(self.template.with_values(values))
        return -self.model.log_likelihood(params, self.sequences)

    def __call__(self, values: ArrayLike) -> float:
        try:
            value = self.exact(values)
        except PENALIZED_ERRORS:
            return PENALTY
        return value if np.isfinite(value) else PENALTY

    def gradient(self, values: ArrayLike) -> FloatArray:
        """Central differences with step ``fd_step * max(|v_i|, 1)``."""
        x = np.asarray(values, dtype=np.float64)
        steps = self.options.fd_step * np.maximum(np.abs(x), 1.0)
        points = []
        for i in range(x.shape[0]):
            for sign in (1.0, -1.0):
                point = x.copy()
                point[i] += sign * steps[i]
                points.append(point)
        if self.options.threads > 1 and len(points) > 1:
            with ThreadPoolExecutor(max_workers=self.options.threads) as pool:
                evaluations = list(pool.map(self, points))
        else:
            evaluations = [self(point) for point in points]
        f = np.asarray(evaluations).reshape(-1, 2)
        return np.asarray((f[:, 0] - f[:, 1]) / (2.0 * steps), dtype=np.float64)


class _Trace:
    """Records accepted iterates and stops on a negligible relative change."""

    def __init__(self, start: float, rel_tol: float) -> None:
        self.values = [start]
        self.rel_tol = rel_tol
        self.stalled = False
        self.stop_on_stall = True

    def __call__(self, intermediate_result: optimize.OptimizeResult) -> None:
        value = float(intermediate_result.fun)
        previous = self.values[-1]
        self.values.append(value)
        logger.debug("iteration %d: -loglik = %.10g", len(self.values) - 1, value)
        stalled = abs(previous - value) <= self.rel_tol * max(abs(value), 1.0)
        if self.stop_on_stall and stalled:
            self.stalled = True
            raise StopIteration


def fit_mle(
    spec: ModelSpec,
    sequences: Sequence[ObservationSequence],
    init: Mapping[str, ArrayLike] | None = None,
    options: OptimizerOptions | None = None,
    grid: Grid | None = None,
) -> FitResult:
    """
    Fits a model by numerical maximization of the likelihood.

    Args:
        spec (ModelSpec):
            The model description.
        sequences (Sequence[ObservationSequence]):
            Independent sequences sharing one parameter set.
        init (Mapping[str, ArrayLike] | None):
            Initial natural values overriding the defaults.
        options (OptimizerOptions | None):
            The optimizer settings.
        grid (Grid | None):
            A fixed grid for grid-based models; resolved from the spec or
            the initial values otherwise.

    Returns:
        FitResult:
            The estimates, the maximized log-likelihood and the covariance.

    Raises:
        FitError:
            If the likelihood is zero or undefined at the initial values.

    """
    options = options or OptimizerOptions()
    if not sequences:
        msg = "No observations to fit."
        raise FitError(msg)
    model, natural = build_model(spec, init, options.threads, grid)
    start = model.transform(natural)
    objective = _Objective(model, start, sequences, options)
    try:
        f0 = objective.exact(start.values)
    except ZeroLikelihoodError as err:
        msg = (
            f"The likelihood is zero at the initial values (observation {err.tau} "
            "is impossible); choose other initial values."
        )
        raise FitError(msg) from err
    except PENALIZED_ERRORS as err:
        msg = f"The likelihood cannot be evaluated at the initial values: {err}"
        raise FitError(msg) from err
    if not np.isfinite(f0):
        msg = "The log-likelihood at the initial values is not finite."
        raise FitError(msg)

    logger.info(
        "Fitting %s model with %d free parameters to %d sequence(s).",
        spec.model_class.value,
        start.values.shape[0],
        len(sequences),
    )
    trace = _Trace(f0, options.rel_tol)
    x, method, message, n_iterations, converged = _minimize(
        objective, start, trace, options
    )

    vector = start.with_values(x)
    estimates = model.untransform(vector)
    log_likelihood = model.log_likelihood(estimates, sequences)
    covariance = _covariance(objective, x) if x.shape[0] > 0 else np.zeros((0, 0))
    model.check_estimates(estimates)
    result = FitResult(
        estimates=estimates,
        vector=vector,
        log_likelihood=log_likelihood,
        converged=converged,
        n_iterations=n_iterations,
        n_obs=model.n_observations(sequences),
        covariance=covariance,
        trace=tuple(trace.values),
        method=method,
        message=message,
        derived=model.derived(estimates),
        grid=model.grid,
    )
    logger.info("%s", result)
    return result


def _minimize(
    objective: _Objective,
    start: ParamVector,
    trace: _Trace,
    options: OptimizerOptions,
) -> tuple[FloatArray, str, str, int, bool]:
    x0 = start.values
    if x0.shape[0] == 0:
        return x0, "none", "All parameters are fixed.", 0, True

    result = optimize.minimize(
        objective,
        x0,
        method="BFGS",
        jac=objective.gradient,
        callback=trace,
        options={
            "maxiter": options.max_iterations,
            "gtol": options.grad_tol,
            "norm": np.inf,
        },
    )
    method, message = "BFGS", str(result.message)
    x = np.asarray(result.x, dtype=np.float64)
    n_iterations = int(result.nit)
    converged = bool(result.success) or trace.stalled
    # status 2: the line search failed to make progress
    if not converged and result.status == 2 and options.fallback:
        logger.warning(
            "BFGS line search failed (%s); retrying with Nelder-Mead.", message
        )
        trace.stop_on_stall = False
        fallback = optimize.minimize(
            objective,
            x,
            method="Nelder-Mead",
            callback=trace,
            options={
                "maxiter": 200 * options.max_iterations,
                "xatol": 1e-8,
                "fatol": options.rel_tol,
            },
        )
        n_iterations += int(fallback.nit)
        if float(fallback.fun) <= float(result.fun):
            x = np.asarray(fallback.x, dtype=np.float64)
            method, message = "Nelder-Mead", str(fallback.message)
            converged = bool(fallback.success) or trace.stalled
        else:
            logger.warning("Nelder-Mead did not improve on BFGS; keeping BFGS.")
    if not converged:
        converged = float(np.max(np.abs(objective.gradient(x)))) <= options.grad_tol
    if not converged:
        logger.warning("The optimizer did not converge: %s", message)
    return x, method, message, n_iterations, converged


def _covariance(objective: _Objective, x: FloatArray) -> FloatArray | None:
    """Inverts the finite-difference Hessian; ``None`` if not positive definite."""
    epsilon = objective.options.fd_step * np.maximum(np.abs(x), 1.0) * 1e2
    hessian = np.atleast_2d(optimize.approx_fprime(x, objective.gradient, epsilon))
    hessian = 0.5 * (hessian + hessian.T)
    if not np.all(np.isfinite(hessian)):
        logger.warning("The Hessian is not finite; intervals are unavailable.")
        return None
    try:
        factor = linalg.cho_factor(hessian)
    except linalg.LinAlgError:
        logger.warning(
            "The Hessian is not positive definite; intervals are unavailable."
        )
        return None
    covariance = linalg.cho_solve(factor, np.eye(x.shape[0]))
    return np.asarray(0.5 * (covariance + covariance.T), dtype=np.float64)


def hessian_ci(result: FitResult, level: float = 0.95) -> dict[str, ParameterInterval]:
    """
    Computes Wald-type confidence intervals in natural units.

    Blocks with a monotone transform map the unconstrained bounds directly;
    matrix and simplex blocks use the delta method.

    Args:
        result (FitResult):
            The fit.
        level (float):
            The confidence level.

    Returns:
        dict[str, ParameterInterval]:
            One interval per free block; all unavailable if the Hessian was
            not positive definite.

    Raises:
        InvalidArgumentError:
            If ``level`` is outside ``(0, 1)``.

    """
    if not 0.0 < level < 1.0:
        msg = f"The confidence level must lie in (0, 1), got {level}."
        raise InvalidArgumentError(msg)
    z = float(stats.norm.ppf(0.5 + 0.5 * level))
    vector = result.vector
    intervals: dict[str, ParameterInterval] = {}
    for block in vector.free_blocks:
        estimate = np.asarray(result.estimates[block.name], dtype=np.float64)
        position = vector.slices[block.name]
        if result.covariance is None:
            intervals[block.name] = ParameterInterval(block.name, estimate)
            continue
        values = vector.values[position]
        cov = result.covariance[position, position]
        if block.constraint in MONOTONE_CONSTRAINTS:
            se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
            lower = block.to_natural(values - z * se)
            upper = block.to_natural(values + z * se)
        else:
            jacobian = np.atleast_2d(
                optimize.approx_fprime(
                    values, lambda u, b=block: b.to_natural(u).ravel(), 1e-7
                )
            )
            variance = np.einsum("ij,jk,ik->i", jacobian, cov, jacobian)
            se = np.sqrt(np.clip(variance, 0.0, None)).reshape(block.shape)
            lower, upper = estimate - z * se, estimate + z * se
        intervals[block.name] = ParameterInterval(block.name, estimate, lower, upper)
    return intervals
