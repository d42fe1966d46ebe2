"""
Per-step transition operators ``Omega^(tau)`` for every model class.

Sequences of operators are returned either as ``(T-1, n, n)`` arrays or as
:class:`KernelSequence` objects that build one kernel per distinct interval
length on demand, so long irregularly sampled sequences never hold all
kernels in memory at once.
"""

from collections.abc import Callable, Iterator, Mapping, Sequence
from functools import lru_cache
from typing import overload

import numpy as np
from numpy.typing import ArrayLike
from typing_extensions import override

from latent_chain.core.base import FloatArray, GeneratorMask, Grid, OUParams
from latent_chain.core.errors import InvalidArgumentError
from latent_chain.core.grid import generator_approx, ou_tpm
from latent_chain.core.linalg import expm, tpm_from_eta

KERNEL_CACHE_SIZE = 512


class KernelSequence(Sequence[FloatArray]):
    """
    A lazily evaluated sequence of transition operators, one per step.

    Steps sharing a key (typically an interval length) share one kernel;
    the most recently used kernels are cached.

    Args:
        build (Callable[[float], FloatArray]):
            Builds the kernel for one key.
        keys (ArrayLike):
            The key of every step.
        cache_size (int):
            The number of kernels kept in memory.

    """

    def __init__(
        self,
        build: Callable[[float], FloatArray],
        keys: ArrayLike,
        cache_size: int = KERNEL_CACHE_SIZE,
    ) -> None:
        self.keys = np.asarray(keys, dtype=np.float64)
        self._build = lru_cache(maxsize=cache_size)(build)

    @override
    def __len__(self) -> int:
        return int(self.keys.shape[0])

    @overload
    def __getitem__(self, index: int) -> FloatArray: ...

    @overload
    def __getitem__(self, index: slice) -> "KernelSequence": ...

    @override
    def __getitem__(self, index: int | slice) -> "FloatArray | KernelSequence":
        if isinstance(index, slice):
            return KernelSequence(self._build, self.keys[index])
        return self._build(float(self.keys[index]))

    @override
    def __iter__(self) -> Iterator[FloatArray]:
        for key in self.keys:
            yield self._build(float(key))

    @property
    def n_distinct(self) -> int:
        """The number of distinct kernels in the sequence."""
        return int(np.unique(self.keys).shape[0])


def generator_from_params(mask: GeneratorMask, log_rates: ArrayLike) -> FloatArray:
    """
    Builds a generator matrix from log transition rates.

    Free off-diagonal cells are filled row-major with ``exp(log_rates)``,
    masked cells are zero and each diagonal entry is the negative row sum.

    Args:
        mask (GeneratorMask):
            The structural zeros.
        log_rates (ArrayLike):
            One log rate per free cell.

    Returns:
        FloatArray:
            The generator matrix.

    Raises:
        InvalidArgumentError:
            If the number of rates does not match the number of free cells.

    """
    rates = np.atleast_1d(np.asarray(log_rates, dtype=np.float64))
    cells = mask.free_cells
    if rates.ndim != 1 or rates.shape[0] != len(cells):
        msg = (
            f"Expected {len(cells)} log rates for the generator mask, "
            f"got {rates.size}."
        )
        raise InvalidArgumentError(msg)
    q = np.zeros((mask.n, mask.n))
    if cells:
        rows, cols = zip(*cells, strict=True)
        q[list(rows), list(cols)] = np.exp(rates)
    np.fill_diagonal(q, -q.sum(axis=1))
    return q


def omega_cthmm(q: ArrayLike, dt: float) -> FloatArray:
    """
    The transition probability matrix ``exp(Q dt)`` over an interval.

    Raises:
        InvalidArgumentError:
            If ``dt < 0``.

    """
    if not dt >= 0:
        msg = f"The interval length must be nonnegative, got {dt}."
        raise InvalidArgumentError(msg)
    return expm(np.asarray(q, dtype=np.float64) * dt)


def omega_cthmm_sequence(q: ArrayLike, dts: ArrayLike) -> KernelSequence:
    """Builds ``exp(Q dt)`` for every interval, one matrix per distinct length."""
    generator = np.asarray(q, dtype=np.float64)
    gaps = np.asarray(dts, dtype=np.float64)
    if np.any(gaps < 0):
        msg = "Observation times must be nondecreasing."
        raise InvalidArgumentError(msg)
    return KernelSequence(lambda dt: omega_cthmm(generator, dt), gaps)


def ou_tpm_sequence(
    grid: Grid, p: OUParams, dts: ArrayLike, renormalize: bool = False
) -> KernelSequence:
    """Builds the discretized OU kernel for every interval."""
    gaps = np.asarray(dts, dtype=np.float64)
    if np.any(gaps <= 0):
        msg = "Continuous-time state-space models need strictly increasing times."
        raise InvalidArgumentError(msg)
    return KernelSequence(lambda dt: ou_tpm(grid, p, dt, renormalize), gaps)


def omega_mmpp(
    q: ArrayLike, rates: ArrayLike, y: float, with_rate_factor: bool = True
) -> FloatArray:
    """
    The MMPP operator for a waiting time ``y``: ``exp((Q - Lambda) y) Lambda``.

    The result is not a transition probability matrix; its rows sum to less
    than the largest rate. Without the rate factor it holds the joint
    probabilities of the end state and no event in ``(0, y)``.

    Args:
        q (ArrayLike):
            The generator matrix.
        rates (ArrayLike):
            The state-dependent event rates.
        y (float):
            The waiting time, strictly positive.
        with_rate_factor (bool):
            Post-multiply by ``Lambda`` (an event occurs at ``y``).

    Returns:
        FloatArray:
            The ``n x n`` nonnegative operator.

    Raises:
        InvalidArgumentError:
            If ``y <= 0`` or dimensions disagree.

    """
    if not y > 0:
        msg = f"MMPP waiting times must be positive, got {y}."
        raise InvalidArgumentError(msg)
    generator = np.asarray(q, dtype=np.float64)
    lam = np.atleast_1d(np.asarray(rates, dtype=np.float64))
    if generator.shape != (lam.shape[0], lam.shape[0]):
        msg = f"Generator shape {generator.shape} does not match {lam.shape[0]} rates."
        raise InvalidArgumentError(msg)
    survival = expm((generator - np.diag(lam)) * y)
    return survival * lam[None, :] if with_rate_factor else survival


def omega_mmpp_sequence(
    q: ArrayLike, rates: ArrayLike, waits: ArrayLike
) -> KernelSequence:
    """Builds the MMPP operator for every interior waiting time."""
    generator = np.asarray(q, dtype=np.float64)
    lam = np.asarray(rates, dtype=np.float64)
    return KernelSequence(lambda y: omega_mmpp(generator, lam, y), waits)


def n_states_from_pairs(n_pairs: int) -> int:
    """Recovers N from the number of off-diagonal pairs N(N-1)."""
    n = int(round((1.0 + np.sqrt(1.0 + 4.0 * n_pairs)) / 2.0))
    if n * (n - 1) != n_pairs or n < 2:
        msg = f"{n_pairs} is not the off-diagonal count of a square matrix."
        raise InvalidArgumentError(msg)
    return n


def hmm_tpm_sequence(beta: ArrayLike, design: ArrayLike) -> FloatArray:
    """
    Builds time-varying transition probability matrices from linear predictors
    ``eta_ij^(t) = design[t] . beta[(i, j)]``.

    Args:
        beta (ArrayLike):
            Coefficients with one row per off-diagonal pair (row-major over
            ``(i, j)``, ``i != j``) and one column per design column.
        design (ArrayLike):
            The ``T x p`` design matrix; its first column is the intercept.

    Returns:
        FloatArray:
            The ``(T, N, N)`` stack of transition probability matrices.

    Raises:
        InvalidArgumentError:
            On dimension mismatch or a design without intercept column.

    """
    coefs = np.atleast_2d(np.asarray(beta, dtype=np.float64))
    x = np.atleast_2d(np.asarray(design, dtype=np.float64))
    if x.shape[1] != coefs.shape[1]:
        msg = f"beta has {coefs.shape[1]} columns but the design has {x.shape[1]}."
        raise InvalidArgumentError(msg)
    if not np.all(x[:, 0] == 1.0):
        msg = "The first design column must be the intercept (all ones)."
        raise InvalidArgumentError(msg)
    n = n_states_from_pairs(coefs.shape[0])
    eta = np.zeros((x.shape[0], n, n))
    off_diagonal = ~np.eye(n, dtype=bool)
    eta[:, off_diagonal] = x @ coefs.T
    return tpm_from_eta(eta)


def trig_design(
    times: ArrayLike,
    period: float | None = None,
    extra: Mapping[str, ArrayLike] | None = None,
) -> tuple[FloatArray, list[str]]:
    """
    Builds the t.p.m. design matrix ``[1, sin(2 pi t / period),
    cos(2 pi t / period), extra...]``.

    Args:
        times (ArrayLike):
            The observation times.
        period (float | None):
            The period of the trigonometric predictors; ``None`` omits them.
        extra (Mapping[str, ArrayLike] | None):
            Additional covariate columns.

    Returns:
        tuple[FloatArray, list[str]]:
            The design matrix and its column names.

    """
    t = np.asarray(times, dtype=np.float64)
    columns: list[FloatArray] = [np.ones_like(t)]
    names = ["intercept"]
    if period is not None:
        angle = 2.0 * np.pi * t / period
        columns += [np.sin(angle), np.cos(angle)]
        names += ["sin", "cos"]
    for name, values in (extra or {}).items():
        column = np.asarray(values, dtype=np.float64)
        if column.shape != t.shape:
            msg = f"Covariate {name} has {column.size} values, expected {t.size}."
            raise InvalidArgumentError(msg)
        if np.any(np.isnan(column)):
            msg = f"Covariate {name} has missing values."
            raise InvalidArgumentError(msg)
        columns.append(column)
        names.append(name)
    return np.column_stack(columns), names


def cox_rates(grid: Grid, beta0: float) -> FloatArray:
    """The event rates ``exp(beta0 + b_i*)`` on the grid midpoints."""
    return np.asarray(np.exp(beta0 + grid.midpoints), dtype=np.float64)


def cox_generator(
    grid: Grid, p: OUParams, dt_star: float, renormalize: bool = False
) -> FloatArray:
    """Approximates the generator of the discretized OU intensity process."""
    return generator_approx(ou_tpm(grid, p, dt_star, renormalize), dt_star)
