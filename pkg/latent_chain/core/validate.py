import numpy as np
from numpy.typing import ArrayLike, NDArray

from latent_chain.utils import cerror

ROW_SUM_TOL = 1e-10


def _validate_square(matrix: NDArray[np.float64], name: str) -> bool:
    """Validates that a matrix is square and non-empty."""
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1] or matrix.size == 0:
        cerror(f"{name} must be a non-empty square matrix, got shape {matrix.shape}.")
        return False
    return True


def _validate_finite(values: NDArray[np.float64], name: str) -> bool:
    """Validates that all entries are finite."""
    if not np.all(np.isfinite(values)):
        cerror(f"{name} contains non-finite entries.")
        return False
    return True


def _validate_entries_in_unit_interval(
    values: NDArray[np.float64], name: str
) -> bool:
    """Validates that all entries lie in [0, 1]."""
    valid = True
    if np.any(values < 0.0):
        cerror(f"{name} has negative entries (min {values.min():.3g}).")
        valid = False
    if np.any(values > 1.0):
        cerror(f"{name} has entries above 1 (max {values.max():.3g}).")
        valid = False
    return valid


def _validate_row_sums(
    matrix: NDArray[np.float64], target: float, name: str, tol: float
) -> bool:
    """Validates that each row sums to ``target`` within ``tol``."""
    valid = True
    deviations = np.abs(matrix.sum(axis=-1) - target)
    for i in np.flatnonzero(deviations > tol):
        cerror(
            f"Row {i + 1} of {name} sums to {matrix[i].sum():.12g}, "
            f"expected {target}."
        )
        valid = False
    return valid


def _validate_generator_signs(matrix: NDArray[np.float64], name: str) -> bool:
    """Validates nonnegative off-diagonal and nonpositive diagonal rates."""
    valid = True
    off_diagonal = matrix[~np.eye(matrix.shape[0], dtype=bool)]
    if np.any(off_diagonal < 0.0):
        cerror(f"{name} has negative off-diagonal rates.")
        valid = False
    if np.any(np.diag(matrix) > 0.0):
        cerror(f"{name} has positive diagonal entries.")
        valid = False
    return valid


def is_transition_matrix(
    gamma: ArrayLike, tol: float = ROW_SUM_TOL, name: str = "Transition matrix"
) -> bool:
    """
    Checks the transition probability matrix invariants.

    Every violated invariant is reported on the error console.

    Args:
        gamma (ArrayLike):
            The candidate matrix.
        tol (float):
            The row-sum tolerance.
        name (str):
            The name used in diagnostics.

    Returns:
        bool:
            True if the matrix is square, finite, has entries in [0, 1] and
            rows summing to 1.

    """
    matrix = np.asarray(gamma, dtype=np.float64)
    if not _validate_square(matrix, name) or not _validate_finite(matrix, name):
        return False
    valid = _validate_entries_in_unit_interval(matrix, name)
    valid = _validate_row_sums(matrix, 1.0, name, tol) and valid
    return valid


def is_generator_matrix(
    q: ArrayLike, tol: float = ROW_SUM_TOL, name: str = "Generator matrix"
) -> bool:
    """
    Checks the generator matrix invariants.

    Args:
        q (ArrayLike):
            The candidate matrix.
        tol (float):
            The row-sum tolerance.
        name (str):
            The name used in diagnostics.

    Returns:
        bool:
            True if the matrix is square, finite, has nonnegative off-diagonal
            rates and rows summing to 0.

    """
    matrix = np.asarray(q, dtype=np.float64)
    if not _validate_square(matrix, name) or not _validate_finite(matrix, name):
        return False
    valid = _validate_generator_signs(matrix, name)
    valid = _validate_row_sums(matrix, 0.0, name, tol) and valid
    return valid


def is_probability_vector(
    delta: ArrayLike, tol: float = ROW_SUM_TOL, name: str = "Probability vector"
) -> bool:
    """Checks that a vector is finite, has entries in [0, 1] and sums to 1."""
    vector = np.asarray(delta, dtype=np.float64)
    if vector.ndim != 1 or vector.size == 0:
        cerror(f"{name} must be a non-empty vector, got shape {vector.shape}.")
        return False
    if not _validate_finite(vector, name):
        return False
    valid = _validate_entries_in_unit_interval(vector, name)
    if abs(vector.sum() - 1.0) > tol:
        cerror(f"{name} sums to {vector.sum():.12g}, expected 1.")
        valid = False
    return valid
