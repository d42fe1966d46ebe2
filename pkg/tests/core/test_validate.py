from typing import Any
from unittest.mock import patch

import numpy as np
import pytest

from latent_chain.core.validate import (
    _validate_generator_signs,
    _validate_row_sums,
    _validate_square,
    is_generator_matrix,
    is_probability_vector,
    is_transition_matrix,
)


@pytest.fixture
def mock_cerror() -> Any:
    with patch("latent_chain.core.validate.cerror") as mock:
        yield mock


# Tests for the private checks
def test_validate_square_rejects_rectangular(mock_cerror: Any) -> None:
    assert _validate_square(np.ones((2, 3)), "M") is False
    mock_cerror.assert_called_once()


def test_validate_row_sums_reports_each_row(mock_cerror: Any) -> None:
    matrix = np.array([[0.5, 0.4], [0.3, 0.3], [1.0, 0.0]])
    assert _validate_row_sums(matrix, 1.0, "M", 1e-10) is False
    assert mock_cerror.call_count == 2
    assert "Row 1" in mock_cerror.call_args_list[0].args[0]


def test_validate_generator_signs(mock_cerror: Any) -> None:
    assert _validate_generator_signs(np.array([[1.0, -1.0], [0.0, 0.0]]), "Q") is False
    assert mock_cerror.call_count == 2


# Tests for the public checks
def test_is_transition_matrix_valid(mock_cerror: Any) -> None:
    assert is_transition_matrix([[0.9, 0.1], [0.2, 0.8]]) is True
    mock_cerror.assert_not_called()


@pytest.mark.parametrize(
    "gamma",
    [
        [[0.9, 0.2], [0.2, 0.8]],
        [[1.1, -0.1], [0.2, 0.8]],
        [[0.5, np.nan], [0.2, 0.8]],
        [[0.5, 0.5]],
    ],
)
def test_is_transition_matrix_invalid(
    mock_cerror: Any, gamma: list[list[float]]
) -> None:
    assert is_transition_matrix(gamma) is False
    mock_cerror.assert_called()


def test_is_generator_matrix(mock_cerror: Any) -> None:
    assert is_generator_matrix([[-1.0, 1.0], [2.0, -2.0]]) is True
    assert is_generator_matrix([[0.0, 0.0], [0.0, 0.0]]) is True
    assert is_generator_matrix([[-1.0, 0.5], [2.0, -2.0]]) is False


def test_is_probability_vector(mock_cerror: Any) -> None:
    assert is_probability_vector([0.25, 0.75]) is True
    assert is_probability_vector([0.5, 0.6]) is False
    assert is_probability_vector([]) is False
    assert mock_cerror.call_count == 2
