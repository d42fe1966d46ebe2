import numpy as np
import pytest
from scipy import special

from latent_chain.core.errors import InvalidArgumentError, NonUniqueStationaryError
from latent_chain.core.linalg import (
    expm,
    mean_sojourn_times,
    stationary_continuous,
    stationary_discrete,
    tpm_from_eta,
)

Q2 = np.array([[-1.0, 1.0], [2.0, -2.0]])


def random_generator(
    rng: np.random.Generator, n: int, scale: float = 2.0
) -> np.ndarray:
    q = rng.uniform(0.05, scale, size=(n, n))
    np.fill_diagonal(q, 0.0)
    np.fill_diagonal(q, -q.sum(axis=1))
    return q


def taylor_expm(a: np.ndarray, terms: int = 50) -> np.ndarray:
    """Scaled truncated Taylor series, squared back up."""
    norm = np.abs(a).sum(axis=1).max()
    squarings = max(0, int(np.ceil(np.log2(norm / 0.5))) if norm > 0 else 0)
    scaled = a / 2**squarings
    result = np.eye(a.shape[0])
    term = np.eye(a.shape[0])
    for d in range(1, terms):
        term = term @ scaled / d
        result = result + term
    for _ in range(squarings):
        result = result @ result
    return result


def two_state_closed_form(a: float, b: float, t: float) -> np.ndarray:
    decay = np.exp(-(a + b) * t)
    return (
        np.array(
            [[b + a * decay, a - a * decay], [b - b * decay, a + b * decay]]
        )
        / (a + b)
    )


class TestExpm:
    def test_zero_matrix_is_identity(self) -> None:
        assert np.array_equal(expm(np.zeros((3, 3))), np.eye(3))

    def test_diagonal(self) -> None:
        result = expm(np.diag([1.0, -1.0]))
        assert result == pytest.approx(np.diag([np.e, 1.0 / np.e]), rel=1e-12)

    def test_two_state_generator(self) -> None:
        result = expm(Q2)
        expected = np.array([[0.683262, 0.316738], [0.633475, 0.366525]])
        assert np.max(np.abs(result - expected)) < 1e-5
        assert np.max(np.abs(result - two_state_closed_form(1.0, 2.0, 1.0))) < 1e-12
        assert np.max(np.abs(result - taylor_expm(Q2))) < 1e-12

    @pytest.mark.parametrize("n", [2, 3, 5, 8])
    def test_matches_taylor_oracle(self, n: int) -> None:
        rng = np.random.default_rng(n)
        for _ in range(10):
            q = random_generator(rng, n)
            assert np.max(np.abs(expm(q) - taylor_expm(q))) < 1e-9

    def test_generator_exponential_is_stochastic(self) -> None:
        rng = np.random.default_rng(1)
        for _ in range(20):
            q = random_generator(rng, int(rng.integers(2, 9)))
            gamma = expm(q * rng.uniform(0.0, 5.0))
            assert np.all(gamma >= 0.0)
            assert np.max(np.abs(gamma.sum(axis=1) - 1.0)) < 1e-10

    def test_semigroup(self) -> None:
        rng = np.random.default_rng(2)
        for _ in range(20):
            q = random_generator(rng, int(rng.integers(2, 6)))
            radius = np.max(np.abs(np.linalg.eigvals(q)))
            q = q * min(1.0, 10.0 / radius)
            s, t = rng.uniform(0.0, 2.0, size=2)
            assert np.max(np.abs(expm(q * (s + t)) - expm(q * s) @ expm(q * t))) < 1e-9

    @pytest.mark.parametrize(
        "matrix",
        [np.ones((2, 3)), np.array([[0.0, np.nan], [0.0, 0.0]]), np.ones(3)],
    )
    def test_invalid_input(self, matrix: np.ndarray) -> None:
        with pytest.raises(InvalidArgumentError):
            expm(matrix)


class TestStationaryDiscrete:
    @pytest.mark.parametrize(
        ("gamma", "expected"),
        [
            ([[0.0, 1.0], [1.0, 0.0]], [0.5, 0.5]),
            ([[0.9, 0.1], [0.2, 0.8]], [2.0 / 3.0, 1.0 / 3.0]),
        ],
    )
    def test_examples(self, gamma: list[list[float]], expected: list[float]) -> None:
        assert stationary_discrete(gamma) == pytest.approx(expected, abs=1e-12)

    def test_identity_is_not_unique(self) -> None:
        with pytest.raises(NonUniqueStationaryError):
            stationary_discrete(np.eye(2))

    def test_random_residuals(self) -> None:
        rng = np.random.default_rng(3)
        for _ in range(100):
            n = int(rng.integers(2, 7))
            gamma = rng.dirichlet(np.ones(n), size=n)
            delta = stationary_discrete(gamma)
            assert np.max(np.abs(delta @ gamma - delta)) <= 1e-10
            assert delta.sum() == pytest.approx(1.0, abs=1e-12)


class TestStationaryContinuous:
    def test_two_state(self) -> None:
        assert stationary_continuous(Q2) == pytest.approx([2.0 / 3.0, 1.0 / 3.0])

    def test_single_state(self) -> None:
        assert stationary_continuous([[0.0]]) == pytest.approx([1.0])

    def test_zero_generator_is_not_unique(self) -> None:
        with pytest.raises(NonUniqueStationaryError):
            stationary_continuous(np.zeros((2, 2)))

    def test_random_residuals_and_discrete_agreement(self) -> None:
        rng = np.random.default_rng(4)
        for _ in range(100):
            q = random_generator(rng, int(rng.integers(2, 7)))
            delta = stationary_continuous(q)
            assert np.max(np.abs(delta @ q)) <= 1e-10
            assert np.max(np.abs(stationary_discrete(expm(q)) - delta)) <= 1e-8


class TestTpmFromEta:
    def test_zero_predictors_are_uniform(self) -> None:
        assert tpm_from_eta(np.zeros((3, 3))) == pytest.approx(np.full((3, 3), 1 / 3))

    def test_log_three(self) -> None:
        gamma = tpm_from_eta([[0.0, np.log(3.0)], [0.0, 0.0]])
        assert gamma[0] == pytest.approx([0.25, 0.75])

    def test_saturation_without_overflow(self) -> None:
        gamma = tpm_from_eta([[0.0, 1000.0], [0.0, 0.0]])
        assert np.all(np.isfinite(gamma))
        assert gamma[0] == pytest.approx([0.0, 1.0])

    def test_nonzero_diagonal(self) -> None:
        with pytest.raises(InvalidArgumentError):
            tpm_from_eta([[0.1, 0.0], [0.0, 0.0]])

    def test_stack(self) -> None:
        eta = np.zeros((4, 2, 2))
        eta[:, 0, 1] = np.log(3.0)
        assert tpm_from_eta(eta)[:, 0, :] == pytest.approx(
            np.tile([0.25, 0.75], (4, 1))
        )

    def test_row_shift_invariance(self) -> None:
        rng = np.random.default_rng(5)
        row = rng.normal(size=4)
        assert special.softmax(row + 7.3) == pytest.approx(
            special.softmax(row), abs=1e-12
        )


def test_mean_sojourn_times() -> None:
    assert mean_sojourn_times(Q2) == pytest.approx([1.0, 0.5])
    absorbing = np.array([[-1.0, 1.0], [0.0, 0.0]])
    assert mean_sojourn_times(absorbing)[1] == np.inf
