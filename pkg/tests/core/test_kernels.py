import numpy as np
import pytest
from scipy import integrate

from latent_chain.core.base import GeneratorMask, Grid, OUParams
from latent_chain.core.errors import InvalidArgumentError
from latent_chain.core.kernels import (
    KernelSequence,
    cox_generator,
    cox_rates,
    generator_from_params,
    hmm_tpm_sequence,
    omega_cthmm,
    omega_cthmm_sequence,
    omega_mmpp,
    trig_design,
)
from latent_chain.core.linalg import expm

Q2 = np.array([[-1.0, 1.0], [2.0, -2.0]])


def random_generator(rng: np.random.Generator, n: int) -> np.ndarray:
    q = rng.uniform(0.1, 2.0, size=(n, n))
    np.fill_diagonal(q, 0.0)
    np.fill_diagonal(q, -q.sum(axis=1))
    return q


@pytest.fixture
def fev_mask() -> GeneratorMask:
    return GeneratorMask(
        structural_zeros=[
            [False, False, False],
            [True, False, False],
            [True, True, True],
        ]
    )


class TestGeneratorFromParams:
    def test_fev_structure(self, fev_mask: GeneratorMask) -> None:
        q = generator_from_params(fev_mask, np.zeros(3))
        expected = np.array([[-2.0, 1.0, 1.0], [0.0, -1.0, 1.0], [0.0, 0.0, 0.0]])
        assert np.array_equal(q, expected)

    def test_all_masked(self) -> None:
        mask = GeneratorMask(structural_zeros=[[True, True], [True, True]])
        assert np.array_equal(generator_from_params(mask, []), np.zeros((2, 2)))

    def test_full_two_state(self) -> None:
        q = generator_from_params(GeneratorMask.full(2), [np.log(1.0), np.log(2.0)])
        assert q == pytest.approx(Q2, abs=1e-15)

    def test_length_mismatch(self, fev_mask: GeneratorMask) -> None:
        with pytest.raises(InvalidArgumentError):
            generator_from_params(fev_mask, np.zeros(2))

    def test_rows_sum_to_zero_exactly(self) -> None:
        rng = np.random.default_rng(0)
        mask = GeneratorMask.full(4)
        q = generator_from_params(mask, rng.normal(size=12))
        assert np.all(np.abs(q.sum(axis=1)) <= 1e-15 * np.abs(np.diag(q)).max() * 4)


class TestOmegaCTHMM:
    def test_zero_interval(self) -> None:
        assert np.array_equal(omega_cthmm(Q2, 0.0), np.eye(2))

    def test_unit_interval(self) -> None:
        expected = np.array([[0.683262, 0.316738], [0.633475, 0.366525]])
        assert np.max(np.abs(omega_cthmm(Q2, 1.0) - expected)) < 1e-5

    def test_negative_interval(self) -> None:
        with pytest.raises(InvalidArgumentError):
            omega_cthmm(Q2, -0.1)

    def test_stochastic_and_semigroup(self) -> None:
        rng = np.random.default_rng(1)
        for _ in range(20):
            q = random_generator(rng, int(rng.integers(2, 5)))
            s, t = rng.uniform(0.0, 2.5, size=2)
            gamma = omega_cthmm(q, s + t)
            assert np.max(np.abs(gamma.sum(axis=1) - 1.0)) < 1e-10
            assert np.max(np.abs(gamma - omega_cthmm(q, s) @ omega_cthmm(q, t))) < 1e-9

    def test_sequence_shares_kernels(self) -> None:
        kernels = omega_cthmm_sequence(Q2, [1.0, 0.5, 1.0, 1.0])
        assert len(kernels) == 4
        assert kernels.n_distinct == 2
        assert kernels[0] is kernels[2]
        assert np.array_equal(kernels[1], omega_cthmm(Q2, 0.5))
        assert isinstance(kernels[1:], KernelSequence)
        assert len(kernels[1:]) == 3


class TestOmegaMMPP:
    def test_single_state_is_exponential_density(self) -> None:
        omega = omega_mmpp([[0.0]], [2.0], 0.7)
        assert omega[0, 0] == pytest.approx(2.0 * np.exp(-1.4), rel=1e-14)

    def test_single_state_integrates_to_one(self) -> None:
        total, _ = integrate.quad(
            lambda y: omega_mmpp([[0.0]], [1.5], y)[0, 0], 0.0, np.inf
        )
        assert total == pytest.approx(1.0, abs=1e-8)

    def test_common_rate_commutes(self) -> None:
        rng = np.random.default_rng(2)
        q = random_generator(rng, 3)
        omega = omega_mmpp(q, [1.3, 1.3, 1.3], 0.8)
        assert np.max(np.abs(omega - 1.3 * np.exp(-1.3 * 0.8) * expm(q * 0.8))) < 1e-10

    def test_row_sums_below_max_rate(self) -> None:
        rng = np.random.default_rng(3)
        for _ in range(20):
            n = int(rng.integers(2, 5))
            rates = rng.uniform(0.1, 3.0, size=n)
            omega = omega_mmpp(random_generator(rng, n), rates, rng.uniform(0.01, 3.0))
            assert np.all(omega >= 0.0)
            assert np.all(omega.sum(axis=1) < rates.max())

    def test_without_rate_factor(self) -> None:
        rates = np.array([2.0, 0.5])
        with_factor = omega_mmpp(Q2, rates, 0.4)
        without = omega_mmpp(Q2, rates, 0.4, with_rate_factor=False)
        assert with_factor == pytest.approx(without * rates[None, :], abs=1e-15)

    def test_lie_product_error_is_quadratic(self) -> None:
        rates = np.array([2.0, 0.3])

        def error(y: float) -> float:
            exact = omega_mmpp(Q2, rates, y, with_rate_factor=False)
            split = expm(Q2 * y) @ expm(-np.diag(rates) * y)
            return float(np.max(np.abs(exact - split)))

        ratio = error(0.02) / error(0.01)
        assert 3.5 < ratio < 4.5

    @pytest.mark.parametrize("y", [0.0, -1.0])
    def test_nonpositive_wait(self, y: float) -> None:
        with pytest.raises(InvalidArgumentError):
            omega_mmpp(Q2, [1.0, 1.0], y)


class TestHmmTpmSequence:
    def test_intercepts_only_is_homogeneous(self) -> None:
        beta = np.array([[-1.0], [-2.0]])
        gammas = hmm_tpm_sequence(beta, np.ones((5, 1)))
        assert np.max(np.abs(gammas - gammas[0])) == 0.0

    def test_zero_predictors(self) -> None:
        design, _ = trig_design(np.arange(10.0), period=24.0)
        gammas = hmm_tpm_sequence(np.zeros((2, 3)), design)
        assert gammas == pytest.approx(np.full((10, 2, 2), 0.5))

    def test_daily_periodicity(self) -> None:
        rng = np.random.default_rng(4)
        beta = rng.normal(size=(6, 3))
        hours = np.linspace(0.0, 24.0, 49)
        design, names = trig_design(np.concatenate([hours, hours + 24.0]), period=24.0)
        assert names == ["intercept", "sin", "cos"]
        gammas = hmm_tpm_sequence(beta, design)
        assert np.max(np.abs(gammas[:49] - gammas[49:])) < 1e-12

    def test_dimension_mismatch(self) -> None:
        with pytest.raises(InvalidArgumentError):
            hmm_tpm_sequence(np.zeros((2, 2)), np.ones((4, 3)))
        with pytest.raises(InvalidArgumentError):
            hmm_tpm_sequence(np.zeros((3, 1)), np.ones((4, 1)))

    def test_missing_intercept(self) -> None:
        with pytest.raises(InvalidArgumentError, match="intercept"):
            hmm_tpm_sequence(np.zeros((2, 1)), np.zeros((4, 1)))


def test_trig_design_extra_columns() -> None:
    design, names = trig_design([0.0, 6.0], extra={"temp": [1.5, 2.5]})
    assert names == ["intercept", "temp"]
    assert np.array_equal(design, [[1.0, 1.5], [1.0, 2.5]])


def test_cox_kernels() -> None:
    grid = Grid(b0=-2.0, bm=2.0, m=40)
    rates = cox_rates(grid, -1.0)
    assert rates == pytest.approx(np.exp(-1.0 + grid.midpoints))
    q = cox_generator(grid, OUParams(theta=1.0, sigma=1.0), 0.01)
    assert np.max(np.abs(q.sum(axis=1))) < 1e-9
