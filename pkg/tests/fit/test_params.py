import numpy as np
import pytest

from latent_chain.core.errors import InvalidArgumentError
from latent_chain.fit.params import (
    Constraint,
    ParamBlock,
    ParamVector,
    transform,
    untransform,
)


@pytest.fixture
def fev_support() -> np.ndarray:
    return np.array(
        [
            [False, True, True],
            [False, False, True],
            [False, False, False],
        ]
    )


class TestParamBlock:
    @pytest.mark.parametrize(
        ("constraint", "natural", "unconstrained"),
        [
            (Constraint.REAL, [-1.5], [-1.5]),
            (Constraint.POSITIVE, [1.0], [0.0]),
            (Constraint.SIGNED_UNIT, [0.0], [0.0]),
            (Constraint.UNIT, [0.5], [0.0]),
        ],
    )
    def test_scalar_maps(
        self, constraint: Constraint, natural: list[float], unconstrained: list[float]
    ) -> None:
        block = ParamBlock("x", (1,), constraint)
        assert block.to_unconstrained(natural) == pytest.approx(unconstrained)
        assert block.to_natural(unconstrained) == pytest.approx(natural)

    def test_tpm_uses_off_diagonal_log_ratios(self) -> None:
        block = ParamBlock("tpm", (2, 2), Constraint.TPM)
        gamma = np.array([[0.8, 0.2], [0.4, 0.6]])
        eta = block.to_unconstrained(gamma)
        assert block.size == 2
        assert eta == pytest.approx([np.log(0.25), np.log(0.4 / 0.6)])
        assert block.to_natural(eta) == pytest.approx(gamma)

    def test_tpm_single_state_has_no_free_values(self) -> None:
        block = ParamBlock("tpm", (1, 1), Constraint.TPM)
        assert block.size == 0
        np.testing.assert_allclose(block.to_natural([]), [[1.0]])

    def test_simplex(self) -> None:
        block = ParamBlock("delta", (3,), Constraint.SIMPLEX)
        natural = block.to_natural([0.0, np.log(2.0)])
        assert natural == pytest.approx([0.25, 0.25, 0.5])

    def test_generator_keeps_structural_zeros(self, fev_support: np.ndarray) -> None:
        block = ParamBlock("generator", (3, 3), Constraint.GENERATOR, fev_support)
        assert block.size == 3
        q = block.to_natural([0.0, 0.0, 0.0])
        np.testing.assert_allclose(
            q, [[-2.0, 1.0, 1.0], [0.0, -1.0, 1.0], [0.0, 0.0, 0.0]]
        )

    def test_generator_rejects_masked_rates(self, fev_support: np.ndarray) -> None:
        block = ParamBlock("generator", (3, 3), Constraint.GENERATOR, fev_support)
        q = np.array([[-2.0, 1.0, 1.0], [0.5, -1.5, 1.0], [0.0, 0.0, 0.0]])
        with pytest.raises(InvalidArgumentError, match="generator"):
            block.to_unconstrained(q)

    def test_rates_hold_zero_states(self) -> None:
        block = ParamBlock("rates", (2,), Constraint.RATES, np.array([True, False]))
        assert block.size == 1
        assert block.to_natural([np.log(2.0)]) == pytest.approx([2.0, 0.0])

    @pytest.mark.parametrize(
        ("constraint", "value"),
        [
            (Constraint.POSITIVE, [0.0]),
            (Constraint.SIGNED_UNIT, [1.0]),
            (Constraint.UNIT, [1.0]),
            (Constraint.REAL, [np.nan]),
        ],
    )
    def test_out_of_domain(self, constraint: Constraint, value: list[float]) -> None:
        with pytest.raises(InvalidArgumentError):
            ParamBlock("x", (1,), constraint).to_unconstrained(value)

    def test_angle_wraps(self) -> None:
        block = ParamBlock("mu", (1,), Constraint.ANGLE)
        assert block.to_natural([2.0 * np.pi + 0.5]) == pytest.approx([0.5])


class TestTransform:
    @pytest.fixture
    def blocks(self) -> list[ParamBlock]:
        return [
            ParamBlock("tpm", (2, 2), Constraint.TPM),
            ParamBlock("delta", (2,), Constraint.SIMPLEX),
            ParamBlock("emission.sd", (2,), Constraint.POSITIVE),
        ]

    @pytest.fixture
    def natural(self) -> dict[str, list]:
        return {
            "tpm": [[0.9, 0.1], [0.2, 0.8]],
            "delta": [1.0, 0.0],
            "emission.sd": [1.0, 2.0],
        }

    def test_fixed_blocks_may_sit_on_the_boundary(
        self, blocks: list[ParamBlock], natural: dict[str, list]
    ) -> None:
        vector = transform(blocks, natural, fixed=["delta"])
        assert vector.values.shape == (4,)
        assert vector.labels == ["tpm[0]", "tpm[1]", "emission.sd[0]", "emission.sd[1]"]
        restored = untransform(vector)
        assert list(restored) == ["tpm", "delta", "emission.sd"]
        assert restored["delta"] == pytest.approx([1.0, 0.0])
        np.testing.assert_allclose(restored["tpm"], natural["tpm"])

    def test_free_boundary_value_is_rejected(
        self, blocks: list[ParamBlock], natural: dict[str, list]
    ) -> None:
        with pytest.raises(InvalidArgumentError, match="delta"):
            transform(blocks, natural)

    def test_unknown_fixed_block(
        self, blocks: list[ParamBlock], natural: dict[str, list]
    ) -> None:
        with pytest.raises(InvalidArgumentError, match="Unknown"):
            transform(blocks, natural, fixed=["state.mu"])

    def test_missing_block(self, blocks: list[ParamBlock]) -> None:
        with pytest.raises(InvalidArgumentError, match="Missing"):
            transform(blocks, {"tpm": [[0.9, 0.1], [0.2, 0.8]]})

    def test_wrong_shape(
        self, blocks: list[ParamBlock], natural: dict[str, list]
    ) -> None:
        natural["emission.sd"] = [1.0, 2.0, 3.0]
        with pytest.raises(InvalidArgumentError, match="shape"):
            transform(blocks, natural, fixed=["delta"])

    def test_vector_length_is_checked(self, blocks: list[ParamBlock]) -> None:
        with pytest.raises(InvalidArgumentError):
            ParamVector(tuple(blocks), np.zeros(3))


def _random_block(
    constraint: Constraint, rng: np.random.Generator
) -> tuple[ParamBlock, np.ndarray]:
    name = constraint.value
    if constraint == Constraint.REAL:
        return ParamBlock(name, (3,), constraint), rng.normal(0.0, 3.0, 3)
    if constraint == Constraint.POSITIVE:
        return ParamBlock(name, (3,), constraint), np.exp(rng.normal(0.0, 2.0, 3))
    if constraint == Constraint.SIGNED_UNIT:
        return ParamBlock(name, (3,), constraint), rng.uniform(-0.99, 0.99, 3)
    if constraint == Constraint.UNIT:
        return ParamBlock(name, (3,), constraint), rng.uniform(0.01, 0.99, 3)
    if constraint == Constraint.ANGLE:
        return ParamBlock(name, (3,), constraint), rng.uniform(-3.1, np.pi, 3)
    if constraint == Constraint.TPM:
        return ParamBlock(name, (3, 3), constraint), rng.dirichlet([2.0] * 3, 3)
    if constraint == Constraint.SIMPLEX:
        return ParamBlock(name, (4,), constraint), rng.dirichlet([2.0] * 4)
    if constraint == Constraint.GENERATOR:
        support = np.array([[False, True, True], [True, False, True], [False] * 3])
        q = np.where(support, rng.exponential(1.0, (3, 3)), 0.0)
        np.fill_diagonal(q, -q.sum(axis=1))
        return ParamBlock(name, (3, 3), constraint, support), q
    support = np.array([True, False, True])
    rates = np.where(support, rng.exponential(2.0, 3), 0.0)
    return ParamBlock(name, (3,), constraint, support), rates


class TestRoundTrip:
    @pytest.mark.parametrize("seed", range(5))
    @pytest.mark.parametrize("constraint", list(Constraint))
    def test_block_round_trip(self, constraint: Constraint, seed: int) -> None:
        rng = np.random.default_rng(seed)
        block, natural = _random_block(constraint, rng)
        values = block.to_unconstrained(natural)
        assert values.shape == (block.size,)
        np.testing.assert_allclose(
            block.to_natural(values), natural, rtol=1e-10, atol=1e-12
        )
        np.testing.assert_allclose(
            block.to_unconstrained(block.to_natural(values)),
            values,
            rtol=1e-8,
            atol=1e-10,
        )

    @pytest.mark.parametrize("seed", range(5))
    def test_vector_round_trip(self, seed: int) -> None:
        rng = np.random.default_rng(seed)
        drawn = [_random_block(constraint, rng) for constraint in Constraint]
        blocks = [block for block, _ in drawn]
        natural = {block.name: value for block, value in drawn}
        vector = transform(blocks, natural)
        assert vector.values.shape == (sum(block.size for block in blocks),)
        restored = untransform(vector)
        assert list(restored) == [block.name for block in blocks]
        for name, value in natural.items():
            np.testing.assert_allclose(restored[name], value, rtol=1e-10, atol=1e-12)
