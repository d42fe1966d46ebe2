import numpy as np
import pytest
from pydantic import ValidationError

from latent_chain.core.base import (
    AR1Params,
    EmissionFamily,
    EmissionKind,
    GeneratorMask,
    Grid,
    ModelSpec,
    OUParams,
)


@pytest.fixture
def fev_family() -> EmissionFamily:
    return EmissionFamily(
        kind=EmissionKind.PRODUCT,
        components=[
            EmissionFamily(
                kind=EmissionKind.NORMAL,
                column="fev",
                params={"mean": [90.0, 60.0], "sd": [10.0, 10.0]},
                states=[1, 2],
                mean_covariates={"acute": [-5.0, -5.0]},
            ),
            EmissionFamily(
                kind=EmissionKind.DEGENERATE_INDICATOR,
                column="dead",
                indicator_states=[3],
            ),
        ],
    )


def test_grid_properties() -> None:
    grid = Grid(b0=-1.0, bm=1.0, m=2)
    assert grid.h == 1.0
    assert grid.midpoints == pytest.approx([-0.5, 0.5])


def test_grid_midpoints_reconstruct_bounds() -> None:
    grid = Grid(b0=-3.5, bm=3.5, m=200)
    assert grid.midpoints[0] - grid.h / 2 == pytest.approx(-3.5, abs=1e-12)
    assert grid.midpoints[-1] + grid.h / 2 == pytest.approx(3.5, abs=1e-12)
    assert np.all(np.diff(grid.midpoints) > 0)


@pytest.mark.parametrize(
    ("b0", "bm", "m"), [(1.0, 1.0, 4), (2.0, 1.0, 4), (0.0, 1.0, 1)]
)
def test_grid_invalid(b0: float, bm: float, m: int) -> None:
    with pytest.raises(ValidationError):
        Grid(b0=b0, bm=bm, m=m)


def test_state_process_params() -> None:
    sd = AR1Params(phi=0.888, sigma=0.554).stationary_sd
    assert sd == pytest.approx(1.204, abs=1e-3)
    assert OUParams(theta=0.5, sigma=1.0).stationary_sd == pytest.approx(1.0)
    with pytest.raises(ValidationError):
        AR1Params(phi=1.0, sigma=1.0)
    with pytest.raises(ValidationError):
        OUParams(theta=0.0, sigma=1.0)


class TestEmissionFamily:
    def test_parameter_names_checked(self) -> None:
        with pytest.raises(ValidationError, match="takes parameters"):
            EmissionFamily(kind=EmissionKind.NORMAL, column="x", params={"mean": [0.0]})

    @pytest.mark.parametrize(
        ("kind", "params"),
        [
            (EmissionKind.NORMAL, {"mean": [0.0], "sd": [0.0]}),
            (EmissionKind.GAMMA, {"shape": [-1.0], "scale": [1.0]}),
            (EmissionKind.VON_MISES, {"mu": [0.0], "kappa": [-0.1]}),
            (EmissionKind.BERNOULLI, {"prob": [1.5]}),
        ],
    )
    def test_parameter_domains(
        self, kind: EmissionKind, params: dict[str, list[float]]
    ) -> None:
        with pytest.raises(ValidationError):
            EmissionFamily(kind=kind, column="x", params=params)

    def test_product_needs_distinct_columns(self) -> None:
        leaf = EmissionFamily(
            kind=EmissionKind.POISSON, column="x", params={"rate": [1.0]}
        )
        with pytest.raises(ValidationError, match="distinct"):
            EmissionFamily(kind=EmissionKind.PRODUCT, components=[leaf, leaf])
        with pytest.raises(ValidationError, match="two components"):
            EmissionFamily(kind=EmissionKind.PRODUCT, components=[leaf])

    def test_states_must_match_parameter_length(self) -> None:
        with pytest.raises(ValidationError):
            EmissionFamily(
                kind=EmissionKind.POISSON,
                column="x",
                params={"rate": [1.0]},
                states=[1, 2],
            )

    def test_parameter_blocks_round_trip(self, fev_family: EmissionFamily) -> None:
        blocks = fev_family.parameter_blocks()
        assert set(blocks) == {
            "emission.0.mean",
            "emission.0.sd",
            "emission.0.mean_acute",
        }
        updated = fev_family.with_parameters(
            {"emission.0.mean": np.array([80.0, 50.0])}
        )
        assert updated.components[0].params["mean"] == [80.0, 50.0]
        assert updated.components[0].params["sd"] == [10.0, 10.0]
        assert updated.components[1] == fev_family.components[1]

    def test_columns(self, fev_family: EmissionFamily) -> None:
        assert fev_family.leaf_columns() == ["fev", "dead"]
        assert fev_family.covariate_columns() == ["acute"]


def test_generator_mask_free_cells() -> None:
    mask = GeneratorMask(
        structural_zeros=[
            [False, False, False],
            [True, False, False],
            [True, True, True],
        ]
    )
    assert mask.free_cells == [(0, 1), (0, 2), (1, 2)]
    assert GeneratorMask.full(2).free_cells == [(0, 1), (1, 0)]
    with pytest.raises(ValidationError):
        GeneratorMask(structural_zeros=[[False, False]])


class TestModelSpec:
    def test_hmm(self) -> None:
        spec = ModelSpec.model_validate(
            {
                "class": "hmm",
                "n_states": 2,
                "emission": {
                    "kind": "normal",
                    "column": "x",
                    "params": {"mean": [-2.0, 2.0], "sd": [1.0, 1.0]},
                },
            }
        )
        assert spec.n_discrete == 2
        assert not spec.uses_grid

    def test_grid_class_needs_grid(self) -> None:
        with pytest.raises(ValidationError, match="needs a grid"):
            ModelSpec.model_validate({"class": "ssm-ar1", "emission": None})

    def test_grid_m_validated(self) -> None:
        with pytest.raises(ValidationError, match=r"grid\.m"):
            ModelSpec.model_validate(
                {
                    "class": "ssm-ar1",
                    "grid": {"m": 1},
                    "emission": {
                        "kind": "sv-scaled-normal",
                        "column": "y",
                        "params": {"mu": [0.0], "beta": [1.0]},
                    },
                }
            )

    def test_emission_size_checked(self) -> None:
        with pytest.raises(ValidationError, match="expected 3"):
            ModelSpec.model_validate(
                {
                    "class": "hmm",
                    "n_states": 3,
                    "emission": {
                        "kind": "poisson",
                        "column": "x",
                        "params": {"rate": [1.0, 2.0]},
                    },
                }
            )

    def test_mmpp_has_no_marks(self) -> None:
        spec = ModelSpec.model_validate(
            {"class": "mmpp", "n_states": 2, "zero_rates": [2]}
        )
        assert spec.is_point_process
        with pytest.raises(ValidationError, match="positive event rate"):
            ModelSpec.model_validate(
                {"class": "mmpp", "n_states": 1, "zero_rates": [1]}
            )
