import numpy as np
import pytest
from scipy import linalg, stats

from latent_chain.core.base import (
    EmissionFamily,
    EmissionKind,
    GeneratorMask,
    GridSpec,
    InitialMode,
    ModelClass,
    ModelSpec,
    ObservationSequence,
)
from latent_chain.core.errors import InvalidArgumentError
from latent_chain.fit.cthmm import CTHMMModel
from latent_chain.fit.factory import MODEL_TYPES, build_model
from latent_chain.fit.hmm import HMMModel
from latent_chain.fit.mmpp import CoxOUMMPPModel, MMPPModel
from latent_chain.fit.ssm import SSMModel


def normal_family(mean: list[float], sd: list[float]) -> EmissionFamily:
    return EmissionFamily(
        kind=EmissionKind.NORMAL, column="y", params={"mean": mean, "sd": sd}
    )


@pytest.fixture
def fev_spec() -> ModelSpec:
    return ModelSpec(
        model_class=ModelClass.CTHMM,
        n_states=3,
        initial=InitialMode.ESTIMATED,
        fixed=["delta"],
        generator_mask=GeneratorMask(
            structural_zeros=[
                [False, False, False],
                [True, False, False],
                [True, True, False],
            ]
        ),
        emission=EmissionFamily(
            kind=EmissionKind.PRODUCT,
            components=[
                EmissionFamily(
                    kind=EmissionKind.NORMAL,
                    column="fev",
                    states=[1, 2],
                    params={"mean": [100.0, 70.0], "sd": [10.0, 15.0]},
                    mean_covariates={"acute": [-10.0, -4.0]},
                ),
                EmissionFamily(
                    kind=EmissionKind.DEGENERATE_INDICATOR,
                    column="death",
                    indicator_states=[3],
                ),
            ],
        ),
    )


def test_every_model_class_has_a_model() -> None:
    assert set(MODEL_TYPES) == set(ModelClass)


class TestHMMModel:
    def test_single_state_is_iid(self) -> None:
        spec = ModelSpec(
            model_class=ModelClass.HMM,
            n_states=1,
            emission=normal_family([2.0], [1.5]),
        )
        model, params = build_model(spec)
        y = np.array([1.0, 2.5, 4.0, -0.5])
        seq = ObservationSequence("a", np.arange(4.0), {"y": y})
        expected = stats.norm.logpdf(y, 2.0, 1.5).sum()
        assert model.log_likelihood(params, [seq]) == pytest.approx(expected, abs=1e-12)

    def test_sequences_add_up(self) -> None:
        spec = ModelSpec(
            model_class=ModelClass.HMM,
            n_states=2,
            emission=normal_family([0.0, 3.0], [1.0, 1.0]),
        )
        model, params = build_model(spec)
        a = ObservationSequence("a", np.arange(3.0), {"y": np.array([0.1, 2.9, 3.1])})
        b = ObservationSequence("b", np.arange(2.0), {"y": np.array([-0.4, 0.2])})
        total = model.log_likelihood(params, [a, b])
        assert total == pytest.approx(
            model.log_likelihood(params, [a]) + model.log_likelihood(params, [b])
        )
        assert model.n_observations([a, b]) == 5

    def test_initial_values_are_checked(self) -> None:
        spec = ModelSpec(
            model_class=ModelClass.HMM,
            n_states=2,
            emission=normal_family([0.0, 3.0], [1.0, 1.0]),
        )
        model = HMMModel(spec)
        with pytest.raises(InvalidArgumentError, match="Unknown"):
            model.initial_parameters({"state.phi": 0.5})
        with pytest.raises(InvalidArgumentError, match="shape"):
            model.initial_parameters({"tpm": [0.5, 0.5]})

    def test_time_of_day_predictors(self) -> None:
        spec = ModelSpec(
            model_class=ModelClass.HMM,
            n_states=2,
            tod_period=24.0,
            emission=normal_family([0.0, 3.0], [1.0, 1.0]),
        )
        model, params = build_model(spec)
        assert params["tpm_beta"].shape == (2, 3)
        times = np.arange(48.0)
        gammas = model.tpm_stack(params, times, {})
        assert gammas.shape == (48, 2, 2)
        assert gammas.sum(axis=2) == pytest.approx(np.ones((48, 2)))
        # only intercepts: every hour has the default persistent matrix
        np.testing.assert_allclose(gammas[5], [[0.9, 0.1], [0.1, 0.9]])

        beta = params["tpm_beta"].copy()
        beta[:, 1] = 1.0
        varying = dict(params, tpm_beta=beta)
        gammas = model.tpm_stack(varying, times, {})
        assert gammas[6] == pytest.approx(gammas[30])
        assert not np.allclose(gammas[6], gammas[18])
        seq = ObservationSequence("a", times[:6], {"y": np.zeros(6)})
        assert model.next_omega(varying, seq, 1.0) == pytest.approx(gammas[6])

    def test_predictors_need_two_states(self) -> None:
        spec = ModelSpec(
            model_class=ModelClass.HMM,
            n_states=1,
            tpm_covariates=["x"],
            emission=normal_family([0.0], [1.0]),
        )
        with pytest.raises(InvalidArgumentError):
            HMMModel(spec)

    def test_missing_covariate(self) -> None:
        spec = ModelSpec(
            model_class=ModelClass.HMM,
            n_states=2,
            tpm_covariates=["x"],
            emission=normal_family([0.0, 3.0], [1.0, 1.0]),
        )
        model, params = build_model(spec)
        seq = ObservationSequence("a", np.arange(3.0), {"y": np.zeros(3)})
        with pytest.raises(InvalidArgumentError, match="x"):
            model.log_likelihood(params, [seq])

    def test_derived(self) -> None:
        spec = ModelSpec(
            model_class=ModelClass.HMM,
            n_states=2,
            emission=normal_family([0.0, 3.0], [1.0, 1.0]),
        )
        model, params = build_model(spec, {"tpm": [[0.8, 0.2], [0.4, 0.6]]})
        derived = model.derived(params)
        assert derived["mean_sojourn"] == pytest.approx([5.0, 2.5])
        assert derived["stationary"] == pytest.approx([2.0 / 3.0, 1.0 / 3.0])


class TestCTHMMModel:
    def test_fev_likelihood(self, fev_spec: ModelSpec) -> None:
        generator = np.array([[-0.25, 0.2, 0.05], [0.0, -0.3, 0.3], [0.0, 0.0, 0.0]])
        model, params = build_model(
            fev_spec, {"delta": [1.0, 0.0, 0.0], "generator": generator}
        )
        seq = ObservationSequence(
            "p1",
            np.array([0.0, 1.0, 2.5]),
            {
                "fev": np.array([95.0, 72.0, np.nan]),
                "acute": np.array([0.0, 1.0, 0.0]),
                "death": np.array([0.0, 0.0, 1.0]),
            },
        )
        p1 = np.diag(
            [stats.norm.pdf(95.0, 100.0, 10.0), stats.norm.pdf(95.0, 70.0, 15.0), 0.0]
        )
        p2 = np.diag(
            [stats.norm.pdf(72.0, 90.0, 10.0), stats.norm.pdf(72.0, 66.0, 15.0), 0.0]
        )
        p3 = np.diag([0.0, 0.0, 1.0])
        expected = (
            np.array([1.0, 0.0, 0.0])
            @ p1
            @ linalg.expm(generator * 1.0)
            @ p2
            @ linalg.expm(generator * 1.5)
            @ p3
        ).sum()
        assert model.log_likelihood(params, [seq]) == pytest.approx(
            np.log(expected), rel=1e-10
        )
        assert model.decode(params, seq).states[-1] == 2

    def test_structural_zeros_are_not_estimated(self, fev_spec: ModelSpec) -> None:
        model, params = build_model(fev_spec, {"delta": [1.0, 0.0, 0.0]})
        vector = model.transform(params)
        assert [b.name for b in vector.free_blocks][0] == "generator"
        assert vector.slices["generator"] == slice(0, 3)
        assert "delta" in vector.fixed

    def test_derived_sojourn_of_absorbing_state(self, fev_spec: ModelSpec) -> None:
        model, params = build_model(fev_spec, {"delta": [1.0, 0.0, 0.0]})
        assert isinstance(model, CTHMMModel)
        sojourn = model.derived(params)["mean_sojourn"]
        assert sojourn[:2] == pytest.approx([1.0, 2.0])
        assert np.isinf(sojourn[2])

    def test_negative_gap(self, fev_spec: ModelSpec) -> None:
        model, params = build_model(fev_spec, {"delta": [1.0, 0.0, 0.0]})
        seq = ObservationSequence(
            "p1",
            np.array([1.0, 0.0]),
            {"fev": np.array([95.0, 90.0]), "acute": np.zeros(2), "death": np.zeros(2)},
        )
        with pytest.raises(InvalidArgumentError):
            model.log_likelihood(params, [seq])


class TestMMPPModel:
    def test_single_state_is_exponential(self) -> None:
        spec = ModelSpec(model_class=ModelClass.MMPP, n_states=1)
        model, params = build_model(spec, {"rates": [1.7]})
        rng = np.random.default_rng(3)
        waits = rng.exponential(0.6, size=40)
        times = np.concatenate([[0.0], np.cumsum(waits)])
        seq = ObservationSequence("w", times)
        expected = stats.expon.logpdf(waits, scale=1.0 / 1.7).sum()
        assert model.log_likelihood(params, [seq]) == pytest.approx(expected, rel=1e-12)

    def test_zero_rate_state(self) -> None:
        spec = ModelSpec(model_class=ModelClass.MMPP, n_states=2, zero_rates=[2])
        model, params = build_model(spec)
        assert isinstance(model, MMPPModel)
        assert params["rates"] == pytest.approx([0.5, 0.0])
        vector = model.transform(params)
        assert vector.slices["rates"] == slice(2, 3)
        derived = model.derived(params)
        assert derived["mean_rate"] == pytest.approx([0.25])

    def test_simultaneous_events(self) -> None:
        spec = ModelSpec(model_class=ModelClass.MMPP, n_states=1)
        model, params = build_model(spec)
        seq = ObservationSequence("w", np.array([0.0, 1.0, 1.0]))
        with pytest.raises(InvalidArgumentError, match="strictly increasing"):
            model.log_likelihood(params, [seq])


class TestGridModels:
    def test_default_bounds_from_stationary_sd(self) -> None:
        spec = ModelSpec(
            model_class=ModelClass.SSM_AR1,
            grid=GridSpec(m=50),
            emission=normal_family([0.0], [1.0]),
        )
        model, params = build_model(spec, {"state.phi": 0.6, "state.sigma": 0.8})
        assert isinstance(model, SSMModel)
        grid = model.require_grid()
        assert (grid.b0, grid.bm) == pytest.approx((-3.5, 3.5))
        assert model.tpm(params).shape == (50, 50)
        assert model.derived(params)["stationary_sd"] == pytest.approx([1.0])

    def test_explicit_bounds(self) -> None:
        spec = ModelSpec(
            model_class=ModelClass.SSM_AR1,
            grid=GridSpec(m=20, b0=-2.0, bm=4.0),
            emission=normal_family([0.0], [1.0]),
        )
        model, params = build_model(spec)
        y = np.array([0.3, 0.5, 0.1])
        seq = ObservationSequence("a", np.arange(3.0), {"y": y})
        assert model.require_grid().bm == 4.0
        assert np.isfinite(model.log_likelihood(params, [seq]))

    def test_unresolved_grid(self) -> None:
        spec = ModelSpec(
            model_class=ModelClass.SSM_AR1,
            grid=GridSpec(m=20),
            emission=normal_family([0.0], [1.0]),
        )
        with pytest.raises(InvalidArgumentError, match="grid"):
            SSMModel(spec).require_grid()

    def test_cox_fixes_state_mean(self) -> None:
        spec = ModelSpec(
            model_class=ModelClass.COX_OU_MMPP, grid=GridSpec(m=10, b0=-2.0, bm=2.0)
        )
        model, params = build_model(spec, {"intensity.beta0": 0.5})
        assert isinstance(model, CoxOUMMPPModel)
        vector = model.transform(params)
        assert "state.mu" in vector.fixed
        assert vector.values.shape == (3,)
        midpoints = model.require_grid().midpoints
        assert model.rates(params) == pytest.approx(np.exp(0.5 + midpoints))
        q = model.generator(params)
        assert q.sum(axis=1) == pytest.approx(np.zeros(10), abs=1e-10)
