from collections.abc import Mapping
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

FloatArray = NDArray[np.float64]


class Grid(BaseModel):
    """
    Represents an equidistant discretization of a continuous state space.

    The range ``[b0, bm]`` is split into ``m`` intervals of width ``h``; the
    midpoints stand in for the continuous state values.

    Attributes:
        b0 (float):
            The lower bound of the range.
        bm (float):
            The upper bound of the range.
        m (int):
            The number of intervals.

    """

    model_config = ConfigDict(frozen=True)

    b0: float = Field(description="The lower bound of the state range.")
    bm: float = Field(description="The upper bound of the state range.")
    m: int = Field(ge=2, description="The number of intervals.")

    @model_validator(mode="after")
    def _validate_bounds(self) -> "Grid":
        if not self.b0 < self.bm:
            msg = f"Grid bounds must satisfy b0 < bm, got b0={self.b0}, bm={self.bm}."
            raise ValueError(msg)
        return self

    @property
    def h(self) -> float:
        """The common interval width."""
        return (self.bm - self.b0) / self.m

    @property
    def midpoints(self) -> FloatArray:
        """The interval midpoints ``b_i* = b0 + (i - 1/2) h``."""
        return self.b0 + (np.arange(self.m, dtype=np.float64) + 0.5) * self.h

    def __str__(self) -> str:
        return f"Grid(b0={self.b0}, bm={self.bm}, m={self.m}, h={self.h})"

    def __repr__(self) -> str:
        return self.__str__()


class AR1Params(BaseModel):
    """
    Parameters of a Gaussian AR(1) state process
    ``S_t = phi (S_{t-1} - mu) + mu + sigma eps_t``.
    """

    model_config = ConfigDict(frozen=True)

    phi: float = Field(gt=-1.0, lt=1.0, description="The persistence parameter.")
    mu: float = Field(default=0.0, description="The long-term mean.")
    sigma: float = Field(gt=0.0, description="The innovation standard deviation.")

    @property
    def stationary_sd(self) -> float:
        """The standard deviation of the stationary distribution."""
        return float(self.sigma / np.sqrt(1.0 - self.phi**2))


class OUParams(BaseModel):
    """
    Parameters of an Ornstein-Uhlenbeck process
    ``dS_t = theta (mu - S_t) dt + sigma dW_t``.

    ``sigma = 0`` is accepted so that noiseless paths can be simulated; the
    discretized transition kernels require ``sigma > 0``.
    """

    model_config = ConfigDict(frozen=True)

    theta: float = Field(gt=0.0, description="The mean-reversion rate.")
    mu: float = Field(default=0.0, description="The long-term mean.")
    sigma: float = Field(ge=0.0, description="The diffusion coefficient.")

    @property
    def stationary_sd(self) -> float:
        """The standard deviation of the stationary N(mu, sigma^2 / (2 theta))."""
        return float(self.sigma / np.sqrt(2.0 * self.theta))


class EmissionKind(str, Enum):
    NORMAL = "normal"
    GAMMA = "gamma"
    VON_MISES = "von-mises"
    POISSON = "poisson"
    BERNOULLI = "bernoulli"
    BERNOULLI_STATE_OFFSET = "bernoulli-state-offset"
    SV_SCALED_NORMAL = "sv-scaled-normal"
    DEGENERATE_INDICATOR = "degenerate-indicator"
    PRODUCT = "product"


# Natural parameter names of every family, in packing order.
EMISSION_PARAMETERS: dict[EmissionKind, tuple[str, ...]] = {
    EmissionKind.NORMAL: ("mean", "sd"),
    EmissionKind.GAMMA: ("shape", "scale"),
    EmissionKind.VON_MISES: ("mu", "kappa"),
    EmissionKind.POISSON: ("rate",),
    EmissionKind.BERNOULLI: ("prob",),
    EmissionKind.BERNOULLI_STATE_OFFSET: ("beta0",),
    EmissionKind.SV_SCALED_NORMAL: ("mu", "beta"),
    EmissionKind.DEGENERATE_INDICATOR: (),
    EmissionKind.PRODUCT: (),
}

POSITIVE_PARAMETERS = frozenset({"sd", "shape", "scale", "rate", "beta"})
NONNEGATIVE_PARAMETERS = frozenset({"kappa"})
UNIT_PARAMETERS = frozenset({"prob"})

# Families that can be evaluated at a continuous (grid midpoint) state value.
STATE_VALUE_KINDS = frozenset(
    {
        EmissionKind.NORMAL,
        EmissionKind.SV_SCALED_NORMAL,
        EmissionKind.BERNOULLI_STATE_OFFSET,
        EmissionKind.PRODUCT,
    }
)


class EmissionFamily(BaseModel):
    """
    Represents a state-dependent observation distribution.

    Each parameter holds one value per state the family applies to. For models
    with a continuous (discretized) state, every parameter holds a single
    shared value and the state value enters the family directly.

    Attributes:
        kind (EmissionKind):
            The distribution family.
        column (str | None):
            The observation column the family is evaluated on. Unused by the
            product family.
        params (dict[str, list[float]]):
            The per-state parameter values in natural units.
        states (list[int] | None):
            The 1-based states the family applies to. Other states contribute
            density 1. ``None`` means all states.
        mean_covariates (dict[str, list[float]]):
            Normal family only: per-state coefficients of covariate columns
            added to the state mean.
        indicator_states (list[int]):
            Degenerate-indicator family only: the 1-based states tied to the
            event marker.
        components (list[EmissionFamily]):
            Product family only: the families combined under contemporaneous
            conditional independence.

    """

    model_config = ConfigDict(frozen=True)

    kind: EmissionKind = Field(description="The distribution family.")
    column: str | None = Field(
        default=None,
        description="The observation column the family is evaluated on.",
    )
    params: dict[str, list[float]] = Field(
        default_factory=dict,
        description="The per-state parameter values in natural units.",
    )
    states: list[int] | None = Field(
        default=None,
        description="The 1-based states the family applies to.",
    )
    mean_covariates: dict[str, list[float]] = Field(
        default_factory=dict,
        description="Per-state linear-mean coefficients of covariate columns.",
    )
    indicator_states: list[int] = Field(
        default_factory=list,
        description="The 1-based states tied to the event marker.",
    )
    components: list["EmissionFamily"] = Field(
        default_factory=list,
        description="The component families of a product family.",
    )

    @field_validator("states", "indicator_states", mode="after")
    def _validate_state_labels(cls, labels: list[int] | None) -> list[int] | None:
        if labels is None:
            return labels
        if any(label < 1 for label in labels):
            msg = f"State labels are 1-based, got {labels}."
            raise ValueError(msg)
        if len(set(labels)) != len(labels):
            msg = f"State labels must be unique, got {labels}."
            raise ValueError(msg)
        return labels

    @model_validator(mode="after")
    def _validate_family(self) -> "EmissionFamily":
        if self.kind == EmissionKind.PRODUCT:
            if len(self.components) < 2:
                msg = "A product family needs at least two components."
                raise ValueError(msg)
            columns = self.leaf_columns()
            if len(set(columns)) != len(columns):
                msg = f"Product components must use distinct columns, got {columns}."
                raise ValueError(msg)
            return self

        if self.components:
            msg = f"Only product families take components, not {self.kind.value}."
            raise ValueError(msg)
        if not self.column:
            msg = f"The {self.kind.value} family needs an observation column."
            raise ValueError(msg)

        expected = set(EMISSION_PARAMETERS[self.kind])
        if set(self.params) != expected:
            msg = (
                f"The {self.kind.value} family takes parameters "
                f"{sorted(expected)}, got {sorted(self.params)}."
            )
            raise ValueError(msg)
        if self.mean_covariates and self.kind != EmissionKind.NORMAL:
            msg = "Covariate effects on the mean are only supported for normal."
            raise ValueError(msg)
        if self.indicator_states and self.kind != EmissionKind.DEGENERATE_INDICATOR:
            msg = "indicator_states only applies to the degenerate-indicator family."
            raise ValueError(msg)

        lengths = {len(v) for v in self.params.values()}
        lengths |= {len(v) for v in self.mean_covariates.values()}
        if len(lengths) > 1:
            msg = f"All parameters of a family need the same length, got {lengths}."
            raise ValueError(msg)
        if lengths and self.states is not None and lengths != {len(self.states)}:
            msg = (
                f"Parameters hold {lengths.pop()} values but the family applies "
                f"to {len(self.states)} states."
            )
            raise ValueError(msg)

        for name, values in self.params.items():
            arr = np.asarray(values, dtype=np.float64)
            if not np.all(np.isfinite(arr)):
                msg = f"Parameter {name} must be finite, got {values}."
                raise ValueError(msg)
            if name in POSITIVE_PARAMETERS and np.any(arr <= 0):
                msg = f"Parameter {name} must be strictly positive, got {values}."
                raise ValueError(msg)
            if name in NONNEGATIVE_PARAMETERS and np.any(arr < 0):
                msg = f"Parameter {name} must be nonnegative, got {values}."
                raise ValueError(msg)
            if name in UNIT_PARAMETERS and np.any((arr < 0) | (arr > 1)):
                msg = f"Parameter {name} must lie in [0, 1], got {values}."
                raise ValueError(msg)
        return self

    @property
    def param_length(self) -> int | None:
        """The number of values per parameter, ``None`` if parameter-free."""
        for values in self.params.values():
            return len(values)
        return None

    def leaf_columns(self) -> list[str]:
        """
        Lists the observation columns used by the family and its components.

        Returns:
            list[str]:
                The columns, in component order.

        """
        if self.kind == EmissionKind.PRODUCT:
            return [c for comp in self.components for c in comp.leaf_columns()]
        return [self.column] if self.column else []

    def covariate_columns(self) -> list[str]:
        """
        Lists the covariate columns used by linear-mean options.

        Returns:
            list[str]:
                The covariate columns.

        """
        if self.kind == EmissionKind.PRODUCT:
            return [c for comp in self.components for c in comp.covariate_columns()]
        return list(self.mean_covariates)

    def parameter_blocks(self, prefix: str = "emission") -> dict[str, FloatArray]:
        """
        Extracts the natural parameters as named arrays.

        Product components are prefixed with their index, linear-mean
        coefficients are named ``mean_<column>``.

        Args:
            prefix (str):
                The block name prefix.

        Returns:
            dict[str, FloatArray]:
                The parameter arrays keyed by block name.

        """
        if self.kind == EmissionKind.PRODUCT:
            blocks: dict[str, FloatArray] = {}
            for k, comp in enumerate(self.components):
                blocks.update(comp.parameter_blocks(f"{prefix}.{k}"))
            return blocks
        blocks = {
            f"{prefix}.{name}": np.asarray(self.params[name], dtype=np.float64)
            for name in EMISSION_PARAMETERS[self.kind]
        }
        for cov, coefs in self.mean_covariates.items():
            blocks[f"{prefix}.mean_{cov}"] = np.asarray(coefs, dtype=np.float64)
        return blocks

    def with_parameters(
        self, values: Mapping[str, Any], prefix: str = "emission"
    ) -> "EmissionFamily":
        """
        Returns a copy of the family with parameters taken from ``values``.

        Blocks missing from ``values`` keep their current values.

        Args:
            values (Mapping[str, Any]):
                Parameter arrays keyed by block name.
            prefix (str):
                The block name prefix.

        Returns:
            EmissionFamily:
                The updated family.

        """
        if self.kind == EmissionKind.PRODUCT:
            components = [
                comp.with_parameters(values, f"{prefix}.{k}")
                for k, comp in enumerate(self.components)
            ]
            return self.model_copy(update={"components": components})
        params = {
            name: _as_list(values.get(f"{prefix}.{name}", self.params[name]))
            for name in self.params
        }
        mean_covariates = {
            cov: _as_list(values.get(f"{prefix}.mean_{cov}", coefs))
            for cov, coefs in self.mean_covariates.items()
        }
        return EmissionFamily(
            kind=self.kind,
            column=self.column,
            params=params,
            states=self.states,
            mean_covariates=mean_covariates,
            indicator_states=self.indicator_states,
        )

    def __str__(self) -> str:
        if self.kind == EmissionKind.PRODUCT:
            return f"EmissionFamily(product, components={self.components})"
        return (
            f"EmissionFamily("
            f"kind={self.kind.value}, "
            f"column={self.column}, "
            f"params={self.params})"
        )

    def __repr__(self) -> str:
        return self.__str__()


def _as_list(values: Any) -> list[float]:
    return [float(v) for v in np.atleast_1d(np.asarray(values, dtype=np.float64))]


class GeneratorMask(BaseModel):
    """
    Marks the structurally-zero off-diagonal rates of a generator matrix.

    Rows whose off-diagonal cells are all masked describe absorbing states.
    Diagonal entries are ignored.

    Attributes:
        structural_zeros (list[list[bool]]):
            ``True`` where the transition rate is fixed at zero.

    """

    model_config = ConfigDict(frozen=True)

    structural_zeros: list[list[bool]] = Field(
        description="True where the transition rate is fixed at zero.",
    )

    @field_validator("structural_zeros", mode="after")
    def _validate_square(cls, zeros: list[list[bool]]) -> list[list[bool]]:
        n = len(zeros)
        if n == 0 or any(len(row) != n for row in zeros):
            msg = "A generator mask must be a non-empty square matrix."
            raise ValueError(msg)
        return zeros

    @classmethod
    def full(cls, n: int) -> "GeneratorMask":
        """
        Creates a mask with every off-diagonal rate free.

        Args:
            n (int):
                The number of states.

        Returns:
            GeneratorMask:
                The unrestricted mask.

        """
        return cls(structural_zeros=[[False] * n for _ in range(n)])

    @property
    def n(self) -> int:
        """The number of states."""
        return len(self.structural_zeros)

    @property
    def free_cells(self) -> list[tuple[int, int]]:
        """The free off-diagonal cells in row-major order (0-based)."""
        return [
            (i, j)
            for i in range(self.n)
            for j in range(self.n)
            if i != j and not self.structural_zeros[i][j]
        ]

    def __str__(self) -> str:
        return f"GeneratorMask(structural_zeros={self.structural_zeros})"

    def __repr__(self) -> str:
        return self.__str__()


class ModelClass(str, Enum):
    HMM = "hmm"
    SSM_AR1 = "ssm-ar1"
    CTHMM = "cthmm"
    CTSSM_OU = "ctssm-ou"
    MMPP = "mmpp"
    MMMPP = "mmmpp"
    COX_OU_MMPP = "cox-ou-mmpp"


DISCRETE_STATE_CLASSES = frozenset(
    {ModelClass.HMM, ModelClass.CTHMM, ModelClass.MMPP, ModelClass.MMMPP}
)
GRID_CLASSES = frozenset(
    {ModelClass.SSM_AR1, ModelClass.CTSSM_OU, ModelClass.COX_OU_MMPP}
)
POINT_PROCESS_CLASSES = frozenset(
    {ModelClass.MMPP, ModelClass.MMMPP, ModelClass.COX_OU_MMPP}
)
GENERATOR_CLASSES = frozenset({ModelClass.CTHMM, ModelClass.MMPP, ModelClass.MMMPP})


class InitialMode(str, Enum):
    STATIONARY = "stationary"
    ESTIMATED = "estimated"


class GridSpec(BaseModel):
    """
    The discretization requested for a continuous-state model.

    Bounds left unset default to +-3.5 stationary standard deviations around
    the stationary mean at the initial parameter values.
    """

    model_config = ConfigDict(frozen=True)

    m: int = Field(ge=2, description="The number of intervals.")
    b0: float | None = Field(default=None, description="The lower bound.")
    bm: float | None = Field(default=None, description="The upper bound.")

    @model_validator(mode="after")
    def _validate_bounds(self) -> "GridSpec":
        if (self.b0 is None) != (self.bm is None):
            msg = "Set both grid bounds b0 and bm, or neither."
            raise ValueError(msg)
        if self.b0 is not None and self.bm is not None and not self.b0 < self.bm:
            msg = f"Grid bounds must satisfy b0 < bm, got {self.b0} and {self.bm}."
            raise ValueError(msg)
        return self


class ModelSpec(BaseModel):
    """
    Describes one latent Markov model: its class, state space, emission
    family, structural constraints and covariate bindings.

    Attributes:
        model_class (ModelClass):
            The model class (config key ``class``).
        n_states (int | None):
            The number of discrete states.
        grid (GridSpec | None):
            The discretization of a continuous state space.
        emission (EmissionFamily | None):
            The state-dependent distribution of the observations (marks).
        generator_mask (GeneratorMask | None):
            Structural zeros of the generator; ``None`` leaves all rates free.
        tpm_covariates (list[str]):
            Covariate columns entering the t.p.m. linear predictors.
        tod_period (float | None):
            Adds sin/cos predictors of ``2 pi time / tod_period``.
        initial (InitialMode):
            Whether the initial distribution is stationary or estimated.
        zero_rates (list[int]):
            1-based states whose event rate is fixed at zero.
        fixed (list[str]):
            Parameter blocks held at their initial values.
        renormalize (bool):
            Renormalize the rows of discretized t.p.m.s.
        cox_dt_star (float):
            The step used to approximate the Cox generator.
        time_column (str):
            The time column of the data.
        id_column (str | None):
            The sequence identifier column of the data.

    """

    model_config = ConfigDict(
        frozen=True, populate_by_name=True, protected_namespaces=()
    )

    model_class: ModelClass = Field(alias="class", description="The model class.")
    n_states: int | None = Field(
        default=None, ge=1, description="The number of discrete states."
    )
    grid: GridSpec | None = Field(
        default=None, description="The discretization of the state space."
    )
    emission: EmissionFamily | None = Field(
        default=None, description="The state-dependent distribution."
    )
    generator_mask: GeneratorMask | None = Field(
        default=None, description="Structural zeros of the generator."
    )
    tpm_covariates: list[str] = Field(
        default_factory=list, description="Covariates of the t.p.m. predictors."
    )
    tod_period: float | None = Field(
        default=None, gt=0.0, description="Period of the time-of-day predictors."
    )
    initial: InitialMode = Field(
        default=InitialMode.STATIONARY, description="The initial distribution mode."
    )
    zero_rates: list[int] = Field(
        default_factory=list, description="1-based states with zero event rate."
    )
    fixed: list[str] = Field(
        default_factory=list, description="Parameter blocks held fixed."
    )
    renormalize: bool = Field(
        default=False, description="Renormalize discretized t.p.m. rows."
    )
    cox_dt_star: float = Field(
        default=0.01, gt=0.0, description="Step of the Cox generator approximation."
    )
    time_column: str = Field(default="time", description="The time column.")
    id_column: str | None = Field(default="id", description="The sequence key.")

    @model_validator(mode="after")
    def _validate_class_fields(self) -> "ModelSpec":
        cls_ = self.model_class
        if cls_ in DISCRETE_STATE_CLASSES:
            if self.n_states is None:
                msg = f"Model class {cls_.value} needs n_states."
                raise ValueError(msg)
            if self.grid is not None:
                msg = f"Model class {cls_.value} has discrete states, drop grid."
                raise ValueError(msg)
        else:
            if self.grid is None:
                msg = f"Model class {cls_.value} needs a grid."
                raise ValueError(msg)
            if self.initial != InitialMode.STATIONARY:
                msg = "Grid-based models only support the stationary initial mode."
                raise ValueError(msg)

        needs_emission = cls_ not in {ModelClass.MMPP, ModelClass.COX_OU_MMPP}
        if needs_emission and self.emission is None:
            msg = f"Model class {cls_.value} needs an emission family."
            raise ValueError(msg)
        if not needs_emission and self.emission is not None:
            msg = f"Model class {cls_.value} has no marks, drop the emission family."
            raise ValueError(msg)

        if self.generator_mask is not None:
            if cls_ not in GENERATOR_CLASSES:
                msg = f"Model class {cls_.value} takes no generator mask."
                raise ValueError(msg)
            if self.generator_mask.n != self.n_states:
                msg = (
                    f"The generator mask is {self.generator_mask.n}x"
                    f"{self.generator_mask.n} but n_states is {self.n_states}."
                )
                raise ValueError(msg)
        if (self.tpm_covariates or self.tod_period) and cls_ != ModelClass.HMM:
            msg = "T.p.m. covariates are only supported for the hmm class."
            raise ValueError(msg)
        if self.zero_rates:
            if cls_ not in {ModelClass.MMPP, ModelClass.MMMPP}:
                msg = "zero_rates only applies to mmpp and mmmpp models."
                raise ValueError(msg)
            n = self.n_states or 0
            if any(not 1 <= s <= n for s in self.zero_rates):
                msg = f"zero_rates must be 1-based states up to {n}."
                raise ValueError(msg)
            if len(self.zero_rates) >= n:
                msg = "At least one state needs a positive event rate."
                raise ValueError(msg)
        if self.emission is not None:
            _check_emission_size(self.emission, self.n_states)
        return self

    @property
    def n_discrete(self) -> int:
        """The state count of the likelihood (N states or m grid cells)."""
        if self.grid is not None:
            return self.grid.m
        assert self.n_states is not None
        return self.n_states

    @property
    def uses_grid(self) -> bool:
        """Whether the state space is a discretized continuum."""
        return self.model_class in GRID_CLASSES

    @property
    def is_point_process(self) -> bool:
        """Whether the observation times are informative events."""
        return self.model_class in POINT_PROCESS_CLASSES


def _check_emission_size(family: EmissionFamily, n_states: int | None) -> None:
    if family.kind == EmissionKind.PRODUCT:
        for comp in family.components:
            _check_emission_size(comp, n_states)
        return
    length = family.param_length
    if n_states is None:
        if family.kind not in STATE_VALUE_KINDS:
            msg = (
                f"The {family.kind.value} family cannot be evaluated at a "
                "continuous state value."
            )
            raise ValueError(msg)
        if length is not None and length != 1:
            msg = "Families of grid-based models take one shared value per parameter."
            raise ValueError(msg)
        if family.states is not None:
            msg = "Families of grid-based models cannot be restricted to states."
            raise ValueError(msg)
        return
    labels = family.states if family.states is not None else []
    if any(s > n_states for s in labels + family.indicator_states):
        msg = f"State labels exceed n_states={n_states}."
        raise ValueError(msg)
    expected = len(family.states) if family.states is not None else n_states
    if length is not None and length != expected:
        msg = (
            f"The {family.kind.value} family on column {family.column} holds "
            f"{length} values per parameter, expected {expected}."
        )
        raise ValueError(msg)


@dataclass(frozen=True)
class ObservationSequence:
    """
    One observed sequence (an individual, a patient, a whale).

    Attributes:
        key (str):
            The sequence identifier.
        times (FloatArray):
            The observation or event times, nondecreasing.
        columns (dict[str, FloatArray]):
            Observation and covariate columns; ``NaN`` marks missing values.

    """

    key: str
    times: FloatArray
    columns: dict[str, FloatArray] = field(default_factory=dict)

    def __len__(self) -> int:
        return int(self.times.shape[0])

    @property
    def gaps(self) -> FloatArray:
        """The interval lengths between consecutive times."""
        return np.diff(self.times)
