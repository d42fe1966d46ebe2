"""
Unconstrained parameterization of model parameters.

Every named parameter block maps its natural values to a flat vector of
unconstrained reals and back. The optimizer only ever sees the concatenation
of the free blocks.
"""

from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import special

from latent_chain.core.base import FloatArray
from latent_chain.core.errors import InvalidArgumentError
from latent_chain.core.linalg import tpm_from_eta


class Constraint(str, Enum):
    REAL = "real"
    POSITIVE = "positive"
    SIGNED_UNIT = "signed-unit"
    UNIT = "unit"
    ANGLE = "angle"
    TPM = "tpm"
    SIMPLEX = "simplex"
    GENERATOR = "generator"
    RATES = "rates"


# Constraints whose natural entries map one-to-one and monotonically to
# unconstrained entries.
MONOTONE_CONSTRAINTS = frozenset(
    {Constraint.REAL, Constraint.POSITIVE, Constraint.SIGNED_UNIT, Constraint.UNIT}
)


@dataclass(frozen=True)
class ParamBlock:
    """
    A named block of parameters sharing one constraint.

    Attributes:
        name (str):
            The block name, e.g. ``tpm`` or ``emission.sd``.
        shape (tuple[int, ...]):
            The shape of the natural values.
        constraint (Constraint):
            The domain of the natural values.
        support (NDArray[np.bool_] | None):
            Generator blocks: the free off-diagonal cells. Rate blocks: the
            states with a free (nonzero) rate. Unused otherwise.

    """

    name: str
    shape: tuple[int, ...]
    constraint: Constraint
    support: NDArray[np.bool_] | None = field(default=None, compare=False)

    @property
    def size(self) -> int:
        """The number of unconstrained values."""
        c = self.constraint
        if c == Constraint.TPM:
            n = self.shape[0]
            return n * (n - 1)
        if c == Constraint.SIMPLEX:
            return self.shape[0] - 1
        if c in {Constraint.GENERATOR, Constraint.RATES}:
            assert self.support is not None
            return int(self.support.sum())
        return int(np.prod(self.shape, dtype=np.int64))

    def to_unconstrained(self, natural: ArrayLike) -> FloatArray:
        """
        Maps natural values to unconstrained reals.

        Args:
            natural (ArrayLike):
                The natural values, of shape ``self.shape``.

        Returns:
            FloatArray:
                The unconstrained values, of length ``self.size``.

        Raises:
            InvalidArgumentError:
                If the values violate the block's constraint.

        """
        x = np.asarray(natural, dtype=np.float64).reshape(self.shape)
        c = self.constraint
        if not np.all(np.isfinite(x)):
            self._fail("must be finite")
        if c == Constraint.REAL:
            return x.ravel().copy()
        if c == Constraint.POSITIVE:
            if np.any(x <= 0):
                self._fail("must be strictly positive")
            return np.log(x).ravel()
        if c == Constraint.SIGNED_UNIT:
            if np.any(np.abs(x) >= 1):
                self._fail("must lie in (-1, 1)")
            return np.arctanh(x).ravel()
        if c == Constraint.UNIT:
            if np.any((x <= 0) | (x >= 1)):
                self._fail("must lie in (0, 1)")
            return np.asarray(special.logit(x), dtype=np.float64).ravel()
        if c == Constraint.ANGLE:
            if np.any((x <= -np.pi) | (x > np.pi)):
                self._fail("must lie in (-pi, pi]")
            return x.ravel().copy()
        if c == Constraint.TPM:
            if np.any(x <= 0) or np.any(np.abs(x.sum(axis=1) - 1) > 1e-8):
                self._fail("must be a transition matrix with positive entries")
            eta = np.log(x / np.diag(x)[:, None])
            return eta[~np.eye(x.shape[0], dtype=bool)]
        if c == Constraint.SIMPLEX:
            if np.any(x <= 0) or abs(x.sum() - 1) > 1e-8:
                self._fail("must be a probability vector with positive entries")
            return np.log(x[1:] / x[0])
        if c == Constraint.GENERATOR:
            assert self.support is not None
            rates = x[self.support]
            masked = ~self.support & ~np.eye(x.shape[0], dtype=bool)
            if np.any(rates <= 0) or np.any(x[masked] != 0):
                self._fail("needs positive free rates and zero masked rates")
            return np.log(rates)
        assert self.support is not None
        if np.any(x[self.support] <= 0) or np.any(x[~self.support] != 0):
            self._fail("needs positive free rates and zero masked rates")
        return np.log(x[self.support])

    def to_natural(self, values: ArrayLike) -> FloatArray:
        """
        Maps unconstrained reals back to natural values.

        Args:
            values (ArrayLike):
                The unconstrained values, of length ``self.size``.

        Returns:
            FloatArray:
                The natural values, of shape ``self.shape``.

        """
        v = np.asarray(values, dtype=np.float64).ravel()
        c = self.constraint
        if c == Constraint.REAL:
            return v.reshape(self.shape).copy()
        if c == Constraint.POSITIVE:
            return np.exp(v).reshape(self.shape)
        if c == Constraint.SIGNED_UNIT:
            return np.tanh(v).reshape(self.shape)
        if c == Constraint.UNIT:
            return np.asarray(special.expit(v), dtype=np.float64).reshape(self.shape)
        if c == Constraint.ANGLE:
            return np.arctan2(np.sin(v), np.cos(v)).reshape(self.shape)
        if c == Constraint.TPM:
            n = self.shape[0]
            eta = np.zeros((n, n))
            eta[~np.eye(n, dtype=bool)] = v
            return tpm_from_eta(eta)
        if c == Constraint.SIMPLEX:
            probs = special.softmax(np.concatenate([[0.0], v]))
            return np.asarray(probs, dtype=np.float64)
        assert self.support is not None
        x = np.zeros(self.shape)
        x[self.support] = np.exp(v)
        if c == Constraint.GENERATOR:
            np.fill_diagonal(x, -x.sum(axis=1))
        return x

    def check_fixed(self, natural: ArrayLike) -> None:
        """
        Checks values of a block held fixed. Fixed values may sit on the
        boundary of the domain (e.g. a known initial state ``delta = (1, 0, 0)``).

        Raises:
            InvalidArgumentError:
                If the values lie outside the closed domain.

        """
        x = np.asarray(natural, dtype=np.float64).reshape(self.shape)
        c = self.constraint
        if not np.all(np.isfinite(x)):
            self._fail("must be finite")
        if c == Constraint.POSITIVE and np.any(x <= 0):
            self._fail("must be strictly positive")
        if c == Constraint.SIGNED_UNIT and np.any(np.abs(x) >= 1):
            self._fail("must lie in (-1, 1)")
        if c == Constraint.UNIT and np.any((x < 0) | (x > 1)):
            self._fail("must lie in [0, 1]")
        if c == Constraint.ANGLE and np.any((x <= -np.pi) | (x > np.pi)):
            self._fail("must lie in (-pi, pi]")
        if c in {Constraint.TPM, Constraint.SIMPLEX}:
            if np.any(x < 0) or np.any(np.abs(x.sum(axis=-1) - 1) > 1e-8):
                self._fail("must hold nonnegative probabilities summing to one")
        if c in {Constraint.GENERATOR, Constraint.RATES}:
            assert self.support is not None
            masked = ~self.support
            if c == Constraint.GENERATOR:
                masked &= ~np.eye(x.shape[0], dtype=bool)
            if np.any(x[self.support] < 0) or np.any(x[masked] != 0):
                self._fail("needs nonnegative free rates and zero masked rates")

    def _fail(self, message: str) -> None:
        msg = f"Parameter block {self.name} {message}."
        raise InvalidArgumentError(msg)


@dataclass(frozen=True)
class ParamVector:
    """
    A flat vector of unconstrained values plus its packing descriptor.

    Attributes:
        blocks (tuple[ParamBlock, ...]):
            All parameter blocks of the model, in packing order.
        values (FloatArray):
            The concatenated unconstrained values of the free blocks.
        fixed (dict[str, FloatArray]):
            Natural values of the blocks held fixed.

    """

    blocks: tuple[ParamBlock, ...]
    values: FloatArray
    fixed: dict[str, FloatArray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        expected = sum(b.size for b in self.free_blocks)
        if self.values.shape != (expected,):
            msg = f"Expected {expected} unconstrained values, got {self.values.shape}."
            raise InvalidArgumentError(msg)

    @property
    def free_blocks(self) -> list[ParamBlock]:
        return [b for b in self.blocks if b.name not in self.fixed]

    @property
    def slices(self) -> dict[str, slice]:
        """The position of each free block in ``values``."""
        out: dict[str, slice] = {}
        start = 0
        for block in self.free_blocks:
            out[block.name] = slice(start, start + block.size)
            start += block.size
        return out

    @property
    def labels(self) -> list[str]:
        """One label per unconstrained value, ``block[k]``."""
        return [
            f"{block.name}[{k}]"
            for block in self.free_blocks
            for k in range(block.size)
        ]

    def with_values(self, values: ArrayLike) -> "ParamVector":
        return ParamVector(
            self.blocks, np.asarray(values, dtype=np.float64), self.fixed
        )


def transform(
    blocks: Iterable[ParamBlock],
    natural: Mapping[str, ArrayLike],
    fixed: Iterable[str] = (),
) -> ParamVector:
    """
    Maps natural parameters to a :class:`ParamVector`.

    Args:
        blocks (Iterable[ParamBlock]):
            The parameter blocks of the model.
        natural (Mapping[str, ArrayLike]):
            Natural values keyed by block name.
        fixed (Iterable[str]):
            Names of blocks held at their natural values.

    Returns:
        ParamVector:
            The unconstrained representation.

    Raises:
        InvalidArgumentError:
            If a block is missing or violates its constraint.

    """
    blocks = tuple(blocks)
    names = {b.name for b in blocks}
    fixed_names = set(fixed)
    unknown = fixed_names - names
    if unknown:
        msg = (
            f"Unknown parameter blocks to fix: {sorted(unknown)}; "
            f"known: {sorted(names)}."
        )
        raise InvalidArgumentError(msg)
    missing = names - set(natural)
    if missing:
        msg = f"Missing values for parameter blocks {sorted(missing)}."
        raise InvalidArgumentError(msg)

    pinned: dict[str, FloatArray] = {}
    parts: list[FloatArray] = []
    for block in blocks:
        value = np.asarray(natural[block.name], dtype=np.float64)
        if value.size != int(np.prod(block.shape, dtype=np.int64)):
            msg = (
                f"Parameter block {block.name} needs shape {block.shape}, "
                f"got {value.shape}."
            )
            raise InvalidArgumentError(msg)
        if block.name in fixed_names:
            block.check_fixed(value)
            pinned[block.name] = value.reshape(block.shape)
        else:
            parts.append(block.to_unconstrained(value))
    values = np.concatenate(parts) if parts else np.zeros(0)
    return ParamVector(blocks, values, pinned)


def untransform(vector: ParamVector) -> dict[str, FloatArray]:
    """
    Maps a :class:`ParamVector` back to natural parameters, fixed blocks
    included.
    """
    natural = dict(vector.fixed)
    for name, position in vector.slices.items():
        block = next(b for b in vector.blocks if b.name == name)
        natural[name] = block.to_natural(vector.values[position])
    return {b.name: natural[b.name] for b in vector.blocks}
