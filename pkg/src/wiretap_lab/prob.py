"""Finite-alphabet probability calculus.

All entropies and informations are in bits. Probabilities below
``ZERO_FLOOR`` are treated as exact zeros inside ``-p log p`` sums.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import ValidationError

MASS_TOL = 1e-9
ZERO_FLOOR = 1e-15

Axes = Union[int, str, Sequence[Union[int, str]]]


def _xlogx(p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    out = np.zeros_like(p)
    mask = p > ZERO_FLOOR
    out[mask] = p[mask] * np.log2(p[mask])
    return out


def entropy_of_array(p) -> float:
    """Shannon entropy of a (flattened) array of masses, no validation."""
    return float(max(0.0, -_xlogx(np.ravel(p)).sum()))


def _check_probs(probs: np.ndarray, what: str) -> None:
    if probs.size == 0:
        raise ValidationError(f"{what}: empty probability table")
    if not np.all(np.isfinite(probs)):
        raise ValidationError(f"{what}: non-finite entry")
    if np.any(probs < 0):
        raise ValidationError(f"{what}: negative entry {probs.min()!r}")
    total = probs.sum()
    if abs(total - 1.0) > MASS_TOL:
        raise ValidationError(f"{what}: total mass {total!r} is not 1")


@dataclass(frozen=True, eq=False)
class Pmf:
    """Probability vector over ``{0, ..., support_size - 1}``."""

    probs: np.ndarray

    def __post_init__(self):
        probs = np.array(self.probs, dtype=float).reshape(-1)
        _check_probs(probs, "Pmf")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    @property
    def support_size(self) -> int:
        return self.probs.size

    @classmethod
    def uniform(cls, k: int) -> "Pmf":
        return cls(np.full(k, 1.0 / k))

    @classmethod
    def point(cls, k: int, at: int = 0) -> "Pmf":
        p = np.zeros(k)
        p[at] = 1.0
        return cls(p)

    @classmethod
    def normalized(cls, weights) -> "Pmf":
        """Explicit renormalization of non-negative weights."""
        w = np.asarray(weights, dtype=float)
        if np.any(w < 0) or w.sum() <= 0:
            raise ValidationError("weights must be non-negative with positive sum")
        return cls(w / w.sum())

    def __len__(self) -> int:
        return self.support_size

    def __repr__(self) -> str:
        return f"Pmf({self.probs.tolist()})"


@dataclass(frozen=True, eq=False)
class Channel:
    """Row-stochastic transition table ``matrix[input, output]``."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.ndim != 2:
            raise ValidationError("Channel matrix must be two-dimensional")
        for i, row in enumerate(m):
            _check_probs(row, f"Channel row {i}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def input_size(self) -> int:
        return self.matrix.shape[0]

    @property
    def output_size(self) -> int:
        return self.matrix.shape[1]

    @property
    def rows(self) -> list[Pmf]:
        return [Pmf(r) for r in self.matrix]

    @classmethod
    def identity(cls, k: int) -> "Channel":
        return cls(np.eye(k))

    def allclose(self, other: "Channel", atol: float = 1e-12) -> bool:
        return self.matrix.shape == other.matrix.shape and np.allclose(
            self.matrix, other.matrix, rtol=0, atol=atol
        )

    def __repr__(self) -> str:
        return f"Channel({self.matrix.tolist()})"


@dataclass(frozen=True, eq=False)
class JointPmf:
    """Dense joint probability table with optionally named axes."""

    probs: np.ndarray
    names: tuple = ()

    def __post_init__(self):
        p = np.array(self.probs, dtype=float)
        if p.ndim == 0:
            raise ValidationError("JointPmf needs at least one axis")
        _check_probs(p, "JointPmf")
        names = tuple(self.names) if self.names else tuple(f"a{i}" for i in range(p.ndim))
        if len(names) != p.ndim or len(set(names)) != len(names):
            raise ValidationError(f"axis names {names!r} do not match {p.ndim} axes")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "names", names)

    @property
    def axis_sizes(self) -> tuple:
        return self.probs.shape

    def _axes(self, axes: Axes) -> tuple:
        if axes is None:
            return ()
        if isinstance(axes, (int, str, np.integer)):
            axes = [axes]
        out = []
        for a in axes:
            if isinstance(a, str):
                if a not in self.names:
                    raise ValidationError(f"unknown axis {a!r}; have {self.names}")
                a = self.names.index(a)
            a = int(a)
            if not 0 <= a < self.probs.ndim:
                raise ValidationError(f"axis {a} out of range")
            out.append(a)
        if len(set(out)) != len(out):
            raise ValidationError(f"repeated axis in {axes!r}")
        return tuple(out)

    def marginal(self, axes: Axes) -> np.ndarray:
        """Marginal table over ``axes`` (kept in the given order)."""
        keep = self._axes(axes)
        drop = tuple(i for i in range(self.probs.ndim) if i not in keep)
        m = self.probs.sum(axis=drop)
        # sum() keeps remaining axes in ascending order
        order = sorted(keep)
        return np.transpose(m, [order.index(a) for a in keep]) if keep else m

    def entropy(self, axes: Axes) -> float:
        return entropy_of_array(self.marginal(axes)) if self._axes(axes) else 0.0


def entropy(p: Pmf) -> float:
    """H(p) in bits."""
    if not isinstance(p, Pmf):
        p = Pmf(p)
    return entropy_of_array(p.probs)


def _check_unit(p: float, what: str = "probability") -> float:
    p = float(p)
    if not (0.0 <= p <= 1.0):
        raise ValidationError(f"{what} {p!r} outside [0, 1]")
    return p


def binary_entropy(p: float) -> float:
    """h(p) = -p log2 p - (1-p) log2 (1-p)."""
    p = _check_unit(p)
    return entropy_of_array(np.array([p, 1.0 - p]))


def binary_convolve(a: float, b: float) -> float:
    """a * b = a(1-b) + (1-a)b, the crossover of two cascaded BSCs."""
    a = _check_unit(a)
    b = _check_unit(b)
    return a * (1.0 - b) + (1.0 - a) * b


def joint_from(inp: Pmf, ch: Channel, names=("in", "out")) -> JointPmf:
    """Table p(x) p(y|x)."""
    if inp.support_size != ch.input_size:
        raise ValidationError(
            f"input size {inp.support_size} does not match channel input {ch.input_size}"
        )
    return JointPmf(inp.probs[:, None] * ch.matrix, names=names)


def _disjoint(j: JointPmf, *groups) -> list[tuple]:
    resolved = [j._axes(g) for g in groups]
    seen: set = set()
    for g in resolved:
        if seen & set(g):
            raise ValidationError("axis groups must be disjoint")
        seen |= set(g)
    return resolved


def conditional_entropy(j: JointPmf, target_axes: Axes, given_axes: Axes = ()) -> float:
    """H(target | given) = H(target, given) - H(given)."""
    t, g = _disjoint(j, target_axes, given_axes)
    if not t:
        raise ValidationError("target axes must be non-empty")
    return max(0.0, j.entropy(t + g) - j.entropy(g))


def mutual_information(j: JointPmf, axes_a: Axes, axes_b: Axes, axes_cond: Axes = ()) -> float:
    """I(A;B|C) = H(A,C) + H(B,C) - H(A,B,C) - H(C), clamped at zero."""
    a, b, c = _disjoint(j, axes_a, axes_b, axes_cond)
    if not a or not b:
        raise ValidationError("both information arguments must be non-empty")
    val = j.entropy(a + c) + j.entropy(b + c) - j.entropy(a + b + c) - j.entropy(c)
    return max(0.0, val)
