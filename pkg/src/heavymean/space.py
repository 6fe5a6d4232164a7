"""Finite-dimensional normed spaces the estimators run in.

Vectors are plain 1-D ``float64`` numpy arrays; batches of vectors are 2-D
arrays with one observation per row.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np


class SpaceKind(str, enum.Enum):
    EUCLIDEAN = "euclidean"
    LP = "lp"


@dataclass(frozen=True)
class SpaceSpec:
    """A norm on R^dim: Euclidean, or the l^alpha norm with alpha >= 2."""

    kind: SpaceKind = SpaceKind.EUCLIDEAN
    dim: int = 1
    alpha: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "kind", SpaceKind(self.kind))
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError(f"dim must be a positive integer, got {self.dim!r}")
        if self.kind is SpaceKind.LP:
            if not math.isfinite(self.alpha) or self.alpha < 2:
                raise ValueError(f"l^alpha spaces need alpha >= 2, got {self.alpha!r}")

    @classmethod
    def euclidean(cls, dim: int) -> "SpaceSpec":
        return cls(SpaceKind.EUCLIDEAN, dim)

    @classmethod
    def lp(cls, alpha: float, dim: int) -> "SpaceSpec":
        return cls(SpaceKind.LP, dim, float(alpha))


def as_vec(x, space: SpaceSpec | None = None) -> np.ndarray:
    """Coerce ``x`` to a finite 1-D float array, checking its dimension."""
    v = np.asarray(x, dtype=np.float64)
    if v.ndim == 0:
        v = v.reshape(1)
    if v.ndim != 1:
        raise ValueError(f"expected a 1-D vector, got shape {v.shape}")
    if space is not None and v.shape[0] != space.dim:
        raise ValueError(f"dimension mismatch: vector has {v.shape[0]}, space has {space.dim}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector has non-finite coordinates")
    return v


def as_rows(xs, space: SpaceSpec | None = None) -> np.ndarray:
    """Coerce a sequence of vectors to a finite (n, d) float array."""
    X = np.asarray(xs, dtype=np.float64)
    if X.ndim == 1:
        # a flat sequence of scalars is n observations in dimension 1
        X = X.reshape(-1, 1)
    if X.ndim != 2:
        raise ValueError(f"expected a sequence of vectors, got shape {X.shape}")
    if space is not None and X.shape[0] and X.shape[1] != space.dim:
        raise ValueError(f"dimension mismatch: rows have {X.shape[1]}, space has {space.dim}")
    if not np.all(np.isfinite(X)):
        raise ValueError("observations have non-finite coordinates")
    return X


def row_norms(X: np.ndarray, space: SpaceSpec) -> np.ndarray:
    """Norm of every row of ``X``.

    This is the single place norms are computed, so that a vector's norm is
    bit-identical whether it is evaluated alone or inside a batch.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.shape[-1] != space.dim:
        raise ValueError(f"dimension mismatch: rows have {X.shape[-1]}, space has {space.dim}")
    if space.kind is SpaceKind.EUCLIDEAN or space.alpha == 2.0:
        return np.sqrt(np.sum(X * X, axis=-1))
    a = space.alpha
    return np.sum(np.abs(X) ** a, axis=-1) ** (1.0 / a)


def norm(x, space: SpaceSpec) -> float:
    """Norm of a single vector."""
    v = as_vec(x, space)
    return float(row_norms(v[None, :], space)[0])


def beta(space: SpaceSpec) -> float:
    """Smoothness constant: 1 for Hilbert norms, sqrt(alpha - 1) for l^alpha."""
    if space.kind is SpaceKind.EUCLIDEAN:
        return 1.0
    return math.sqrt(space.alpha - 1.0)


def is_hilbert(space: SpaceSpec) -> bool:
    return space.kind is SpaceKind.EUCLIDEAN or space.alpha == 2.0
