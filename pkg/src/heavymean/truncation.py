"""Ball projection and the truncation-error envelope."""

from __future__ import annotations

import numpy as np

from .space import SpaceSpec, as_vec, row_norms

# Rows whose scaled norm exceeds 1 by at most this are treated as inside the
# ball, so projecting an already projected point is a no-op despite rounding.
# l^alpha norms of a rescaled vector can be off by several ulps, hence the
# generous band; it moves the radius by at most one part in 1e12.
_INSIDE_SLACK = 1e-12


def trunc_coeff(x, space: SpaceSpec) -> float:
    """(1 ^ ||x||) / ||x||, with the value 1 at the origin."""
    v = as_vec(x, space)
    r = float(row_norms(v[None, :], space)[0])
    if r <= 1.0:
        return 1.0
    return 1.0 / r


def clip_coeffs(R: np.ndarray, lam: float, space: SpaceSpec) -> np.ndarray:
    """Per-row scale factors projecting the rows of ``R`` onto the ball of radius 1/lam."""
    t = lam * row_norms(R, space)
    out = np.ones_like(t)
    big = t > 1.0 + _INSIDE_SLACK
    out[big] = 1.0 / t[big]
    return out


def clip_rows(R: np.ndarray, lam: float, space: SpaceSpec) -> np.ndarray:
    """Project every row of ``R`` onto the ball of radius 1/lam."""
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam!r}")
    R = np.asarray(R, dtype=np.float64)
    return clip_coeffs(R, lam, space)[:, None] * R


def clip(x, lam: float, space: SpaceSpec) -> np.ndarray:
    """Trunc(lam x) x: the projection of x onto the ball of radius 1/lam."""
    v = as_vec(x, space)
    return clip_rows(v[None, :], lam, space)[0]


def kth_truncation_bound(t: float, k: float) -> float:
    """Right-hand side t^k/(k+1) (k/(k+1))^k dominating 1 - (1 ^ t)/t."""
    if t < 0:
        raise ValueError(f"t must be nonnegative, got {t!r}")
    if not k > 0:
        raise ValueError(f"k must be positive, got {k!r}")
    return t**k / (k + 1.0) * (k / (k + 1.0)) ** k


def truncation_gap(t):
    """1 - (1 ^ t)/t, vectorised, with value 0 on [0, 1]."""
    t = np.asarray(t, dtype=np.float64)
    safe = np.where(t > 1.0, t, 1.0)
    return np.where(t > 1.0, 1.0 - 1.0 / safe, 0.0)
